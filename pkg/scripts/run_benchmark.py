#!/usr/bin/env python3
"""End-to-end benchmark: build anchors, synthesize a corpus, compare methods.

Reproduces the acceptance experiment through the CLI: anchor-based pipeline
vs the greedy gain splitter vs the TextTiling-style segmenter on the default
5-topic corpus (sigma controls embedding noise).

Usage: python scripts/run_benchmark.py --workdir /tmp/convseg-bench
"""

import argparse
import json
import sys
from pathlib import Path

from convseg.anchors import save_anchor_set
from convseg.cli import main as cli
from convseg.synthetic import orthonormal_anchors


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", required=True)
    ap.add_argument("--calls", type=int, default=50)
    ap.add_argument("--sigma", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=100)
    ap.add_argument("--dim", type=int, default=384)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)

    anchors_path = work / "anchors.json"
    save_anchor_set(orthonormal_anchors(dim=args.dim, seed=11), anchors_path)

    spec_path = work / "spec.json"
    spec_path.write_text(json.dumps({
        "topics": ["greetings", "closing", "pricing", "identification", "scheduling"],
        "len_range": [6, 12],
        "segments_range": [5, 9],
        "background_prob": 0.3,
        "noise_sigma": args.sigma,
    }, indent=2))

    corpus_dir = work / "corpus"
    code = cli(["synth", "--spec", str(spec_path), "--anchors", str(anchors_path),
                "--count", str(args.calls), "--seed", str(args.seed),
                "--out-dir", str(corpus_dir)])
    if code != 0:
        return code

    return cli(["bench", "--manifest", str(corpus_dir / "manifest.json"),
                "--anchors", str(anchors_path),
                "--methods", "gptcalls,greedy,texttiling",
                "--jobs", str(args.jobs),
                "--out", str(work / "bench.json")])


if __name__ == "__main__":
    sys.exit(main())
