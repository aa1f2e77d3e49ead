#!/usr/bin/env python3
"""Fabricate a pre-embedded topic sentence corpus for demoing the offline phase.

Real deployments generate topic sentences with a large language model and
embed them with a sentence encoder; this script fakes that output so the
whole anchor-building workflow can run offline.  Each topic gets a few dense
modes (clusters in embedding space) plus a sprinkle of outliers, written as
JSONL records ``{"topic": ..., "text": ..., "vector": [...]}``.

Usage: python scripts/make_sentence_corpus.py --out corpus.jsonl
"""

import argparse
import json
import sys

import numpy as np

from convseg.model import DEFAULT_TOPICS, unit_normalize


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--dim", type=int, default=384)
    ap.add_argument("--per-topic", type=int, default=300)
    ap.add_argument("--modes", type=int, default=3, help="dense clusters per topic")
    ap.add_argument("--outlier-frac", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    lines = []
    for topic in DEFAULT_TOPICS:
        centers = [unit_normalize(rng.standard_normal(args.dim)) for _ in range(args.modes)]
        for i in range(args.per_topic):
            if rng.random() < args.outlier_frac:
                vec = unit_normalize(rng.standard_normal(args.dim))
            else:
                center = centers[int(rng.integers(args.modes))]
                vec = unit_normalize(center + 0.18 * rng.standard_normal(args.dim))
            lines.append(json.dumps({
                "topic": topic,
                "text": f"{topic} sentence {i}",
                "vector": [round(float(x), 6) for x in vec],
            }))
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} sentences to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
