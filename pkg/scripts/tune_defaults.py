#!/usr/bin/env python3
"""Grid-search the pipeline defaults on the synthetic validation corpus.

This is the experiment behind the shipped defaults (temperature 0.15, window
width 2, window threshold 0.6, greedy tau 1.5).  Wide windows systematically
over-extend runs past segment edges, which is why the tuned width is small.

Usage: python scripts/tune_defaults.py [--calls 50] [--seed 100] [--dim 384]
"""

import argparse
import sys
import warnings

import numpy as np

from convseg.baselines import GreedyParams, TextTilingParams, greedy_segment, \
    tag_segments_by_anchors, texttiling_segment
from convseg.metrics import default_k, pk, window_diff
from convseg.synthetic import default_benchmark_distribution, generate_call, \
    orthonormal_anchors, sample_plan
from convseg.windowing import PipelineConfig, TopicConfig, segment_call


def build_calls(anchors, count, seed, sigma):
    dist = default_benchmark_distribution(noise_sigma=sigma)
    return [generate_call(sample_plan(dist, seed=seed + i), anchors, call_id=f"c{i}")
            for i in range(count)]


def score(calls, segment_fn):
    pks, wds = [], []
    for transcript, vectors, gold in calls:
        result = segment_fn(transcript, vectors, gold)
        ref = gold.labels()
        k = default_k(ref)
        pks.append(pk(ref, result.labels(), k))
        wds.append(window_diff(ref, result.labels(), k))
    return float(np.mean(pks)), float(np.mean(wds))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--calls", type=int, default=50)
    ap.add_argument("--seed", type=int, default=100)
    ap.add_argument("--dim", type=int, default=384)
    ap.add_argument("--sigma", type=float, default=0.2)
    args = ap.parse_args()

    anchors = orthonormal_anchors(dim=args.dim, seed=11)
    calls = build_calls(anchors, args.calls, args.seed, args.sigma)

    print("== pipeline grid (temperature x window threshold x window width) ==")
    print(f"{'T':>5} {'theta':>6} {'w':>3} {'Pk':>7} {'WinDiff':>8}")
    best = None
    for temp in (0.1, 0.15, 0.2, 0.25):
        for theta in (0.45, 0.5, 0.55, 0.6, 0.65):
            for width in (2, 3, 4):
                topics = tuple(TopicConfig(name=n, window_width=width, threshold=theta)
                               for n in anchors.topic_names)
                cfg = PipelineConfig(topics=topics, temperature=temp)
                mpk, mwd = score(calls, lambda t, v, g: segment_call(t, v, anchors, cfg))
                if best is None or mpk < best[0]:
                    best = (mpk, mwd, temp, theta, width)
                print(f"{temp:>5} {theta:>6} {width:>3} {mpk:7.3f} {mwd:8.3f}")
    print(f"best: Pk={best[0]:.3f} WinDiff={best[1]:.3f} at "
          f"T={best[2]} theta={best[3]} w={best[4]}")

    print("\n== greedy tau ==")
    for tau in (1.0, 1.25, 1.5, 2.0, 2.5):
        params = GreedyParams(tau=tau)

        def run(t, v, g, params=params):
            bounds = greedy_segment(v, params)
            return tag_segments_by_anchors(bounds, v, anchors, call_id=g.call_id)

        mpk, mwd = score(calls, run)
        print(f"tau={tau}: Pk={mpk:.3f} WinDiff={mwd:.3f}")

    print("\n== texttiling block size / smoothing ==")
    for block in (2, 3, 4):
        for smooth in (1, 3, 5):
            params = TextTilingParams(block_size=block, smoothing_width=smooth)

            def run(t, v, g, params=params):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    bounds = texttiling_segment(v, params)
                return tag_segments_by_anchors(bounds, v, anchors, call_id=g.call_id)

            mpk, mwd = score(calls, run)
            print(f"block={block} smooth={smooth}: Pk={mpk:.3f} WinDiff={mwd:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
