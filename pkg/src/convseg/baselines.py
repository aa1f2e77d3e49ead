"""Baseline segmenters: greedy embedding-gain splitting and TextTiling-style.

The greedy splitter works on inclusive index ranges [b, e] over the utterance
embeddings.  The gain of splitting at t (b < t <= e) is

    gain(b, e, t) = ||sum(w[b:t])|| + ||sum(w[t:e+1])|| - ||sum(w[b:e+1])||

which is non-negative by the triangle inequality.  Splits are applied greedily
while the best available gain exceeds a threshold.

The TextTiling-style segmenter is an embedding adaptation of the classic
lexical-cohesion algorithm, not the 1997 algorithm verbatim: gap scores come
from cosine similarity of mean embeddings on either side of each gap.

Both return interior boundary indices; ``tag_segments_by_anchors`` then labels
the resulting segments with the nearest-anchor topic so baseline output is
comparable with the main pipeline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .anchors import AnchorSet
from .model import BACKGROUND, SegmentationResult, Segment, ValidationError


@dataclass(frozen=True)
class GreedyParams:
    # tau sits between the pure-noise gain floor and true-boundary gains on
    # the synthetic validation corpus (scripts/tune_defaults.py)
    tau: float = 1.5
    max_segments: int = 12
    min_size: int = 3

    def __post_init__(self):
        if self.tau <= 0:
            raise ValidationError(f"tau must be > 0, got {self.tau}")
        if self.max_segments < 1:
            raise ValidationError(f"max_segments must be >= 1, got {self.max_segments}")
        if self.min_size < 1:
            raise ValidationError(f"min_size must be >= 1, got {self.min_size}")


@dataclass(frozen=True)
class TextTilingParams:
    block_size: int = 3
    smoothing_width: int = 3
    depth_cutoff_sigmas: float = 0.5

    def __post_init__(self):
        if self.block_size < 1:
            raise ValidationError(f"block_size must be >= 1, got {self.block_size}")
        if self.smoothing_width < 1 or self.smoothing_width % 2 == 0:
            raise ValidationError(
                f"smoothing_width must be an odd integer >= 1, got {self.smoothing_width}"
            )


def _embedding_matrix(embeddings) -> np.ndarray:
    mat = np.asarray(embeddings, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise ValidationError(f"expected an (N, dim) embedding matrix, got shape {mat.shape}")
    return mat


def split_gain(embeddings, b: int, e: int, t: int) -> float:
    """Gain of splitting the inclusive segment [b, e] just before index t."""
    mat = _embedding_matrix(embeddings)
    n = mat.shape[0]
    if not (0 <= b < t <= e < n):
        raise ValidationError(f"need 0 <= b < t <= e < {n}, got b={b}, t={t}, e={e}")
    left = mat[b:t].sum(axis=0)
    right = mat[t:e + 1].sum(axis=0)
    whole = mat[b:e + 1].sum(axis=0)
    return float(np.linalg.norm(left) + np.linalg.norm(right) - np.linalg.norm(whole))


def greedy_segment(embeddings, params: GreedyParams = GreedyParams()) -> list[int]:
    """Split [0, N-1] greedily at the globally best gain until below tau.

    Each applied split must leave both sides at least ``min_size`` utterances
    long and the segment count below ``max_segments``.  Returns the sorted
    interior boundaries (start index of each right-hand part); an unsplittable
    input yields an empty list.
    """
    mat = _embedding_matrix(embeddings)
    n = mat.shape[0]
    prefix = np.vstack([np.zeros(mat.shape[1]), np.cumsum(mat, axis=0)])

    def seg_sum(lo: int, hi: int) -> np.ndarray:
        # sum over the inclusive range [lo, hi]
        return prefix[hi + 1] - prefix[lo]

    segments = [(0, n - 1)]
    while len(segments) < params.max_segments:
        best = None  # (gain, t, seg_pos)
        for pos, (b, e) in enumerate(segments):
            t_lo = b + params.min_size
            t_hi = e - params.min_size + 1
            if t_lo > t_hi:
                continue
            ts = np.arange(t_lo, t_hi + 1)
            whole_norm = np.linalg.norm(seg_sum(b, e))
            lefts = prefix[ts] - prefix[b]
            rights = prefix[e + 1] - prefix[ts]
            gains = (np.linalg.norm(lefts, axis=1)
                     + np.linalg.norm(rights, axis=1) - whole_norm)
            k = int(np.argmax(gains))  # ties resolve to the smallest t
            if best is None or gains[k] > best[0] or (gains[k] == best[0] and ts[k] < best[1]):
                best = (float(gains[k]), int(ts[k]), pos)
        if best is None or best[0] <= params.tau:
            break
        _, t, pos = best
        b, e = segments[pos]
        segments[pos:pos + 1] = [(b, t - 1), (t, e)]
        segments.sort()
    return sorted(b for b, _ in segments if b != 0)


def texttiling_segment(embeddings, params: TextTilingParams = TextTilingParams()) -> list[int]:
    """Boundary indices from depth scores over embedding cohesion gaps.

    Transcripts shorter than ``2 * block_size`` cannot be scored; they produce
    an empty result and a warning.
    """
    mat = _embedding_matrix(embeddings)
    n = mat.shape[0]
    bs = params.block_size
    if n < 2 * bs:
        warnings.warn(
            f"transcript of {n} utterances is shorter than 2 * block_size = {2 * bs}; "
            "no boundaries produced",
            stacklevel=2,
        )
        return []

    gap_positions = np.arange(bs, n - bs + 1)
    gap_scores = np.empty(gap_positions.size)
    for k, g in enumerate(gap_positions):
        before = mat[g - bs:g].mean(axis=0)
        after = mat[g:g + bs].mean(axis=0)
        nb, na = np.linalg.norm(before), np.linalg.norm(after)
        gap_scores[k] = float(before @ after / (nb * na)) if nb > 0 and na > 0 else 0.0

    smoothed = _moving_average(gap_scores, params.smoothing_width)

    # depth at interior local minima; elsewhere zero
    depths = np.zeros_like(smoothed)
    minima = []
    for k in range(1, smoothed.size - 1):
        if smoothed[k] < smoothed[k - 1] and smoothed[k] < smoothed[k + 1]:
            minima.append(k)
            depths[k] = (_climb(smoothed, k, -1) - smoothed[k]) + (
                _climb(smoothed, k, +1) - smoothed[k])
    if not minima:
        return []
    threshold = depths.mean() - params.depth_cutoff_sigmas * depths.std()
    return [int(gap_positions[k]) for k in minima if depths[k] > threshold]


def _moving_average(x: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return x.copy()
    # centered window, truncated at the edges
    cums = np.concatenate([[0.0], np.cumsum(x)])
    half = width // 2
    lo = np.clip(np.arange(x.size) - half, 0, None)
    hi = np.clip(np.arange(x.size) + half + 1, None, x.size)
    return (cums[hi] - cums[lo]) / (hi - lo)


def _climb(x: np.ndarray, start: int, step: int) -> float:
    """Peak value reached from ``start`` while scores keep rising (ties continue)."""
    peak = x[start]
    k = start + step
    while 0 <= k < x.size and x[k] >= peak:
        peak = x[k]
        k += step
    return float(peak)


def boundaries_to_segments(boundaries, n: int) -> list[tuple[int, int]]:
    """Half-open spans [start, end) cut at the given interior boundaries."""
    if n < 1:
        raise ValidationError("call must have at least one utterance")
    bs = sorted(set(boundaries))
    if any(not (0 < b < n) for b in bs):
        raise ValidationError(f"boundaries {bs} out of range for {n} utterances")
    edges = [0, *bs, n]
    return list(zip(edges[:-1], edges[1:]))


def tag_segments_by_anchors(boundaries, utterance_embeddings, anchors: AnchorSet,
                            min_confidence: float = 0.15,
                            call_id: str = "") -> SegmentationResult:
    """Label each boundary-delimited span with its nearest-anchor topic.

    A span whose best anchor cosine against its mean embedding falls below
    ``min_confidence`` becomes background.  Adjacent same-label spans merge.
    """
    mat = _embedding_matrix(utterance_embeddings)
    n = mat.shape[0]

    def topic_sim(start: int, end: int, name: str) -> float:
        mean = mat[start:end].mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0:
            return 0.0
        return float((anchors.anchor_matrix(name) @ mean).max() / norm)

    def best_label(start: int, end: int) -> str:
        # ties resolve to the earlier topic in anchor-set order
        sims = [(topic_sim(start, end, t.name), -i, t.name)
                for i, t in enumerate(anchors.topics)]
        best_sim, _, best_topic = max(sims)
        return best_topic if best_sim >= min_confidence else BACKGROUND

    merged: list[list] = []
    for start, end in boundaries_to_segments(boundaries, n):
        label = best_label(start, end)
        if merged and merged[-1][2] == label:
            merged[-1][1] = end
        else:
            merged.append([start, end, label])
    segs = []
    for start, end, label in merged:
        score = 0.0 if label == BACKGROUND else max(0.0, min(1.0, topic_sim(start, end, label)))
        segs.append(Segment(start=start, end=end, label=label, score=score))
    return SegmentationResult(call_id=call_id, segments=tuple(segs))
