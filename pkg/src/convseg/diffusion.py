"""Online phase, step 2: peak detection and heat diffusion over probabilities.

Each topic column of the probability matrix is treated as a time series over
utterance indices.  Local maxima above a per-topic threshold become "heat
sources"; every sample then gets an additive boost from its nearest source on
each side, scaled by the source value and decayed exponentially with index
distance.  A final row-wise softmax turns the boosted scores back into
probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ValidationError, softmax
from .scoring import TopicProbMatrix


@dataclass(frozen=True)
class DiffusionConfig:
    """Diffusion shape parameters.

    ``peak_threshold`` is a single float applied to every topic or a sequence
    with one threshold per topic column.
    """

    alpha: float = 0.5
    lam: float = 2.0
    cutoff: int = 6
    peak_threshold: float | tuple[float, ...] = 0.5

    def __post_init__(self):
        if self.alpha < 0:
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")
        if self.lam <= 0:
            raise ValidationError(f"lambda must be > 0, got {self.lam}")
        if self.cutoff < 0:
            raise ValidationError(f"cutoff must be >= 0, got {self.cutoff}")

    def thresholds(self, n_topics: int) -> np.ndarray:
        if isinstance(self.peak_threshold, (int, float)):
            return np.full(n_topics, float(self.peak_threshold))
        t = np.asarray(self.peak_threshold, dtype=np.float64)
        if t.shape != (n_topics,):
            raise ValidationError(
                f"{t.size} peak thresholds for {n_topics} topics"
            )
        return t


@dataclass(frozen=True)
class HeatSource:
    """A local probability peak for one topic."""

    topic_index: int
    index: int
    value: float


def _column_peaks(col: np.ndarray, threshold: float) -> list[int]:
    """Indices of local maxima at or above ``threshold``.

    A peak is strictly greater than both neighbors; at the array boundary only
    the single existing neighbor counts.  On a plateau of equal values the
    first index qualifies, provided the plateau as a whole is a maximum.
    """
    n = col.size
    peaks = []
    i = 0
    while i < n:
        if col[i] < threshold or (i > 0 and col[i] <= col[i - 1]):
            i += 1
            continue
        j = i
        while j + 1 < n and col[j + 1] == col[i]:
            j += 1
        if j + 1 == n or col[j + 1] < col[i]:
            peaks.append(i)
        i = j + 1
    return peaks


def detect_heat_sources(probs: TopicProbMatrix, cfg: DiffusionConfig) -> list[HeatSource]:
    """Find per-topic probability peaks that qualify as diffusion origins."""
    thresholds = cfg.thresholds(len(probs.topics))
    sources = []
    for c in range(len(probs.topics)):
        col = probs.values[:, c]
        for i in _column_peaks(col, thresholds[c]):
            sources.append(HeatSource(topic_index=c, index=i, value=float(col[i])))
    return sources


def diffuse(probs: TopicProbMatrix, sources: Sequence[HeatSource],
            cfg: DiffusionConfig) -> np.ndarray:
    """Add distance-decayed source heat to every entry; returns raw scores.

    For sample ``i`` and topic ``c`` the boost is
    ``alpha * (v_L * exp(-d_L / lam) + v_R * exp(-d_R / lam))`` where L/R are
    the nearest sources of topic ``c`` strictly left/right of ``i`` within
    ``cutoff`` indices.  A missing side contributes nothing, and a source is
    never its own neighbor.  Output rows no longer sum to 1.
    """
    adjusted = np.array(probs.values, dtype=np.float64, copy=True)
    n = probs.n_utterances
    for c in range(len(probs.topics)):
        topic_sources = sorted((s for s in sources if s.topic_index == c),
                               key=lambda s: s.index)
        if not topic_sources:
            continue
        positions = np.array([s.index for s in topic_sources])
        values = np.array([s.value for s in topic_sources])
        idx = np.arange(n)
        # nearest source strictly left of each sample
        left = np.searchsorted(positions, idx, side="left") - 1
        has_left = left >= 0
        d_left = np.where(has_left, idx - positions[np.clip(left, 0, None)], np.inf)
        boost_left = np.where(
            has_left & (d_left <= cfg.cutoff),
            values[np.clip(left, 0, None)] * np.exp(-d_left / cfg.lam),
            0.0,
        )
        # nearest source strictly right of each sample
        right = np.searchsorted(positions, idx, side="right")
        has_right = right < positions.size
        safe_right = np.clip(right, None, positions.size - 1)
        d_right = np.where(has_right, positions[safe_right] - idx, np.inf)
        boost_right = np.where(
            has_right & (d_right <= cfg.cutoff),
            values[safe_right] * np.exp(-d_right / cfg.lam),
            0.0,
        )
        adjusted[:, c] += cfg.alpha * (boost_left + boost_right)
    return adjusted


def renormalize(adjusted: np.ndarray, temperature: float, *,
                call_id: str, topics: tuple[str, ...]) -> TopicProbMatrix:
    """Row-wise softmax of diffused scores, restoring valid probability rows."""
    probs = softmax(adjusted, temperature=temperature)
    probs.flags.writeable = False
    return TopicProbMatrix(call_id=call_id, topics=topics, values=probs)
