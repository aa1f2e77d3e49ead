"""Segmentation quality metrics: Pk, WindowDiff, and corpus-level reports.

Both metrics slide a window anchored at every start ``i`` in ``[0, N - k]``
(``N - k + 1`` placements; the denominator, which the literature varies on, is
the placement count).  A window anchored at ``i`` spans utterances
``i .. i + k``, clamped to the call:

* **Pk** probes whether the window's two end utterances fall in the same
  segment, penalizing reference/hypothesis disagreement.
* **WindowDiff** counts the boundary trailing each utterance of the window
  and penalizes any difference in counts.

Metrics see only boundaries, never labels, so they are invariant under
relabeling.  Per-topic evaluation binarizes both segmentations to
{topic, background} first and recomputes boundaries on the binarized
sequences.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import BACKGROUND, SegmentationResult, ValidationError


def boundary_positions(labels: Sequence) -> list[int]:
    """Positions ``b`` (1-based starts) where ``labels[b] != labels[b - 1]``."""
    return [b for b in range(1, len(labels)) if labels[b] != labels[b - 1]]


def _check_pair(ref: Sequence, hyp: Sequence, k: int) -> int:
    n = len(ref)
    if n != len(hyp):
        raise ValidationError(f"label sequences differ in length: {n} vs {len(hyp)}")
    if n < 2:
        raise ValidationError("metrics need at least 2 utterances")
    if not (1 <= k < n):
        raise ValidationError(f"window size k={k} out of range for {n} utterances (need 1 <= k < {n})")
    return n


def pk(ref: Sequence, hyp: Sequence, k: int) -> float:
    """Sliding-window same-segment disagreement rate between two label sequences."""
    n = _check_pair(ref, hyp, k)
    ref_b = boundary_positions(ref)
    hyp_b = boundary_positions(hyp)

    def same_segment(bounds: list[int], i: int, j: int) -> bool:
        # no boundary b with i < b <= j
        return bisect_right(bounds, j) == bisect_right(bounds, i)

    penalties = 0
    for i in range(n - k + 1):
        j = min(i + k, n - 1)
        if same_segment(ref_b, i, j) != same_segment(hyp_b, i, j):
            penalties += 1
    return penalties / (n - k + 1)


def window_diff(ref: Sequence, hyp: Sequence, k: int) -> float:
    """Sliding-window boundary-count disagreement rate."""
    n = _check_pair(ref, hyp, k)
    ref_b = boundary_positions(ref)
    hyp_b = boundary_positions(hyp)

    def count(bounds: list[int], i: int) -> int:
        # boundaries trailing utterances i..i+k, i.e. b with i < b <= i + k + 1
        return bisect_right(bounds, i + k + 1) - bisect_right(bounds, i)

    penalties = 0
    for i in range(n - k + 1):
        if count(ref_b, i) != count(hyp_b, i):
            penalties += 1
    return penalties / (n - k + 1)


def default_k(ref_labels: Sequence) -> int:
    """Half the average reference segment length, clamped to a valid window.

    The clamps keep ``k`` in ``[2, N - 1]`` (lower bound 2 so degenerate short
    calls still probe across a gap; upper bound so the window fits).
    """
    n = len(ref_labels)
    if n < 2:
        raise ValidationError("default_k needs at least 2 utterances")
    n_segments = len(boundary_positions(ref_labels)) + 1
    k = max(2, int(round(n / (2 * n_segments))))
    return min(k, n - 1)


def _labels_of(seg: SegmentationResult | Sequence) -> list:
    if isinstance(seg, SegmentationResult):
        return seg.labels()
    return list(seg)


def binarize(labels: Sequence[str], topic: str) -> list[str]:
    """Collapse every label except ``topic`` to background."""
    return [topic if l == topic else BACKGROUND for l in labels]


@dataclass(frozen=True)
class TopicEval:
    pk: float
    windowdiff: float
    absent: bool = False


def per_topic_eval(ref, hyp, topic: str) -> TopicEval:
    """Pk/WindowDiff on the {topic, background} binarization of both inputs.

    The window size is recomputed from the binarized reference.  If neither
    side mentions the topic the metrics are reported as 0 with ``absent`` set.
    """
    ref_labels = _labels_of(ref)
    hyp_labels = _labels_of(hyp)
    if len(ref_labels) != len(hyp_labels):
        raise ValidationError(
            f"label sequences differ in length: {len(ref_labels)} vs {len(hyp_labels)}"
        )
    if topic not in ref_labels and topic not in hyp_labels:
        return TopicEval(pk=0.0, windowdiff=0.0, absent=True)
    ref_bin = binarize(ref_labels, topic)
    hyp_bin = binarize(hyp_labels, topic)
    k = default_k(ref_bin)
    return TopicEval(pk=pk(ref_bin, hyp_bin, k), windowdiff=window_diff(ref_bin, hyp_bin, k))


# --- corpus-level reporting ---------------------------------------------------

@dataclass(frozen=True)
class MetricStats:
    mean: float
    std: float  # population standard deviation

    @classmethod
    def of(cls, values: Sequence[float]) -> "MetricStats":
        arr = np.asarray(values, dtype=np.float64)
        return cls(mean=float(arr.mean()), std=float(arr.std()))


@dataclass(frozen=True)
class CallMetrics:
    call_id: str
    k: int
    pk: float
    windowdiff: float
    per_topic: dict[str, TopicEval] = field(default_factory=dict)


@dataclass(frozen=True)
class MetricReport:
    overall_pk: MetricStats
    overall_windowdiff: MetricStats
    per_topic: dict[str, dict[str, MetricStats]]
    per_call: tuple[CallMetrics, ...]

    def to_dict(self) -> dict:
        return {
            "overall": {
                "pk": {"mean": self.overall_pk.mean, "std": self.overall_pk.std},
                "windowdiff": {"mean": self.overall_windowdiff.mean,
                               "std": self.overall_windowdiff.std},
            },
            "per_topic": {
                name: {
                    "pk": {"mean": stats["pk"].mean, "std": stats["pk"].std},
                    "windowdiff": {"mean": stats["windowdiff"].mean,
                                   "std": stats["windowdiff"].std},
                    "calls": int(stats["calls"].mean),
                }
                for name, stats in self.per_topic.items()
            },
            "per_call": [
                {
                    "call_id": c.call_id,
                    "k": c.k,
                    "pk": c.pk,
                    "windowdiff": c.windowdiff,
                    "per_topic": {
                        t: {"pk": e.pk, "windowdiff": e.windowdiff, "absent": e.absent}
                        for t, e in c.per_topic.items()
                    },
                }
                for c in self.per_call
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_table(self) -> str:
        """Aligned text table: topics as columns, Pk/WinDiff cells."""
        names = list(self.per_topic)
        headers = ["", "overall", *names]
        cells = ["Pk/WinDiff",
                 f"{self.overall_pk.mean:.3f}/{self.overall_windowdiff.mean:.3f}"]
        for name in names:
            stats = self.per_topic[name]
            cells.append(f"{stats['pk'].mean:.3f}/{stats['windowdiff'].mean:.3f}")
        widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
        line1 = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
        line2 = "  ".join(c.ljust(w) for c, w in zip(cells, widths))
        return line1.rstrip() + "\n" + line2.rstrip()


def corpus_report(pairs: Sequence[tuple], topics: Sequence[str] = (),
                  k: int | None = None) -> MetricReport:
    """Per-call Pk/WindowDiff plus corpus mean and population std.

    ``pairs`` holds (reference, hypothesis) items as SegmentationResults or
    label sequences.  ``k`` overrides the per-call default window size.
    Per-topic aggregates skip calls where the topic is absent from both sides;
    their 'calls' entry counts how many calls contributed.
    """
    if not pairs:
        raise ValidationError("corpus report needs at least one (ref, hyp) pair")
    per_call = []
    for idx, (ref, hyp) in enumerate(pairs):
        ref_labels = _labels_of(ref)
        hyp_labels = _labels_of(hyp)
        call_id = ref.call_id if isinstance(ref, SegmentationResult) else f"call-{idx}"
        call_k = k if k is not None else default_k(ref_labels)
        entry = CallMetrics(
            call_id=call_id,
            k=call_k,
            pk=pk(ref_labels, hyp_labels, call_k),
            windowdiff=window_diff(ref_labels, hyp_labels, call_k),
            per_topic={t: per_topic_eval(ref_labels, hyp_labels, t) for t in topics},
        )
        per_call.append(entry)

    per_topic: dict[str, dict[str, MetricStats]] = {}
    for t in topics:
        evals = [c.per_topic[t] for c in per_call if not c.per_topic[t].absent]
        if evals:
            per_topic[t] = {
                "pk": MetricStats.of([e.pk for e in evals]),
                "windowdiff": MetricStats.of([e.windowdiff for e in evals]),
                "calls": MetricStats(mean=float(len(evals)), std=0.0),
            }
        else:
            per_topic[t] = {
                "pk": MetricStats(0.0, 0.0),
                "windowdiff": MetricStats(0.0, 0.0),
                "calls": MetricStats(0.0, 0.0),
            }
    return MetricReport(
        overall_pk=MetricStats.of([c.pk for c in per_call]),
        overall_windowdiff=MetricStats.of([c.windowdiff for c in per_call]),
        per_topic=per_topic,
        per_call=tuple(per_call),
    )
