"""Online phase, step 3: sliding-window tagging, merging, conflict resolution.

``tag_windows`` emits every fixed-width window whose mean topic probability
strictly exceeds that topic's threshold.  ``merge_and_resolve`` unions window
candidates into per-topic runs, lets runs claim utterances in descending score
order, fills the rest with background, and returns a valid segmentation.
``segment_call`` chains the whole online phase.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .anchors import AnchorSet
from .diffusion import DiffusionConfig, HeatSource, detect_heat_sources, diffuse, renormalize
from .model import (
    BACKGROUND,
    SegmentationResult,
    Transcript,
    ValidationError,
    check_topic_names,
    segments_from_labels,
)
from .scoring import TopicProbMatrix, TopicScoreMatrix, score_transcript, to_probabilities

# Defaults tuned on the synthetic validation corpus (scripts/tune_defaults.py).
# Wide windows systematically over-extend runs past segment edges, so the
# tuned width is small and uniform; per-topic overrides stay available in the
# config file.
DEFAULT_WINDOW_WIDTH = 2
DEFAULT_WINDOW_THRESHOLD = 0.6
DEFAULT_PEAK_THRESHOLD = 0.5
DEFAULT_TEMPERATURE = 0.15

# "exceeds the threshold" is strict; the slack keeps accumulated float error in
# window means from flipping hand-checkable boundary cases like (0.9+0.1)/2
THRESHOLD_SLACK = 1e-12


class PipelineError(ValidationError):
    """An online-phase stage failed; the message names the stage."""


@dataclass(frozen=True)
class TopicConfig:
    """Per-topic tagging knobs."""

    name: str
    window_width: int
    threshold: float
    peak_threshold: float = DEFAULT_PEAK_THRESHOLD

    def __post_init__(self):
        if self.window_width < 1:
            raise ValidationError(f"window width must be >= 1, got {self.window_width}")
        if not (0.0 < self.threshold < 1.0):
            raise ValidationError(f"window threshold must be in (0, 1), got {self.threshold}")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the online phase needs beyond the anchor set."""

    topics: tuple[TopicConfig, ...]
    temperature: float = DEFAULT_TEMPERATURE
    alpha: float = 0.5
    lam: float = 2.0
    cutoff: int = 6
    min_segment_len: int = 2

    def __post_init__(self):
        check_topic_names(t.name for t in self.topics)
        if self.temperature <= 0:
            raise ValidationError(f"temperature must be > 0, got {self.temperature}")
        if self.min_segment_len < 1:
            raise ValidationError(f"min_segment_len must be >= 1, got {self.min_segment_len}")

    @classmethod
    def for_topics(cls, names: Sequence[str], **overrides) -> "PipelineConfig":
        topics = tuple(
            TopicConfig(name=n, window_width=DEFAULT_WINDOW_WIDTH,
                        threshold=DEFAULT_WINDOW_THRESHOLD)
            for n in names
        )
        return cls(topics=topics, **overrides)

    def topic(self, name: str) -> TopicConfig:
        for t in self.topics:
            if t.name == name:
                return t
        raise ValidationError(f"topic {name!r} missing from pipeline config")

    def aligned(self, topic_order: Sequence[str]) -> tuple[TopicConfig, ...]:
        """Topic configs reordered to match a score-matrix column order."""
        if set(topic_order) != {t.name for t in self.topics}:
            raise ValidationError(
                f"config topics {sorted(t.name for t in self.topics)} do not match "
                f"anchor topics {sorted(topic_order)}"
            )
        return tuple(self.topic(n) for n in topic_order)

    def diffusion(self, topic_order: Sequence[str]) -> DiffusionConfig:
        peaks = tuple(t.peak_threshold for t in self.aligned(topic_order))
        return DiffusionConfig(alpha=self.alpha, lam=self.lam, cutoff=self.cutoff,
                               peak_threshold=peaks)

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "diffusion": {"alpha": self.alpha, "lambda": self.lam, "cutoff": self.cutoff},
            "topics": [
                {
                    "name": t.name,
                    "peak_threshold": t.peak_threshold,
                    "window_width": t.window_width,
                    "threshold": t.threshold,
                }
                for t in self.topics
            ],
            "min_segment_len": self.min_segment_len,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        try:
            diff = raw.get("diffusion", {})
            topics = tuple(
                TopicConfig(
                    name=str(t["name"]),
                    window_width=int(t["window_width"]),
                    threshold=float(t["threshold"]),
                    peak_threshold=float(t.get("peak_threshold", DEFAULT_PEAK_THRESHOLD)),
                )
                for t in raw["topics"]
            )
            return cls(
                topics=topics,
                temperature=float(raw.get("temperature", DEFAULT_TEMPERATURE)),
                alpha=float(diff.get("alpha", 0.5)),
                lam=float(diff.get("lambda", 2.0)),
                cutoff=int(diff.get("cutoff", 6)),
                min_segment_len=int(raw.get("min_segment_len", 2)),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed pipeline config: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_file(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class CandidateWindow:
    """One sliding window whose mean probability beat its topic threshold."""

    topic_index: int
    topic: str
    start: int
    end: int
    score: float


def tag_windows(probs: TopicProbMatrix, cfg: PipelineConfig) -> list[CandidateWindow]:
    """Slide each topic's window with stride 1 and keep means above threshold.

    When the call is shorter than a topic's window, a single window covering
    the whole call is evaluated instead.
    """
    n = probs.n_utterances
    topic_cfgs = cfg.aligned(probs.topics)
    out: list[CandidateWindow] = []
    for c, tcfg in enumerate(topic_cfgs):
        col = probs.values[:, c]
        w = min(tcfg.window_width, n)
        # mean over [s, s+w) for every start, via prefix sums
        cums = np.concatenate([[0.0], np.cumsum(col)])
        means = (cums[w:] - cums[:-w]) / w
        for s in np.flatnonzero(means > tcfg.threshold + THRESHOLD_SLACK):
            out.append(CandidateWindow(topic_index=c, topic=tcfg.name,
                                       start=int(s), end=int(s) + w,
                                       score=float(means[s])))
    return out


@dataclass
class _Run:
    topic_index: int
    topic: str
    start: int
    end: int
    score: float = 0.0


def _merge_runs(candidates: Sequence[CandidateWindow]) -> list[_Run]:
    """Union overlapping or touching same-topic windows into maximal runs."""
    by_topic: dict[int, list[CandidateWindow]] = {}
    for cand in candidates:
        by_topic.setdefault(cand.topic_index, []).append(cand)
    runs: list[_Run] = []
    for c, cands in sorted(by_topic.items()):
        cands.sort(key=lambda w: w.start)
        cur = _Run(topic_index=c, topic=cands[0].topic, start=cands[0].start, end=cands[0].end)
        for w in cands[1:]:
            if w.start <= cur.end:
                cur.end = max(cur.end, w.end)
            else:
                runs.append(cur)
                cur = _Run(topic_index=c, topic=w.topic, start=w.start, end=w.end)
        runs.append(cur)
    return runs


def merge_and_resolve(candidates: Sequence[CandidateWindow], probs: TopicProbMatrix,
                      cfg: PipelineConfig) -> SegmentationResult:
    """Resolve window candidates into a full, conflict-free segmentation.

    Runs claim their still-unclaimed utterances in descending run score (mean
    topic probability over the run span), ties broken by earlier start and
    then topic column order.  Claimed fragments shorter than
    ``min_segment_len`` are dropped; unclaimed utterances become background.
    """
    n = probs.n_utterances
    runs = _merge_runs(candidates)
    for run in runs:
        run.score = float(probs.values[run.start:run.end, run.topic_index].mean())
    runs.sort(key=lambda r: (-r.score, r.start, r.topic_index))

    owner = np.full(n, -1, dtype=int)
    for run in runs:
        span = np.arange(run.start, run.end)
        free = span[owner[span] == -1]
        if free.size == 0:
            continue
        # claim each contiguous fragment of free utterances separately
        breaks = np.flatnonzero(np.diff(free) > 1) + 1
        for frag in np.split(free, breaks):
            if frag.size >= cfg.min_segment_len:
                owner[frag] = run.topic_index
    labels = [probs.topics[o] if o >= 0 else BACKGROUND for o in owner]
    scores = [probs.values[i, o] if o >= 0 else 0.0 for i, o in enumerate(owner)]
    return segments_from_labels(probs.call_id, labels, scores)


@dataclass(frozen=True)
class PipelineRun:
    """Intermediate artifacts of one online-phase run (for debugging/dumps)."""

    result: SegmentationResult
    scores: TopicScoreMatrix
    probs_pre: TopicProbMatrix
    sources: tuple[HeatSource, ...]
    probs_post: TopicProbMatrix
    candidates: tuple[CandidateWindow, ...]


def run_pipeline(transcript: Transcript, utterance_embeddings, anchors: AnchorSet,
                 cfg: PipelineConfig) -> PipelineRun:
    """Full online phase, returning all intermediate matrices."""
    mat = np.asarray(utterance_embeddings, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != len(transcript):
        raise ValidationError(
            f"embeddings misaligned with transcript: {mat.shape[0] if mat.ndim == 2 else '?'} "
            f"vectors for {len(transcript)} utterances"
        )
    cfg.aligned(anchors.topic_names)  # fail fast on topic mismatch

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            raise PipelineError(f"stage {name!r}: {exc}") from exc

    scores = stage("score_transcript", score_transcript, mat, anchors, call_id=transcript.call_id)
    probs_pre = stage("to_probabilities", to_probabilities, scores, temperature=cfg.temperature)
    dcfg = cfg.diffusion(anchors.topic_names)
    sources = stage("detect_heat_sources", detect_heat_sources, probs_pre, dcfg)
    adjusted = stage("diffuse", diffuse, probs_pre, sources, dcfg)
    probs_post = stage("renormalize", renormalize, adjusted, cfg.temperature,
                       call_id=transcript.call_id, topics=probs_pre.topics)
    candidates = stage("tag_windows", tag_windows, probs_post, cfg)
    result = stage("merge_and_resolve", merge_and_resolve, candidates, probs_post, cfg)
    return PipelineRun(result=result, scores=scores, probs_pre=probs_pre,
                       sources=tuple(sources), probs_post=probs_post,
                       candidates=tuple(candidates))


def segment_call(transcript: Transcript, utterance_embeddings, anchors: AnchorSet,
                 cfg: PipelineConfig) -> SegmentationResult:
    """Segment one call; deterministic for fixed inputs and config."""
    return run_pipeline(transcript, utterance_embeddings, anchors, cfg).result
