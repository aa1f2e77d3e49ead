"""Core data types and vector primitives shared by every pipeline stage.

Embeddings are plain float64 numpy arrays.  Structured records (utterances,
transcripts, segments) are frozen dataclasses that validate their invariants
on construction, so downstream code can assume well-formed inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BACKGROUND = "background"
DEFAULT_DIM = 384
DEFAULT_TOPICS = ("greetings", "closing", "pricing", "identification", "scheduling")

UNIT_NORM_TOL = 1e-6


class ValidationError(ValueError):
    """Raised when data violates a structural invariant or a config is bad."""


def as_embedding(values, dim: int | None = None) -> np.ndarray:
    """Coerce ``values`` to a 1-D float64 vector, checking finiteness and dim."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValidationError(f"embedding must be 1-D, got shape {v.shape}")
    if v.size == 0:
        raise ValidationError("embedding must be non-empty")
    if not np.all(np.isfinite(v)):
        raise ValidationError("embedding contains non-finite entries")
    if dim is not None and v.size != dim:
        raise ValidationError(f"embedding has length {v.size}, expected {dim}")
    return v


def unit_normalize(values, dim: int | None = None) -> np.ndarray:
    """Return ``values`` scaled to unit L2 norm."""
    v = as_embedding(values, dim)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValidationError("cannot normalize a zero vector")
    out = v / norm
    out.flags.writeable = False
    return out


def is_unit(v: np.ndarray, tol: float = UNIT_NORM_TOL) -> bool:
    return abs(float(np.linalg.norm(v)) - 1.0) <= tol


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two equal-length non-zero vectors."""
    va = as_embedding(a)
    vb = as_embedding(b)
    if va.size != vb.size:
        raise ValidationError(f"dimension mismatch: {va.size} vs {vb.size}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine similarity undefined for zero vectors")
    return float(np.dot(va, vb) / (na * nb))


def softmax(scores, temperature: float = 1.0) -> np.ndarray:
    """Temperature-scaled softmax with max-shift for numerical stability.

    Accepts a vector (returns a probability vector) or a matrix (row-wise).
    """
    if not (isinstance(temperature, (int, float)) and math.isfinite(temperature)):
        raise ValidationError("temperature must be a finite number")
    if temperature <= 0:
        raise ValidationError(f"temperature must be positive, got {temperature}")
    z = np.asarray(scores, dtype=np.float64)
    if z.size == 0:
        raise ValidationError("softmax of empty input")
    if not np.all(np.isfinite(z)):
        raise ValidationError("softmax input contains non-finite entries")
    shifted = (z - z.max(axis=-1, keepdims=True)) / temperature
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def check_topic_name(name: str) -> str:
    if not isinstance(name, str) or not name:
        raise ValidationError("topic name must be a non-empty string")
    if name == BACKGROUND:
        raise ValidationError(f"topic name may not be the reserved label {BACKGROUND!r}")
    return name


def check_topic_names(names: Iterable[str]) -> tuple[str, ...]:
    """Validate a topic list: non-empty, unique, no reserved collisions."""
    out = tuple(check_topic_name(n) for n in names)
    if len(set(out)) != len(out):
        raise ValidationError(f"duplicate topic names in {list(out)}")
    return out


@dataclass(frozen=True)
class Utterance:
    """One atomic unit of transcribed speech."""

    index: int
    text: str
    speaker: str | None = None
    start_ms: int | None = None
    end_ms: int | None = None

    def __post_init__(self):
        if self.index < 0:
            raise ValidationError(f"utterance index must be >= 0, got {self.index}")
        if self.start_ms is not None and self.end_ms is not None and self.end_ms < self.start_ms:
            raise ValidationError(
                f"utterance {self.index}: end_ms {self.end_ms} < start_ms {self.start_ms}"
            )


@dataclass(frozen=True)
class Transcript:
    """Ordered utterances of one call."""

    call_id: str
    utterances: tuple[Utterance, ...]

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        if not self.utterances:
            raise ValidationError("transcript must contain at least one utterance")
        for i, utt in enumerate(self.utterances):
            if utt.index != i:
                raise ValidationError(
                    f"utterance indices must be contiguous from 0: got {utt.index} at position {i}"
                )

    def __len__(self) -> int:
        return len(self.utterances)


@dataclass(frozen=True)
class Segment:
    """A contiguous utterance span [start, end) carrying one label."""

    start: int
    end: int
    label: str
    score: float = 0.0

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValidationError(f"segment needs 0 <= start < end, got [{self.start}, {self.end})")
        if not isinstance(self.label, str) or not self.label:
            raise ValidationError("segment label must be a non-empty string")
        if not (0.0 <= self.score <= 1.0):
            raise ValidationError(f"segment score must be in [0, 1], got {self.score}")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class SegmentationResult:
    """An exact partition of [0, N) into labeled segments.

    Segments are contiguous, non-overlapping, cover the whole call, and no two
    adjacent segments carry the same label.
    """

    call_id: str
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValidationError("segmentation must contain at least one segment")
        if self.segments[0].start != 0:
            raise ValidationError(f"first segment must start at 0, got {self.segments[0].start}")
        for prev, cur in zip(self.segments, self.segments[1:]):
            if cur.start != prev.end:
                raise ValidationError(
                    f"segments must tile the call: [{prev.start},{prev.end}) then [{cur.start},{cur.end})"
                )
            if cur.label == prev.label:
                raise ValidationError(f"adjacent segments share label {cur.label!r}")

    @property
    def n_utterances(self) -> int:
        return self.segments[-1].end

    def validate_length(self, n: int) -> None:
        if self.n_utterances != n:
            raise ValidationError(
                f"segmentation covers [0, {self.n_utterances}) but the call has {n} utterances"
            )

    def labels(self) -> list[str]:
        """Per-utterance label sequence (the canonical form for metrics)."""
        out = []
        for seg in self.segments:
            out.extend([seg.label] * len(seg))
        return out


def segments_from_labels(call_id: str, labels: Sequence[str],
                         scores: Sequence[float] | None = None) -> SegmentationResult:
    """Group a per-utterance label sequence into maximal same-label segments.

    ``scores`` optionally gives a per-utterance value; a segment's score is the
    mean over its span (background segments always score 0).
    """
    if not labels:
        raise ValidationError("empty label sequence")
    segs = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            label = labels[start]
            if label == BACKGROUND or scores is None:
                score = 0.0
            else:
                score = float(np.mean(np.asarray(scores[start:i], dtype=np.float64)))
            segs.append(Segment(start=start, end=i, label=label, score=min(max(score, 0.0), 1.0)))
            start = i
    return SegmentationResult(call_id=call_id, segments=tuple(segs))


# --- JSON round trips -------------------------------------------------------

def transcript_to_dict(t: Transcript) -> dict:
    utts = []
    for u in t.utterances:
        rec = {"index": u.index, "text": u.text}
        if u.speaker is not None:
            rec["speaker"] = u.speaker
        if u.start_ms is not None:
            rec["start_ms"] = u.start_ms
        if u.end_ms is not None:
            rec["end_ms"] = u.end_ms
        utts.append(rec)
    return {"call_id": t.call_id, "utterances": utts}


def transcript_from_dict(d: dict) -> Transcript:
    try:
        utts = tuple(
            Utterance(
                index=int(rec["index"]),
                text=str(rec["text"]),
                speaker=rec.get("speaker"),
                start_ms=rec.get("start_ms"),
                end_ms=rec.get("end_ms"),
            )
            for rec in d["utterances"]
        )
        return Transcript(call_id=str(d["call_id"]), utterances=utts)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed transcript record: {exc}") from exc


def segmentation_to_dict(r: SegmentationResult) -> dict:
    return {
        "call_id": r.call_id,
        "segments": [
            {"start": s.start, "end": s.end, "label": s.label, "score": s.score}
            for s in r.segments
        ],
    }


def segmentation_from_dict(d: dict) -> SegmentationResult:
    try:
        segs = tuple(
            Segment(start=int(s["start"]), end=int(s["end"]),
                    label=str(s["label"]), score=float(s.get("score", 0.0)))
            for s in d["segments"]
        )
        return SegmentationResult(call_id=str(d["call_id"]), segments=segs)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed segmentation record: {exc}") from exc


def load_transcript(path) -> Transcript:
    return transcript_from_dict(json.loads(Path(path).read_text()))


def save_transcript(t: Transcript, path) -> None:
    Path(path).write_text(json.dumps(transcript_to_dict(t), indent=2) + "\n")


def load_segmentation(path) -> SegmentationResult:
    return segmentation_from_dict(json.loads(Path(path).read_text()))


def save_segmentation(r: SegmentationResult, path) -> None:
    Path(path).write_text(json.dumps(segmentation_to_dict(r), indent=2) + "\n")
