"""Deterministic synthetic calls with planted gold segmentations.

A call plan lists (label, length) spans.  Topic utterances are noisy copies of
a randomly chosen anchor of the topic; background utterances are random unit
vectors orthogonalized against the span of all anchors, then perturbed with
the same noise.  All randomness derives from the plan seed, so regeneration is
bit-identical.

Also holds the ingestion side for externally generated topic sentence corpora
(JSONL, one ``{"topic": ..., "text": ...}`` or ``{"topic": ..., "vector": ...}``
object per line).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .anchors import AnchorSet, DbscanParams, TopicAnchors
from .model import (
    BACKGROUND,
    DEFAULT_DIM,
    DEFAULT_TOPICS,
    Segment,
    SegmentationResult,
    Transcript,
    Utterance,
    ValidationError,
    unit_normalize,
)


@dataclass(frozen=True)
class PlanSegment:
    label: str  # topic name or BACKGROUND
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValidationError(f"plan segment length must be >= 1, got {self.length}")


@dataclass(frozen=True)
class CallPlan:
    segments: tuple[PlanSegment, ...]
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValidationError("call plan must contain at least one segment")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise sigma must be >= 0, got {self.noise_sigma}")

    @property
    def n_utterances(self) -> int:
        return sum(s.length for s in self.segments)


@dataclass(frozen=True)
class PlanDistribution:
    """Sampling spec for random plans: topic mix, lengths, segment counts."""

    topics: tuple[str, ...]
    len_range: tuple[int, int]
    segments_range: tuple[int, int]
    background_prob: float = 0.3
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not self.topics:
            raise ValidationError("plan distribution needs at least one topic")
        lo, hi = self.len_range
        if not (1 <= lo <= hi):
            raise ValidationError(f"bad len_range {self.len_range}")
        lo, hi = self.segments_range
        if not (1 <= lo <= hi):
            raise ValidationError(f"bad segments_range {self.segments_range}")
        if not (0.0 <= self.background_prob <= 1.0):
            raise ValidationError(f"background_prob must be in [0, 1], got {self.background_prob}")


def default_benchmark_distribution(noise_sigma: float = 0.2) -> PlanDistribution:
    """The stock five-topic benchmark mix used by the acceptance experiments."""
    return PlanDistribution(
        topics=DEFAULT_TOPICS,
        len_range=(6, 12),
        segments_range=(5, 9),
        background_prob=0.3,
        noise_sigma=noise_sigma,
    )


def sample_plan(dist: PlanDistribution, seed: int) -> CallPlan:
    """Draw one plan; adjacent segments never repeat a label."""
    rng = np.random.default_rng(seed)
    n_segments = int(rng.integers(dist.segments_range[0], dist.segments_range[1] + 1))
    labels: list[str] = []
    for _ in range(n_segments):
        for _attempt in range(50):
            if rng.random() < dist.background_prob:
                label = BACKGROUND
            else:
                label = dist.topics[int(rng.integers(len(dist.topics)))]
            if not labels or label != labels[-1]:
                break
        else:
            break  # e.g. a single-topic distribution that cannot alternate
        labels.append(label)
    segments = tuple(
        PlanSegment(label=l, length=int(rng.integers(dist.len_range[0], dist.len_range[1] + 1)))
        for l in labels
    )
    return CallPlan(segments=segments, noise_sigma=dist.noise_sigma, seed=seed)


def orthonormal_anchors(topics=DEFAULT_TOPICS, dim: int = DEFAULT_DIM,
                        seed: int = 0) -> AnchorSet:
    """One random orthonormal anchor per topic (a controlled test fixture)."""
    topics = tuple(topics)
    if dim < len(topics):
        raise ValidationError(f"dim {dim} too small for {len(topics)} orthonormal anchors")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, len(topics))))
    entries = []
    for i, name in enumerate(topics):
        anchor = unit_normalize(q[:, i])
        entries.append(TopicAnchors(name=name, anchors=(anchor,), cluster_sizes=(1,),
                                    params=DbscanParams(), fallback=False))
    return AnchorSet(dim=dim, topics=tuple(entries))


def _anchor_span_basis(anchors: AnchorSet) -> np.ndarray:
    all_anchors = np.vstack([a for t in anchors.topics for a in t.anchors])
    q, r = np.linalg.qr(all_anchors.T)
    keep = np.abs(np.diag(r)) > 1e-12
    return q[:, keep]


def generate_call(plan: CallPlan, anchors: AnchorSet,
                  call_id: str | None = None) -> tuple[Transcript, np.ndarray, SegmentationResult]:
    """Materialize one planned call: transcript, embeddings, gold segmentation."""
    for seg in plan.segments:
        if seg.label != BACKGROUND and seg.label not in anchors.topic_names:
            raise ValidationError(f"plan references unknown topic {seg.label!r}")
    if call_id is None:
        call_id = f"synthetic-{plan.seed}"
    rng = np.random.default_rng(plan.seed)
    basis = _anchor_span_basis(anchors)
    if basis.shape[1] >= anchors.dim:
        raise ValidationError("anchors span the whole space; background cannot be orthogonalized")

    utterances = []
    vectors = []
    i = 0
    for seg in plan.segments:
        for _ in range(seg.length):
            if seg.label == BACKGROUND:
                v = rng.standard_normal(anchors.dim)
                v = v - basis @ (basis.T @ v)
                norm = np.linalg.norm(v)
                if norm < 1e-9:
                    raise ValidationError("degenerate background draw; dim too small?")
                v = v / norm
            else:
                topic_anchors = anchors.anchors_of(seg.label)
                v = np.array(topic_anchors[int(rng.integers(len(topic_anchors)))])
            if plan.noise_sigma > 0:
                v = v + plan.noise_sigma * rng.standard_normal(anchors.dim)
            vectors.append(unit_normalize(v))
            speaker = "agent" if i % 2 == 0 else "customer"
            utterances.append(Utterance(index=i, text=f"{seg.label} utterance {i}",
                                        speaker=speaker,
                                        start_ms=i * 4000, end_ms=i * 4000 + 3500))
            i += 1

    gold_segments = []
    start = 0
    for seg in plan.segments:
        end = start + seg.length
        score = 0.0 if seg.label == BACKGROUND else 1.0
        if gold_segments and gold_segments[-1].label == seg.label:
            prev = gold_segments.pop()
            gold_segments.append(Segment(start=prev.start, end=end, label=seg.label,
                                         score=score))
        else:
            gold_segments.append(Segment(start=start, end=end, label=seg.label, score=score))
        start = end
    gold = SegmentationResult(call_id=call_id, segments=tuple(gold_segments))
    transcript = Transcript(call_id=call_id, utterances=tuple(utterances))
    return transcript, np.vstack(vectors), gold


# --- corpus directories -------------------------------------------------------

def generate_corpus(source: CallPlan | PlanDistribution, anchors: AnchorSet,
                    count: int, seed: int, out_dir) -> dict:
    """Write ``count`` calls (transcript, embeddings, gold) plus a manifest.

    Per-call seeds are ``seed + index`` so a corpus can be partially
    regenerated without disturbing other calls.
    """
    from .providers import save_call_embeddings
    from .model import save_segmentation, save_transcript

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    calls = []
    for i in range(count):
        call_seed = seed + i
        if isinstance(source, PlanDistribution):
            plan = sample_plan(source, seed=call_seed)
        else:
            plan = CallPlan(segments=source.segments, noise_sigma=source.noise_sigma,
                            seed=call_seed)
        call_id = f"call-{i:04d}"
        transcript, vectors, gold = generate_call(plan, anchors, call_id=call_id)
        names = {
            "transcript": f"{call_id}.transcript.json",
            "embeddings": f"{call_id}.embeddings.json",
            "gold": f"{call_id}.gold.json",
        }
        save_transcript(transcript, out / names["transcript"])
        save_call_embeddings(call_id, vectors, out / names["embeddings"])
        save_segmentation(gold, out / names["gold"])
        calls.append({"call_id": call_id, **names})
    manifest = {"seed": seed, "calls": calls}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def load_manifest(path) -> dict:
    path = Path(path)
    raw = json.loads(path.read_text())
    if "calls" not in raw or not isinstance(raw["calls"], list):
        raise ValidationError(f"malformed corpus manifest {path}")
    return raw


def plan_source_from_dict(raw: dict) -> CallPlan | PlanDistribution:
    """Parse a plan spec: fixed ``segments`` form or distribution form."""
    try:
        if "segments" in raw:
            segments = tuple(PlanSegment(label=str(s["label"]), length=int(s["len"]))
                             for s in raw["segments"])
            return CallPlan(segments=segments,
                            noise_sigma=float(raw.get("noise_sigma", 0.0)))
        return PlanDistribution(
            topics=tuple(str(t) for t in raw["topics"]),
            len_range=(int(raw["len_range"][0]), int(raw["len_range"][1])),
            segments_range=(int(raw["segments_range"][0]), int(raw["segments_range"][1])),
            background_prob=float(raw.get("background_prob", 0.3)),
            noise_sigma=float(raw.get("noise_sigma", 0.0)),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed plan spec: {exc}") from exc


# --- external sentence corpora --------------------------------------------------

def load_sentence_corpus(path) -> dict[str, list]:
    """Group a JSONL sentence corpus by topic, preserving input order.

    Each entry is either a raw text (to be embedded later) or a pre-computed
    vector, depending on the line.  Unknown fields are ignored; malformed
    lines are reported with their line number.
    """
    groups: dict[str, list] = {}
    with open(Path(path)) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(rec, dict) or "topic" not in rec:
                raise ValidationError(f"{path}:{lineno}: line is missing the 'topic' field")
            topic = str(rec["topic"])
            if "vector" in rec:
                try:
                    item = np.asarray(rec["vector"], dtype=np.float64)
                except (TypeError, ValueError) as exc:
                    raise ValidationError(f"{path}:{lineno}: bad vector: {exc}") from exc
            elif "text" in rec:
                item = str(rec["text"])
            else:
                raise ValidationError(f"{path}:{lineno}: line needs a 'text' or 'vector' field")
            groups.setdefault(topic, []).append(item)
    return groups
