"""Online phase, step 1: per-utterance topic scores and probabilities.

An utterance's score for a topic is the maximum cosine similarity between the
utterance embedding and any anchor of that topic.  Scores become per-utterance
probability rows through a temperature-scaled softmax.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .anchors import AnchorSet
from .model import ValidationError, cosine_similarity, softmax


@dataclass(frozen=True, eq=False)
class TopicScoreMatrix:
    """N x T matrix of max-cosine scores; column order is the anchor-set order."""

    call_id: str
    topics: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        _check_matrix(self.values, len(self.topics))

    @property
    def n_utterances(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class TopicProbMatrix:
    """N x T matrix whose rows are probability distributions over topics."""

    call_id: str
    topics: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        _check_matrix(self.values, len(self.topics))
        sums = self.values.sum(axis=1)
        if not np.allclose(sums, 1.0, atol=1e-9):
            raise ValidationError("probability rows must sum to 1")

    @property
    def n_utterances(self) -> int:
        return self.values.shape[0]

    def column(self, topic: str) -> np.ndarray:
        return self.values[:, self.topics.index(topic)]


def _check_matrix(values: np.ndarray, n_topics: int) -> None:
    if values.ndim != 2:
        raise ValidationError(f"expected an (N, T) matrix, got shape {values.shape}")
    if values.shape[1] != n_topics:
        raise ValidationError(f"matrix has {values.shape[1]} columns for {n_topics} topics")
    if values.shape[0] == 0:
        raise ValidationError("matrix must cover at least one utterance")
    if not np.all(np.isfinite(values)):
        raise ValidationError("matrix contains non-finite values")


def utterance_topic_score(utterance: np.ndarray, topic_anchors: Sequence[np.ndarray]) -> float:
    """Max cosine similarity between one utterance and a topic's anchors."""
    if len(topic_anchors) == 0:
        raise ValidationError("topic has no anchors to score against")
    return max(cosine_similarity(utterance, a) for a in topic_anchors)


def score_transcript(utterance_embeddings, anchor_set: AnchorSet,
                     call_id: str = "") -> TopicScoreMatrix:
    """Score every utterance against every topic of ``anchor_set``."""
    mat = np.asarray(utterance_embeddings, dtype=np.float64)
    if mat.ndim != 2:
        raise ValidationError(f"expected an (N, dim) embedding matrix, got shape {mat.shape}")
    if mat.shape[0] == 0:
        raise ValidationError("cannot score an empty transcript")
    if mat.shape[1] != anchor_set.dim:
        raise ValidationError(
            f"embedding dim {mat.shape[1]} does not match anchor set dim {anchor_set.dim}"
        )
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0):
        raise ValidationError("transcript contains a zero embedding")
    unit = mat / norms[:, None]

    cols = []
    for topic in anchor_set.topics:
        # anchors are unit vectors, so cosine is a dot product
        sims = unit @ np.vstack(topic.anchors).T
        cols.append(sims.max(axis=1))
    values = np.column_stack(cols)
    values.flags.writeable = False
    return TopicScoreMatrix(call_id=call_id, topics=anchor_set.topic_names, values=values)


def to_probabilities(scores: TopicScoreMatrix, temperature: float = 1.0) -> TopicProbMatrix:
    """Row-wise softmax of the score matrix at the given temperature."""
    probs = softmax(scores.values, temperature=temperature)
    probs.flags.writeable = False
    return TopicProbMatrix(call_id=scores.call_id, topics=scores.topics, values=probs)


def write_probs_csv(matrix, path) -> None:
    """Dump a score/probability matrix as CSV, one row per utterance."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(matrix.topics)
        for row in matrix.values:
            writer.writerow([repr(float(x)) for x in row])
