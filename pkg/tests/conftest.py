import numpy as np
import pytest

from convseg.anchors import AnchorSet, DbscanParams, TopicAnchors
from convseg.model import DEFAULT_TOPICS
from convseg.synthetic import orthonormal_anchors
from convseg.windowing import PipelineConfig, TopicConfig


def basis_vector(i: int, dim: int) -> np.ndarray:
    v = np.zeros(dim)
    v[i] = 1.0
    return v


@pytest.fixture
def five_topic_anchors() -> AnchorSet:
    """Orthonormal single-anchor topics in a 384-dim space."""
    return orthonormal_anchors(DEFAULT_TOPICS, dim=384, seed=11)


def exact_recovery_config(topic_names, min_segment_len: int = 2) -> PipelineConfig:
    """A permissive config under which zero-noise calls are recovered exactly.

    Diffusion is disabled (there is no noise to repair) and the window
    threshold sits between the pure-window mean and the worst straddling
    window mean at temperature 0.25.
    """
    topics = tuple(
        TopicConfig(name=n, window_width={"pricing": 6, "identification": 4,
                                          "scheduling": 5}.get(n, 3),
                    threshold=0.85)
        for n in topic_names
    )
    return PipelineConfig(topics=topics, temperature=0.25, alpha=0.0,
                          min_segment_len=min_segment_len)


def make_anchor_set(topic_vectors: dict, params: DbscanParams = DbscanParams()) -> AnchorSet:
    """AnchorSet from explicit per-topic anchor vectors (already unit norm)."""
    topics = []
    dim = None
    for name, vectors in topic_vectors.items():
        anchors = tuple(np.asarray(v, dtype=np.float64) for v in vectors)
        dim = anchors[0].size
        topics.append(TopicAnchors(name=name, anchors=anchors,
                                   cluster_sizes=tuple([1] * len(anchors)),
                                   params=params))
    return AnchorSet(dim=dim, topics=tuple(topics))
