"""Topic segmentation and tagging of call transcripts via topic anchors."""

from .anchors import AnchorSet, DbscanParams, TopicAnchors, dbscan, extract_anchors
from .baselines import (
    GreedyParams,
    TextTilingParams,
    greedy_segment,
    split_gain,
    tag_segments_by_anchors,
    texttiling_segment,
)
from .diffusion import DiffusionConfig, HeatSource, detect_heat_sources, diffuse, renormalize
from .metrics import corpus_report, default_k, per_topic_eval, pk, window_diff
from .model import (
    BACKGROUND,
    DEFAULT_TOPICS,
    Segment,
    SegmentationResult,
    Transcript,
    Utterance,
    ValidationError,
    cosine_similarity,
    softmax,
)
from .scoring import score_transcript, to_probabilities, utterance_topic_score
from .synthetic import CallPlan, PlanDistribution, generate_call, generate_corpus
from .windowing import PipelineConfig, TopicConfig, merge_and_resolve, segment_call, tag_windows

__all__ = [
    "AnchorSet",
    "BACKGROUND",
    "CallPlan",
    "DEFAULT_TOPICS",
    "DbscanParams",
    "DiffusionConfig",
    "GreedyParams",
    "HeatSource",
    "PipelineConfig",
    "PlanDistribution",
    "Segment",
    "SegmentationResult",
    "TextTilingParams",
    "TopicAnchors",
    "TopicConfig",
    "Transcript",
    "Utterance",
    "ValidationError",
    "corpus_report",
    "cosine_similarity",
    "dbscan",
    "default_k",
    "detect_heat_sources",
    "diffuse",
    "extract_anchors",
    "generate_call",
    "generate_corpus",
    "greedy_segment",
    "merge_and_resolve",
    "per_topic_eval",
    "pk",
    "renormalize",
    "score_transcript",
    "segment_call",
    "softmax",
    "split_gain",
    "tag_segments_by_anchors",
    "tag_windows",
    "texttiling_segment",
    "to_probabilities",
    "utterance_topic_score",
    "window_diff",
]

__version__ = "0.1.0"
