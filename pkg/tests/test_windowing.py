import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import exact_recovery_config

from convseg.model import BACKGROUND, Segment, Transcript, Utterance, ValidationError
from convseg.scoring import TopicProbMatrix
from convseg.synthetic import CallPlan, PlanSegment, generate_call, orthonormal_anchors
from convseg.windowing import (
    CandidateWindow,
    PipelineConfig,
    PipelineError,
    TopicConfig,
    merge_and_resolve,
    run_pipeline,
    segment_call,
    tag_windows,
)


def probs_for(columns: dict[str, list[float]]) -> TopicProbMatrix:
    """Build a valid prob matrix from named columns plus a slack column."""
    names = list(columns)
    mat = np.column_stack([np.asarray(columns[n], dtype=np.float64) for n in names])
    slack = 1.0 - mat.sum(axis=1)
    assert np.all(slack > -1e-12)
    values = np.column_stack([mat, np.clip(slack, 0, None)])
    return TopicProbMatrix(call_id="c", topics=tuple(names) + ("slack",), values=values)


def config_for(probs: TopicProbMatrix, width: int | dict = 3, threshold: float = 0.5,
               min_segment_len: int = 2) -> PipelineConfig:
    topics = []
    for name in probs.topics:
        w = width.get(name, 3) if isinstance(width, dict) else width
        topics.append(TopicConfig(name=name, window_width=w, threshold=threshold))
    return PipelineConfig(topics=tuple(topics), min_segment_len=min_segment_len)


class TestTagWindows:
    def test_constant_column_emits_all_starts(self):
        probs = probs_for({"pricing": [0.9] * 5})
        cands = [c for c in tag_windows(probs, config_for(probs)) if c.topic == "pricing"]
        assert [(c.start, c.end) for c in cands] == [(0, 3), (1, 4), (2, 5)]
        assert all(c.score == pytest.approx(0.9) for c in cands)

    def test_all_below_threshold(self):
        probs = probs_for({"pricing": [0.3] * 5, "closing": [0.35] * 5})
        assert tag_windows(probs, config_for(probs)) == []

    def test_strict_exceedance(self):
        probs = probs_for({"pricing": [0.9, 0.9, 0.9, 0.1, 0.1]})
        cands = [c for c in tag_windows(probs, config_for(probs, width=2))
                 if c.topic == "pricing"]
        # the [2, 4) window means exactly 0.5 and "exceeds" is strict
        assert [(c.start, c.end) for c in cands] == [(0, 2), (1, 3)]
        assert cands[0].score == pytest.approx(0.9)

    def test_call_shorter_than_window(self):
        probs = probs_for({"pricing": [0.9, 0.9]})
        cands = [c for c in tag_windows(probs, config_for(probs, width=5))
                 if c.topic == "pricing"]
        assert [(c.start, c.end) for c in cands] == [(0, 2)]

    def test_config_topics_must_match(self):
        probs = probs_for({"pricing": [0.9] * 4})
        cfg = PipelineConfig(topics=(TopicConfig(name="other", window_width=3, threshold=0.5),))
        with pytest.raises(ValidationError, match="do not match"):
            tag_windows(probs, cfg)


class TestMergeAndResolve:
    def test_same_topic_merge(self):
        probs = probs_for({"pricing": [0.9] * 5})
        cands = [
            CandidateWindow(0, "pricing", 0, 3, 0.9),
            CandidateWindow(0, "pricing", 2, 5, 0.9),
        ]
        result = merge_and_resolve(cands, probs, config_for(probs))
        assert [(s.start, s.end, s.label) for s in result.segments] == [(0, 5, "pricing")]
        assert result.segments[0].score == pytest.approx(0.9)

    def test_no_candidates_all_background(self):
        probs = probs_for({"pricing": [0.1] * 4})
        result = merge_and_resolve([], probs, config_for(probs))
        assert result.segments == (Segment(0, 4, BACKGROUND, 0.0),)

    def test_cross_topic_overlap_resolution(self):
        # the higher-scoring run claims its full span; the loser keeps the rest
        probs = probs_for({
            "pricing": [0.40, 0.40, 0.40, 0.40, 0.05, 0.05],
            "scheduling": [0.05, 0.05, 0.55, 0.55, 0.55, 0.55],
        })
        cands = [
            CandidateWindow(0, "pricing", 0, 4, 0.40),
            CandidateWindow(1, "scheduling", 2, 6, 0.55),
        ]
        result = merge_and_resolve(cands, probs, config_for(probs, min_segment_len=2))
        assert [(s.start, s.end, s.label) for s in result.segments] == [
            (0, 2, "pricing"), (2, 6, "scheduling"),
        ]

    def test_short_remainder_dropped(self):
        probs = probs_for({
            "pricing": [0.4] * 7,
            "scheduling": [0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0],
        })
        cands = [
            CandidateWindow(0, "pricing", 0, 7, 0.4),
            CandidateWindow(1, "scheduling", 3, 6, 0.5),
        ]
        result = merge_and_resolve(cands, probs, config_for(probs, min_segment_len=3))
        # pricing keeps [0, 3) but its [6, 7) fragment is too short
        assert [(s.start, s.end, s.label) for s in result.segments] == [
            (0, 3, "pricing"), (3, 6, "scheduling"), (6, 7, BACKGROUND),
        ]

    def test_score_tie_breaks_by_start_then_topic(self):
        probs = probs_for({"a": [0.4] * 4, "b": [0.4] * 4})
        cands = [
            CandidateWindow(1, "b", 2, 4, 0.4),
            CandidateWindow(0, "a", 0, 4, 0.4),
        ]
        result = merge_and_resolve(cands, probs, config_for(probs, min_segment_len=1))
        # equal scores: the earlier-start run ("a" at 0) claims first
        assert [(s.start, s.end, s.label) for s in result.segments] == [(0, 4, "a")]

    def test_output_always_partitions(self):
        rng = np.random.default_rng(0)
        for trial in range(25):
            raw = rng.random((rng.integers(2, 25), 4)) + 1e-9
            values = raw / raw.sum(axis=1, keepdims=True)
            probs = TopicProbMatrix(call_id="c", topics=("a", "b", "c", "d"), values=values)
            cfg = config_for(probs, width=int(rng.integers(1, 5)),
                             threshold=float(rng.uniform(0.2, 0.6)),
                             min_segment_len=int(rng.integers(1, 4)))
            result = merge_and_resolve(tag_windows(probs, cfg), probs, cfg)
            result.validate_length(probs.n_utterances)
            for seg in result.segments:
                if seg.label != BACKGROUND:
                    assert len(seg) >= cfg.min_segment_len

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.25, 0.5), st.floats(0.01, 0.3))
    def test_raising_thresholds_grows_background(self, seed, theta, delta):
        # with min_segment_len=1 claimed coverage is exactly the run union,
        # which shrinks as every topic threshold rises
        rng = np.random.default_rng(seed)
        raw = rng.random((20, 3)) + 1e-9
        values = raw / raw.sum(axis=1, keepdims=True)
        probs = TopicProbMatrix(call_id="c", topics=("a", "b", "c"), values=values)
        lo = config_for(probs, threshold=theta, min_segment_len=1)
        hi = config_for(probs, threshold=min(0.99, theta + delta), min_segment_len=1)
        bg_lo = sum(len(s) for s in
                    merge_and_resolve(tag_windows(probs, lo), probs, lo).segments
                    if s.label == BACKGROUND)
        bg_hi = sum(len(s) for s in
                    merge_and_resolve(tag_windows(probs, hi), probs, hi).segments
                    if s.label == BACKGROUND)
        assert bg_hi >= bg_lo


class TestSegmentCall:
    def test_single_utterance_call(self):
        anchors = orthonormal_anchors(dim=64, seed=3)
        transcript = Transcript(call_id="c", utterances=(Utterance(index=0, text="hi"),))
        embeddings = np.vstack([anchors.anchors_of("pricing")[0]])
        cfg = exact_recovery_config(anchors.topic_names, min_segment_len=1)
        result = segment_call(transcript, embeddings, anchors, cfg)
        assert [(s.start, s.end, s.label) for s in result.segments] == [(0, 1, "pricing")]

    def test_zero_noise_plan_recovered_exactly(self):
        anchors = orthonormal_anchors(dim=64, seed=3)
        plan = CallPlan(segments=(
            PlanSegment("greetings", 4), PlanSegment("pricing", 10), PlanSegment("closing", 4),
        ), noise_sigma=0.0, seed=5)
        transcript, embeddings, gold = generate_call(plan, anchors)
        cfg = exact_recovery_config(anchors.topic_names)
        result = segment_call(transcript, embeddings, anchors, cfg)
        assert [(s.start, s.end, s.label) for s in result.segments] == \
            [(s.start, s.end, s.label) for s in gold.segments]

    def test_zero_noise_with_background_gap(self):
        anchors = orthonormal_anchors(dim=64, seed=3)
        plan = CallPlan(segments=(
            PlanSegment("greetings", 4), PlanSegment(BACKGROUND, 3),
            PlanSegment("scheduling", 7), PlanSegment(BACKGROUND, 2),
            PlanSegment("closing", 5),
        ), noise_sigma=0.0, seed=6)
        transcript, embeddings, gold = generate_call(plan, anchors)
        result = segment_call(transcript, embeddings, anchors,
                              exact_recovery_config(anchors.topic_names))
        assert [(s.start, s.end, s.label) for s in result.segments] == \
            [(s.start, s.end, s.label) for s in gold.segments]

    def test_misaligned_embeddings_error_carries_counts(self):
        anchors = orthonormal_anchors(dim=64, seed=3)
        transcript = Transcript(call_id="c", utterances=(
            Utterance(index=0, text="a"), Utterance(index=1, text="b"),
        ))
        with pytest.raises(ValidationError, match="3 .*2"):
            segment_call(transcript, np.ones((3, 64)), anchors,
                         exact_recovery_config(anchors.topic_names))

    def test_topic_permutation_invariance(self):
        anchors = orthonormal_anchors(dim=128, seed=4)
        plan = CallPlan(segments=(
            PlanSegment("pricing", 8), PlanSegment(BACKGROUND, 4), PlanSegment("closing", 6),
        ), noise_sigma=0.15, seed=9)
        transcript, embeddings, _ = generate_call(plan, anchors)
        cfg = exact_recovery_config(anchors.topic_names)
        base = segment_call(transcript, embeddings, anchors, cfg)

        order = [3, 0, 4, 1, 2]
        permuted = type(anchors)(dim=anchors.dim,
                                 topics=tuple(anchors.topics[i] for i in order))
        result = segment_call(transcript, embeddings, permuted, cfg)
        assert result == base

    def test_pipeline_error_names_stage(self):
        anchors = orthonormal_anchors(dim=64, seed=3)
        transcript = Transcript(call_id="c", utterances=(
            Utterance(index=0, text="a"), Utterance(index=1, text="b"),
        ))
        bad = np.zeros((2, 64))  # zero vectors cannot be scored
        with pytest.raises(PipelineError, match="score_transcript"):
            segment_call(transcript, bad, anchors, exact_recovery_config(anchors.topic_names))

    def test_noisy_plan_recovered_within_budget(self):
        # same plan as the exact-recovery case, sigma=0.2, 50 seeded calls
        from convseg.metrics import default_k, pk
        anchors = orthonormal_anchors(dim=384, seed=11)
        cfg = PipelineConfig.for_topics(anchors.topic_names)
        scores = []
        for seed in range(50):
            plan = CallPlan(segments=(
                PlanSegment("greetings", 4), PlanSegment("pricing", 10),
                PlanSegment("closing", 4),
            ), noise_sigma=0.2, seed=seed)
            transcript, embeddings, gold = generate_call(plan, anchors)
            result = segment_call(transcript, embeddings, anchors, cfg)
            ref = gold.labels()
            scores.append(pk(ref, result.labels(), default_k(ref)))
        assert float(np.mean(scores)) <= 0.15

    def test_run_pipeline_exposes_stages(self):
        anchors = orthonormal_anchors(dim=64, seed=3)
        plan = CallPlan(segments=(PlanSegment("pricing", 6),), noise_sigma=0.0, seed=1)
        transcript, embeddings, _ = generate_call(plan, anchors)
        run = run_pipeline(transcript, embeddings, anchors,
                           exact_recovery_config(anchors.topic_names))
        assert run.probs_pre.values.shape == (6, 5)
        assert run.probs_post.values.shape == (6, 5)
        assert run.result.segments[0].label == "pricing"
        assert len(run.sources) >= 1
