import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osca.core import NUM_STATES, StateChange
from osca.corpus import save_corpus, sidecar_path
from osca.evaluation import state_histograms, transition_matrix
from osca.synth import (
    BENCHMARK_TRAIN_COUNTS,
    SynthConfig,
    balanced_transition_matrix,
    benchmark_priors,
    generate_synthetic,
    generate_video,
    sample_state_sequence,
)


def small(**kw):
    base = dict(num_videos=6, segments_per_video=(3, 6), feature_dim=4, time_steps=2)
    base.update(kw)
    return SynthConfig(**base)


def test_prior_values():
    p = benchmark_priors()
    assert p[StateChange.DEPOSIT.index] == pytest.approx(14984 / sum(BENCHMARK_TRAIN_COUNTS.values()))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("strength", [0.0, 5.0, 20.0])
def test_balanced_matrix_has_prior_as_stationary_law(strength):
    pi = benchmark_priors()
    P = balanced_transition_matrix(pi, strength=strength)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(pi @ P, pi, atol=1e-9)


def test_identical_seeds_give_identical_files(tmp_path):
    a = save_corpus(generate_synthetic(small(seed=3)), tmp_path / "a.jsonl")
    b = save_corpus(generate_synthetic(small(seed=3)), tmp_path / "b.jsonl")
    assert a.read_text().replace("b.features", "a.features") == b.read_text().replace("b.features", "a.features")
    assert sidecar_path(a).read_bytes() == sidecar_path(b).read_bytes()
    c = generate_synthetic(small(seed=4))
    assert c != generate_synthetic(small(seed=3))


def test_videos_are_independent_of_corpus_size():
    full = generate_synthetic(small(num_videos=5))
    assert generate_video(small(num_videos=5), 3) == full.videos[3]
    assert generate_synthetic(small(num_videos=2)).videos == full.videos[:2]


def test_config_lists_every_error():
    cfg = SynthConfig(num_videos=0, feature_dim=0, action_ambiguity=2.0, class_priors=[0.5] * 9)
    errs = cfg.errors()
    assert len(errs) == 4
    with pytest.raises(ValueError, match="num_videos"):
        cfg.validate()


def test_transition_rows_must_sum_to_one():
    P = np.eye(NUM_STATES)
    P[2, 2] = 0.5
    errs = SynthConfig(transition_matrix=P.tolist()).errors()
    assert errs == ["transition_matrix row 2 sums to 0.5, not 1"]


def test_disjoint_subvocabularies_map_each_verb_to_one_state():
    c = generate_synthetic(small(num_videos=40, verbs_per_state=1, nouns_per_state=1))
    h = state_histograms(c)
    used = h.verb_state.sum(axis=1) > 0
    assert np.all(h.states_per_verb[used] == 1)
    assert np.all(h.states_per_noun[h.noun_state.sum(axis=1) > 0] == 1)


def test_no_osc_segments_have_no_frames():
    c = generate_synthetic(small(num_videos=30))
    for v in c.videos:
        for s in v.segments:
            assert (s.pnr_frame is None) == (s.state_change is StateChange.NO_OSC)
            assert (s.pre_frame is None) == (s.state_change is StateChange.NO_OSC)


def _nearest_centroid_accuracy(corpus):
    X = np.array([f.mean(axis=0) for v in corpus.videos for f in v.features])
    y = np.array([s.state_change.index for v in corpus.videos for s in v.segments])
    half = len(y) // 2
    means = np.stack([X[:half][y[:half] == c].mean(axis=0) for c in range(NUM_STATES)])
    pred = np.argmin(((X[half:, None, :] - means[None]) ** 2).sum(-1), axis=1)
    return float((pred == y[half:]).mean()), len(y) - half


def test_uninformative_features_carry_no_signal():
    cfg = dict(num_videos=200, segments_per_video=(10, 10), feature_dim=16, time_steps=4,
               class_priors=[1 / 9] * 9)
    acc0, n = _nearest_centroid_accuracy(generate_synthetic(SynthConfig(feature_informativeness=0.0, **cfg)))
    # chance is 1/9; allow four binomial standard deviations
    assert acc0 < 1 / 9 + 4 * np.sqrt((1 / 9) * (8 / 9) / n)
    acc1, _ = _nearest_centroid_accuracy(generate_synthetic(SynthConfig(feature_informativeness=0.6, **cfg)))
    assert acc1 > 0.5


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.0, 1.0))
def test_feature_shapes_and_finiteness(seed, alpha):
    c = generate_synthetic(small(seed=seed, feature_informativeness=alpha, num_videos=2))
    for v in c.videos:
        assert len(v.features) == len(v.segments)
        for f in v.features:
            assert f.shape == (2, 4) and f.dtype == np.float32 and np.all(np.isfinite(f))


def test_chain_rows_converge():
    # every row observed at least 100k times
    priors = np.full(NUM_STATES, 1 / NUM_STATES)
    P = balanced_transition_matrix(priors, strength=20.0)
    seq = np.array(sample_state_sequence(np.random.default_rng(7), 1_000_000, priors, P))
    counts = np.zeros((NUM_STATES, NUM_STATES))
    np.add.at(counts, (seq[:-1], seq[1:]), 1)
    assert counts.sum(axis=1).min() >= 100_000
    emp = counts / counts.sum(axis=1, keepdims=True)
    assert np.abs(emp - P).sum(axis=1).max() < 0.02


def test_zero_probability_transitions_never_fire():
    P = np.roll(np.eye(NUM_STATES), 1, axis=1)  # deterministic cycle
    seq = sample_state_sequence(np.random.default_rng(0), 50, np.full(9, 1 / 9), P)
    assert all((b - a) % NUM_STATES == 1 for a, b in zip(seq, seq[1:]))


def test_corpus_transition_counts():
    cfg = small(num_videos=50, segments_per_video=(5, 9))
    corpus = generate_synthetic(cfg)
    tm = transition_matrix(corpus)
    assert tm.counts.sum() == sum(len(v.segments) - 1 for v in corpus.videos)
