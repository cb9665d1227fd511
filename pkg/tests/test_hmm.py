import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from completion_detect.core import FeatureSequence, SequenceMeta
from completion_detect.hmm import (
    CompletionHmm,
    GaussianEmission,
    UnobservableStateError,
    decode_completion,
    emission_log_density,
    load_hmm,
    save_hmm,
    train_hmm,
    viterbi,
    viterbi_from_log_emissions,
    viterbi_with_score,
)
from oracles import brute_force_decode, dense_gaussian_logpdf, random_hmm, random_sequence


def labeled(frames, cf, sid="x"):
    frames = np.asarray(frames, dtype=float)
    if frames.ndim == 1:
        frames = frames[:, None]
    meta = SequenceMeta(sid, "s", "a", cf is not None, cf)
    return FeatureSequence(meta, frames).labeled()


def one_d_hmm(p_complete=0.2):
    return CompletionHmm(
        np.array([0.0, -np.inf]),
        np.array([[np.log1p(-p_complete), np.log(p_complete)], [-np.inf, 0.0]]),
        (GaussianEmission.from_moments([0.0], [[1.0]]),
         GaussianEmission.from_moments([10.0], [[1.0]])),
    )


def test_transition_counts_by_hand():
    rng = np.random.default_rng(0)
    a = labeled(rng.normal(size=4) + [0, 0, 10, 10], 2, "a")
    b = labeled(rng.normal(size=3), None, "b")
    hmm = train_hmm([a, b])
    assert np.exp(hmm.initial_log_prob).tolist() == [1.0, 0.0]
    # bigrams leaving pre: PP, PQ in a; PP, PP in b -> one completion among four
    np.testing.assert_allclose(np.exp(hmm.transition_log_prob[0]), [3 / 4, 1 / 4], rtol=1e-15)
    assert hmm.transition_log_prob[0, 1] == np.log(1 / 4)
    assert hmm.transition_log_prob[1, 1] == 0.0
    assert hmm.transition_log_prob[1, 0] == -np.inf


def test_completion_at_frame_zero_is_clamped(caplog):
    rng = np.random.default_rng(1)
    seqs = [labeled(rng.normal(size=5) + 10, 0, "p"), labeled(rng.normal(size=5), 3, "q")]
    with caplog.at_level(logging.WARNING):
        hmm = train_hmm(seqs)
    assert "clamping" in caplog.text
    assert hmm.initial_log_prob[1] == -np.inf


def test_emission_means_on_separated_clusters():
    rng = np.random.default_rng(2)
    seqs = []
    for i in range(20):
        cf = int(rng.integers(10, 30))
        x = np.where(np.arange(40) >= cf, 10.0, 0.0) + rng.normal(size=40)
        seqs.append(labeled(x, cf, f"s{i}"))
    hmm = train_hmm(seqs)
    assert abs(hmm.emissions[0].mean[0]) < 0.5
    assert abs(hmm.emissions[1].mean[0] - 10) < 0.5


def test_unobservable_post_state():
    rng = np.random.default_rng(3)
    seqs = [labeled(rng.normal(size=6), None, f"i{i}") for i in range(3)]
    with pytest.raises(UnobservableStateError, match="post-completion state unobservable"):
        train_hmm(seqs)


def test_structural_invariants_enforced():
    e = GaussianEmission.from_moments([0.0], [[1.0]])
    with pytest.raises(ValueError):
        CompletionHmm(np.log([0.5, 0.5]), np.array([[-1.0, -1.0], [-np.inf, 0.0]]), (e, e))
    with pytest.raises(ValueError):
        CompletionHmm(np.array([0.0, -np.inf]), np.log([[0.5, 0.5], [0.5, 0.5]]), (e, e))


def test_emission_log_density_values():
    e = GaussianEmission.from_moments([0.0], [[1.0]])
    assert emission_log_density(e, [0.0]) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-15)
    e2 = GaussianEmission.from_moments([1.0, 2.0], np.eye(2))
    assert emission_log_density(e2, [1.0, 2.0]) == pytest.approx(-np.log(2 * np.pi), abs=1e-15)
    with pytest.raises(ValueError):
        emission_log_density(e2, [1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31))
def test_emission_matches_dense_formula(k, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(k, k))
    cov = a @ a.T + 0.5 * np.eye(k)
    mean = rng.normal(size=k)
    e = GaussianEmission.from_moments(mean, cov)
    x = rng.normal(size=k) * 3
    expected = dense_gaussian_logpdf(x, mean, cov)
    assert emission_log_density(e, x) == pytest.approx(expected, rel=1e-10, abs=1e-10)
    assert emission_log_density(e, x) == pytest.approx(
        multivariate_normal(mean, cov).logpdf(x), rel=1e-10, abs=1e-10
    )


def test_viterbi_dominant_pre():
    hmm = one_d_hmm()
    assert viterbi(hmm, np.zeros((7, 1))).tolist() == [0] * 7
    assert decode_completion(hmm, np.zeros((7, 1))) is None


def test_viterbi_hand_example():
    hmm = one_d_hmm()
    path = viterbi(hmm, np.array([[0.0], [0.0], [10.0], [10.0]]))
    assert path.tolist() == [0, 0, 1, 1]
    assert decode_completion(hmm, np.array([[0.0], [0.0], [10.0], [10.0]])) == 2


def test_viterbi_hand_dp_table():
    # Emission log-densities chosen by hand so the DP table is easy to follow.
    init = np.array([0.0, -np.inf])
    trans = np.log(np.array([[0.5, 0.5], [1e-300, 1.0]]))
    trans[1, 0] = -np.inf
    em = np.array([[-1.0, -5.0], [-1.0, -1.5], [-4.0, -1.0]])
    # pre: -1, -1+ln.5-1, ...; completing at t=1 scores -1+ln.5-1.5+0-1
    # completing at t=2 scores -1+ln.5-1+ln.5-1; staying pre scores -1+2ln.5-6
    path, score = viterbi_from_log_emissions(init, trans, em)
    assert path.tolist() == [0, 1, 1]
    assert score == pytest.approx(-3.5 + np.log(0.5))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31))
def test_viterbi_matches_enumeration(t_max, seed):
    rng = np.random.default_rng(seed)
    hmm = random_hmm(rng)
    x = random_sequence(rng, hmm, t_max)
    path, score = viterbi_with_score(hmm, x)
    log_em = hmm.emission_log_densities(x)
    best_path, best_score = brute_force_decode(hmm.initial_log_prob, hmm.transition_log_prob, log_em)
    assert score == best_score
    assert path.tolist() == best_path.tolist()
    assert np.all(np.diff(path) >= 0)


def test_ties_prefer_later_completion():
    init = np.array([0.0, -np.inf])
    em = np.zeros((4, 2))
    # every monotone path scores the same; all-pre wins the tie
    trans_equal = np.array([[0.0, 0.0], [-np.inf, 0.0]])
    path, _ = viterbi_from_log_emissions(init, trans_equal, em)
    assert path.tolist() == [0, 0, 0, 0]
    em[3] = [-1.0, 0.0]
    path, _ = viterbi_from_log_emissions(init, trans_equal, em)
    assert path.tolist() == [0, 0, 0, 1]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**31))
def test_constant_offsets_do_not_change_path(t_max, seed):
    rng = np.random.default_rng(seed)
    hmm = random_hmm(rng)
    em = hmm.emission_log_densities(random_sequence(rng, hmm, t_max))
    offsets = rng.uniform(-50, 50, size=(t_max, 1))
    a, _ = viterbi_from_log_emissions(hmm.initial_log_prob, hmm.transition_log_prob, em)
    b, _ = viterbi_from_log_emissions(hmm.initial_log_prob, hmm.transition_log_prob, em + offsets)
    assert a.tolist() == b.tolist()


def test_trained_transition_equals_completion_ratio():
    rng = np.random.default_rng(6)
    seqs = []
    completions = 0
    pre_origin = 0
    for i in range(12):
        length = int(rng.integers(50, 120))
        cf = int(rng.integers(10, length)) if i % 3 else None
        completions += cf is not None
        pre_origin += length - 1 if cf is None else cf
        x = rng.normal(size=(length, 2))
        if cf is not None:
            x[cf:] += 8
        seqs.append(labeled(x, cf, f"s{i}"))
    hmm = train_hmm(seqs)
    assert hmm.transition_log_prob[0, 1] == np.log(completions / pre_origin)
    np.testing.assert_allclose(np.exp(hmm.transition_log_prob).sum(axis=1), 1.0, atol=1e-15)
    assert np.exp(hmm.transition_log_prob[0, 1]) < 0.05


def test_save_load_round_trip(tmp_path):
    hmm = random_hmm(np.random.default_rng(7), k=3)
    save_hmm(hmm, tmp_path / "hmm.csv")
    back = load_hmm(tmp_path / "hmm.csv")
    assert np.array_equal(back.initial_log_prob, hmm.initial_log_prob)
    assert np.array_equal(back.transition_log_prob, hmm.transition_log_prob)
    for a, b in zip(hmm.emissions, back.emissions):
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.covariance, b.covariance)
        assert a.log_det == b.log_det
