import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from xlate import hmm
from xlate.diagnostics import hmm_oracle
from xlate.hmm import ChainParams


def chain(*adv):
    return ChainParams(np.array(adv, dtype=float))


def test_site_support_between_neighbours():
    em = np.zeros((3, 3))
    support, prob = hmm.site_conditional(np.array([0, 1, 2]), 1, chain(0.5, 0.5), em)
    assert support.tolist() == [1]
    support, prob = hmm.site_conditional(np.array([0, 1, 1]), 1, chain(0.5, 0.5), em)
    assert support.tolist() == [0, 1]
    assert prob.sum() == pytest.approx(1.0)


def test_site_support_window_one_two():
    # left neighbour in state 1, right neighbour in state 2 (0-based 0 and 1)
    em = np.zeros((3, 4))
    support, _ = hmm.site_conditional(np.array([0, 0, 1]), 1, chain(0.5, 0.5, 0.5), em)
    assert support.tolist() == [0, 1]
    support, _ = hmm.site_conditional(np.array([0, 1, 2]), 1, chain(0.5, 0.5, 0.5), em)
    assert support.tolist() == [1]


def test_site_conditional_weights_match_full_density(rng):
    c = chain(0.3, 0.6)
    latent = rng.normal(size=(4, 2))
    means = rng.normal(size=(3, 2))
    em = hmm.emission_loglik(latent, means)
    path = np.array([0, 1, 1, 2])
    support, prob = hmm.site_conditional(path, 2, c, em)
    logs = []
    for s in support:
        q = path.copy()
        q[2] = s
        logs.append(hmm.path_log_density(q, c, latent, means))
    expect = np.exp(np.array(logs) - max(logs))
    np.testing.assert_allclose(prob, expect / expect.sum(), atol=1e-12)


def test_path_log_density_single_point():
    val = hmm.path_log_density(np.array([0]), chain(0.5), np.zeros((1, 1)), np.zeros((2, 1)))
    assert val == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-12)


def test_path_log_density_reimplementation(rng):
    c = chain(0.2, 0.7, 0.4)
    latent = rng.normal(size=(5, 3))
    means = rng.normal(size=(4, 3))
    path = np.array([0, 1, 1, 2, 3])
    expect = math.log(0.2) + math.log(0.3) + math.log(0.7) + math.log(0.4)
    for t, s in enumerate(path):
        expect += stats.multivariate_normal(means[s], np.eye(3)).logpdf(latent[t])
    assert hmm.path_log_density(path, c, latent, means) == pytest.approx(expect, abs=1e-10)


@pytest.mark.parametrize("path", [[1, 1, 2], [0, 2, 2], [0, 1, 0], [0, 1, 2, 3]])
def test_invalid_paths_rejected(path):
    with pytest.raises(ValueError, match="invalid path"):
        hmm.path_log_density(np.array(path), chain(0.5, 0.5), np.zeros((len(path), 1)), np.zeros((3, 1)))


def test_enumeration_counts():
    # paths of length T over S states: sum_{k<S} C(T-1, k)
    for T, S in ((1, 3), (4, 3), (6, 4), (5, 1)):
        n = sum(1 for _ in hmm.enumerate_paths(T, S))
        assert n == sum(math.comb(T - 1, k) for k in range(min(S, T)))


def test_brute_force_degenerate_cases(rng):
    latent = rng.normal(size=(1, 1))
    marg = hmm.brute_force_path_posterior(1, chain(0.5, 0.5), latent, np.zeros((3, 1)))
    np.testing.assert_allclose(marg, [[1, 0, 0]])
    marg = hmm.brute_force_path_posterior(4, ChainParams(np.zeros(0)), rng.normal(size=(4, 1)), np.zeros((1, 1)))
    np.testing.assert_allclose(marg, np.ones((4, 1)))


def test_brute_force_matches_independent_enumeration(rng):
    c = chain(0.4, 0.25)
    T = 5
    latent = rng.normal(size=(T, 2))
    means = rng.normal(size=(3, 2))
    marg = hmm.brute_force_path_posterior(T, c, latent, means)
    # independent enumeration over all S^T sequences with an explicit transition matrix
    A = np.array([[0.6, 0.4, 0.0], [0.0, 0.75, 0.25], [0.0, 0.0, 1.0]])
    like = np.array([[stats.multivariate_normal(m, np.eye(2)).pdf(x) for m in means] for x in latent])
    expect = np.zeros((T, 3))
    for seq in itertools.product(range(3), repeat=T):
        if seq[0] != 0:
            continue
        w = np.prod([A[a, b] for a, b in zip(seq, seq[1:])]) * np.prod(like[np.arange(T), seq])
        expect[np.arange(T), seq] += w
    expect /= expect[0].sum()
    np.testing.assert_allclose(marg, expect, atol=1e-12)


def test_brute_force_refuses_large_instances():
    with pytest.raises(ValueError, match="instance too large"):
        hmm.brute_force_path_posterior(20, chain(0.5), np.zeros((20, 1)), np.zeros((2, 1)))


def test_transition_posterior_all_advances():
    paths = [np.minimum(np.arange(11), 1)]  # one advance then nine stays in the absorbing state
    a, b = hmm.transition_posterior(paths, 2)
    assert (a[0], b[0]) == (2.0, 1.0)
    paths = [np.array([0, 1])] * 10
    a, b = hmm.transition_posterior(paths, 2)
    assert (a[0], b[0]) == (11.0, 1.0)


def test_transition_sampler_moments(rng):
    paths = [np.array([0, 0, 1, 1, 2]), np.array([0, 1, 1, 1])]
    a, b = hmm.transition_posterior(paths, 3)
    draws = np.array([hmm.sample_transition_params(rng, paths, 3).advance for _ in range(50_000)])
    np.testing.assert_allclose(draws.mean(axis=0), a / (a + b), rtol=0.01)


def test_ffbs_matches_enumeration(rng):
    res = hmm_oracle(n_sweeps=40_000, seed=3, kernel="ffbs")
    assert res.tv.max() <= 0.02


def test_single_site_matches_enumeration():
    res = hmm_oracle(n_sweeps=100_000, seed=0)
    assert res.tv.max() <= 0.02


def test_prior_path_frequencies(rng):
    c = chain(0.3, 0.6)
    counts = {}
    for _ in range(20_000):
        p = tuple(hmm.sample_path_prior(rng, 3, c))
        counts[p] = counts.get(p, 0) + 1
    exact = {(0, 0, 0): 0.49, (0, 0, 1): 0.21, (0, 1, 1): 0.3 * 0.4, (0, 1, 2): 0.3 * 0.6}
    for p, e in exact.items():
        assert counts.get(p, 0) / 20_000 == pytest.approx(e, abs=0.015)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 9), st.integers(1, 5))
def test_sweeps_keep_paths_valid(seed, T, S):
    rng = np.random.default_rng(seed)
    c = ChainParams(rng.uniform(0.05, 0.95, size=S - 1))
    em = rng.normal(scale=3.0, size=(T, S))
    path = hmm.initial_path(T, S)
    hmm.validate_path(path, S)
    for _ in range(5):
        hmm.sweep_single_site(rng, path, c, em)
        hmm.validate_path(path, S)
    hmm.validate_path(hmm.sample_path_ffbs(rng, T, c, em), S)
    hmm.validate_path(hmm.sample_path_prior(rng, T, c), S)
