import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from xlate import effects as fx
from xlate import matching as mt
from xlate.diagnostics import geweke_config, geweke_design, matching_oracle
from xlate.effects import CellStats, EffectPriors
from xlate.matching import MatchingState
from xlate.sampler import GibbsSampler


def one_cell(values, S=1, cell=1):
    values = np.asarray(values, dtype=float)
    counts = np.zeros(2 * S)
    sums = np.zeros(2 * S)
    counts[cell], sums[cell] = values.size, values.sum()
    return CellStats(counts, sums, float(values @ values))


def empty(S=1):
    return CellStats(np.zeros(2 * S), np.zeros(2 * S), 0.0)


def test_no_observations_no_evidence():
    D = fx.design_matrix(2, True)
    assert mt.link_log_ratio(empty(2), empty(2), D, EffectPriors()) == pytest.approx(0.0, abs=1e-12)


def test_single_observation_evidence():
    D = fx.design_matrix(1, True)  # one free entry: the disease effect
    for tau2 in (0.5, 4.0):
        ev = fx.single_log_evidence(one_cell([1.3]), D, tau2)
        assert ev == pytest.approx(stats.norm.logpdf(1.3, scale=math.sqrt(1 + tau2)), abs=1e-12)


def test_pair_evidence_against_quadrature():
    # shared scalar s integrated numerically; specific scalars integrated in closed form
    D = fx.design_matrix(1, True)
    pri = EffectPriors()
    xs, ys = np.array([0.8, 1.9, 0.4]), np.array([1.1, 0.2])
    v = pri.spec_var

    def block(vals, s):
        n = vals.size
        return stats.multivariate_normal(np.full(n, s), np.eye(n) + v * np.ones((n, n))).pdf(vals)

    val, _ = integrate.quad(lambda s: block(xs, s) * block(ys, s) * stats.norm.pdf(s, scale=pri.tau_e),
                            -30, 30, epsabs=1e-14, epsrel=1e-12)
    got = fx.pair_log_evidence(one_cell(xs), one_cell(ys), D, pri)
    assert got == pytest.approx(math.log(val), abs=1e-6)
    unlinked = sum(stats.multivariate_normal(np.zeros(a.size), np.eye(a.size) + v * np.ones((a.size, a.size)))
                   .logpdf(a) for a in (xs, ys))
    assert mt.link_log_ratio(one_cell(xs), one_cell(ys), D, pri) == pytest.approx(got - unlinked, abs=1e-6)


def test_opposite_signs_disfavour_link():
    D = fx.design_matrix(1, True)
    delta = mt.link_log_ratio(one_cell(np.full(10, 2.0)), one_cell(np.full(10, -2.0)), D, EffectPriors())
    assert delta < 0


def test_large_common_effect_always_accepted(rng):
    D = fx.design_matrix(1, True)
    sx, sy = one_cell(np.full(20, 3.0)), one_cell(np.full(20, 3.0))
    delta = mt.link_log_ratio(sx, sy, D, EffectPriors())
    assert delta > 5
    assert mt.link_acceptance(delta, 1) == 1.0
    accepted, m = mt.propose_link(rng, MatchingState.empty(1, 1), 0, 0, sx, sy, D, EffectPriors())
    assert accepted and m.links == {(0, 0)}


def test_acceptance_formulas():
    assert mt.link_acceptance(-1.0, 2) == pytest.approx(2 * math.exp(-1.0))
    assert mt.break_acceptance(1.0, 3) == pytest.approx(math.exp(-1.0) / 3)
    assert mt.break_acceptance(-3.0, 1) == 1.0


def test_invalid_moves_raise(rng):
    D = fx.design_matrix(1, True)
    m = MatchingState.from_links([(0, 1)], 2, 2)
    with pytest.raises(ValueError, match="already matched"):
        mt.propose_link(rng, m, 0, 0, empty(), empty(), D, EffectPriors())
    with pytest.raises(ValueError, match="already matched"):
        mt.propose_link(rng, m, 1, 1, empty(), empty(), D, EffectPriors())
    with pytest.raises(ValueError, match="no link"):
        mt.propose_break(rng, m, 1, empty(), empty(), D, EffectPriors())
    with pytest.raises(ValueError, match="one-to-one"):
        MatchingState.from_links([(0, 1), (1, 1)], 2, 2)


def test_frozen_probability_is_logistic():
    D = fx.design_matrix(1, True)
    sx, sy = one_cell([0.5, 1.0]), one_cell([0.7])
    delta = mt.link_log_ratio(sx, sy, D, EffectPriors())
    assert mt.frozen_link_probability(sx, sy, D, EffectPriors()) == pytest.approx(1 / (1 + math.exp(-delta)))


def test_frozen_chain_small():
    res = matching_oracle(n_moves=30_000, seed=5)
    assert res.delta == pytest.approx(0.3, abs=1e-8)
    assert res.error < 0.02


def test_pairing_posterior_example():
    trace = [MatchingState.from_links(l, 2, 3) for l in ([(0, 1)], [(0, 1), (1, 0)], [], [(1, 2)])]
    freq, ux, uy = mt.pairing_posterior(trace)
    assert freq[0, 1] == 0.5 and freq[1, 0] == 0.25 and freq[1, 2] == 0.25
    np.testing.assert_allclose(ux, [0.5, 0.5])
    np.testing.assert_allclose(uy, [0.75, 0.5, 0.75])
    with pytest.raises(ValueError, match="empty trace"):
        mt.pairing_posterior([])


@pytest.mark.parametrize("kx,ky", [(1, 1), (2, 3), (3, 3), (4, 2)])
def test_matching_count_matches_enumeration(kx, ky):
    ms = list(mt.enumerate_matchings(kx, ky))
    assert len(ms) == mt.n_matchings(kx, ky)
    assert len({tuple(m.x_to_y) for m in ms}) == len(ms)
    for m in ms:
        m.check()


def test_prior_draws_are_uniform(rng):
    counts = {}
    n = 26_000
    for _ in range(n):
        key = tuple(mt.sample_prior(rng, 2, 3).x_to_y)
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 13
    assert max(abs(c / n - 1 / 13) for c in counts.values()) < 0.01


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 5), st.integers(1, 5), st.integers(1, 30))
def test_pairing_rows_sum_to_one(seed, kx, ky, n):
    rng = np.random.default_rng(seed)
    trace = [mt.sample_prior(rng, kx, ky) for _ in range(n)]
    for m in trace:
        m.check()
    freq, ux, uy = mt.pairing_posterior(trace)
    np.testing.assert_allclose(freq.sum(axis=1) + ux, 1.0, atol=1e-12)
    np.testing.assert_allclose(freq.sum(axis=0) + uy, 1.0, atol=1e-12)
    assert np.all(freq.sum(axis=0) <= 1 + 1e-12)


def test_sampler_matching_update_targets_enumerated_posterior(rng):
    cfg = geweke_config(k_x=2, k_y=3, n_states=2, include_beta_b=True)
    dx, dy = geweke_design()
    sampler = GibbsSampler(np.zeros((dx.n_samples, 4)), np.zeros((dy.n_samples, 5)), dx, dy, cfg)
    state = sampler.sample_prior_state(rng)
    state.x.latent = rng.normal(size=state.x.latent.shape) + np.array([1.5, 0.0])
    state.y.latent = rng.normal(size=state.y.latent.shape) + np.array([0.0, 1.2, -0.5])
    stats_x = [sampler.cell_stats(state, "x", k) for k in range(2)]
    stats_y = [sampler.cell_stats(state, "y", k) for k in range(3)]
    delta = np.array([[mt.link_log_ratio(sx, sy, sampler.D, sampler.ep) for sy in stats_y] for sx in stats_x])
    ms = list(mt.enumerate_matchings(2, 3))
    w = np.array([math.exp(sum(delta[i, j] for i, j in m.links)) for m in ms])
    exact = dict(zip((tuple(m.x_to_y) for m in ms), w / w.sum()))
    counts = dict.fromkeys(exact, 0)
    n = 40_000
    for _ in range(n):
        sampler.update_matching(state)
        counts[tuple(state.matching.x_to_y)] += 1
    for key, p in exact.items():
        assert counts[key] / n == pytest.approx(p, abs=0.015)
