"""Sampler-correctness diagnostics: Geweke joint-distribution test, exact oracles, Gelman-Rubin."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from . import effects as fx
from . import hmm
from . import matching as mt
from .rng import stream
from .sampler import GibbsConfig, GibbsSampler, ModelState, SideDesign


# ---------------------------------------------------------------------- geweke


def geweke_design():
    """Two individuals per dataset with 3-4 visits each, one healthy and one diseased."""
    return SideDesign.from_lengths((3, 4), (0, 1)), SideDesign.from_lengths((4, 3), (1, 0))


def geweke_config(**overrides) -> GibbsConfig:
    base = GibbsConfig(n_burn_in=0, n_samples=0, seed=0, n_states=3, k_x=2, k_y=2, a0=3.0, b0=2.0, mu_sd=1.0)
    return replace(base, **overrides)


GEWEKE_P = (4, 5)


def geweke_statistics(state: ModelState) -> dict:
    """Scalar functions of the joint state compared between the two simulators."""
    out = {}
    for s in ("x", "y"):
        st = state.side(s)
        out[f"{s}.log_resid_var"] = float(np.mean(np.log(st.factor.residual_var)))
        out[f"{s}.loading_sq"] = float(np.mean(st.factor.loading ** 2))
        out[f"{s}.grand_mean"] = float(np.mean(st.factor.grand_mean))
        out[f"{s}.grand_mean_sq"] = float(np.mean(st.factor.grand_mean ** 2))
        out[f"{s}.cluster0_frac"] = float(np.mean(st.factor.assignment == 0))
        out[f"{s}.mean_state"] = float(np.mean(st.states))
        out[f"{s}.latent_sq"] = float(np.mean(st.latent ** 2))
        for j, a in enumerate(st.chain.advance):
            out[f"{s}.advance{j + 1}"] = float(a)
    for name, es in (("x", state.effects.specific_x), ("y", state.effects.specific_y)):
        out[f"spec_{name}.time"] = float(es.time[1, 0])
        out[f"spec_{name}.time_sq"] = float(es.time[1:, 0] @ es.time[1:, 0])
        out[f"spec_{name}.interaction"] = float(es.interaction[-1, -1])
        out[f"spec_{name}.interaction_sq"] = float(es.interaction[1:, -1] @ es.interaction[1:, -1])
        out[f"spec_{name}.disease_sq"] = float(es.disease @ es.disease)
    sh = state.effects.shared
    out["shared.time"] = float(sh.time[1, 0])
    out["shared.time_sq"] = float(sh.time[1:, :].ravel() @ sh.time[1:, :].ravel())
    out["shared.interaction_sq"] = float(sh.interaction[1:, :].ravel() @ sh.interaction[1:, :].ravel())
    out["n_links"] = float(state.matching.n_links)
    out["link00"] = float(state.matching.x_to_y[0] == 0)
    return out


def batch_means_se(values, n_batches: int = 50) -> float:
    """Monte Carlo standard error of the mean of an autocorrelated series."""
    values = np.asarray(values, dtype=float)
    b = max(1, min(n_batches, values.size // 2))
    m = values.size // b
    means = values[: m * b].reshape(b, m).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(b)) if b > 1 else float("inf")


@dataclass
class GewekeResult:
    names: list
    forward_mean: np.ndarray
    successive_mean: np.ndarray
    z: np.ndarray

    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))

    def table(self) -> str:
        lines = [f"{'statistic':<26}{'forward':>12}{'successive':>12}{'z':>9}"]
        for n, f, s, z in zip(self.names, self.forward_mean, self.successive_mean, self.z):
            lines.append(f"{n:<26}{f:>12.4f}{s:>12.4f}{z:>9.2f}")
        return "\n".join(lines)


def geweke_check(config: GibbsConfig | None = None, n_rounds: int = 20_000, seed: int = 0,
                 sampler_cls=GibbsSampler, design=None, p=GEWEKE_P) -> GewekeResult:
    """Compare marginal-conditional (forward) draws with successive-conditional draws."""
    if n_rounds < 2:
        raise ValueError("insufficient rounds: need at least 2")
    config = geweke_config(seed=seed) if config is None else replace(config, seed=seed)
    dx, dy = geweke_design() if design is None else design
    sampler = sampler_cls(np.zeros((dx.n_samples, p[0])), np.zeros((dy.n_samples, p[1])), dx, dy, config)
    rng_f, rng_s = stream(seed, "geweke_forward"), stream(seed, "geweke_successive")

    forward = []
    for _ in range(n_rounds):
        state = sampler.sample_prior_state(rng_f)
        forward.append(geweke_statistics(state))

    state = sampler.sample_prior_state(rng_s)
    sampler.values = sampler.sample_data(rng_s, state)
    successive = []
    for _ in range(n_rounds):
        sampler.sweep(state)
        sampler.values = sampler.sample_data(rng_s, state)
        successive.append(geweke_statistics(state))

    names = list(forward[0])
    F = np.array([[r[n] for n in names] for r in forward])
    G = np.array([[r[n] for n in names] for r in successive])
    se_f = F.std(axis=0, ddof=1) / math.sqrt(n_rounds)
    se_g = np.array([batch_means_se(G[:, j]) for j in range(G.shape[1])])
    denom = np.sqrt(se_f ** 2 + se_g ** 2)
    diff = G.mean(axis=0) - F.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(denom > 0, diff / denom, np.where(diff == 0, 0.0, np.inf))
    return GewekeResult(names, F.mean(axis=0), G.mean(axis=0), z)


class ResidualShapeBug(GibbsSampler):
    """Residual-variance update whose inverse-gamma shape is too large by n/2 (for mutation testing)."""

    def residual_variance_draw(self, rng, values, params, latent):
        from .factor import residual_conditional

        shape, rate = residual_conditional(values, params, latent, self.fp)
        return rate / rng.gamma(shape + 0.5 * values.shape[0])


# ---------------------------------------------------------------------- hmm oracle


@dataclass
class HmmOracleResult:
    exact: np.ndarray
    empirical: np.ndarray

    @property
    def tv(self) -> np.ndarray:
        return 0.5 * np.abs(self.exact - self.empirical).sum(axis=1)


def hmm_oracle_instance(seed: int = 0, T: int = 4, S: int = 3):
    rng = stream(seed, "hmm_oracle")
    chain = hmm.ChainParams(rng.uniform(0.3, 0.7, size=S - 1))
    means = np.arange(S, dtype=float)[:, None] * 0.8
    latent = means[np.minimum(np.arange(T), S - 1)] + rng.standard_normal((T, 1))
    return chain, latent, means


def hmm_oracle(n_sweeps: int = 100_000, seed: int = 0, T: int = 4, S: int = 3, kernel: str = "single_site"):
    """Long-run single-site (or FFBS) marginals against exact enumeration."""
    chain, latent, means = hmm_oracle_instance(seed, T, S)
    exact = hmm.brute_force_path_posterior(T, chain, latent, means)
    em = hmm.emission_loglik(latent, means)
    rng = stream(seed, "hmm_oracle_chain")
    counts = np.zeros((T, S))
    path = hmm.initial_path(T, S)
    rows = np.arange(T)
    for _ in range(n_sweeps):
        if kernel == "ffbs":
            path = hmm.sample_path_ffbs(rng, T, chain, em)
        else:
            hmm.sweep_single_site(rng, path, chain, em)
        counts[rows, path] += 1.0
    return HmmOracleResult(exact, counts / n_sweeps)


# ---------------------------------------------------------------------- matching oracle


@dataclass
class MatchingOracleResult:
    delta: float
    exact: float
    empirical: float

    @property
    def error(self) -> float:
        return abs(self.exact - self.empirical)


def matching_oracle_instance(seed: int = 0, target_delta: float = 0.3, n_states: int = 2):
    """Latent columns of one X and one Y cluster whose shared signal is scaled to a given log ratio."""
    rng = stream(seed, "matching_oracle")
    priors = fx.EffectPriors(include_beta=False)
    D = fx.design_matrix(n_states, False)
    st_x = rng.integers(n_states, size=12)
    st_y = rng.integers(n_states, size=10)
    b_x, b_y = rng.integers(2, size=12), rng.integers(2, size=10)
    pattern = D[:, :]
    theta = rng.standard_normal(D.shape[1])
    noise_x, noise_y = rng.standard_normal(12), rng.standard_normal(10)

    def stats(c):
        fx_ = c * (pattern @ theta)[2 * st_x + b_x] + noise_x
        fy_ = c * (pattern @ theta)[2 * st_y + b_y] + noise_y
        return fx.cell_stats(fx_, st_x, b_x, n_states), fx.cell_stats(fy_, st_y, b_y, n_states)

    def gap(c):
        return mt.link_log_ratio(*stats(c), D, priors) - target_delta

    hi = 1.0
    while gap(hi) < 0:
        hi *= 2.0
    c = optimize.brentq(gap, 0.0, hi) if gap(0.0) < 0 else 0.0
    sx, sy = stats(c)
    return sx, sy, D, priors


def matching_oracle(n_moves: int = 100_000, seed: int = 0, target_delta: float = 0.3) -> MatchingOracleResult:
    """Alternate link/break proposals on a frozen 1x1 problem and compare link occupancy with the exact value."""
    sx, sy, D, priors = matching_oracle_instance(seed, target_delta)
    rng = stream(seed, "matching_oracle_chain")
    m = mt.MatchingState.empty(1, 1)
    linked = 0
    for _ in range(n_moves):
        if m.n_links:
            _, m = mt.propose_break(rng, m, 0, sx, sy, D, priors)
        else:
            _, m = mt.propose_link(rng, m, 0, 0, sx, sy, D, priors)
        linked += m.n_links
    delta = mt.link_log_ratio(sx, sy, D, priors)
    return MatchingOracleResult(delta, mt.frozen_link_probability(sx, sy, D, priors), linked / n_moves)


# ---------------------------------------------------------------------- convergence


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor of a scalar across equal-length chains."""
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValueError("need at least two chains of length >= 2")
    m, n = x.shape
    W = x.var(axis=1, ddof=1).mean()
    B = n * x.mean(axis=1).var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(math.sqrt(var_plus / W))
