"""ANOVA-type covariate effects in latent space.

For one latent column the mean of a sample in state ``s`` with disease ``b``
is ``time[s] + disease * b + interaction[s] * b`` with corner constraints
``time[0] = interaction[0] = 0`` (reference level b = 0 is implicit).  A
matched X/Y cluster pair additionally shares one such effect vector.

Everything here works on per-cell sufficient statistics: for each of the
``2S`` (state, disease) cells, the number of samples and the sum of latent
values.  One cluster's free effect entries form a vector ``theta`` of length
``q = 2(S-1) [+1]`` laid out as ``[time_1..time_{S-1}, (disease), inter_1..inter_{S-1}]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .factor import LOG_2PI

KINDS = ("time", "disease", "interaction")


@dataclass
class EffectPriors:
    tau_e: float = 2.0
    spec_ratio: float = 0.25  # specific prior variance as a fraction of tau_e^2
    include_beta: bool = True

    @property
    def shared_var(self) -> float:
        return self.tau_e ** 2

    @property
    def spec_var(self) -> float:
        return self.spec_ratio * self.tau_e ** 2


@dataclass
class EffectSet:
    time: np.ndarray  # S x K
    disease: np.ndarray  # K
    interaction: np.ndarray  # S x K

    @classmethod
    def zeros(cls, n_states: int, n_clusters: int) -> "EffectSet":
        return cls(np.zeros((n_states, n_clusters)), np.zeros(n_clusters), np.zeros((n_states, n_clusters)))

    @property
    def n_states(self) -> int:
        return self.time.shape[0]

    @property
    def n_clusters(self) -> int:
        return self.time.shape[1]

    def copy(self) -> "EffectSet":
        return EffectSet(self.time.copy(), self.disease.copy(), self.interaction.copy())

    def vector(self, k: int, include_beta: bool) -> np.ndarray:
        parts = [self.time[1:, k]]
        if include_beta:
            parts.append(self.disease[k:k + 1])
        parts.append(self.interaction[1:, k])
        return np.concatenate(parts)

    def set_vector(self, k: int, theta, include_beta: bool) -> None:
        S = self.n_states
        self.time[0, k] = 0.0
        self.interaction[0, k] = 0.0
        self.time[1:, k] = theta[: S - 1]
        if include_beta:
            self.disease[k] = theta[S - 1]
            self.interaction[1:, k] = theta[S:]
        else:
            self.disease[k] = 0.0
            self.interaction[1:, k] = theta[S - 1:]

    def cell_means(self) -> np.ndarray:
        """``S x 2 x K`` latent mean contributed by this set."""
        out = np.empty((self.n_states, 2, self.n_clusters))
        out[:, 0, :] = self.time
        out[:, 1, :] = self.time + self.disease[None, :] + self.interaction
        return out

    def negate(self, k: int) -> None:
        self.time[:, k] *= -1.0
        self.disease[k] *= -1.0
        self.interaction[:, k] *= -1.0

    def to_dict(self) -> dict:
        return {"time": self.time.tolist(), "disease": self.disease.tolist(), "interaction": self.interaction.tolist()}

    @classmethod
    def from_dict(cls, d) -> "EffectSet":
        return cls(np.asarray(d["time"], float), np.asarray(d["disease"], float), np.asarray(d["interaction"], float))


@dataclass
class EffectDecomposition:
    """Shared effects (column per X cluster, used only while that cluster is matched) and specific effects."""

    shared: EffectSet
    specific_x: EffectSet
    specific_y: EffectSet

    @classmethod
    def zeros(cls, n_states: int, k_x: int, k_y: int) -> "EffectDecomposition":
        return cls(EffectSet.zeros(n_states, k_x), EffectSet.zeros(n_states, k_x), EffectSet.zeros(n_states, k_y))

    def copy(self) -> "EffectDecomposition":
        return EffectDecomposition(self.shared.copy(), self.specific_x.copy(), self.specific_y.copy())

    def to_dict(self) -> dict:
        return {"shared": self.shared.to_dict(), "x": self.specific_x.to_dict(), "y": self.specific_y.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "EffectDecomposition":
        return cls(EffectSet.from_dict(d["shared"]), EffectSet.from_dict(d["x"]), EffectSet.from_dict(d["y"]))


def n_free(n_states: int, include_beta: bool) -> int:
    return 2 * (n_states - 1) + int(include_beta)


def design_matrix(n_states: int, include_beta: bool) -> np.ndarray:
    """``2S x q`` map from a cluster's free effect entries to its cell means; row ``2s + b``."""
    S = n_states
    q = n_free(S, include_beta)
    D = np.zeros((2 * S, q))
    inter0 = S - 1 + int(include_beta)
    for s in range(S):
        for b in (0, 1):
            row = 2 * s + b
            if s > 0:
                D[row, s - 1] = 1.0
            if b == 1:
                if include_beta:
                    D[row, S - 1] = 1.0
                if s > 0:
                    D[row, inter0 + s - 1] = 1.0
    return D


@dataclass
class CellStats:
    """Sufficient statistics of one latent column under a fixed state/disease labelling."""

    counts: np.ndarray  # 2S
    sums: np.ndarray  # 2S
    sumsq: float

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def negated(self) -> "CellStats":
        return CellStats(self.counts, -self.sums, self.sumsq)


def cell_stats(values, states, disease, n_states: int) -> CellStats:
    values = np.asarray(values, dtype=float)
    cell = 2 * np.asarray(states) + np.asarray(disease)
    return CellStats(np.bincount(cell, minlength=2 * n_states).astype(float),
                     np.bincount(cell, weights=values, minlength=2 * n_states), float(values @ values))


def _gram(stats_: CellStats, D):
    return D.T @ (stats_.counts[:, None] * D), D.T @ stats_.sums


def _pair_system(sx: CellStats, sy: CellStats, D, priors: EffectPriors):
    """Gram matrix, right-hand side and prior variances for ``[shared, spec_x, spec_y]``."""
    gx, rx = _gram(sx, D)
    gy, ry = _gram(sy, D)
    q = D.shape[1]
    Z = np.zeros((q, q))
    G = np.block([[gx + gy, gx, gy], [gx, gx, Z], [gy, Z, gy]])
    r = np.concatenate([rx + ry, rx, ry])
    prior = np.concatenate([np.full(q, priors.shared_var), np.full(2 * q, priors.spec_var)])
    return G, r, prior


def log_evidence(G, r, yy: float, n: int, prior_var) -> float:
    """log N(y; 0, I + A diag(prior_var) A^T) from ``G = A^T A``, ``r = A^T y``, ``yy = y^T y``."""
    prior_var = np.asarray(prior_var, dtype=float)
    P = np.diag(1.0 / prior_var) + G
    c, low = linalg.cho_factor(P, lower=True)
    sol = linalg.cho_solve((c, low), r)
    logdet_p = 2.0 * np.log(np.diag(c)).sum()
    return float(-0.5 * n * LOG_2PI - 0.5 * yy + 0.5 * r @ sol - 0.5 * logdet_p - 0.5 * np.log(prior_var).sum())


def gaussian_conditional(G, r, prior_var):
    """Mean and covariance of theta given data, for ``y = A theta + N(0, I)``."""
    P = np.diag(1.0 / np.asarray(prior_var, dtype=float)) + G
    c, low = linalg.cho_factor(P, lower=True)
    return linalg.cho_solve((c, low), r), linalg.cho_solve((c, low), np.eye(P.shape[0]))


def _draw(rng, G, r, prior_var):
    P = np.diag(1.0 / np.asarray(prior_var, dtype=float)) + G
    L = np.linalg.cholesky(P)
    mean = linalg.cho_solve((L, True), r)
    # L^T x = z gives cov(x) = P^{-1}
    return mean + linalg.solve_triangular(L.T, rng.standard_normal(P.shape[0]), lower=False)


def single_conditional(stats_: CellStats, D, prior_var: float):
    G, r = _gram(stats_, D)
    return gaussian_conditional(G, r, np.full(D.shape[1], prior_var))


def pair_conditional(sx: CellStats, sy: CellStats, D, priors: EffectPriors):
    """Mean and covariance of ``[shared, spec_x, spec_y]`` for a matched pair."""
    return gaussian_conditional(*_pair_system(sx, sy, D, priors))


def sample_single(rng, stats_: CellStats, D, prior_var: float) -> np.ndarray:
    G, r = _gram(stats_, D)
    return _draw(rng, G, r, np.full(D.shape[1], prior_var))


def sample_pair(rng, sx: CellStats, sy: CellStats, D, priors: EffectPriors):
    theta = _draw(rng, *_pair_system(sx, sy, D, priors))
    q = D.shape[1]
    return theta[:q], theta[q:2 * q], theta[2 * q:]


def single_log_evidence(stats_: CellStats, D, prior_var: float) -> float:
    G, r = _gram(stats_, D)
    return log_evidence(G, r, stats_.sumsq, stats_.n, np.full(D.shape[1], prior_var))


def pair_log_evidence(sx: CellStats, sy: CellStats, D, priors: EffectPriors) -> float:
    G, r, prior = _pair_system(sx, sy, D, priors)
    return log_evidence(G, r, sx.sumsq + sy.sumsq, sx.n + sy.n, prior)


def cluster_means(effects: EffectDecomposition, x_to_y, side: str) -> np.ndarray:
    """``S x 2 x K`` latent means of one dataset's clusters under the current matching."""
    x_to_y = np.asarray(x_to_y)
    shared = effects.shared.cell_means()
    if side == "x":
        out = effects.specific_x.cell_means()
        matched = np.flatnonzero(x_to_y >= 0)
        out[:, :, matched] += shared[:, :, matched]
    elif side == "y":
        out = effects.specific_y.cell_means()
        for kx in np.flatnonzero(x_to_y >= 0):
            out[:, :, x_to_y[kx]] += shared[:, :, kx]
    else:
        raise ValueError(f"unknown dataset tag {side!r}")
    return out


def latent_mean_for_sample(state: int, disease: int, effects: EffectDecomposition, x_to_y, side: str) -> np.ndarray:
    return cluster_means(effects, x_to_y, side)[state, disease]


def sample_effects(rng, latent_x, latent_y, states_x, states_y, disease_x, disease_y, x_to_y,
                   priors: EffectPriors, n_states: int, out: EffectDecomposition | None = None) -> EffectDecomposition:
    """Draw every effect entry from its full conditional.

    Each matched pair's ``[shared, spec_x, spec_y]`` block is drawn jointly;
    an unmatched X cluster's shared column is drawn from the prior.
    """
    x_to_y = np.asarray(x_to_y)
    k_x, k_y = latent_x.shape[1], latent_y.shape[1]
    D = design_matrix(n_states, priors.include_beta)
    q = D.shape[1]
    eff = out if out is not None else EffectDecomposition.zeros(n_states, k_x, k_y)
    y_done = np.zeros(k_y, dtype=bool)
    for kx in range(k_x):
        sx = cell_stats(latent_x[:, kx], states_x, disease_x, n_states)
        ky = int(x_to_y[kx])
        if ky >= 0:
            sy = cell_stats(latent_y[:, ky], states_y, disease_y, n_states)
            sh, spx, spy = sample_pair(rng, sx, sy, D, priors)
            eff.specific_y.set_vector(ky, spy, priors.include_beta)
            y_done[ky] = True
        else:
            sh = math.sqrt(priors.shared_var) * rng.standard_normal(q)
            spx = sample_single(rng, sx, D, priors.spec_var)
        eff.shared.set_vector(kx, sh, priors.include_beta)
        eff.specific_x.set_vector(kx, spx, priors.include_beta)
    for ky in np.flatnonzero(~y_done):
        sy = cell_stats(latent_y[:, ky], states_y, disease_y, n_states)
        eff.specific_y.set_vector(ky, sample_single(rng, sy, D, priors.spec_var), priors.include_beta)
    return eff


def sample_prior(rng, n_states: int, k_x: int, k_y: int, priors: EffectPriors) -> EffectDecomposition:
    eff = EffectDecomposition.zeros(n_states, k_x, k_y)
    q = n_free(n_states, priors.include_beta)
    for k in range(k_x):
        eff.shared.set_vector(k, math.sqrt(priors.shared_var) * rng.standard_normal(q), priors.include_beta)
        eff.specific_x.set_vector(k, math.sqrt(priors.spec_var) * rng.standard_normal(q), priors.include_beta)
    for k in range(k_y):
        eff.specific_y.set_vector(k, math.sqrt(priors.spec_var) * rng.standard_normal(q), priors.include_beta)
    return eff


def log_prior(effects: EffectDecomposition, priors: EffectPriors) -> float:
    lp = 0.0
    for es, var in ((effects.shared, priors.shared_var), (effects.specific_x, priors.spec_var),
                    (effects.specific_y, priors.spec_var)):
        theta = np.concatenate([es.vector(k, priors.include_beta) for k in range(es.n_clusters)] or [np.zeros(0)])
        lp += stats.norm.logpdf(theta, scale=math.sqrt(var)).sum()
    return float(lp)


def effect_significance(trace, level: float = 0.90, epsilon: float = 0.1):
    """Verdict from the equal-tailed credible interval plus the fraction of draws with ``|value| > epsilon``.

    Returns ``(verdict, found_fraction)`` with verdict one of
    ``"significant_pos"``, ``"significant_neg"`` or ``"null"``.
    """
    trace = np.asarray(trace, dtype=float).ravel()
    if trace.size == 0:
        raise ValueError("empty trace")
    lo, hi = credible_interval(trace, level)
    if lo > 0:
        verdict = "significant_pos"
    elif hi < 0:
        verdict = "significant_neg"
    else:
        verdict = "null"
    return verdict, float(np.mean(np.abs(trace) > epsilon))


def credible_interval(trace, level: float = 0.90):
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(np.asarray(trace, dtype=float), [tail, 1.0 - tail])
    return float(lo), float(hi)
