"""Clustering factor analysis: every variable loads on exactly one latent factor.

    x_j ~ N(mu + V f_j, diag(sigma2)),   f_j ~ N(m_j, I)

``V`` has one nonzero per row, stored as ``assignment`` (cluster index per
variable, 0-based) and ``loading`` (the value of that nonzero).  All the
updates below are conjugate full conditionals given the latent factors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class FactorPriors:
    tau_v: float = 1.0  # loading prior sd
    a0: float = 1.0  # inverse-gamma shape for residual variances
    b0: float = 1.0  # inverse-gamma rate
    mu_sd: float = 10.0  # grand-mean prior sd


@dataclass
class FactorParams:
    grand_mean: np.ndarray
    assignment: np.ndarray
    loading: np.ndarray
    residual_var: np.ndarray

    @property
    def n_variables(self) -> int:
        return self.loading.shape[0]

    def copy(self) -> "FactorParams":
        return FactorParams(self.grand_mean.copy(), self.assignment.copy(), self.loading.copy(),
                            self.residual_var.copy())

    def projection(self, n_clusters: int) -> np.ndarray:
        """Dense ``p x K`` projection matrix V."""
        V = np.zeros((self.n_variables, n_clusters))
        V[np.arange(self.n_variables), self.assignment] = self.loading
        return V


def _check(values, params, latent):
    n, p = values.shape
    if params.n_variables != p:
        raise ValueError(f"dimension mismatch: {p} columns vs {params.n_variables} parameters")
    if latent is not None and latent.shape[0] != n:
        raise ValueError(f"dimension mismatch: {n} rows vs {latent.shape[0]} latent rows")


def fitted_latent(params: FactorParams, latent) -> np.ndarray:
    """``v_i * f_{j, z_i}`` for every sample and variable."""
    return latent[:, params.assignment] * params.loading


def latent_conditional(values, params: FactorParams, latent_mean):
    """Mean (n x K) and variance (K,) of the latent factors' Gaussian full conditional."""
    latent_mean = np.asarray(latent_mean, dtype=float)
    _check(values, params, latent_mean)
    K = latent_mean.shape[1]
    prec = 1.0 + np.bincount(params.assignment, weights=params.loading ** 2 / params.residual_var, minlength=K)
    W = np.zeros((params.n_variables, K))
    W[np.arange(params.n_variables), params.assignment] = params.loading / params.residual_var
    mean = (latent_mean + (values - params.grand_mean) @ W) / prec
    return mean, 1.0 / prec


def sample_latent_factors(rng, values, params: FactorParams, latent_mean) -> np.ndarray:
    mean, var = latent_conditional(values, params, latent_mean)
    return mean + np.sqrt(var) * rng.standard_normal(mean.shape)


def _column_stats(values, params, latent):
    c = values - params.grand_mean
    return latent.T @ c, np.einsum("jk,jk->k", latent, latent), np.einsum("ji,ji->i", c, c)


def assignment_log_marginals(values, params: FactorParams, latent, priors: FactorPriors) -> np.ndarray:
    """``p x K`` log marginal likelihood of each column under each cluster, loading integrated out.

    Column i under cluster k is ``c = v f_k + e`` with ``v ~ N(0, tau_v^2)``, so
    ``c ~ N(0, s2 I + tau_v^2 f_k f_k^T)``.
    """
    _check(values, params, latent)
    n = values.shape[0]
    g, ff, cc = _column_stats(values, params, latent)
    s2 = params.residual_var[:, None]
    t2 = priors.tau_v ** 2
    quad = cc[:, None] / s2 - t2 * g.T ** 2 / (s2 * (s2 + t2 * ff[None, :]))
    return -0.5 * n * (LOG_2PI + np.log(s2)) - 0.5 * np.log1p(t2 * ff[None, :] / s2) - 0.5 * quad


def loading_posteriors(values, params: FactorParams, latent, priors: FactorPriors):
    """Mean and variance of each variable's loading if it were in cluster k (both ``p x K``)."""
    g, ff, _ = _column_stats(values, params, latent)
    s2 = params.residual_var[:, None]
    prec = 1.0 / priors.tau_v ** 2 + ff[None, :] / s2
    return g.T / s2 / prec, 1.0 / prec


def _categorical(rng, logp: np.ndarray) -> np.ndarray:
    logp = logp - special.logsumexp(logp, axis=-1, keepdims=True)
    cdf = np.cumsum(np.exp(logp), axis=-1)
    u = rng.random(logp.shape[:-1]) * cdf[..., -1]
    return np.minimum((cdf < u[..., None]).sum(axis=-1), logp.shape[-1] - 1)


def assignment_probabilities(i, values, params, latent, priors) -> np.ndarray:
    """Full-conditional cluster probabilities of variable ``i`` (uniform assignment prior)."""
    lm = assignment_log_marginals(values, params, latent, priors)[i]
    return np.exp(lm - special.logsumexp(lm))


def sample_assignment(rng, i, values, params, latent, priors) -> int:
    lm = assignment_log_marginals(values, params, latent, priors)[i]
    return int(_categorical(rng, lm))


def truncnorm_lower(rng, mean: float, sd: float, lower: float) -> float:
    """One draw from N(mean, sd^2) restricted to ``x >= lower``."""
    alpha = (lower - mean) / sd
    u = rng.random()
    if alpha > 0:
        z = -special.ndtri(u * special.ndtr(-alpha))
    else:
        lo = special.ndtr(alpha)
        z = special.ndtri(lo + u * (1.0 - lo))
    return float(mean + sd * max(z, alpha))


def sample_assignments(rng, values, params: FactorParams, latent, priors: FactorPriors, constrained=()):
    """Joint draw of (assignment, loading) for every variable, loading collapsed for the assignment.

    Clusters listed in ``constrained`` must keep a nonnegative loading sum;
    their moves are scanned sequentially with the truncation folded into the
    collapsed probabilities.  Returns new ``(assignment, loading)`` arrays.
    """
    lm = assignment_log_marginals(values, params, latent, priors)
    pm, pv = loading_posteriors(values, params, latent, priors)
    p, K = lm.shape
    constrained = sorted(set(int(k) for k in constrained))
    if not constrained:
        z = _categorical(rng, lm)
        rows = np.arange(p)
        v = pm[rows, z] + np.sqrt(pv[rows, z]) * rng.standard_normal(p)
        return z.astype(params.assignment.dtype), v

    z = params.assignment.copy()
    v = params.loading.copy()
    sums = np.bincount(z, weights=v, minlength=K)
    is_con = np.zeros(K, dtype=bool)
    is_con[constrained] = True
    psd = np.sqrt(pv)
    for i in range(p):
        k0 = z[i]
        sums[k0] -= v[i]
        logw = lm[i].copy()
        for k in constrained:
            logw[k] += special.log_ndtr((pm[i, k] + sums[k]) / psd[i, k])
        if is_con[k0] and sums[k0] < 0:
            logw[:] = -np.inf
            logw[k0] = 0.0
        k = int(_categorical(rng, logw))
        if is_con[k]:
            v[i] = truncnorm_lower(rng, pm[i, k], psd[i, k], -sums[k])
        else:
            v[i] = pm[i, k] + psd[i, k] * rng.standard_normal()
        z[i] = k
        sums[k] += v[i]
    return z, v


def loading_conditional(values, params: FactorParams, latent, priors: FactorPriors):
    """Mean and variance of every loading given the current assignment."""
    pm, pv = loading_posteriors(values, params, latent, priors)
    rows = np.arange(params.n_variables)
    return pm[rows, params.assignment], pv[rows, params.assignment]


def sample_loadings(rng, values, params: FactorParams, latent, priors: FactorPriors, constrained=()) -> np.ndarray:
    """Redraw loadings; members of a ``constrained`` cluster are drawn given a nonnegative sum."""
    mean, var = loading_conditional(values, params, latent, priors)
    v = mean + np.sqrt(var) * rng.standard_normal(mean.shape)
    for k in constrained:
        members = np.flatnonzero(params.assignment == k)
        if members.size == 0:
            continue
        m, s2 = mean[members], var[members]
        total_sd = math.sqrt(s2.sum())
        target = truncnorm_lower(rng, m.sum(), total_sd, 0.0)
        w = v[members]
        v[members] = w + s2 * (target - w.sum()) / s2.sum()
    return v


def residual_conditional(values, params: FactorParams, latent, priors: FactorPriors):
    """Inverse-gamma shape and rate per variable."""
    _check(values, params, latent)
    n = values.shape[0]
    resid = values - params.grand_mean - fitted_latent(params, latent)
    rss = np.einsum("ji,ji->i", resid, resid)
    shape = np.full(params.n_variables, priors.a0 + 0.5 * n)
    return shape, priors.b0 + 0.5 * rss


def sample_residual_variances(rng, values, params, latent, priors) -> np.ndarray:
    shape, rate = residual_conditional(values, params, latent, priors)
    return rate / rng.gamma(shape)


def grand_mean_conditional(values, params: FactorParams, latent, priors: FactorPriors):
    _check(values, params, latent)
    n = values.shape[0]
    prec = 1.0 / priors.mu_sd ** 2 + n / params.residual_var
    resid = (values - fitted_latent(params, latent)).sum(axis=0)
    return resid / params.residual_var / prec, 1.0 / prec


def sample_grand_mean(rng, values, params, latent, priors) -> np.ndarray:
    mean, var = grand_mean_conditional(values, params, latent, priors)
    return mean + np.sqrt(var) * rng.standard_normal(mean.shape)


def cluster_loading_sums(params: FactorParams, n_clusters: int) -> np.ndarray:
    return np.bincount(params.assignment, weights=params.loading, minlength=n_clusters)


def flip_cluster(params: FactorParams, latent, k: int) -> None:
    """Negate cluster ``k``'s loadings and latent column in place."""
    params.loading[params.assignment == k] *= -1.0
    latent[:, k] *= -1.0


def log_likelihood(values, params: FactorParams, latent) -> float:
    _check(values, params, latent)
    resid = values - params.grand_mean - fitted_latent(params, latent)
    n = values.shape[0]
    return float(-0.5 * (n * (LOG_2PI + np.log(params.residual_var)).sum()
                         + (resid ** 2 / params.residual_var).sum()))


def log_prior(params: FactorParams, priors: FactorPriors, n_clusters: int) -> float:
    p = params.n_variables
    lp = -p * math.log(n_clusters)
    lp += stats.norm.logpdf(params.loading, scale=priors.tau_v).sum()
    lp += stats.invgamma.logpdf(params.residual_var, priors.a0, scale=priors.b0).sum()
    lp += stats.norm.logpdf(params.grand_mean, scale=priors.mu_sd).sum()
    return float(lp)
