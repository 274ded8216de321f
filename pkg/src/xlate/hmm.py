"""Left-to-right hidden Markov chain over latent development states.

States are 0-based here (state 0 is the baseline every series starts in).
A path may only stay or advance by one; the last state is absorbing.
Emissions are unit-variance Gaussians of a sample's latent row around the
state- and disease-specific effect mean.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .factor import LOG_2PI

MAX_ORACLE_T = 12
MAX_ORACLE_S = 6


@dataclass
class ChainParams:
    advance: np.ndarray  # length S-1, P(s -> s+1)

    @property
    def n_states(self) -> int:
        return self.advance.shape[0] + 1

    def copy(self) -> "ChainParams":
        return ChainParams(self.advance.copy())

    def log_tables(self):
        """``(log_stay, log_advance)``, each of length S."""
        S = self.n_states
        log_stay = np.zeros(S)
        log_adv = np.full(S, -np.inf)
        log_stay[:-1] = np.log1p(-self.advance)
        log_adv[:-1] = np.log(self.advance)
        return log_stay, log_adv


def validate_path(path, n_states: int) -> None:
    path = np.asarray(path)
    if path.size == 0:
        return
    if path[0] != 0:
        raise ValueError("invalid path: first time point must be in the baseline state")
    steps = np.diff(path)
    if np.any((steps < 0) | (steps > 1)):
        raise ValueError("invalid path: steps must be 0 or +1")
    if path[-1] >= n_states:
        raise ValueError("invalid path: state index out of range")


def initial_path(T: int, n_states: int) -> np.ndarray:
    """Spread a length-T series evenly over the chain."""
    t = np.arange(T)
    return np.minimum(t, (t * n_states) // max(T, 1)).astype(np.int64)


def emission_loglik(latent_rows, means_by_state) -> np.ndarray:
    """``T x S`` log N(latent_t; mean_s, I)."""
    latent_rows = np.atleast_2d(np.asarray(latent_rows, dtype=float))
    means_by_state = np.atleast_2d(np.asarray(means_by_state, dtype=float))
    K = latent_rows.shape[1]
    d = latent_rows[:, None, :] - means_by_state[None, :, :]
    return -0.5 * (K * LOG_2PI + np.einsum("tsk,tsk->ts", d, d))


def transition_log_density(path, chain: ChainParams) -> float:
    log_stay, log_adv = chain.log_tables()
    path = np.asarray(path)
    if path.size < 2:
        return 0.0
    prev, step = path[:-1], np.diff(path)
    return float(np.where(step == 1, log_adv[prev], log_stay[prev]).sum())


def path_log_density(path, chain: ChainParams, latent_rows, means_by_state) -> float:
    """Log of transition product times emission product for one individual."""
    path = np.asarray(path)
    validate_path(path, chain.n_states)
    if path.size == 0:
        return 0.0
    em = emission_loglik(latent_rows, means_by_state)
    return transition_log_density(path, chain) + float(em[np.arange(path.size), path].sum())


def site_conditional(path, t: int, chain: ChainParams, log_emission):
    """Support and probabilities of ``path[t]`` given its neighbours.

    ``log_emission`` is the ``T x S`` emission table of this individual.
    """
    S = chain.n_states
    T = len(path)
    if t == 0:
        if T > 1 and path[1] not in (0, 1):
            raise ValueError("inconsistent neighbour states")
        return np.array([0]), np.array([1.0])
    left = int(path[t - 1])
    lo, hi = left, min(left + 1, S - 1)
    if t < T - 1:
        right = int(path[t + 1])
        lo, hi = max(lo, right - 1), min(hi, right)
    if lo > hi:
        raise ValueError(f"inconsistent neighbour states around t={t}: {list(path)}")
    log_stay, log_adv = chain.log_tables()
    support = np.arange(lo, hi + 1)
    logw = np.empty(support.size)
    for n, s in enumerate(support):
        w = log_stay[left] if s == left else log_adv[left]
        if t < T - 1:
            w += log_stay[s] if right == s else log_adv[s]
        logw[n] = w + log_emission[t, s]
    logw -= logw.max()
    prob = np.exp(logw)
    return support, prob / prob.sum()


def sample_state_single_site(rng, path, t: int, chain: ChainParams, log_emission) -> int:
    support, prob = site_conditional(path, t, chain, log_emission)
    if support.size == 1:
        return int(support[0])
    return int(support[0] if rng.random() < prob[0] else support[1])


def sweep_single_site(rng, path, chain: ChainParams, log_emission) -> np.ndarray:
    """One left-to-right pass of single-site updates; modifies ``path`` in place."""
    T = len(path)
    if T == 0:
        return path
    S = chain.n_states
    log_stay, log_adv = chain.log_tables()
    ls, la = log_stay.tolist(), log_adv.tolist()
    em = log_emission.tolist()
    p = [int(s) for s in path]
    u = rng.random(T)
    p[0] = 0
    for t in range(1, T):
        left = p[t - 1]
        lo, hi = left, min(left + 1, S - 1)
        last = t == T - 1
        if not last:
            right = p[t + 1]
            lo, hi = max(lo, right - 1), min(hi, right)
            if lo > hi:
                raise ValueError(f"inconsistent neighbour states around t={t}")
        if lo == hi:
            p[t] = lo
            continue
        # lo == left, hi == left + 1
        w0 = ls[left] + em[t][lo]
        w1 = la[left] + em[t][hi]
        if not last:
            w0 += ls[lo] if right == lo else la[lo]
            w1 += ls[hi] if right == hi else la[hi]
        d = w1 - w0
        p1 = 1.0 / (1.0 + math.exp(-d)) if d > -700 else 0.0
        p[t] = hi if u[t] < p1 else lo
    path[:] = p
    return path


def sample_path_ffbs(rng, T: int, chain: ChainParams, log_emission) -> np.ndarray:
    """Exact draw of a whole path by forward filtering, backward sampling."""
    S = chain.n_states
    log_stay, log_adv = chain.log_tables()
    alpha = np.full((T, S), -np.inf)
    alpha[0, 0] = log_emission[0, 0]
    for t in range(1, T):
        prev = alpha[t - 1]
        stay = prev + log_stay
        adv = np.full(S, -np.inf)
        adv[1:] = prev[:-1] + log_adv[:-1]
        alpha[t] = np.logaddexp(stay, adv) + log_emission[t]
    path = np.zeros(T, dtype=np.int64)
    logw = alpha[T - 1] - alpha[T - 1].max()
    w = np.exp(logw)
    path[-1] = rng.choice(S, p=w / w.sum())
    for t in range(T - 2, -1, -1):
        s1 = path[t + 1]
        cand = [s1, s1 - 1] if s1 > 0 else [s1]
        lw = np.array([alpha[t, s1] + log_stay[s1]] + ([alpha[t, s1 - 1] + log_adv[s1 - 1]] if s1 > 0 else []))
        lw -= lw.max()
        pw = np.exp(lw)
        path[t] = cand[0] if rng.random() < pw[0] / pw.sum() else cand[-1]
    return path


def transition_counts(paths, n_states: int):
    """Advances and self-transitions out of each non-absorbing state."""
    adv = np.zeros(n_states - 1)
    stay = np.zeros(n_states - 1)
    for path in paths:
        path = np.asarray(path)
        if path.size < 2:
            continue
        prev, step = path[:-1], np.diff(path)
        keep = prev < n_states - 1
        adv += np.bincount(prev[keep], weights=step[keep], minlength=n_states - 1)[: n_states - 1]
        stay += np.bincount(prev[keep], weights=1 - step[keep], minlength=n_states - 1)[: n_states - 1]
    return adv, stay


def transition_posterior(paths, n_states: int, c1: float = 1.0, c2: float = 1.0):
    """Beta parameters of each advance probability."""
    adv, stay = transition_counts(paths, n_states)
    return c1 + adv, c2 + stay


def sample_transition_params(rng, paths, n_states: int, c1: float = 1.0, c2: float = 1.0) -> ChainParams:
    a, b = transition_posterior(paths, n_states, c1, c2)
    return ChainParams(rng.beta(a, b))


def chain_log_prior(chain: ChainParams, c1: float = 1.0, c2: float = 1.0) -> float:
    return float(stats.beta.logpdf(chain.advance, c1, c2).sum())


def sample_path_prior(rng, T: int, chain: ChainParams) -> np.ndarray:
    path = np.zeros(T, dtype=np.int64)
    for t in range(1, T):
        s = path[t - 1]
        path[t] = s + (1 if s < chain.n_states - 1 and rng.random() < chain.advance[s] else 0)
    return path


def enumerate_paths(T: int, n_states: int):
    """Every monotone unit-step path of length T starting in state 0."""
    for steps in itertools.product((0, 1), repeat=max(T - 1, 0)):
        path = np.concatenate([[0], np.cumsum(steps)]).astype(np.int64)
        if T == 0:
            continue
        if path[-1] < n_states:
            yield path


def brute_force_path_posterior(T: int, chain: ChainParams, latent_rows, means_by_state) -> np.ndarray:
    """Exact ``T x S`` per-site state marginals by enumerating every path."""
    S = chain.n_states
    if T > MAX_ORACLE_T or S > MAX_ORACLE_S:
        raise ValueError(f"instance too large for enumeration (T={T}, S={S})")
    paths = list(enumerate_paths(T, S))
    logw = np.array([path_log_density(p, chain, latent_rows, means_by_state) for p in paths])
    w = np.exp(logw - logw.max())
    w /= w.sum()
    marg = np.zeros((T, S))
    for wi, p in zip(w, paths):
        marg[np.arange(T), p] += wi
    return marg
