"""Posterior sampling over partial one-to-one matchings between X and Y clusters.

Moves are collapsed: the effect entries of the two clusters involved are
integrated out analytically, so a move compares Gaussian marginal
likelihoods of the pair's latent columns with and without a shared effect.
The matching prior is uniform over all partial injective matchings.  Each
X cluster, in random order, proposes one move per sweep: link to a
uniformly chosen unmatched Y cluster if it is unmatched, otherwise break
its link.  The Hastings correction for the partner choice is the number
of unmatched Y clusters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .effects import CellStats, EffectPriors, pair_log_evidence, single_log_evidence


@dataclass
class MatchingState:
    x_to_y: np.ndarray  # length K_x, -1 where unmatched
    k_y: int

    @classmethod
    def empty(cls, k_x: int, k_y: int) -> "MatchingState":
        return cls(np.full(k_x, -1, dtype=np.int64), k_y)

    @classmethod
    def from_links(cls, links, k_x: int, k_y: int) -> "MatchingState":
        m = cls.empty(k_x, k_y)
        for kx, ky in links:
            if m.x_to_y[kx] >= 0 or ky in m.x_to_y:
                raise ValueError(f"links are not one-to-one: {sorted(links)}")
            m.x_to_y[kx] = ky
        return m

    @property
    def k_x(self) -> int:
        return self.x_to_y.shape[0]

    @property
    def links(self) -> set:
        return {(int(kx), int(ky)) for kx, ky in enumerate(self.x_to_y) if ky >= 0}

    @property
    def n_links(self) -> int:
        return int((self.x_to_y >= 0).sum())

    def y_to_x(self) -> np.ndarray:
        out = np.full(self.k_y, -1, dtype=np.int64)
        for kx, ky in enumerate(self.x_to_y):
            if ky >= 0:
                out[ky] = kx
        return out

    def unmatched_x(self) -> np.ndarray:
        return np.flatnonzero(self.x_to_y < 0)

    def unmatched_y(self) -> np.ndarray:
        return np.flatnonzero(self.y_to_x() < 0)

    def copy(self) -> "MatchingState":
        return MatchingState(self.x_to_y.copy(), self.k_y)

    def check(self) -> None:
        linked = self.x_to_y[self.x_to_y >= 0]
        if linked.size != np.unique(linked).size or np.any(self.x_to_y >= self.k_y):
            raise AssertionError(f"matching is not injective: {self.x_to_y.tolist()}")


def n_matchings(k_x: int, k_y: int) -> int:
    """Number of partial injective matchings between ``k_x`` and ``k_y`` clusters."""
    return sum(math.comb(k_x, m) * math.comb(k_y, m) * math.factorial(m) for m in range(min(k_x, k_y) + 1))


def log_prior(k_x: int, k_y: int) -> float:
    return -math.log(n_matchings(k_x, k_y))


def enumerate_matchings(k_x: int, k_y: int):
    def rec(kx, used, cur):
        if kx == k_x:
            yield list(cur)
            return
        cur.append(-1)
        yield from rec(kx + 1, used, cur)
        cur.pop()
        for ky in range(k_y):
            if ky not in used:
                cur.append(ky)
                used.add(ky)
                yield from rec(kx + 1, used, cur)
                used.discard(ky)
                cur.pop()

    for x_to_y in rec(0, set(), []):
        yield MatchingState(np.asarray(x_to_y, dtype=np.int64), k_y)


def sample_prior(rng, k_x: int, k_y: int) -> MatchingState:
    """Uniform draw over partial injective matchings."""
    weights = np.array([math.comb(k_x, m) * math.comb(k_y, m) * math.factorial(m)
                        for m in range(min(k_x, k_y) + 1)], dtype=float)
    m = int(rng.choice(weights.size, p=weights / weights.sum()))
    xs = rng.choice(k_x, size=m, replace=False)
    ys = rng.choice(k_y, size=m, replace=False)
    return MatchingState.from_links(zip(xs.tolist(), ys.tolist()), k_x, k_y)


def pair_marginal_loglik(sx: CellStats, sy: CellStats, linked: bool, D, priors: EffectPriors) -> float:
    """Log marginal likelihood of two latent columns with their effects integrated out."""
    if linked:
        return pair_log_evidence(sx, sy, D, priors)
    return single_log_evidence(sx, D, priors.spec_var) + single_log_evidence(sy, D, priors.spec_var)


def link_log_ratio(sx: CellStats, sy: CellStats, D, priors: EffectPriors) -> float:
    """``log p(pair | linked) - log p(pair | unlinked)``."""
    return pair_marginal_loglik(sx, sy, True, D, priors) - pair_marginal_loglik(sx, sy, False, D, priors)


def link_acceptance(delta: float, n_unmatched_y: int) -> float:
    """Acceptance probability of a link whose partner was drawn from ``n_unmatched_y`` candidates."""
    return math.exp(min(0.0, delta + math.log(n_unmatched_y)))


def break_acceptance(delta: float, n_unmatched_y_after: int) -> float:
    return math.exp(min(0.0, -delta - math.log(n_unmatched_y_after)))


def propose_link(rng, matching: MatchingState, kx: int, ky: int, sx: CellStats, sy: CellStats, D,
                 priors: EffectPriors):
    """Metropolis-Hastings link attempt; returns ``(accepted, new_matching)``."""
    if matching.x_to_y[kx] >= 0 or ky in matching.x_to_y:
        raise ValueError(f"cluster already matched: x{kx} or y{ky}")
    u_y = matching.unmatched_y().size
    alpha = link_acceptance(link_log_ratio(sx, sy, D, priors), u_y)
    if rng.random() < alpha:
        new = matching.copy()
        new.x_to_y[kx] = ky
        return True, new
    return False, matching


def propose_break(rng, matching: MatchingState, kx: int, sx: CellStats, sy: CellStats, D, priors: EffectPriors):
    """Reverse of :func:`propose_link` for the existing link of ``kx``."""
    if matching.x_to_y[kx] < 0:
        raise ValueError(f"x{kx} has no link to break")
    u_after = matching.unmatched_y().size + 1
    alpha = break_acceptance(link_log_ratio(sx, sy, D, priors), u_after)
    if rng.random() < alpha:
        new = matching.copy()
        new.x_to_y[kx] = -1
        return True, new
    return False, matching


def frozen_link_probability(sx: CellStats, sy: CellStats, D, priors: EffectPriors) -> float:
    """Exact posterior link probability for a lone X/Y cluster pair with latent values held fixed."""
    delta = link_log_ratio(sx, sy, D, priors)
    return 1.0 / (1.0 + math.exp(-delta))


def pairing_posterior(trace, k_x: int | None = None, k_y: int | None = None):
    """Link frequencies (``K_x x K_y``) and unmatched frequencies of each X and Y cluster."""
    trace = list(trace)
    if not trace:
        raise ValueError("empty trace")
    k_x = trace[0].k_x if k_x is None else k_x
    k_y = trace[0].k_y if k_y is None else k_y
    freq = np.zeros((k_x, k_y))
    for m in trace:
        for kx, ky in m.links:
            freq[kx, ky] += 1.0
    freq /= len(trace)
    return freq, 1.0 - freq.sum(axis=1), 1.0 - freq.sum(axis=0)
