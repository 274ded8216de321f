"""Posterior summaries of a trace: pairing table, effect verdicts and state occupancy.

Cluster and state numbers are 1-based in everything written to disk.
Shared effects are reported per (X cluster, Y cluster) pair and summarized
over the snapshots in which that pair was linked; their found-fraction is
taken over all snapshots, so an entry only counts as found when the pair is
linked and the entry is away from zero.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import effects as fx
from .matching import pairing_posterior

GROUPS = ("shared", "x", "y")


@dataclass
class PairingTable:
    link_freq: np.ndarray  # K_x x K_y
    unmatched_x: np.ndarray
    unmatched_y: np.ndarray

    @property
    def shape(self):
        return self.link_freq.shape

    def ranks(self) -> np.ndarray:
        """Rank of each pair's link frequency (1 = most frequent, ties share the lower rank)."""
        flat = self.link_freq.ravel()
        return (1 + (flat[None, :] > flat[:, None]).sum(axis=1)).reshape(self.link_freq.shape)

    def top_pairs(self, n: int) -> list:
        order = np.argsort(-self.link_freq.ravel(), kind="stable")[:n]
        return [tuple(int(i) for i in np.unravel_index(o, self.shape)) for o in order]

    def rows(self) -> list:
        """``(x, y, frequency, rank)`` records, 1-based, with ``None`` marking the unmatched side."""
        ranks = self.ranks()
        kx, ky = self.shape
        out = [(i + 1, j + 1, float(self.link_freq[i, j]), int(ranks[i, j])) for i in range(kx) for j in range(ky)]
        out += [(i + 1, None, float(self.unmatched_x[i]), None) for i in range(kx)]
        out += [(None, j + 1, float(self.unmatched_y[j]), None) for j in range(ky)]
        return out


@dataclass
class EntrySummary:
    group: str  # shared, x or y
    effect: str  # time, disease or interaction
    cluster: tuple  # (k,) or (k_x, k_y) for shared, 0-based
    state: int | None  # 0-based, None for disease
    n_draws: int
    mean: float
    lower: float
    upper: float
    verdict: str
    found_fraction: float

    @property
    def label(self) -> str:
        return f"{self.group}/{self.effect}/{cluster_label(self.group, self.cluster)}" + (
            "" if self.state is None else f"/state{self.state + 1}")


@dataclass
class EffectSummary:
    entries: list = field(default_factory=list)
    draws: dict = field(default_factory=dict)  # (group, effect, cluster) -> (sweeps, values n x m)
    level: float = 0.9
    epsilon: float = 0.1

    def get(self, group, effect, cluster, state=None) -> EntrySummary:
        cluster = tuple(cluster)
        for e in self.entries:
            if e.group == group and e.effect == effect and e.cluster == cluster and e.state == state:
                return e
        raise KeyError((group, effect, cluster, state))

    def for_cluster(self, group, cluster) -> list:
        cluster = tuple(cluster)
        return [e for e in self.entries if e.group == group and e.cluster == cluster]


@dataclass
class Summary:
    pairing: PairingTable
    effects: EffectSummary
    states: dict  # side -> (time_index values, occupancy matrix T x S)


def cluster_label(group: str, cluster) -> str:
    if group == "shared":
        return f"x{cluster[0] + 1}_y{cluster[1] + 1}"
    return f"{group}{cluster[0] + 1}"


def _entry_columns(effect: str, n_states: int, include_beta: bool):
    """State indices of the free entries of an effect, or ``[None]`` for the disease effect."""
    if effect == "disease":
        return [None] if include_beta else []
    return list(range(1, n_states))


def _values(es: fx.EffectSet, effect: str, k: int) -> np.ndarray:
    if effect == "disease":
        return np.array([es.disease[k]])
    return getattr(es, effect)[:, k]


def _summarize_entry(group, effect, cluster, state, draws, n_total, level, epsilon) -> EntrySummary:
    if draws.size == 0:
        nan = float("nan")
        return EntrySummary(group, effect, cluster, state, 0, nan, nan, nan, "null", 0.0)
    verdict, _ = fx.effect_significance(draws, level, epsilon)
    lo, hi = fx.credible_interval(draws, level)
    mean = float(np.clip(draws.mean(), lo, hi))  # guards rounding when all draws coincide
    found = float(np.sum(np.abs(draws) > epsilon)) / n_total
    return EntrySummary(group, effect, cluster, state, int(draws.size), mean, lo, hi, verdict, found)


def summarize_effects(trace, level: float = 0.9, epsilon: float = 0.1) -> EffectSummary:
    snaps = trace.snapshots
    if not snaps:
        raise ValueError("empty trace")
    cfg = trace.config
    S, kx, ky = cfg.n_states, cfg.k_x, cfg.k_y
    n = len(snaps)
    sweeps = np.array([s.sweep for s in snaps])
    x_to_y = np.array([s.x_to_y for s in snaps])
    out = EffectSummary(level=level, epsilon=epsilon)
    for effect in fx.KINDS:
        cols = _entry_columns(effect, S, cfg.include_beta_b)
        if not cols:
            continue
        for group, K in (("x", kx), ("y", ky)):
            for k in range(K):
                vals = np.array([_values(s.effects.specific_x if group == "x" else s.effects.specific_y, effect, k)
                                 for s in snaps])
                out.draws[(group, effect, (k,))] = (sweeps, vals)
                for st in cols:
                    col = vals[:, 0 if st is None else st]
                    out.entries.append(_summarize_entry(group, effect, (k,), st, col, n, level, epsilon))
        for i in range(kx):
            for j in range(ky):
                linked = x_to_y[:, i] == j
                width = 1 if effect == "disease" else S
                vals = np.array([_values(s.effects.shared, effect, i) for s, keep in zip(snaps, linked) if keep])
                vals = vals.reshape(int(linked.sum()), width)
                out.draws[("shared", effect, (i, j))] = (sweeps[linked], vals)
                for st in cols:
                    col = vals[:, 0 if st is None else st] if vals.size else np.empty(0)
                    out.entries.append(_summarize_entry("shared", effect, (i, j), st, col, n, level, epsilon))
    return out


def state_occupancy(trace) -> dict:
    """Per side, the posterior fraction of samples with each ordinal time index sitting in each state."""
    snaps = trace.snapshots
    if not snaps:
        raise ValueError("empty trace")
    S = trace.config.n_states
    out = {}
    for side in ("x", "y"):
        t_idx = np.asarray(trace.design[side]["time_index"], dtype=np.int64)
        states = np.array([getattr(s, f"states_{side}") for s in snaps])
        times = np.unique(t_idx)
        occ = np.zeros((times.size, S))
        for r, t in enumerate(times):
            cols = states[:, t_idx == t].ravel()
            occ[r] = np.bincount(cols, minlength=S)[:S] / cols.size
        out[side] = (times, occ)
    return out


def summarize_trace(trace, level: float = 0.9, epsilon: float = 0.1) -> Summary:
    if not trace.snapshots:
        raise ValueError("empty trace")
    freq, ux, uy = pairing_posterior(trace.matchings(), trace.config.k_x, trace.config.k_y)
    return Summary(PairingTable(freq, ux, uy), summarize_effects(trace, level, epsilon), state_occupancy(trace))


# ---------------------------------------------------------------------- export


def _fmt(v):
    return "" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else str(v))


def write_pairing_csv(table: PairingTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_cluster", "y_cluster", "frequency", "rank"])
        for row in table.rows():
            w.writerow([_fmt(v) for v in row])


def read_pairing_csv(path) -> PairingTable:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    links = [(int(r["x_cluster"]), int(r["y_cluster"]), float(r["frequency"])) for r in rows
             if r["x_cluster"] and r["y_cluster"]]
    ux = [(int(r["x_cluster"]), float(r["frequency"])) for r in rows if r["x_cluster"] and not r["y_cluster"]]
    uy = [(int(r["y_cluster"]), float(r["frequency"])) for r in rows if r["y_cluster"] and not r["x_cluster"]]
    kx, ky = len(ux), len(uy)
    freq = np.zeros((kx, ky))
    for i, j, f in links:
        freq[i - 1, j - 1] = f
    return PairingTable(freq, np.array([f for _, f in sorted(ux)]), np.array([f for _, f in sorted(uy)]))


def report_text(summary: Summary) -> str:
    eff = summary.effects
    lines = ["[pairing]"]
    for x, y, f, rank in summary.pairing.rows():
        if x is not None and y is not None:
            lines.append(f"x{x}-y{y} = {f:.4f}  (rank {rank})")
        elif x is not None:
            lines.append(f"x{x}-unmatched = {f:.4f}")
        else:
            lines.append(f"y{y}-unmatched = {f:.4f}")
    lines += ["", f"[effects]  level={eff.level} epsilon={eff.epsilon}"]
    for e in eff.entries:
        if e.n_draws == 0:
            continue
        lines.append(f"{e.label} = {e.verdict}  mean={e.mean:.3f} interval=[{e.lower:.3f},{e.upper:.3f}]"
                     f" found={e.found_fraction:.3f} draws={e.n_draws}")
    lines += ["", "[states]"]
    for side, (times, occ) in summary.states.items():
        for t, row in zip(times, occ):
            lines.append(f"{side} t={t} = " + " ".join(f"{v:.3f}" for v in row))
    return "\n".join(lines) + "\n"


def export_plot_data(summary: Summary, out_dir) -> Path:
    """Write ``pairing.csv``, per-cluster effect draws, ``states.csv`` and ``report.txt`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_pairing_csv(summary.pairing, out / "pairing.csv")
    for (group, effect, cluster), (sweeps, vals) in summary.effects.draws.items():
        d = out / "effects" / group / effect
        d.mkdir(parents=True, exist_ok=True)
        header = ["sweep"] + (["value"] if effect == "disease" else [f"state{s + 1}" for s in range(vals.shape[1])])
        with open(d / f"{cluster_label(group, cluster)}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for sw, row in zip(sweeps, vals):
                w.writerow([int(sw)] + [repr(float(v)) for v in row])
    with open(out / "states.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        S = next(iter(summary.states.values()))[1].shape[1] if summary.states else 0
        w.writerow(["dataset", "time_index"] + [f"state{s + 1}" for s in range(S)])
        for side, (times, occ) in summary.states.items():
            for t, row in zip(times, occ):
                w.writerow([side, int(t)] + [repr(float(v)) for v in row])
    (out / "report.txt").write_text(report_text(summary))
    return out
