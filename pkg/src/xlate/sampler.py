"""Gibbs sampler over the joint two-dataset model.

Sweep order:

1. latent factors of both datasets
2. variable assignments and loadings
3. residual variances
4. grand means
5. state paths
6. transition probabilities
7. effect entries
8. cluster-matching moves (after re-applying the sign convention)
9. sign convention

Loading signs are identified by requiring every cluster's loading sum to be
nonnegative.  Unmatched clusters are flipped into that region whenever they
leave it (an exact symmetry of the joint density); matched clusters cannot
be flipped alone, so their assignment and loading draws are truncated to
the region instead.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import effects as fx
from . import factor as fa
from . import hmm
from . import matching as mt
from .data import Dataset, StudyPair
from .rng import stream

log = logging.getLogger(__name__)

SIDES = ("x", "y")


@dataclass
class GibbsConfig:
    n_burn_in: int = 1000
    n_samples: int = 1000
    thinning: int = 1
    seed: int = 0
    n_states: int = 5
    k_x: int = 3
    k_y: int = 3
    tau_v: float = 1.0
    tau_e: float = 2.0
    tau_spec_ratio: float = 0.25
    a0: float = 1.0
    b0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    mu_sd: float = 10.0
    include_beta_b: bool = True
    shared_transitions: bool = False
    log1p: bool = False
    align_time: bool = True
    path_kernel: str = "single_site"

    def validate(self) -> "GibbsConfig":
        if self.n_burn_in < 0 or self.n_samples < 0:
            raise ValueError("sweep counts must be nonnegative")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.n_states < 1 or self.k_x < 1 or self.k_y < 1:
            raise ValueError("n_states, k_x and k_y must be positive")
        for name in ("tau_v", "tau_e", "tau_spec_ratio", "a0", "b0", "c1", "c2", "mu_sd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.path_kernel not in ("single_site", "ffbs"):
            raise ValueError(f"unknown path_kernel {self.path_kernel!r}")
        return self

    @property
    def factor_priors(self) -> fa.FactorPriors:
        return fa.FactorPriors(self.tau_v, self.a0, self.b0, self.mu_sd)

    @property
    def effect_priors(self) -> fx.EffectPriors:
        return fx.EffectPriors(self.tau_e, self.tau_spec_ratio, self.include_beta_b)

    def n_clusters(self, side: str) -> int:
        return self.k_x if side == "x" else self.k_y

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d) -> "GibbsConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class SideDesign:
    """Covariate layout of one dataset: individuals' rows in time order and disease per sample."""

    groups: tuple
    disease: np.ndarray
    time_index: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.disease.shape[0]

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "SideDesign":
        return cls(tuple(ds.individuals()), np.asarray(ds.disease, dtype=np.int64),
                   np.asarray(ds.time_index, dtype=np.int64))

    @classmethod
    def from_lengths(cls, lengths, disease) -> "SideDesign":
        groups, dis, times, start = [], [], [], 0
        for T, b in zip(lengths, disease):
            groups.append(np.arange(start, start + T))
            dis += [b] * T
            times += list(range(1, T + 1))
            start += T
        return cls(tuple(groups), np.asarray(dis, dtype=np.int64), np.asarray(times, dtype=np.int64))


@dataclass
class SideState:
    factor: fa.FactorParams
    latent: np.ndarray
    states: np.ndarray
    chain: hmm.ChainParams

    def copy(self) -> "SideState":
        return SideState(self.factor.copy(), self.latent.copy(), self.states.copy(), self.chain.copy())


@dataclass
class ModelState:
    x: SideState
    y: SideState
    effects: fx.EffectDecomposition
    matching: mt.MatchingState

    def side(self, name: str) -> SideState:
        return self.x if name == "x" else self.y

    def copy(self) -> "ModelState":
        return ModelState(self.x.copy(), self.y.copy(), self.effects.copy(), self.matching.copy())


def _varimax_init(values, K: int):
    """Assignment and signed unit loadings from a varimax-rotated factor analysis."""
    p = values.shape[1]
    if K == 1 or values.shape[0] < 2:
        return np.zeros(p, dtype=np.int64), np.ones(p)
    from sklearn.decomposition import FactorAnalysis

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        comp = FactorAnalysis(n_components=K, rotation="varimax", svd_method="lapack").fit(values).components_
    z = np.argmax(np.abs(comp), axis=0).astype(np.int64)
    v = np.sign(comp[z, np.arange(p)])
    v[v == 0] = 1.0
    return z, v


class GibbsSampler:
    """Holds the data and priors; updates a :class:`ModelState` in place."""

    def __init__(self, values_x, values_y, design_x: SideDesign, design_y: SideDesign, config: GibbsConfig):
        self.config = config.validate()
        self.values = {"x": np.asarray(values_x, dtype=float), "y": np.asarray(values_y, dtype=float)}
        self.design = {"x": design_x, "y": design_y}
        for s in SIDES:
            if self.values[s].shape[0] != self.design[s].n_samples:
                raise ValueError(f"dataset {s}: {self.values[s].shape[0]} rows vs {self.design[s].n_samples} design rows")
        self.fp = config.factor_priors
        self.ep = config.effect_priors
        self.D = fx.design_matrix(config.n_states, config.include_beta_b)
        seed = config.seed
        self.rng = {name: stream(seed, name) for name in
                    ("init", "latent", "factor", "residual", "mean", "paths", "transitions", "effects", "matching")}

    @classmethod
    def from_pair(cls, pair: StudyPair, config: GibbsConfig) -> "GibbsSampler":
        return cls(pair.dataset_x.values, pair.dataset_y.values, SideDesign.from_dataset(pair.dataset_x),
                   SideDesign.from_dataset(pair.dataset_y), config)

    # ------------------------------------------------------------------ state

    def fixed_states(self, side: str) -> np.ndarray:
        return np.minimum(self.design[side].time_index - 1, self.config.n_states - 1)

    def initial_state(self) -> ModelState:
        cfg = self.config
        S = cfg.n_states
        sides = {}
        for s in SIDES:
            K = cfg.n_clusters(s)
            values = self.values[s]
            n, p = values.shape
            z, v = _varimax_init(values, K)
            states = np.zeros(n, dtype=np.int64)
            if cfg.align_time:
                for rows in self.design[s].groups:
                    states[rows] = hmm.initial_path(len(rows), S)
            else:
                states = self.fixed_states(s)
            factor = fa.FactorParams(np.zeros(p), z, v.astype(float), np.ones(p))
            sides[s] = SideState(factor, np.zeros((n, K)), states, hmm.ChainParams(np.full(S - 1, 0.5)))
        state = ModelState(sides["x"], sides["y"], fx.EffectDecomposition.zeros(S, cfg.k_x, cfg.k_y),
                           mt.MatchingState.empty(cfg.k_x, cfg.k_y))
        self.enforce_sign_convention(state)
        return state

    def latent_means(self, state: ModelState, side: str) -> np.ndarray:
        table = fx.cluster_means(state.effects, state.matching.x_to_y, side)
        st = state.side(side)
        return table[st.states, self.design[side].disease]

    def cell_stats(self, state: ModelState, side: str, k: int) -> fx.CellStats:
        st = state.side(side)
        return fx.cell_stats(st.latent[:, k], st.states, self.design[side].disease, self.config.n_states)

    # ------------------------------------------------------------------ steps

    def update_latent(self, state: ModelState) -> None:
        for s in SIDES:
            st = state.side(s)
            st.latent = fa.sample_latent_factors(self.rng["latent"], self.values[s], st.factor,
                                                 self.latent_means(state, s))

    def constrained_clusters(self, state: ModelState, side: str) -> np.ndarray:
        if side == "x":
            return np.flatnonzero(state.matching.x_to_y >= 0)
        return state.matching.x_to_y[state.matching.x_to_y >= 0]

    def update_factor(self, state: ModelState) -> None:
        rng = self.rng["factor"]
        for s in SIDES:
            st = state.side(s)
            con = self.constrained_clusters(state, s)
            z, v = fa.sample_assignments(rng, self.values[s], st.factor, st.latent, self.fp, con)
            st.factor.assignment, st.factor.loading = z, v
            st.factor.loading = fa.sample_loadings(rng, self.values[s], st.factor, st.latent, self.fp, con)

    def residual_variance_draw(self, rng, values, params, latent) -> np.ndarray:
        return fa.sample_residual_variances(rng, values, params, latent, self.fp)

    def update_residuals(self, state: ModelState) -> None:
        for s in SIDES:
            st = state.side(s)
            st.factor.residual_var = self.residual_variance_draw(self.rng["residual"], self.values[s], st.factor,
                                                                 st.latent)

    def update_grand_mean(self, state: ModelState) -> None:
        for s in SIDES:
            st = state.side(s)
            st.factor.grand_mean = fa.sample_grand_mean(self.rng["mean"], self.values[s], st.factor, st.latent,
                                                        self.fp)

    def emission_table(self, state: ModelState, side: str) -> np.ndarray:
        """``n x S`` emission log-density of each sample under each state."""
        st = state.side(side)
        table = fx.cluster_means(state.effects, state.matching.x_to_y, side)  # S x 2 x K
        mu = table[:, self.design[side].disease, :]  # S x n x K
        d = st.latent[None, :, :] - mu
        K = st.latent.shape[1]
        return (-0.5 * (K * fa.LOG_2PI + np.einsum("snk,snk->sn", d, d))).T

    def update_paths(self, state: ModelState) -> None:
        if not self.config.align_time:
            return
        rng = self.rng["paths"]
        for s in SIDES:
            st = state.side(s)
            em = self.emission_table(state, s)
            for rows in self.design[s].groups:
                if self.config.path_kernel == "ffbs":
                    st.states[rows] = hmm.sample_path_ffbs(rng, len(rows), st.chain, em[rows])
                else:
                    path = st.states[rows]
                    hmm.sweep_single_site(rng, path, st.chain, em[rows])
                    st.states[rows] = path

    def paths(self, state: ModelState, side: str) -> list:
        st = state.side(side)
        return [st.states[rows] for rows in self.design[side].groups]

    def update_transitions(self, state: ModelState) -> None:
        if not self.config.align_time:
            return
        cfg, rng = self.config, self.rng["transitions"]
        if cfg.shared_transitions:
            chain = hmm.sample_transition_params(rng, self.paths(state, "x") + self.paths(state, "y"),
                                                 cfg.n_states, cfg.c1, cfg.c2)
            state.x.chain, state.y.chain = chain, chain.copy()
        else:
            for s in SIDES:
                state.side(s).chain = hmm.sample_transition_params(rng, self.paths(state, s), cfg.n_states,
                                                                   cfg.c1, cfg.c2)

    def update_effects(self, state: ModelState) -> None:
        fx.sample_effects(self.rng["effects"], state.x.latent, state.y.latent, state.x.states, state.y.states,
                          self.design["x"].disease, self.design["y"].disease, state.matching.x_to_y, self.ep,
                          self.config.n_states, out=state.effects)

    def _redraw_pair(self, state: ModelState, kx: int, ky: int, linked: bool) -> None:
        rng, inc = self.rng["effects"], self.ep.include_beta
        sx, sy = self.cell_stats(state, "x", kx), self.cell_stats(state, "y", ky)
        if linked:
            sh, spx, spy = fx.sample_pair(rng, sx, sy, self.D, self.ep)
        else:
            sh = math.sqrt(self.ep.shared_var) * rng.standard_normal(self.D.shape[1])
            spx = fx.sample_single(rng, sx, self.D, self.ep.spec_var)
            spy = fx.sample_single(rng, sy, self.D, self.ep.spec_var)
        state.effects.shared.set_vector(kx, sh, inc)
        state.effects.specific_x.set_vector(kx, spx, inc)
        state.effects.specific_y.set_vector(ky, spy, inc)

    def update_matching(self, state: ModelState) -> None:
        rng = self.rng["matching"]
        for kx in rng.permutation(self.config.k_x):
            kx = int(kx)
            m = state.matching
            ky = int(m.x_to_y[kx])
            if ky >= 0:
                sx, sy = self.cell_stats(state, "x", kx), self.cell_stats(state, "y", ky)
                accepted, state.matching = mt.propose_break(rng, m, kx, sx, sy, self.D, self.ep)
                if accepted:
                    self._redraw_pair(state, kx, ky, linked=False)
            else:
                free = m.unmatched_y()
                if free.size == 0:
                    continue
                ky = int(free[rng.integers(free.size)])
                sx, sy = self.cell_stats(state, "x", kx), self.cell_stats(state, "y", ky)
                accepted, state.matching = mt.propose_link(rng, m, kx, ky, sx, sy, self.D, self.ep)
                if accepted:
                    self._redraw_pair(state, kx, ky, linked=True)

    def enforce_sign_convention(self, state: ModelState) -> list:
        """Flip every unmatched cluster whose loading sum is negative; returns the flipped ``(side, k)``."""
        flipped = []
        matched_y = set(state.matching.x_to_y[state.matching.x_to_y >= 0].tolist())
        for s in SIDES:
            st = state.side(s)
            sums = fa.cluster_loading_sums(st.factor, st.latent.shape[1])
            for k in np.flatnonzero(sums < 0):
                k = int(k)
                if (s == "x" and state.matching.x_to_y[k] >= 0) or (s == "y" and k in matched_y):
                    continue
                fa.flip_cluster(st.factor, st.latent, k)
                if s == "x":
                    state.effects.specific_x.negate(k)
                    state.effects.shared.negate(k)
                else:
                    state.effects.specific_y.negate(k)
                flipped.append((s, k))
        return flipped

    def sweep(self, state: ModelState) -> ModelState:
        self.update_latent(state)
        self.update_factor(state)
        self.update_residuals(state)
        self.update_grand_mean(state)
        self.update_paths(state)
        self.update_transitions(state)
        self.update_effects(state)
        self.enforce_sign_convention(state)
        self.update_matching(state)
        self.enforce_sign_convention(state)
        return state

    # ------------------------------------------------------------------ densities

    def log_joint(self, state: ModelState) -> float:
        return log_joint(state, self.values, self.design, self.config)

    # ------------------------------------------------------------------ forward simulation

    def sample_prior_state(self, rng) -> ModelState:
        """Draw every parameter and latent variable from the prior, restricted to the sign region."""
        cfg = self.config
        S = cfg.n_states
        # the sign region has prior mass 2^-(K_x+K_y) under every matching, so the matching keeps its
        # uniform prior and only the remaining variables are redrawn on rejection
        matching = mt.sample_prior(rng, cfg.k_x, cfg.k_y)
        while True:
            chains = {}
            if cfg.shared_transitions:
                c = hmm.ChainParams(rng.beta(cfg.c1, cfg.c2, size=S - 1))
                chains = {"x": c, "y": c.copy()}
            else:
                chains = {s: hmm.ChainParams(rng.beta(cfg.c1, cfg.c2, size=S - 1)) for s in SIDES}
            eff = fx.sample_prior(rng, S, cfg.k_x, cfg.k_y, self.ep)
            sides = {}
            for s in SIDES:
                K = cfg.n_clusters(s)
                p = self.values[s].shape[1]
                n = self.design[s].n_samples
                factor = fa.FactorParams(cfg.mu_sd * rng.standard_normal(p), rng.integers(K, size=p),
                                         cfg.tau_v * rng.standard_normal(p), cfg.b0 / rng.gamma(cfg.a0, size=p))
                states = np.zeros(n, dtype=np.int64)
                if cfg.align_time:
                    for rows in self.design[s].groups:
                        states[rows] = hmm.sample_path_prior(rng, len(rows), chains[s])
                else:
                    states = self.fixed_states(s)
                sides[s] = SideState(factor, np.zeros((n, K)), states, chains[s])
            state = ModelState(sides["x"], sides["y"], eff, matching.copy())
            for s in SIDES:
                st = state.side(s)
                st.latent = self.latent_means(state, s) + rng.standard_normal(st.latent.shape)
            # matched pairs: flip the pair so the X sum is nonnegative, reject if the Y sum is then negative
            ok = True
            for kx, ky in state.matching.links:
                if fa.cluster_loading_sums(state.x.factor, cfg.k_x)[kx] < 0:
                    fa.flip_cluster(state.x.factor, state.x.latent, kx)
                    fa.flip_cluster(state.y.factor, state.y.latent, ky)
                    eff.shared.negate(kx)
                    eff.specific_x.negate(kx)
                    eff.specific_y.negate(ky)
                if fa.cluster_loading_sums(state.y.factor, cfg.k_y)[ky] < 0:
                    ok = False
            if ok:
                self.enforce_sign_convention(state)
                return state

    def sample_data(self, rng, state: ModelState) -> dict:
        out = {}
        for s in SIDES:
            st = state.side(s)
            mean = st.factor.grand_mean + fa.fitted_latent(st.factor, st.latent)
            out[s] = mean + np.sqrt(st.factor.residual_var) * rng.standard_normal(mean.shape)
        return out


def log_joint(state: ModelState, values: dict, design: dict, config: GibbsConfig) -> float:
    """Sum of every prior and likelihood term of the joint model (sign region not included)."""
    fp, ep = config.factor_priors, config.effect_priors
    total = 0.0
    for s in SIDES:
        st = state.side(s)
        K = st.latent.shape[1]
        total += fa.log_likelihood(values[s], st.factor, st.latent)
        total += fa.log_prior(st.factor, fp, K)
        table = fx.cluster_means(state.effects, state.matching.x_to_y, s)
        d = st.latent - table[st.states, design[s].disease]
        total += -0.5 * (d.size * fa.LOG_2PI + float((d ** 2).sum()))
        if config.align_time:
            for rows in design[s].groups:
                path = st.states[rows]
                hmm.validate_path(path, config.n_states)
                total += hmm.transition_log_density(path, st.chain)
            if s == "x" or not config.shared_transitions:
                total += hmm.chain_log_prior(st.chain, config.c1, config.c2)
    total += fx.log_prior(state.effects, ep)
    total += mt.log_prior(config.k_x, config.k_y)
    return float(total)


# ---------------------------------------------------------------------- traces


@dataclass
class Snapshot:
    sweep: int
    log_joint: float
    effects: fx.EffectDecomposition
    x_to_y: np.ndarray
    advance_x: np.ndarray
    advance_y: np.ndarray
    assignment_x: np.ndarray
    assignment_y: np.ndarray
    states_x: np.ndarray
    states_y: np.ndarray

    @classmethod
    def capture(cls, sweep: int, lj: float, state: ModelState) -> "Snapshot":
        return cls(sweep, lj, state.effects.copy(), state.matching.x_to_y.copy(), state.x.chain.advance.copy(),
                   state.y.chain.advance.copy(), state.x.factor.assignment.copy(),
                   state.y.factor.assignment.copy(), state.x.states.copy(), state.y.states.copy())

    def matching(self, k_y: int) -> mt.MatchingState:
        return mt.MatchingState(self.x_to_y, k_y)

    def to_dict(self) -> dict:
        return {
            "sweep": self.sweep, "log_joint": self.log_joint, "effects": self.effects.to_dict(),
            "x_to_y": self.x_to_y.tolist(), "advance_x": self.advance_x.tolist(),
            "advance_y": self.advance_y.tolist(), "assignment_x": self.assignment_x.tolist(),
            "assignment_y": self.assignment_y.tolist(), "states_x": self.states_x.tolist(),
            "states_y": self.states_y.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "Snapshot":
        ints = lambda key: np.asarray(d[key], dtype=np.int64)  # noqa: E731
        return cls(int(d["sweep"]), float(d["log_joint"]), fx.EffectDecomposition.from_dict(d["effects"]),
                   ints("x_to_y"), np.asarray(d["advance_x"], float), np.asarray(d["advance_y"], float),
                   ints("assignment_x"), ints("assignment_y"), ints("states_x"), ints("states_y"))


@dataclass
class Trace:
    config: GibbsConfig
    design: dict  # per side: time_index and disease lists
    sweeps: list = field(default_factory=list)
    phases: list = field(default_factory=list)
    log_joints: list = field(default_factory=list)
    n_links: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.snapshots)

    def matchings(self) -> list:
        return [s.matching(self.config.k_y) for s in self.snapshots]

    def scalars_csv(self) -> str:
        lines = ["sweep,phase,log_joint,n_links"]
        for sw, ph, lj, nl in zip(self.sweeps, self.phases, self.log_joints, self.n_links):
            lines.append(f"{sw},{ph},{lj!r},{nl}")
        return "\n".join(lines) + "\n"

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "scalars.csv").write_text(self.scalars_csv())
        with open(directory / "snapshots.jsonl", "w") as fh:
            for snap in self.snapshots:
                fh.write(json.dumps(snap.to_dict()) + "\n")
        meta = {"config": self.config.to_dict(), "design": self.design}
        (directory / "trace.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
        return directory

    @classmethod
    def load(cls, directory) -> "Trace":
        directory = Path(directory)
        meta = json.loads((directory / "trace.json").read_text())
        trace = cls(GibbsConfig.from_dict(meta["config"]), meta["design"])
        lines = (directory / "scalars.csv").read_text().splitlines()[1:]
        for line in lines:
            sw, ph, lj, nl = line.split(",")
            trace.sweeps.append(int(sw))
            trace.phases.append(ph)
            trace.log_joints.append(float(lj))
            trace.n_links.append(int(nl))
        with open(directory / "snapshots.jsonl") as fh:
            trace.snapshots = [Snapshot.from_dict(json.loads(line)) for line in fh if line.strip()]
        return trace


def _design_record(design: dict) -> dict:
    return {s: {"time_index": design[s].time_index.tolist(), "disease": design[s].disease.tolist(),
                "groups": [g.tolist() for g in design[s].groups]} for s in SIDES}


def _dump(state: ModelState) -> str:
    parts = []
    for s in SIDES:
        st = state.side(s)
        parts.append(f"{s}: resid_var[min,max]=[{st.factor.residual_var.min():.3g},{st.factor.residual_var.max():.3g}]"
                     f" |loading|max={np.abs(st.factor.loading).max():.3g} |latent|max={np.abs(st.latent).max():.3g}"
                     f" advance={st.chain.advance.round(3).tolist()}")
    parts.append(f"matching={state.matching.x_to_y.tolist()}")
    return "; ".join(parts)


def run_sampler(sampler: GibbsSampler, state: ModelState | None = None, progress=None) -> Trace:
    cfg = sampler.config
    state = sampler.initial_state() if state is None else state
    trace = Trace(cfg, _design_record(sampler.design))
    total = cfg.n_burn_in + cfg.n_samples
    for it in range(total):
        sampler.sweep(state)
        lj = sampler.log_joint(state)
        if not math.isfinite(lj):
            raise FloatingPointError(f"non-finite log joint at sweep {it + 1}: {_dump(state)}")
        burn = it < cfg.n_burn_in
        trace.sweeps.append(it + 1)
        trace.phases.append("burn_in" if burn else "sample")
        trace.log_joints.append(lj)
        trace.n_links.append(state.matching.n_links)
        if not burn and (it + 1 - cfg.n_burn_in) % cfg.thinning == 0:
            trace.snapshots.append(Snapshot.capture(it + 1, lj, state))
        if progress is not None:
            progress(it + 1, total, lj, state)
    return trace


def run_chain(pair: StudyPair, config: GibbsConfig, progress=None) -> Trace:
    """Run one chain on a study pair and return its trace."""
    return run_sampler(GibbsSampler.from_pair(pair, config), progress=progress)
