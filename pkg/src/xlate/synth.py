"""Synthetic study pairs drawn from the full generative model.

Each individual gets a random series length, a monotone path through the
left-to-right chain and a disease label; planted effects set the latent
mean per (state, disease) cell; variables are assigned to clusters and
observed through signed unit loadings plus Gaussian noise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import hmm
from .data import Dataset, StudyPair
from .rng import stream

SHARED_KINDS = ("shared_time", "shared_disease", "shared_interaction")
SPECIFIC_KINDS = tuple(f"specific_{e}_{s}" for s in ("x", "y") for e in ("time", "disease", "interaction"))
EFFECT_KINDS = SHARED_KINDS + SPECIFIC_KINDS


@dataclass
class PlantedEffect:
    """One planted covariate effect.

    ``clusters`` is ``(k_x, k_y)`` for shared kinds and ``(k,)`` for specific
    kinds (0-based).  ``values`` has length S for time and interaction
    effects (interaction applies at disease = 1) and length 1 for disease.
    """

    kind: str
    clusters: tuple
    values: tuple

    @property
    def effect(self) -> str:
        return self.kind.split("_")[1]

    @property
    def sides(self) -> tuple:
        if self.kind in SHARED_KINDS:
            return ("x", "y")
        return (self.kind[-1],)

    def cluster_for(self, side: str) -> int:
        if self.kind in SHARED_KINDS:
            return int(self.clusters[0 if side == "x" else 1])
        return int(self.clusters[0])


@dataclass
class SynthConfig:
    n_individuals_x: int
    n_individuals_y: int
    series_length_range: tuple
    p_x: int
    p_y: int
    k_x: int
    k_y: int
    n_states: int
    planted_effects: list = field(default_factory=list)
    residual_sd: float = 1.0
    loading_scale: float = 1.0
    negative_loading_prob: float = 0.2
    grand_mean_sd: float = 1.0
    advance_prob: float = 0.5
    seed: int = 0

    def validate(self) -> "SynthConfig":
        lo, hi = self.series_length_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad series_length_range {self.series_length_range}")
        if not (1 <= self.k_x <= self.p_x and 1 <= self.k_y <= self.p_y):
            raise ValueError("need 1 <= k <= p for both datasets")
        if self.n_states < 1 or self.n_individuals_x < 1 or self.n_individuals_y < 1:
            raise ValueError("counts must be positive")
        if not self.residual_sd >= 0:
            raise ValueError("residual_sd must be nonnegative")
        for eff in self.planted_effects:
            if eff.kind not in EFFECT_KINDS:
                raise ValueError(f"unknown effect kind {eff.kind!r}")
            need = 1 if eff.effect == "disease" else self.n_states
            if len(eff.values) != need:
                raise ValueError(f"{eff.kind}: expected {need} values, got {len(eff.values)}")
            for side in eff.sides:
                k = eff.cluster_for(side)
                K = self.k_x if side == "x" else self.k_y
                if not 0 <= k < K:
                    raise ValueError(f"{eff.kind}: cluster index {k + 1} out of range 1..{K} for dataset {side}")
        return self


@dataclass
class GroundTruth:
    assignment: dict
    loading: dict
    grand_mean: dict
    paths: dict
    disease: dict
    latent: dict
    planted_effects: list
    pairs: list
    residual_sd: float
    loading_scale: float

    def to_dict(self) -> dict:
        """JSON record; clusters and states are 1-based, like every other file written to disk."""
        arr = lambda d: {k: np.asarray(v).tolist() for k, v in d.items()}  # noqa: E731
        return {
            "assignment": {k: (np.asarray(v) + 1).tolist() for k, v in self.assignment.items()},
            "loading": arr(self.loading), "grand_mean": arr(self.grand_mean),
            "paths": {s: [(np.asarray(p) + 1).tolist() for p in ps] for s, ps in self.paths.items()},
            "disease": arr(self.disease),
            "planted_effects": [{"kind": e.kind, "clusters": [c + 1 for c in e.clusters], "values": list(e.values)}
                                for e in self.planted_effects],
            "pairs": [[i + 1, j + 1] for i, j in self.pairs], "residual_sd": self.residual_sd,
            "loading_scale": self.loading_scale,
        }

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def planted_means(effects, side: str, n_states: int, n_clusters: int) -> np.ndarray:
    """``S x 2 x K`` latent mean table implied by the planted effects for one dataset."""
    table = np.zeros((n_states, 2, n_clusters))
    for eff in effects:
        if side not in eff.sides:
            continue
        k = eff.cluster_for(side)
        vals = np.asarray(eff.values, dtype=float)
        if eff.effect == "time":
            table[:, :, k] += vals[:, None]
        elif eff.effect == "disease":
            table[:, 1, k] += vals[0]
        else:
            table[:, 1, k] += vals
    return table


def _generate_side(rng, n_individuals, length_range, p, K, n_states, effects, side, cfg: SynthConfig):
    lo, hi = length_range
    lengths = rng.integers(lo, hi + 1, size=n_individuals)
    diseased = np.zeros(n_individuals, dtype=np.int64)
    diseased[rng.permutation(n_individuals)[: n_individuals // 2]] = 1
    chain = hmm.ChainParams(np.full(max(n_states - 1, 0), cfg.advance_prob))
    paths = [hmm.sample_path_prior(rng, int(T), chain) for T in lengths]
    states = np.concatenate(paths)
    disease = np.repeat(diseased, lengths)
    table = planted_means(effects, side, n_states, K)
    latent = table[states, disease] + rng.standard_normal((states.size, K))

    assignment = rng.integers(K, size=p)
    assignment[rng.permutation(p)[:K]] = np.arange(K)
    loading = cfg.loading_scale * np.where(rng.random(p) < cfg.negative_loading_prob, -1.0, 1.0)
    for k in range(K):
        members = assignment == k
        if loading[members].sum() < 0:
            loading[members] *= -1.0
    grand_mean = cfg.grand_mean_sd * rng.standard_normal(p)
    values = grand_mean + latent[:, assignment] * loading + cfg.residual_sd * rng.standard_normal((states.size, p))

    ids = [f"{side}{j + 1:03d}" for j in range(n_individuals)]
    individual_ids = np.repeat(ids, lengths).tolist()
    time_index = np.concatenate([np.arange(1, T + 1) for T in lengths])
    sample_ids = [f"{side}_s{r + 1:04d}" for r in range(states.size)]
    return dict(values=values, individual_ids=individual_ids, time_index=time_index, disease=disease,
                sample_ids=sample_ids, paths=paths, diseased=diseased, assignment=assignment,
                loading=loading, grand_mean=grand_mean, latent=latent)


def generate(config: SynthConfig):
    """Draw a :class:`StudyPair` and its :class:`GroundTruth` from ``config``."""
    cfg = config.validate()
    parts = {}
    for side, n_ind, p, K in (("x", cfg.n_individuals_x, cfg.p_x, cfg.k_x), ("y", cfg.n_individuals_y, cfg.p_y, cfg.k_y)):
        parts[side] = _generate_side(stream(cfg.seed, f"synth_{side}"), n_ind, cfg.series_length_range, p, K,
                                     cfg.n_states, cfg.planted_effects, side, cfg)
    datasets = {}
    for side, g in parts.items():
        datasets[side] = Dataset.from_arrays(g["values"], g["individual_ids"], g["time_index"], g["disease"],
                                             sample_ids=g["sample_ids"],
                                             variable_names=[f"{side}var{i + 1:03d}" for i in range(g["values"].shape[1])])
    truth = GroundTruth(
        assignment={s: g["assignment"] for s, g in parts.items()},
        loading={s: g["loading"] for s, g in parts.items()},
        grand_mean={s: g["grand_mean"] for s, g in parts.items()},
        paths={s: g["paths"] for s, g in parts.items()},
        disease={s: g["diseased"] for s, g in parts.items()},
        latent={s: g["latent"] for s, g in parts.items()},
        planted_effects=list(cfg.planted_effects),
        pairs=true_pairs(cfg.planted_effects),
        residual_sd=cfg.residual_sd,
        loading_scale=cfg.loading_scale,
    )
    return StudyPair(datasets["x"], datasets["y"]), truth


def true_pairs(effects) -> list:
    """Clusters are paired iff they carry the same shared planted effect."""
    pairs = []
    for eff in effects:
        if eff.kind in SHARED_KINDS:
            pair = (eff.cluster_for("x"), eff.cluster_for("y"))
            if pair not in pairs:
                pairs.append(pair)
    return pairs


def split_individuals(dataset: Dataset, rng) -> StudyPair:
    """Randomly divide a dataset's individuals into two non-overlapping halves."""
    groups = dataset.individuals()
    order = rng.permutation(len(groups))
    half = len(groups) // 2
    raw = dataset.raw_values()
    out = []
    for chosen in (order[:half], order[half:]):
        rows = np.sort(np.concatenate([groups[i] for i in chosen]))
        out.append(Dataset.from_arrays(
            raw[rows], [dataset.individual_ids[r] for r in rows], dataset.time_index[rows],
            dataset.disease[rows], sample_ids=[dataset.sample_ids[r] for r in rows],
            variable_names=dataset.variable_names, log1p=False))
    return StudyPair(out[0], out[1])


def planted_design(seed: int = 1, p_x: int = 200, p_y: int = 210) -> SynthConfig:
    """Two 11-individual datasets, 5-15 visits, 3 and 4 clusters, 5 states, three planted effects."""
    up = (0.0, 0.5, 1.0, 1.5, 2.0)
    down = (0.0, -0.5, -1.0, -1.5, -2.0)
    return SynthConfig(
        n_individuals_x=11, n_individuals_y=11, series_length_range=(5, 15), p_x=p_x, p_y=p_y, k_x=3, k_y=4,
        n_states=5, seed=seed,
        planted_effects=[
            PlantedEffect("shared_time", (0, 2), up),
            PlantedEffect("shared_interaction", (2, 1), down),
            PlantedEffect("specific_time_y", (0,), down),
        ],
    )
