import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xlate import synth
from xlate.synth import PlantedEffect, SynthConfig, generate, planted_design, planted_means, split_individuals


def small(**kw):
    base = dict(n_individuals_x=4, n_individuals_y=5, series_length_range=(2, 6), p_x=6, p_y=7, k_x=2, k_y=3,
                n_states=3, seed=3)
    base.update(kw)
    return SynthConfig(**base)


def test_planted_designuration_shapes_and_pairs():
    pair, truth = generate(planted_design(seed=1))
    for ds, p in ((pair.dataset_x, 200), (pair.dataset_y, 210)):
        assert 55 <= ds.n_samples <= 165
        assert ds.n_variables == p
        assert len(ds.individuals()) == 11
    assert truth.pairs == [(0, 2), (2, 1)]


def test_no_planted_effects_gives_empty_pairing_and_null_means():
    cfg = small(p_x=40, p_y=40, n_individuals_x=30, n_individuals_y=30)
    _, truth = generate(cfg)
    assert truth.pairs == []
    assert np.all(planted_means([], "x", 3, 2) == 0)
    # latent values are pure unit noise
    assert abs(truth.latent["x"].mean()) < 0.15
    assert abs(truth.latent["x"].var() - 1.0) < 0.2


def test_single_state_chain():
    cfg = small(n_states=1, planted_effects=[PlantedEffect("shared_time", (0, 1), (0.0,))])
    _, truth = generate(cfg)
    assert all(np.all(p == 0) for p in truth.paths["x"] + truth.paths["y"])


def test_out_of_range_cluster_rejected():
    cfg = small(planted_effects=[PlantedEffect("specific_time_y", (3,), (0, 1, 2))])
    with pytest.raises(ValueError, match="out of range"):
        generate(cfg)


def test_wrong_effect_length_rejected():
    with pytest.raises(ValueError, match="expected 3 values"):
        generate(small(planted_effects=[PlantedEffect("shared_time", (0, 0), (0, 1))]))
    with pytest.raises(ValueError, match="expected 1 values"):
        generate(small(planted_effects=[PlantedEffect("shared_disease", (0, 0), (0, 1, 2))]))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown effect kind"):
        generate(small(planted_effects=[PlantedEffect("shared_banana", (0, 0), (0, 1, 2))]))


def test_planted_means_table():
    effects = [PlantedEffect("shared_time", (0, 1), (0, 0.5, 1.0)),
               PlantedEffect("shared_interaction", (1, 0), (0, -1, -2)),
               PlantedEffect("specific_disease_y", (2,), (0.7,))]
    tx = planted_means(effects, "x", 3, 2)
    np.testing.assert_allclose(tx[:, 0, 0], [0, 0.5, 1.0])
    np.testing.assert_allclose(tx[:, 1, 0], [0, 0.5, 1.0])
    np.testing.assert_allclose(tx[:, 1, 1], [0, -1, -2])
    np.testing.assert_allclose(tx[:, 0, 1], 0)
    ty = planted_means(effects, "y", 3, 3)
    np.testing.assert_allclose(ty[:, 0, 1], [0, 0.5, 1.0])
    np.testing.assert_allclose(ty[:, 1, 0], [0, -1, -2])
    np.testing.assert_allclose(ty[:, 1, 2], 0.7)
    np.testing.assert_allclose(ty[:, 0, 2], 0.0)


def test_noise_free_observation_is_exact():
    cfg = small(residual_sd=0.0, planted_effects=[PlantedEffect("shared_time", (0, 1), (0, 1, 2))])
    pair, truth = generate(cfg)
    raw = pair.dataset_x.raw_values()
    mu = truth.grand_mean["x"]
    expect = mu + truth.latent["x"][:, truth.assignment["x"]] * truth.loading["x"]
    np.testing.assert_allclose(raw, expect, atol=1e-9)


def test_same_seed_is_bit_identical():
    a, ta = generate(planted_design(seed=4, p_x=20, p_y=21))
    b, tb = generate(planted_design(seed=4, p_x=20, p_y=21))
    assert a.dataset_x.digest() == b.dataset_x.digest()
    assert a.dataset_y.digest() == b.dataset_y.digest()
    assert ta.to_dict() == tb.to_dict()
    c, _ = generate(planted_design(seed=5, p_x=20, p_y=21))
    assert c.dataset_x.digest() != a.dataset_x.digest()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 4))
def test_generated_invariants(seed, S, K):
    cfg = small(seed=seed, n_states=S, k_x=K, k_y=K, p_x=K + 3, p_y=K + 2)
    pair, truth = generate(cfg)
    for side, ds in (("x", pair.dataset_x), ("y", pair.dataset_y)):
        for path, rows in zip(truth.paths[side], ds.individuals()):
            assert path[0] == 0
            assert set(np.diff(path).tolist()) <= {0, 1}
            assert path.max() < S
            assert 2 <= len(rows) <= 6
        z = truth.assignment[side]
        assert set(z.tolist()) == set(range(K))
        sums = np.bincount(z, weights=truth.loading[side], minlength=K)
        assert np.all(sums >= 0)
        n_ind = len(truth.disease[side])
        assert truth.disease[side].sum() == n_ind // 2
        assert np.all(np.isfinite(ds.values))


def test_ground_truth_json(tmp_path):
    _, truth = generate(planted_design(seed=2, p_x=12, p_y=13))
    truth.write(tmp_path / "gt.json")
    import json

    d = json.loads((tmp_path / "gt.json").read_text())
    assert d["pairs"] == [[1, 3], [3, 2]]  # 1-based on disk
    assert d["residual_sd"] == 1.0 and d["loading_scale"] == 1.0
    assert len(d["assignment"]["x"]) == 12
    assert min(d["assignment"]["x"]) >= 1 and all(p[0] == 1 for p in d["paths"]["x"])


def test_split_individuals_partitions(rng):
    pair, _ = generate(small(n_individuals_x=9))
    halves = split_individuals(pair.dataset_x, rng)
    a, b = halves.dataset_x, halves.dataset_y
    assert len(a.individuals()) == 4 and len(b.individuals()) == 5
    assert not set(a.individual_ids) & set(b.individual_ids)
    assert a.n_samples + b.n_samples == pair.dataset_x.n_samples
    assert synth.true_pairs([]) == []
