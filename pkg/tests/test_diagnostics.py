import numpy as np
import pytest

from xlate import diagnostics as dg


def test_geweke_needs_rounds():
    with pytest.raises(ValueError, match="insufficient rounds"):
        dg.geweke_check(n_rounds=1)


def test_geweke_statistics_cover_all_blocks(rng):
    from xlate.sampler import GibbsSampler

    dx, dy = dg.geweke_design()
    sampler = GibbsSampler(np.zeros((dx.n_samples, 4)), np.zeros((dy.n_samples, 5)), dx, dy, dg.geweke_config())
    names = dg.geweke_statistics(sampler.sample_prior_state(rng))
    for key in ("x.log_resid_var", "y.advance2", "spec_y.disease_sq", "shared.time", "n_links", "link00"):
        assert key in names


def test_batch_means_se_iid(rng):
    x = rng.standard_normal(100_000)
    assert dg.batch_means_se(x) == pytest.approx(1 / np.sqrt(x.size), rel=0.25)


def test_batch_means_se_inflates_for_correlated_series(rng):
    e = rng.standard_normal(50_000)
    x = np.empty_like(e)
    x[0] = e[0]
    for t in range(1, e.size):
        x[t] = 0.9 * x[t - 1] + e[t]
    iid = x.std() / np.sqrt(x.size)
    # AR(1) with phi = 0.9: variance inflation (1 + phi) / (1 - phi) = 19
    assert dg.batch_means_se(x) / iid == pytest.approx(np.sqrt(19), rel=0.3)


def test_gelman_rubin(rng):
    same = rng.standard_normal((3, 2000))
    assert dg.gelman_rubin(same) == pytest.approx(1.0, abs=0.01)
    apart = same + np.array([[0.0], [3.0], [6.0]])
    assert dg.gelman_rubin(apart) > 2.0
    assert dg.gelman_rubin(np.ones((2, 5))) == 1.0
    with pytest.raises(ValueError, match="two chains"):
        dg.gelman_rubin(np.ones((1, 5)))


def test_hmm_oracle_exact_rows_normalized():
    res = dg.hmm_oracle(n_sweeps=2000, seed=1)
    np.testing.assert_allclose(res.exact.sum(axis=1), 1.0)
    assert res.exact[0, 0] == pytest.approx(1.0)


def test_matching_oracle_instance_hits_target():
    from xlate import matching as mt

    for target in (-0.5, 0.3, 1.0):
        sx, sy, D, pri = dg.matching_oracle_instance(seed=2, target_delta=target)
        assert mt.link_log_ratio(sx, sy, D, pri) == pytest.approx(target, abs=1e-8)
