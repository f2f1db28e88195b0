import numpy as np
import pytest

from hetfx.synth import (
    STEP4_LEVELS,
    DgpSpec,
    generate,
    oracle_best_split,
    oracle_wls,
)


class TestGenerate:
    def test_constant_zero_effect(self):
        _, s0, ate = generate(DgpSpec(n=100, p=2, cate="constant",
                                      cate_value=0.0, seed=0))
        assert ate == 0.0
        assert np.all(s0 == 0.0)

    def test_step4_group_conditional_effects(self):
        d, s0, _ = generate(DgpSpec(n=400, p=3, cate="step4", seed=1))
        assert sorted(set(s0.tolist())) == [1.0, 2.0, 3.0, 4.0]
        for level in (1.0, 2.0, 3.0, 4.0):
            assert s0[s0 == level].mean() == level
        # the level order over the driving covariate is the shuffled map
        quart = np.minimum((d.covariates[:, 0] * 4).astype(int), 3)
        for q, lv in enumerate(STEP4_LEVELS):
            assert np.all(s0[quart == q] == lv)

    def test_linear_effect_population_mean(self):
        _, s0, ate = generate(DgpSpec(n=40_000, p=2, cate="linear", seed=2))
        assert ate == pytest.approx(0.5, abs=3 * s0.std() / np.sqrt(len(s0)))

    def test_returned_ate_is_sample_mean(self):
        _, s0, ate = generate(DgpSpec(n=500, p=2, cate="linear", seed=3))
        assert ate == s0.mean()

    def test_treatment_independent_of_baseline_outcome(self):
        spec = DgpSpec(n=10_000, p=3, cate="constant", cate_value=0.0,
                       baseline="linear", seed=4)
        d, _, _ = generate(spec)
        y0 = d.outcome  # zero effect: observed outcome equals Y(0)
        corr = np.corrcoef(d.treatment, y0)[0, 1]
        assert abs(corr) < 3 / np.sqrt(d.n_obs)

    def test_propensity_respected(self):
        d, _, _ = generate(DgpSpec(n=1000, p=2, propensity=0.3, seed=5))
        assert d.treatment.mean() == pytest.approx(0.3, abs=0.01)

    def test_strata_and_clusters_attached(self):
        d, _, _ = generate(DgpSpec(n=300, p=2, n_strata=4, n_clusters=10,
                                   seed=6))
        assert len(np.unique(d.strata_id)) == 4
        assert len(np.unique(d.cluster_id)) == 10

    def test_deterministic(self):
        a, sa, _ = generate(DgpSpec(n=100, p=2, seed=7))
        b, sb, _ = generate(DgpSpec(n=100, p=2, seed=7))
        assert np.array_equal(a.outcome, b.outcome)
        assert np.array_equal(sa, sb)

    def test_heavy_tailed_option(self):
        spec = DgpSpec(n=5000, p=2, noise="student_t", t_df=3.0, seed=8)
        d, _, _ = generate(spec)
        assert np.isfinite(d.outcome).all()

    def test_invalid_specs_rejected(self):
        with pytest.raises(ValueError):
            DgpSpec(n=10, p=2, propensity=1.5)
        with pytest.raises(ValueError):
            DgpSpec(n=10, p=2, baseline="mystery")
        with pytest.raises(ValueError):
            DgpSpec(n=10, p=2, cate="mystery")


class TestOracleWls:
    def test_intercept_only_is_weighted_mean(self, rng):
        y = rng.standard_normal(20)
        w = rng.random(20) + 0.1
        beta, _ = oracle_wls(np.ones((20, 1)), y, w)
        assert beta[0] == pytest.approx(np.sum(w * y) / np.sum(w), abs=1e-12)

    def test_singleton_clusters_match_hc1(self, rng):
        X = np.column_stack([np.ones(25), rng.standard_normal(25)])
        y = rng.standard_normal(25)
        w = rng.random(25) + 0.5
        _, v_cr = oracle_wls(X, y, w, np.arange(25), "CR1")
        _, v_hc = oracle_wls(X, y, w, None, "HC1")
        assert np.allclose(v_cr, v_hc, rtol=1e-12)

    def test_singular_design_raises(self):
        X = np.ones((10, 2))
        with pytest.raises(np.linalg.LinAlgError):
            oracle_wls(X, np.ones(10), np.ones(10))


class TestOracleBestSplit:
    def test_obvious_split(self):
        X = np.array([[0.0], [1.0], [10.0], [11.0]])
        y = np.array([0.0, 0.0, 5.0, 5.0])
        f, thr, sse = oracle_best_split(X, y)
        assert f == 0
        assert thr == pytest.approx(5.5)
        assert sse == pytest.approx(0.0, abs=1e-12)

    def test_no_valid_split(self):
        X = np.ones((5, 2))
        assert oracle_best_split(X, np.arange(5.0)) is None

    def test_min_leaf_respected(self):
        X = np.arange(6.0)[:, None]
        y = np.array([0.0, 0, 0, 0, 0, 100.0])
        got = oracle_best_split(X, y, min_leaf=2)
        assert got[1] == pytest.approx(3.5)  # cannot isolate the last row
