import numpy as np
import pytest

from hetfx.dataset import Dataset
from hetfx.errors import OverlapError
from hetfx.proxies import (
    ElasticNetLearner,
    ProxyPair,
    assign_groups,
    build_proxies,
    make_split,
)
from hetfx.synth import ArmMeanLearner, DgpSpec, generate

from conftest import toy_dataset


class TestMakeSplit:
    def test_eight_rows_exact_halves(self):
        d = toy_dataset(n=8, d=np.array([1, 1, 1, 1, 0, 0, 0, 0]))
        sp = make_split(d, 0, 5)
        assert len(sp.main_idx) == len(sp.aux_idx) == 4
        assert d.treatment[sp.main_idx].sum() == 2
        assert d.treatment[sp.aux_idx].sum() == 2

    def test_nine_rows_main_gets_extra_on_even_split(self):
        d = toy_dataset(n=9, d=np.array([1, 1, 1, 1, 1, 0, 0, 0, 0]))
        sp = make_split(d, 0, 5)
        assert (len(sp.main_idx), len(sp.aux_idx)) == (5, 4)

    def test_partition_and_determinism(self):
        d = toy_dataset(n=33, seed=2)
        a = make_split(d, 3, 17)
        b = make_split(d, 3, 17)
        assert np.array_equal(a.main_idx, b.main_idx)
        merged = np.sort(np.concatenate([a.main_idx, a.aux_idx]))
        assert np.array_equal(merged, np.arange(33))
        c = make_split(d, 4, 17)
        assert not np.array_equal(a.main_idx, c.main_idx)

    def test_stratified_balance_within_strata(self):
        d, _, _ = generate(DgpSpec(n=200, p=3, n_strata=4, seed=3))
        sp = make_split(d, 0, 11)
        for st in np.unique(d.strata_id):
            in_main = d.strata_id[sp.main_idx] == st
            in_aux = d.strata_id[sp.aux_idx] == st
            assert abs(in_main.sum() - in_aux.sum()) <= 1
            tm = d.treatment[sp.main_idx][in_main].sum()
            ta = d.treatment[sp.aux_idx][in_aux].sum()
            assert abs(tm - ta) <= 1

    def test_overall_size_differs_by_at_most_one(self):
        for n in (10, 17, 23, 101):
            d = toy_dataset(n=n, seed=n)
            sp = make_split(d, 1, 2)
            assert abs(len(sp.main_idx) - len(sp.aux_idx)) <= 1

    def test_single_row_cell_warns(self):
        strata = np.array([0, 0, 0, 0, 1, 1, 1])
        d = toy_dataset(n=7, d=np.array([1, 1, 0, 0, 1, 0, 0]), strata=strata)
        with pytest.warns(UserWarning, match="single"):
            make_split(d, 0, 1)


class TestBuildProxies:
    def arm_mean_dataset(self):
        # 12 rows; auxiliary arm means are forced by construction
        y = np.array([10.0] * 6 + [14.0] * 6)
        d = np.array([0] * 6 + [1] * 6)
        g = np.random.default_rng(0)
        return Dataset(outcome=y, treatment=d, covariates=g.random((12, 2)),
                       covariate_names=["a", "b"])

    def test_arm_mean_stub_gives_mean_difference(self):
        d = self.arm_mean_dataset()
        sp = make_split(d, 0, 7)
        pr = build_proxies(d, sp, ArmMeanLearner(), 7)
        assert np.allclose(pr.baseline, 10.0, atol=1e-10)
        assert np.allclose(pr.effect, 4.0, atol=1e-10)
        assert pr.effect_mean == pytest.approx(4.0, abs=1e-10)

    def test_identical_arms_give_zero_effect(self):
        g = np.random.default_rng(1)
        Z = np.tile(g.random((10, 2)), (2, 1))
        y = np.tile(g.standard_normal(10), 2)
        d = np.repeat([0, 1], 10)
        ds = Dataset(outcome=y, treatment=d, covariates=Z,
                     covariate_names=["a", "b"])
        sp = make_split(ds, 0, 3)
        pr = build_proxies(ds, sp, ArmMeanLearner(), 3)
        # aux halves of the two identical arms need not coincide row for
        # row, so compare fitted arm means directly
        aux_t = ds.treatment[sp.aux_idx]
        m0 = ds.outcome[sp.aux_idx][aux_t == 0].mean()
        m1 = ds.outcome[sp.aux_idx][aux_t == 1].mean()
        assert np.allclose(pr.effect, m1 - m0, atol=1e-12)

    def test_scaling_path_equivariant_for_arm_mean(self):
        d = toy_dataset(n=60, seed=4)
        sp = make_split(d, 0, 9)
        scaled = build_proxies(d, sp, ArmMeanLearner(), 9)
        raw_learner = ArmMeanLearner()
        raw_learner.scale_inputs = False
        raw = build_proxies(d, sp, raw_learner, 9)
        assert np.allclose(scaled.effect, raw.effect, atol=1e-10)
        assert np.allclose(scaled.baseline, raw.baseline, atol=1e-10)

    def test_empty_auxiliary_arm_rejected(self):
        # 3 treated rows: the auxiliary half can end up with all of them
        y = np.arange(8.0)
        d = np.array([1, 1, 1, 0, 0, 0, 0, 0])
        ds = Dataset(outcome=y, treatment=d,
                     covariates=np.arange(8.0)[:, None], covariate_names=["x"])
        sp = make_split(ds, 0, 1)
        sp.aux_idx = sp.aux_idx[ds.treatment[sp.aux_idx] == 0]
        with pytest.raises(OverlapError, match="auxiliary"):
            build_proxies(ds, sp, ArmMeanLearner(), 1)

    def test_no_leakage_from_main_outcomes(self):
        d, _, _ = generate(DgpSpec(n=120, p=3, cate="linear", seed=5))
        sp = make_split(d, 0, 13)
        learner = ElasticNetLearner(grid_size=4, repeats=1)
        before = build_proxies(d, sp, learner, 13)
        y2 = d.outcome.copy()
        y2[sp.main_idx[0]] = 1e9  # poison one main-half outcome
        d2 = d.with_outcome(y2)
        after = build_proxies(d2, sp, learner, 13)
        assert np.array_equal(before.baseline, after.baseline)
        assert np.array_equal(before.effect, after.effect)

    def test_effect_mean_matches_effect(self):
        d = toy_dataset(n=50, seed=6)
        sp = make_split(d, 0, 21)
        pr = build_proxies(d, sp, ArmMeanLearner(), 21)
        assert pr.effect_mean == pytest.approx(pr.effect.mean(), abs=1e-12)

    def test_deterministic_given_seed_and_split(self):
        d, _, _ = generate(DgpSpec(n=100, p=3, seed=8))
        sp = make_split(d, 2, 31)
        learner = ElasticNetLearner(grid_size=3, repeats=1)
        a = build_proxies(d, sp, learner, 31)
        b = build_proxies(d, sp, learner, 31)
        assert np.array_equal(a.effect, b.effect)


def pair(effect, seed=0):
    effect = np.asarray(effect, float)
    return ProxyPair(baseline=np.zeros_like(effect), effect=effect,
                     effect_mean=float(effect.mean()), learner="stub",
                     split_index=0)


class TestAssignGroups:
    def test_exact_quartiles(self):
        g = assign_groups(pair(np.arange(1.0, 9.0)), 4, 0)
        assert g.labels.tolist() == [1, 1, 2, 2, 3, 3, 4, 4]

    def test_ties_broken_by_jitter(self):
        g = assign_groups(pair(np.full(8, 2.0)), 4, 0)
        assert np.bincount(g.labels)[1:].tolist() == [2, 2, 2, 2]

    def test_sizes_within_one_for_odd_n(self, rng):
        g = assign_groups(pair(rng.random(103)), 4, 0)
        sizes = np.bincount(g.labels)[1:]
        assert sorted(sizes.tolist()) == [25, 26, 26, 26]

    def test_labels_increase_with_effect(self, rng):
        e = rng.standard_normal(40)
        g = assign_groups(pair(e), 4, 0)
        order = np.argsort(e)
        assert np.all(np.diff(g.labels[order]) >= 0)

    def test_jitter_deterministic(self, rng):
        e = rng.random(21)
        a = assign_groups(pair(e), 4, 5)
        b = assign_groups(pair(e), 4, 5)
        assert np.array_equal(a.labels, b.labels)

    def test_needs_enough_rows(self):
        with pytest.raises(ValueError):
            assign_groups(pair([1.0, 2.0]), 4, 0)

    def test_cuts_are_monotone(self, rng):
        g = assign_groups(pair(rng.standard_normal(50)), 4, 0)
        assert np.all(np.diff(g.cuts) >= 0)
