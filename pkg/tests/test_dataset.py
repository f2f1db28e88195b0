import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetfx.dataset import (
    Dataset,
    balance_table,
    dummify_missing,
    estimate_propensity,
    load_csv,
    parse_schema,
    rescale_unit_interval,
)
from hetfx.errors import ConfigError, DataValidationError, OverlapError
from hetfx.synth import oracle_wls

from conftest import toy_dataset

SCHEMA = {"y": "outcome", "d": "treatment", "x1": "covariate", "x2": "covariate"}


def write_csv(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadCsv:
    def test_complete_file(self, tmp_path):
        p = write_csv(tmp_path, "y,d,x1,x2\n1,1,0.1,5\n2,0,0.2,6\n3,1,0.3,7\n4,0,0.4,8\n")
        d = load_csv(p, SCHEMA)
        assert d.n_obs == 4
        assert d.n_dropped == 0
        assert d.covariate_names == ["x1", "x2"]
        assert d.outcome_name == "y"

    def test_missing_outcome_row_dropped(self, tmp_path):
        p = write_csv(tmp_path, "y,d,x1,x2\n1,1,0.1,5\n,0,0.2,6\n3,1,0.3,7\n4,0,0.4,8\n")
        d = load_csv(p, SCHEMA)
        assert d.n_obs == 3
        assert d.n_dropped == 1

    def test_missing_treatment_row_dropped(self, tmp_path):
        p = write_csv(tmp_path, "y,d,x1,x2\n1,1,0.1,5\n2,,0.2,6\n3,1,0.3,7\n4,0,0.4,8\n")
        assert load_csv(p, SCHEMA).n_dropped == 1

    def test_non_binary_treatment_errors(self, tmp_path):
        p = write_csv(tmp_path, "y,d,x1,x2\n1,1,0.1,5\n2,2,0.2,6\n3,0,0.3,7\n")
        with pytest.raises(DataValidationError, match="0, 1, or empty"):
            load_csv(p, SCHEMA)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(DataValidationError):
            load_csv(tmp_path / "nope.csv", SCHEMA)

    def test_schema_column_absent(self, tmp_path):
        p = write_csv(tmp_path, "y,d,x1\n1,1,0.1\n2,0,0.2\n")
        with pytest.raises(ConfigError, match="absent"):
            load_csv(p, SCHEMA)

    def test_every_column_needs_a_role(self, tmp_path):
        p = write_csv(tmp_path, "y,d,x1,x2,extra\n1,1,0.1,5,0\n2,0,0.2,6,0\n")
        with pytest.raises(ConfigError, match="without a role"):
            load_csv(p, SCHEMA)

    def test_schema_requires_single_outcome_and_treatment(self):
        with pytest.raises(ConfigError):
            parse_schema({"y": "outcome", "z": "outcome", "d": "treatment"})
        with pytest.raises(ConfigError):
            parse_schema({"y": "outcome"})
        with pytest.raises(ConfigError):
            parse_schema({"y": "outcome", "d": "treatment", "x": "widget"})


class TestDummifyMissing:
    def make(self, cols):
        n = len(next(iter(cols.values())))
        d = np.zeros(n, int)
        d[: n // 2] = 1
        return Dataset(
            outcome=np.arange(n, dtype=float),
            treatment=d,
            covariates=np.column_stack(list(cols.values())),
            covariate_names=list(cols),
        )

    def test_gap_becomes_zero_plus_indicator(self):
        raw = self.make({"x": [1.5, np.nan, 2.0, 3.0]})
        out = dummify_missing(raw)
        assert out.column("x").tolist() == [1.5, 0.0, 2.0, 3.0]
        assert out.column("x_missing").tolist() == [0.0, 1.0, 0.0, 0.0]
        assert out.missing_indicators == {"x_missing"}

    def test_gap_free_passthrough(self):
        raw = self.make({"x": [1.0, 2.0, 3.0, 4.0]})
        assert dummify_missing(raw) is raw

    def test_fully_missing_column(self):
        raw = self.make({"x": [np.nan] * 4, "z": [1.0, 2.0, 3.0, 4.0]})
        out = dummify_missing(raw)
        assert out.column("x").tolist() == [0.0] * 4
        assert out.column("x_missing").tolist() == [1.0] * 4

    @given(mask=st.lists(st.booleans(), min_size=4, max_size=12))
    @settings(max_examples=25, deadline=None)
    def test_idempotent(self, mask):
        n = len(mask)
        x = np.arange(n, dtype=float)
        x[np.array(mask)] = np.nan
        d = np.zeros(n, int)
        d[: max(1, n // 2)] = 1
        raw = Dataset(outcome=np.ones(n), treatment=d,
                      covariates=x[:, None], covariate_names=["x"])
        once = dummify_missing(raw)
        twice = dummify_missing(once)
        assert twice is once
        assert not once.has_missing()


class TestRescale:
    def test_minmax_example(self):
        d = toy_dataset(n=3, p=1, d=np.array([1, 0, 1]),
                        y=np.array([10.0, 20.0, 30.0]))
        d = Dataset(outcome=d.outcome, treatment=d.treatment,
                    covariates=np.array([[2.0], [4.0], [6.0]]),
                    covariate_names=["x1"])
        scaled, m = rescale_unit_interval(d)
        assert scaled.column("x1").tolist() == [0.0, 0.5, 1.0]
        assert scaled.outcome.tolist() == [0.0, 0.5, 1.0]

    def test_constant_column_maps_to_zero(self):
        d = Dataset(outcome=np.array([1.0, 2.0, 3.0]),
                    treatment=np.array([1, 0, 1]),
                    covariates=np.array([[7.0], [7.0], [7.0]]),
                    covariate_names=["c"])
        scaled, m = rescale_unit_interval(d)
        assert scaled.column("c").tolist() == [0.0, 0.0, 0.0]
        assert m.covariate_ranges["c"] == (7.0, 7.0)
        back = m.invert_covariates(scaled.covariates, ["c"])
        assert back.ravel().tolist() == [7.0, 7.0, 7.0]

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_round_trip(self, seed):
        g = np.random.default_rng(seed)
        n, p = 12, 3
        Z = g.standard_normal((n, p)) * g.uniform(0.1, 100)
        y = g.standard_normal(n) * 50
        dvec = np.zeros(n, int)
        dvec[: n // 2] = 1
        d = Dataset(outcome=y, treatment=dvec, covariates=Z,
                    covariate_names=["a", "b", "c"])
        scaled, m = rescale_unit_interval(d)
        back_z = m.invert_covariates(scaled.covariates, d.covariate_names)
        back_y = m.invert_outcome(scaled.outcome)
        scale_z = np.maximum(1.0, np.abs(Z))
        assert np.all(np.abs(back_z - Z) / scale_z < 1e-12)
        assert np.all(np.abs(back_y - y) / np.maximum(1.0, np.abs(y)) < 1e-12)


class TestPropensity:
    def test_global_counts(self):
        d = toy_dataset(n=4, d=np.array([1, 0, 1, 0]))
        assert estimate_propensity(d).p_hat == 0.5
        d = toy_dataset(n=4, d=np.array([1, 1, 1, 0]))
        assert estimate_propensity(d).p_hat == 0.75

    def test_global_equals_mean_exactly(self, rng):
        d = toy_dataset(n=37, seed=5)
        assert estimate_propensity(d).p_hat == d.treatment.mean()

    def test_all_treated_is_overlap_violation(self):
        with pytest.raises(OverlapError, match="overlap"):
            toy_dataset(n=4, d=np.array([1, 1, 1, 1]))

    def test_per_stratum(self):
        strata = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        d = toy_dataset(n=8, d=np.array([1, 0, 0, 0, 1, 1, 1, 0]), strata=strata)
        m = estimate_propensity(d, "per-stratum")
        assert m.per_stratum[0] == 0.25
        assert m.per_stratum[1] == 0.75
        w = m.weights(d)
        assert np.allclose(w[:4], 1 / (0.25 * 0.75))

    def test_weights_are_inverse_variance(self):
        d = toy_dataset(n=10, d=np.array([1, 1, 1, 0, 0, 0, 0, 0, 0, 0]))
        m = estimate_propensity(d)
        assert np.allclose(m.weights(d), 1.0 / (0.3 * 0.7))


class TestDatasetValidation:
    def test_stratum_without_both_arms_rejected(self):
        strata = np.array([0, 0, 1, 1])
        with pytest.raises(DataValidationError, match="stratum"):
            toy_dataset(n=4, d=np.array([1, 0, 1, 1]), strata=strata)

    def test_arrays_frozen(self):
        d = toy_dataset(n=8)
        with pytest.raises(ValueError):
            d.outcome[0] = 99.0

    def test_assert_prepared_catches_gaps(self):
        Z = np.array([[1.0], [np.nan], [2.0], [3.0]])
        d = Dataset(outcome=np.ones(4), treatment=np.array([1, 0, 1, 0]),
                    covariates=Z, covariate_names=["x"])
        with pytest.raises(DataValidationError, match="missing"):
            d.assert_prepared()


class TestBalanceTable:
    def test_constant_covariate_has_zero_coefficient(self):
        d = toy_dataset(n=20, p=1, seed=1)
        d = Dataset(outcome=d.outcome, treatment=d.treatment,
                    covariates=np.full((20, 1), 3.0), covariate_names=["c"])
        tab = balance_table(d)
        assert abs(tab.loc[0, "coefficient"]) < 1e-12

    def test_covariate_equal_to_treatment(self):
        dvec = np.array([1, 0] * 10)
        d = Dataset(outcome=np.ones(20), treatment=dvec,
                    covariates=dvec.astype(float)[:, None],
                    covariate_names=["same_as_d"])
        tab = balance_table(d)
        assert tab.loc[0, "coefficient"] == pytest.approx(1.0, abs=1e-12)
        assert tab.loc[0, "p_value"] < 1e-10

    def test_three_cluster_toy_matches_oracle(self):
        g = np.random.default_rng(3)
        n = 12
        clusters = np.repeat([0, 1, 2], 4)
        dvec = np.tile([1, 0], 6)
        z = g.standard_normal(n)
        d = Dataset(outcome=np.ones(n), treatment=dvec, covariates=z[:, None],
                    covariate_names=["z"], cluster_id=clusters)
        tab = balance_table(d, variance="CR1")
        X = np.column_stack([np.ones(n), dvec])
        beta, V = oracle_wls(X, z, np.ones(n), clusters, "CR1")
        assert tab.loc[0, "coefficient"] == pytest.approx(beta[1], abs=1e-10)
        from scipy.stats import norm
        p = 2 * norm.sf(abs(beta[1] / np.sqrt(V[1, 1])))
        assert tab.loc[0, "p_value"] == pytest.approx(p, abs=1e-10)
        assert tab.loc[0, "control_mean"] == pytest.approx(z[dvec == 0].mean())
        assert tab.loc[0, "control_sd"] == pytest.approx(z[dvec == 0].std(ddof=1))

    def test_cluster_spec_requires_cluster_column(self):
        d = toy_dataset(n=10)
        with pytest.raises(ConfigError, match="cluster"):
            balance_table(d, variance="CR1")
