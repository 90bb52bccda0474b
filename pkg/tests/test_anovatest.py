import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from npgroup.anovatest import (
    TestConfig,
    build_windows,
    group_test,
    mst_mse,
    quadratic_form_oracle,
    residual_test,
    standardize,
    tau2_hat,
    univariate_test,
    variance_constant,
)
from npgroup.errors import (
    DegenerateVariance,
    EmptyGroup,
    TooFewCells,
    TooFewObservations,
    ValidationError,
)


def ecdf_windows(scores, p):
    """Windows straight from |F(P_j) - F(P_i)| <= (p-1)/(2n), as sorted positions."""
    s = np.sort(scores)
    n = len(s)
    F = np.searchsorted(s, s, side="right") / n
    half = (p - 1) // 2
    return [
        {j for j in range(n) if abs(F[j] - F[i]) <= (p - 1) / (2 * n) + 1e-12}
        for i in range(half, n - half)
    ]


class TestBuildWindows:
    def test_example_five_points(self):
        lay = build_windows([0.1, 0.2, 0.3, 0.4, 0.5], 3)
        assert [set(w) for w in lay.windows] == [{0, 1, 2}, {1, 2, 3}, {2, 3, 4}]
        assert [set(w) for w in lay.windows] == ecdf_windows(np.array([0.1, 0.2, 0.3, 0.4, 0.5]), 3)
        assert lay.n_cells == 3

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("p", [3, 5, 7])
    def test_matches_ecdf_definition(self, seed, p):
        scores = np.random.default_rng(seed).standard_normal(23)
        lay = build_windows(scores, p)
        assert [set(w) for w in lay.windows] == ecdf_windows(scores, p)

    def test_single_window_when_n_equals_p(self):
        lay = build_windows(np.arange(5.0)[::-1], 5)
        assert lay.n_cells == 1
        assert set(lay.members[0]) == set(range(5))

    def test_tie_break_by_original_index(self):
        lay = build_windows([0.1, 0.2, 0.2, 0.4, 0.5], 3)
        assert lay.order.tolist() == [0, 1, 2, 3, 4]
        lay2 = build_windows([0.5, 0.2, 0.2, 0.4, 0.1], 3)
        assert lay2.order.tolist() == [4, 1, 2, 3, 0]
        assert all(len(set(w)) == 3 for w in lay2.members)

    def test_too_few(self):
        with pytest.raises(TooFewObservations):
            build_windows([1.0, 2.0], 3)

    @pytest.mark.parametrize("p", [2, 4, 1, 3.5])
    def test_window_size_must_be_odd(self, p):
        with pytest.raises(ValidationError):
            build_windows(np.arange(10.0), p)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(3, 60), st.sampled_from([3, 5, 7, 9]), st.integers(0, 2**32 - 1))
    def test_cardinality_and_cover(self, n, p, seed):
        if n < p:
            return
        scores = np.random.default_rng(seed).integers(0, 5, n).astype(float)
        lay = build_windows(scores, p)
        assert lay.windows.shape == (n - p + 1, p)
        assert all(len(set(w)) == p for w in lay.members)
        assert set(lay.windows.ravel()) == set(range(n))
        for i, w in enumerate(lay.windows):
            assert (i + (p - 1) // 2) in w
            assert np.all(np.diff(w) == 1)
        assert np.array_equal(build_windows(scores, p).order, lay.order)


class TestMeanSquares:
    def test_constant_residuals(self):
        lay = build_windows(np.arange(9.0), 3)
        assert mst_mse(np.full(9, 2.0), lay) == (0.0, 0.0)

    def test_alternating_matches_oracle(self):
        lay = build_windows(np.arange(5.0), 3)
        e = np.array([1.0, -1, 1, -1, 1])
        mst, mse = mst_mse(e, lay)
        assert mst - mse == pytest.approx(quadratic_form_oracle(e, lay), rel=1e-12)

    def test_alternating_hand_values(self):
        lay = build_windows(np.arange(5.0), 3)
        mst, mse = mst_mse(np.array([1.0, -1, 1, -1, 1]), lay)
        grand = 1 / 9
        means = np.array([1 / 3, -1 / 3, 1 / 3])
        assert mst == pytest.approx(3 / 2 * np.sum((means - grand) ** 2), rel=1e-14)
        assert mse == pytest.approx(3 * (2 * (2 / 3) ** 2 + (4 / 3) ** 2) / 6, rel=1e-14)

    def test_quadratic_homogeneity(self):
        rng = np.random.default_rng(0)
        e = rng.standard_normal(15)
        lay = build_windows(rng.standard_normal(15), 5)
        a = np.array(mst_mse(e, lay))
        b = np.array(mst_mse(3.0 * e, lay))
        np.testing.assert_allclose(b, 9 * a, rtol=1e-12)

    def test_too_few_cells(self):
        with pytest.raises(TooFewCells):
            mst_mse(np.arange(3.0), build_windows(np.arange(3.0), 3))

    @pytest.mark.parametrize("seed", range(10))
    def test_oracle_identity_n7_p3(self, seed):
        rng = np.random.default_rng(seed)
        e = rng.standard_normal(7)
        lay = build_windows(rng.standard_normal(7), 3)
        mst, mse = mst_mse(e, lay)
        assert mst - mse == pytest.approx(quadratic_form_oracle(e, lay), rel=1e-12)

    def test_oracle_annihilates_constants(self):
        lay = build_windows(np.arange(12.0), 5)
        assert quadratic_form_oracle(np.zeros(12), lay) == 0
        assert quadratic_form_oracle(np.full(12, 3.3), lay) == pytest.approx(0, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(7, 40), st.sampled_from([3, 5, 7]), st.integers(0, 2**32 - 1))
    def test_oracle_identity_property(self, n, p, seed):
        if n - p + 1 < 2:
            return
        rng = np.random.default_rng(seed)
        e = rng.standard_normal(n) * rng.uniform(0.1, 10)
        lay = build_windows(rng.standard_normal(n), p)
        mst, mse = mst_mse(e, lay)
        q = quadratic_form_oracle(e, lay)
        assert mst - mse == pytest.approx(q, rel=1e-12, abs=1e-12 * (mst + mse))


class TestTau2:
    def test_constant(self):
        assert tau2_hat(np.full(10, 4.0)) == 0

    @pytest.mark.parametrize("n", [4, 5, 10, 51])
    def test_alternating(self, n):
        e = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        assert tau2_hat(e) == pytest.approx(4.0, rel=1e-14)

    def test_monte_carlo_unit_variance(self):
        # E[(e_j - e_{j-1})^2 (e_{j+2} - e_{j+1})^2] / 4 = 2 * 2 / 4 = 1
        rng = np.random.default_rng(11)
        vals = [tau2_hat(rng.standard_normal(2000)) for _ in range(50)]
        assert np.median(vals) == pytest.approx(1.0, rel=0.10)

    def test_too_few(self):
        with pytest.raises(TooFewObservations):
            tau2_hat([1.0, 2.0, 3.0])


class TestStandardize:
    def test_zero_contrast(self):
        assert standardize(1.3, 1.3, 2.0, 100, 11) == (0.0, 0.5)

    def test_variance_constant_p11(self):
        assert variance_constant(11) == pytest.approx(15.4, rel=1e-14)

    def test_variance_constant_by_simulation(self):
        # Var(sqrt(n)(MST - MSE)) for iid N(0,1) residuals, independent check of the constant
        rng = np.random.default_rng(5)
        n, p = 200, 5
        lay = build_windows(np.arange(n, dtype=float), p)
        stats = [np.sqrt(n) * np.subtract(*mst_mse(rng.standard_normal(n), lay)) for _ in range(3000)]
        assert np.var(stats) == pytest.approx(variance_constant(p), rel=0.08)

    def test_residual_scale_invariance(self):
        rng = np.random.default_rng(1)
        e = rng.standard_normal(60)
        s = rng.standard_normal(60)
        a = residual_test(e, s, 5)
        b = residual_test(4.5 * e, s, 5)
        assert b.mst - b.mse == pytest.approx(4.5**2 * (a.mst - a.mse), rel=1e-12)
        assert b.tau2_hat == pytest.approx(4.5**4 * a.tau2_hat, rel=1e-12)
        assert b.z == pytest.approx(a.z, abs=1e-10)

    @pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
    def test_degenerate(self, bad):
        with pytest.raises(DegenerateVariance):
            standardize(1.0, 0.5, bad, 10, 3)

    def test_pvalue_monotone(self):
        zs = np.linspace(-5, 5, 101)
        ps = [standardize(z, 0.0, 1.0, 1, 3)[1] for z in zs]
        assert np.all(np.diff(ps) < 0)
        assert all(0 <= p <= 1 for p in ps)


def additive(theta, n, rng):
    X = rng.standard_normal(n)
    Z = rng.standard_normal((n, 3))
    return X + theta * Z.sum(axis=1) + rng.standard_normal(n), X, Z


class TestGroupTest:
    def test_result_fields(self):
        Y, X, Z = additive(0.8, 200, np.random.default_rng(0))
        res = group_test(Y, X, Z)
        assert res.n == 200 and res.p == 11
        assert res.p_value == pytest.approx(1 - norm.cdf(res.z), abs=1e-12)
        assert res.tau2_hat >= 0
        assert res.diagnostics["scores"] == "supervised_pc"
        assert len(res.diagnostics["univariate_pvalues"]) == 3
        assert res.diagnostics["bandwidth"][0] > 0

    def test_location_and_scale_invariance(self):
        Y, X, Z = additive(0.3, 150, np.random.default_rng(1))
        base = group_test(Y, X, Z)
        assert group_test(Y + 12.0, X, Z).z == pytest.approx(base.z, abs=1e-10)
        assert group_test(3.7 * Y, X, Z).z == pytest.approx(base.z, abs=1e-10)

    def test_noiseless_null(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal(100)
        Z = rng.standard_normal((100, 2))
        res = group_test(2 * X + 1, X, Z)
        assert res.z == 0 and res.p_value == 0.5
        assert res.diagnostics["degenerate"] == "exact_fit"

    def test_empty_group(self):
        with pytest.raises(EmptyGroup):
            group_test(np.zeros(20), np.zeros(20), np.zeros((20, 0)))

    def test_too_few_observations(self):
        rng = np.random.default_rng(3)
        with pytest.raises(TooFewObservations):
            group_test(rng.standard_normal(8), rng.standard_normal(8), rng.standard_normal(8))

    def test_strong_signal(self):
        # correlated coordinates so the leading PC follows the effect direction
        rng = np.random.default_rng(4)
        X = rng.standard_normal(200)
        Z = rng.standard_normal((200, 1)) + 0.3 * rng.standard_normal((200, 3))
        Y = X + 0.8 * Z.sum(axis=1) + rng.standard_normal(200)
        assert group_test(Y, X, Z).p_value < 0.01

    def test_no_null_covariates(self):
        rng = np.random.default_rng(5)
        Z = rng.standard_normal((120, 1)) + 0.2 * rng.standard_normal((120, 2))
        Y = np.sin(2 * Z[:, 0]) + 0.3 * rng.standard_normal(120)
        res = group_test(Y, np.zeros((120, 0)), Z)
        assert res.p_value < 0.01


class TestUnivariateTest:
    def test_constant_covariate(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal(50)
        Y = X + rng.standard_normal(50)
        res = univariate_test(Y, X, np.ones(50))
        assert res.z == 0 and res.p_value == 0.5
        assert res.mst == res.mse

    def test_strong_signal_rate(self):
        hits = 0
        for r in range(200):
            rng = np.random.default_rng([7, r])
            X = rng.standard_normal(200)
            z = rng.standard_normal(200)
            Y = X + 2 * z + 0.1 * rng.standard_normal(200)
            hits += univariate_test(Y, X, z).p_value < 0.05
        assert hits / 200 >= 0.95

    @pytest.mark.slow
    def test_permuted_copy_pvalues_uniform(self):
        pv = []
        for r in range(500):
            rng = np.random.default_rng([8, r])
            X = rng.standard_normal(200)
            Y = np.sin(X) + 0.5 * rng.standard_normal(200)
            pv.append(univariate_test(Y, X, rng.permutation(X)).p_value)
        assert np.mean(pv) == pytest.approx(0.5, abs=0.05)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            TestConfig(p=10)
        with pytest.raises(ValidationError):
            TestConfig(theta=1.5)
        assert TestConfig.variant("d").rule == "rule2"
        assert TestConfig.variant("b").theta == 0.2
