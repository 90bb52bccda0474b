import numpy as np
import pytest

from npgroup.anovatest import TestConfig, build_windows, mst_mse
from npgroup.errors import DegenerateCovariance, SingularCovariance, ValidationError
from npgroup.projection import first_pc, select_indices, sir, slice_labels, supervised_pc


def power_iteration(M, iters=5000):
    C = M - M.mean(axis=0)
    cov = C.T @ C / (len(M) - 1)
    v = np.ones(cov.shape[0]) / np.sqrt(cov.shape[0])
    for _ in range(iters):
        v = cov @ v
        v /= np.linalg.norm(v)
    return v


class TestSelectIndices:
    def test_rule1(self):
        assert select_indices([0.01, 0.5, 0.03], 0.05, "rule1").tolist() == [0, 2]

    def test_rule2(self):
        assert select_indices([0.01, 0.5, 0.03], 0.05, "rule2").tolist() == [0, 1, 2]

    def test_fallback_two_smallest(self):
        assert select_indices([0.5, 0.9, 0.7], 0.05, "rule1").tolist() == [0, 2]

    def test_rule2_single_pass_then_fallback_not_needed(self):
        assert select_indices([0.01, 0.9, 0.7], 0.05, "rule2").tolist() == [0, 2]

    def test_single_column(self):
        assert select_indices([0.3], 0.05).tolist() == [0]


class TestFirstPC:
    def test_identical_columns(self):
        x = np.random.default_rng(0).standard_normal(30)
        np.testing.assert_allclose(first_pc(np.column_stack([x, x])), np.ones(2) / np.sqrt(2))

    def test_single_column(self):
        assert first_pc(np.random.default_rng(1).standard_normal((10, 1))).tolist() == [1.0]

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_power_iteration(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((50, 3)) @ np.diag([3.0, 1.5, 0.5])
        v = first_pc(M)
        w = power_iteration(M)
        w = w * np.sign(w[np.argmax(np.abs(w))])
        np.testing.assert_allclose(v, w, atol=1e-8)
        assert np.linalg.norm(v) == pytest.approx(1)

    def test_sign_flip_equivariance(self):
        M = np.random.default_rng(3).standard_normal((40, 3)) @ np.diag([2.0, 1.0, 0.7])
        v = first_pc(M)
        flip = np.array([1.0, -1.0, 1.0])
        u = first_pc(M * flip)
        np.testing.assert_allclose(np.abs(u), np.abs(v), atol=1e-12)
        assert np.allclose(u, v * flip) or np.allclose(u, -v * flip)

    def test_degenerate(self):
        with pytest.raises(DegenerateCovariance):
            first_pc(np.ones((10, 2)))


class TestSupervisedPC:
    def _data(self, seed=0, n=200):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal(n)
        Z = rng.standard_normal((n, 4))
        Y = X + 1.5 * Z[:, 0] + 1.5 * Z[:, 2] + 0.5 * rng.standard_normal(n)
        return Y, X, Z

    def test_selects_relevant(self):
        Y, X, Z = self._data()
        res = supervised_pc(Y, X, Z, 0.05, "rule1")
        assert res.selected.tolist() == [0, 2]
        assert np.linalg.norm(res.coef) == pytest.approx(1)
        assert res.coef[1] == 0 and res.coef[3] == 0
        np.testing.assert_allclose(res.scores, Z @ res.coef)

    def test_rule2_adds_one(self):
        Y, X, Z = self._data()
        res = supervised_pc(Y, X, Z, 0.05, "rule2")
        assert len(res.selected) == 3

    def test_single_column(self):
        Y, X, Z = self._data()
        res = supervised_pc(Y, X, Z[:, :1], 0.05)
        assert res.coef.tolist() == [1.0]
        np.testing.assert_array_equal(res.scores, Z[:, 0])

    def test_constant_column_dropped(self):
        Y, X, Z = self._data()
        Z[:, 3] = 1.0
        res = supervised_pc(Y, X, Z, 0.05)
        assert res.diagnostics["dropped"] == [3]
        assert res.pvalues[3] == 1.0
        assert 3 not in res.selected.tolist()

    def test_column_permutation_equivariance(self):
        Y, X, Z = self._data(1)
        perm = np.array([2, 0, 3, 1])
        a = supervised_pc(Y, X, Z, 0.05)
        b = supervised_pc(Y, X, Z[:, perm], 0.05)
        assert sorted(perm[b.selected].tolist()) == a.selected.tolist()
        assert np.allclose(a.scores, b.scores) or np.allclose(a.scores, -b.scores)

    def test_statistic_invariant_to_score_negation(self):
        rng = np.random.default_rng(4)
        e = rng.standard_normal(41)
        s = rng.standard_normal(41)
        a = np.subtract(*mst_mse(e, build_windows(s, 5)))
        b = np.subtract(*mst_mse(e, build_windows(-s, 5)))
        assert a == pytest.approx(b, rel=1e-12)

    def test_standardized_option(self):
        Y, X, Z = self._data()
        Z[:, 0] *= 10
        res = supervised_pc(Y, X, Z, 0.05, cfg=TestConfig(standardize_pca=True))
        assert res.diagnostics["pca"] == "standardized"
        assert np.abs(res.coef[0]) == pytest.approx(np.abs(res.coef[2]), rel=0.3)


class TestSir:
    def test_single_index_recovery(self):
        beta = np.array([1.0, 2.0, 0.0, 0.0]) / np.sqrt(5)
        cosines = []
        for r in range(50):
            rng = np.random.default_rng([3, r])
            X = rng.standard_normal((1000, 4))
            Y = np.exp(X @ beta) + 0.5 * rng.standard_normal(1000)
            b = sir(X, Y, 10, 1).b_matrix[0]
            cosines.append(abs(b @ beta) / np.linalg.norm(b))
        assert np.median(cosines) > 0.95

    def test_null_eigenvalues_below_permutation_threshold(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((500, 4))
        Y = rng.standard_normal(500)
        bound = 3 * (4 / 500) * 10
        top = sir(X, Y, 10, 1).eigvals[0]
        perm = [sir(X, rng.permutation(Y), 10, 1).eigvals[0] for _ in range(100)]
        # the analytic bound must sit above the permutation 95th percentile
        assert np.quantile(perm, 0.95) < bound
        assert top < bound

    def test_metric_orthonormal_rows(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((300, 5)) @ rng.standard_normal((5, 5))
        Y = X[:, 0] + np.sin(X[:, 1]) + rng.standard_normal(300)
        est = sir(X, Y, 10, 3)
        cov = np.cov(X, rowvar=False, bias=True)
        np.testing.assert_allclose(est.b_matrix @ cov @ est.b_matrix.T, np.eye(3), atol=1e-10)
        assert np.all(np.diff(est.eigvals) <= 0)

    def test_affine_invariance(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((400, 3))
        Y = X[:, 0] + 0.5 * X[:, 1] + 0.3 * rng.standard_normal(400)
        A = np.array([[2.0, 0.3, 0.0], [0.1, 1.0, 0.5], [0.0, -0.4, 3.0]])
        b1 = sir(X, Y, 10, 1).b_matrix[0]
        b2 = sir(X @ A + 5.0, Y, 10, 1).b_matrix[0]
        # B acting on XA equals B' acting on X with B' = B A^T
        mapped = A @ b2
        cos = abs(mapped @ b1) / (np.linalg.norm(mapped) * np.linalg.norm(b1))
        assert cos > 0.99

    def test_binary_uses_two_slices(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((200, 3))
        Y = (X[:, 0] + rng.standard_normal(200) > 0).astype(float)
        est = sir(X, Y)
        assert est.n_slices == 2
        assert set(slice_labels(Y, 10).tolist()) == {0, 1}

    def test_one_slice_rejected(self):
        X = np.random.default_rng(4).standard_normal((50, 2))
        with pytest.raises(ValidationError):
            sir(X, X[:, 0], n_slices=1)

    def test_singular_covariance(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((50, 3))
        X[:, 2] = X[:, 0] + X[:, 1]
        with pytest.raises(SingularCovariance):
            sir(X, rng.standard_normal(50))
