import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import qp_oracle, random_svm_instance
from ngmkl.kernels import Gaussian, Polynomial, gram
from ngmkl.svm import (
    KernelSVC,
    SingleClassError,
    SvmModel,
    SvmProblem,
    dual_objective,
    kkt_violation,
    sign_labels,
    smo_train,
    svm_decision,
    svm_predict,
)


def two_point_problem():
    X = np.array([[1.0], [-1.0]])
    return SvmProblem(gram(Polynomial(1), X, X), [1.0, -1.0], c_reg=10.0), X


class TestProblem:
    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            SvmProblem(np.eye(2), [1, 0])

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            SvmProblem(np.zeros((2, 3)), [1, -1])

    def test_weighted_boxes(self):
        p = SvmProblem(np.eye(4), [1, -1, 1, -1], 2.0, [0.1, 0.2, 0.3, 0.4])
        np.testing.assert_allclose(p.boxes(), [0.8, 1.6, 2.4, 3.2])

    def test_uniform_weights_match_plain(self):
        p = SvmProblem(np.eye(4), [1, -1, 1, -1], 2.0, np.full(4, 0.25))
        np.testing.assert_allclose(p.boxes(), SvmProblem(np.eye(4), [1, -1, 1, -1], 2.0).boxes())


class TestDualObjective:
    def test_zero(self):
        p = SvmProblem(np.eye(3), [1, -1, 1])
        assert dual_objective(np.zeros(3), p) == 0.0

    def test_scalar(self):
        p = SvmProblem(np.array([[1.0]]), [1.0])
        assert dual_objective([0.3], p) == pytest.approx(0.3 ** 2 / 2 - 0.3)

    def test_double_loop_oracle(self):
        rng = np.random.default_rng(0)
        K, y, C = random_svm_instance(rng)
        a = rng.uniform(0, C, y.size)
        expected = 0.0
        for i in range(y.size):
            for j in range(y.size):
                expected += 0.5 * a[i] * a[j] * y[i] * y[j] * K[i, j]
        expected -= a.sum()
        assert dual_objective(a, SvmProblem(K, y, C)) == pytest.approx(expected, abs=1e-10)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            dual_objective([1.0], SvmProblem(np.eye(2), [1, -1]))


class TestSmo:
    def test_two_point_analytic(self):
        p, X = two_point_problem()
        m = smo_train(p)
        np.testing.assert_allclose(m.alpha, [0.5, 0.5], atol=1e-9)
        assert m.bias == pytest.approx(0.0, abs=1e-9)
        assert svm_decision(m, gram(Polynomial(1), np.array([[0.25]]), X)[0]) == pytest.approx(0.25)
        assert m.converged

    def test_single_class(self):
        with pytest.raises(SingleClassError, match="single-class problem"):
            smo_train(SvmProblem(np.eye(3), [1, 1, 1]))

    def test_separable_four_points_vs_oracle(self):
        X = np.array([[0.0, 0.0], [0.2, 0.1], [1.5, 1.4], [1.6, 1.2]])
        y = np.array([1.0, 1.0, -1.0, -1.0])
        K = gram(Gaussian(1.0), X, X)
        m = smo_train(SvmProblem(K, y, 1.0), tol=1e-5)
        _, oracle = qp_oracle(K, y, 1.0)
        assert dual_objective(m.alpha, SvmProblem(K, y, 1.0)) == pytest.approx(oracle, abs=1e-4)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_small_vs_oracle(self, seed):
        K, y, C = random_svm_instance(np.random.default_rng(seed))
        p = SvmProblem(K, y, C)
        m = smo_train(p, tol=1e-5)
        _, oracle = qp_oracle(K, y, C)
        assert dual_objective(m.alpha, p) == pytest.approx(oracle, abs=1e-4)
        assert kkt_violation(m, p) <= 1e-3

    def test_default_tol_gap_is_bounded(self):
        # At tol=1e-3 the objective gap is bounded by roughly tol * sum(box).
        rng = np.random.default_rng(7)
        for _ in range(20):
            K, y, C = random_svm_instance(rng)
            p = SvmProblem(K, y, C)
            gap = dual_objective(smo_train(p).alpha, p) - qp_oracle(K, y, C)[1]
            assert -1e-9 <= gap <= 1e-3 * C * y.size

    def test_equality_constraint_and_box(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(60, 3))
        y = np.where(X[:, 0] + 0.3 * rng.normal(size=60) > 0, 1.0, -1.0)
        p = SvmProblem(gram(Gaussian(1.0), X, X), y, 1.0)
        m = smo_train(p)
        assert abs(m.alpha @ y) < 1e-8
        assert np.all(m.alpha >= 0) and np.all(m.alpha <= 1.0)
        assert kkt_violation(m, p) <= 1e-3

    def test_weighted_uniform_equals_plain(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(30, 2))
        y = np.where(X[:, 1] > 0, 1.0, -1.0)
        K = gram(Gaussian(0.5), X, X)
        a = smo_train(SvmProblem(K, y, 1.0))
        b = smo_train(SvmProblem(K, y, 1.0, np.full(30, 1 / 30)))
        np.testing.assert_allclose(a.alpha, b.alpha, atol=1e-12)
        assert a.bias == pytest.approx(b.bias)

    def test_budget_exhaustion_flagged(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(40, 2))
        y = np.where(rng.normal(size=40) > 0, 1.0, -1.0)
        y[:2] = [1, -1]
        m = smo_train(SvmProblem(gram(Gaussian(0.1), X, X), y, 100.0), max_passes=0)
        assert isinstance(m, SvmModel)
        assert not m.converged

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(25, 2))
        y = np.where(X[:, 0] > 0, 1.0, -1.0)
        p = SvmProblem(gram(Polynomial(2), X, X), y, 1.0)
        np.testing.assert_array_equal(smo_train(p).alpha, smo_train(p).alpha)


class TestDecision:
    def test_empty_model_tie(self):
        m = SvmModel(np.zeros(2), 0.0, np.array([1.0, -1.0]), np.ones(2))
        assert svm_decision(m, [0.3, 0.7]) == 0.0
        assert svm_predict(m, [0.3, 0.7]) == 1.0

    def test_sign_labels(self):
        np.testing.assert_array_equal(sign_labels([-0.1, 0.0, 2.0]), [-1, 1, 1])

    def test_length_mismatch(self):
        m = SvmModel(np.zeros(2), 0.0, np.array([1.0, -1.0]), np.ones(2))
        with pytest.raises(ValueError):
            svm_decision(m, [1.0, 2.0, 3.0])

    def test_free_sv_margin(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(50, 2))
        y = np.where(X.sum(1) > 0, 1.0, -1.0)
        p = SvmProblem(gram(Gaussian(1.0), X, X), y, 1.0)
        m = smo_train(p)
        f = svm_decision(m, p.gram)
        free = (m.alpha > 1e-9) & (m.alpha < 1.0 - 1e-9)
        assert np.all(np.abs(y[free] * f[free] - 1.0) <= 1e-3)


class TestKernelSVC:
    def test_fit_predict(self):
        rng = np.random.default_rng(6)
        X = np.vstack([rng.normal(-2, 0.5, (20, 2)), rng.normal(2, 0.5, (20, 2))])
        y = np.array(["a"] * 20 + ["b"] * 20)
        clf = KernelSVC(Gaussian(1.0)).fit(X, y)
        assert (clf.predict(X) == y).mean() == 1.0
        assert np.all(clf.decision_function(X[20:]) > 0)

    def test_params(self):
        clf = KernelSVC(C=3.0)
        assert clf.get_params()["C"] == 3.0

    def test_multiclass_rejected(self):
        with pytest.raises(ValueError):
            KernelSVC().fit(np.zeros((3, 1)) + np.arange(3)[:, None], [0, 1, 2])
