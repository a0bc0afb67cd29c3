import numpy as np
import pytest

from baryflow.costs import CostModel
from baryflow.couplings import categorical_coupling, centering_matrix, kernel_matrix, sinkhorn_bistochastic
from baryflow.errors import InvalidInputError
from baryflow.objective import (
    TestFunctionSpec,
    constraint_parts,
    evaluate,
    lf_feature_terms,
    lf_features,
    lf_kde,
    monomial_features,
    objective_value,
)

from conftest import central_diff_grad, central_diff_jacobian, full_hessian, rel_err


def two_singletons():
    """1-D classes {0} and {2}; C = [[1/2, -1/2], [-1/2, 1/2]]."""
    x = np.array([[0.0], [2.0]])
    C = centering_matrix(categorical_coupling(np.array([0, 1])))
    return x, C


class TestMonomialFeatures:
    def test_degree_two_basis_order(self):
        feats = monomial_features(2, 2)
        assert [f.exponents for f in feats] == [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]

    def test_values_and_derivatives(self, rng):
        y = rng.standard_normal((5, 2))
        f = monomial_features(2, 2)[3]  # y1 * y2
        assert np.allclose(f.value(y), y[:, 0] * y[:, 1])
        assert np.allclose(f.grad(y), np.column_stack([y[:, 1], y[:, 0]]))
        h = f.hess(y)
        assert np.allclose(h[:, 0, 1], 1.0) and np.allclose(h[:, 0, 0], 0.0)

    def test_grad_hess_match_fd(self, rng):
        y = rng.standard_normal((4, 3))
        for f in monomial_features(3, 3):
            fd = central_diff_grad(lambda u: f.value(u).sum(), y)
            assert rel_err(f.grad(y), fd) <= 1e-6 or np.linalg.norm(fd) < 1e-9


class TestLfKde:
    def test_single_class_zero(self, rng):
        y = rng.standard_normal((6, 2))
        C = centering_matrix(categorical_coupling(np.zeros(6, dtype=int)))
        assert lf_kde(y, C, 0.8) == pytest.approx(0.0, abs=1e-14)

    def test_identical_class_clouds_vanish(self, rng):
        # two classes mapped onto the same point set: conditional estimates agree
        pts = rng.standard_normal((8, 2))
        y = np.vstack([pts, pts])
        labels = np.array([0] * 8 + [1] * 8)
        C = centering_matrix(categorical_coupling(labels))
        assert abs(lf_kde(y, C, 0.6)) <= 1e-8

    def test_randomized_positivity(self, rng):
        for _ in range(100):
            n = int(rng.integers(4, 30))
            y = rng.standard_normal((n, 2))
            z = rng.standard_normal((n, 1))
            Z, _ = sinkhorn_bistochastic(kernel_matrix(z, 0.7))
            C = centering_matrix(Z)
            assert lf_kde(y, C, 0.5) >= -1e-10


class TestLfFeatures:
    def test_equal_class_means_linear(self):
        y = np.array([[1.0, 0.0], [-1.0, 0.0], [0.5, 0.5], [-0.5, -0.5]])
        labels = np.array([0, 0, 1, 1])  # both class means are (0, 0)
        C = centering_matrix(categorical_coupling(labels))
        assert lf_features(y, C, monomial_features(2, 1)) == pytest.approx(0.0, abs=1e-14)

    def test_constant_feature_annihilated(self, rng):
        class One:
            def value(self, y):
                return np.ones(y.shape[0])

            def grad(self, y):
                return np.zeros_like(y)

            def hess(self, y):
                return np.zeros((y.shape[0], y.shape[1], y.shape[1]))

        y = rng.standard_normal((7, 2))
        Z, _ = sinkhorn_bistochastic(kernel_matrix(rng.standard_normal((7, 1)), 0.8))
        C = centering_matrix(Z)
        assert lf_features(y, C, (One(),)) == pytest.approx(0.0, abs=1e-12)

    def test_two_singletons_value(self):
        x, C = two_singletons()
        assert lf_features(x, C, monomial_features(1, 1)) == pytest.approx(2.0)

    def test_moment_matching_iff_vanishing(self, rng):
        # identical mean+cov across classes -> degree-2 terms vanish;
        # perturbing one class mean makes the linear term positive
        pts = rng.standard_normal((10, 2))
        y = np.vstack([pts, pts])
        labels = np.array([0] * 10 + [1] * 10)
        C = centering_matrix(categorical_coupling(labels))
        feats = monomial_features(2, 2)
        assert np.abs(lf_feature_terms(y, C, feats)).max() <= 1e-12
        y2 = y.copy()
        y2[10:, 0] += 0.5
        assert lf_feature_terms(y2, C, feats)[0] > 1e-3

    def test_per_feature_terms_nonnegative(self, rng):
        for _ in range(50):
            n = int(rng.integers(4, 25))
            y = rng.standard_normal((n, 2))
            labels = rng.integers(0, 3, n)
            C = centering_matrix(categorical_coupling(labels))
            terms = lf_feature_terms(y, C, monomial_features(2, 2))
            assert terms.min() >= -1e-10

    def test_translation_invariance_linear(self, rng):
        y = rng.standard_normal((9, 2))
        labels = rng.integers(0, 2, 9)
        C = centering_matrix(categorical_coupling(labels))
        feats = monomial_features(2, 1)
        v0 = lf_features(y, C, feats)
        v1 = lf_features(y + np.array([5.0, -3.0]), C, feats)
        assert v0 == pytest.approx(v1, abs=1e-9)


class TestEvaluate:
    def test_lambda_zero_grad_is_cost_grad(self, rng):
        y = rng.standard_normal((6, 2))
        x = rng.standard_normal((6, 2))
        C = centering_matrix(categorical_coupling(rng.integers(0, 2, 6)))
        tf = TestFunctionSpec.kde(0.7)
        ev = evaluate(x, y, 0.0, CostModel("sq_euclidean"), C, tf)
        assert np.array_equal(ev.grad, ev.grad_cost)
        assert ev.L == ev.L_C

    def test_objective_decomposition(self, rng):
        y = rng.standard_normal((6, 2))
        x = rng.standard_normal((6, 2))
        C = centering_matrix(categorical_coupling(rng.integers(0, 2, 6)))
        tf = TestFunctionSpec.polynomial(2, 2)
        lam = 1.7
        ev = evaluate(x, y, lam, CostModel("sq_euclidean"), C, tf)
        assert ev.L == pytest.approx(ev.L_C + lam * ev.L_F)
        assert ev.L_F >= -1e-10

    def test_two_singletons_hand_gradient(self):
        # linear feature, canonical cost, lambda = 1, evaluated at y = x:
        # cost grad 0; constraint grad 2 * (C f) = (-2, 2)
        x, C = two_singletons()
        tf = TestFunctionSpec.polynomial(1, 1)
        ev = evaluate(x, x, 1.0, CostModel("sq_euclidean"), C, tf)
        assert ev.grad == pytest.approx(np.array([[-2.0], [2.0]]))

    def test_kde_gradient_matches_frozen_center_fd(self, rng):
        y = rng.standard_normal((7, 2))
        x = rng.standard_normal((7, 2))
        C = centering_matrix(categorical_coupling(rng.integers(0, 2, 7)))
        tf = TestFunctionSpec.kde(0.6)
        lam = 0.8
        ev = evaluate(x, y, lam, CostModel("sq_euclidean"), C, tf)
        centers = y.copy()
        fd = central_diff_grad(
            lambda u: objective_value(x, u, lam, CostModel("sq_euclidean"), C, tf,
                                      centers=centers)[0],
            y,
        )
        assert rel_err(ev.grad, fd) <= 1e-5

    @pytest.mark.parametrize("mode", ["kde", "features"])
    def test_hessian_matches_fd_of_gradient(self, mode, rng):
        n = 5
        y = rng.standard_normal((n, 2))
        x = rng.standard_normal((n, 2))
        C = centering_matrix(categorical_coupling(rng.integers(0, 2, n)))
        tf = TestFunctionSpec.kde(0.7) if mode == "kde" else TestFunctionSpec.polynomial(2, 2)
        lam = 0.6
        model = CostModel("p_norm", p=2.5)
        ev = evaluate(x, y, lam, model, C, tf, want_hessian=True)
        analytic = full_hessian(ev.hess_diag, ev.hess_cross)

        def grad_at(u):
            return evaluate(x, u, lam, model, C, tf).grad

        fd = central_diff_jacobian(grad_at, y)
        assert rel_err(analytic, fd) <= 1e-4

    def test_off_center_value(self, rng):
        # objective_value with centers fixed differs from the slaved value
        y = rng.standard_normal((6, 2))
        centers = rng.standard_normal((6, 2))
        x = rng.standard_normal((6, 2))
        C = centering_matrix(categorical_coupling(rng.integers(0, 2, 6)))
        tf = TestFunctionSpec.kde(0.9)
        _, _, lf_off = objective_value(x, y, 1.0, CostModel("sq_euclidean"), C, tf, centers=centers)
        assert lf_off == pytest.approx(lf_kde(y, C, 0.9, centers=centers))

    def test_invalid_lambda(self, rng):
        y = rng.standard_normal((4, 2))
        C = centering_matrix(categorical_coupling(np.array([0, 0, 1, 1])))
        with pytest.raises(InvalidInputError):
            evaluate(y, y, -1.0, CostModel("sq_euclidean"), C, TestFunctionSpec.kde(1.0))

    def test_bad_bandwidth_rejected(self):
        with pytest.raises(InvalidInputError):
            TestFunctionSpec.kde(0.0)
