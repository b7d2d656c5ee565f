import numpy as np
import pytest

from gradtrack.errors import ConfigError
from gradtrack.problem import (
    AllSpace,
    Ball,
    L1Term,
    QuadraticLoss,
    ZeroTerm,
    make_ridge_problem,
)
from gradtrack.surrogate import (
    SurrogateSpec,
    constants_from_values,
    model_gradient,
    model_value,
    solve_subproblem,
    subproblem_solver,
    surrogate_constants,
)

from conftest import central_diff_gradient


class OpaqueLoss:
    """Hides a quadratic behind a generic interface to force the inner loop."""

    def __init__(self, inner):
        self.inner = inner
        self.hessian_bounds = inner.hessian_bounds
        self.dimension = inner.dimension

    def evaluate(self, x):
        return self.inner.evaluate(x)

    def gradient(self, x):
        return self.inner.gradient(x)

    def hessian(self, x=None):
        return self.inner.hessian(x)


# ---------------------------------------------------------------------------
# constants


def test_linearization_constants_default():
    spec = constants_from_values("linearization", 2.0, 10.0, 1.5)
    assert (spec.tau, spec.mu_tilde, spec.L_tilde) == (10.0, 10.0, 10.0)
    assert spec.d_ell == 0.0
    assert spec.d_max == 8.0  # L - mu


def test_linearization_well_conditioned_has_zero_gap():
    spec = constants_from_values("linearization", 3.0, 3.0, 0.0)
    assert spec.d_max == 0.0


def test_local_f_beta_zero():
    # identical losses: no shift needed, the model inherits mu exactly
    spec = constants_from_values("local_f", 2.0, 5.0, 0.0)
    assert spec.d_max == 0.0
    assert spec.mu_tilde == 2.0


def test_local_f_constants_mu1_beta2():
    # shifted local model with beta > mu: floor max(beta, mu), gap width 2 beta
    spec = constants_from_values("local_f", 1.0, 10.0, 2.0)
    assert spec.mu_tilde == 2.0
    assert spec.d_ell == 0.0
    assert spec.d_max == 4.0


def test_local_f_needs_beta():
    with pytest.raises(ConfigError, match="beta"):
        constants_from_values("local_f", 1.0, 2.0, None)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SurrogateSpec("linearization", 1.0, -1.0, 1.0, 0.0, 0.0)
    with pytest.raises(ConfigError):
        SurrogateSpec("weird", 1.0, 1.0, 1.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# closed-form solves


def test_linearization_is_gradient_step(rng):
    p = make_ridge_problem(m=3, n=20, d=5, lam=0.2, mu0=1.0, L0=4.0, seed=1)
    spec = surrogate_constants("linearization", p)
    x = rng.standard_normal(5)
    y = p.grad_F(x)
    res = solve_subproblem(spec, p.losses[0], ZeroTerm(), AllSpace(), x, y)
    assert np.allclose(res.x_hat, x - y / spec.tau, atol=1e-14)


def test_linearization_l1_hand_value():
    loss = QuadraticLoss(np.array([[2.0]]))
    spec = SurrogateSpec("linearization", 1.0, 1.0, 1.0, 0.0, 0.0)
    res = solve_subproblem(spec, loss, L1Term(0.5), AllSpace(), np.array([0.0]), np.array([-2.0]))
    assert res.x_hat == pytest.approx([1.5], abs=1e-15)


def test_local_f_quadratic_hand_value():
    # f(x) = x^2, shift 1, x = 1, y = 2: (2+1) xhat = (2+1)*1 - 2 = 1
    loss = QuadraticLoss(np.array([[2.0]]))
    spec = SurrogateSpec("local_f", 1.0, 1.0, 3.0, 0.0, 2.0)
    res = solve_subproblem(spec, loss, ZeroTerm(), AllSpace(), np.array([1.0]), np.array([2.0]))
    assert res.x_hat == pytest.approx([1.0 / 3.0], abs=1e-14)


# ---------------------------------------------------------------------------
# model properties


@pytest.mark.parametrize("kind", ["linearization", "local_f"])
def test_first_order_consistency(kind, rng):
    p = make_ridge_problem(m=3, n=25, d=5, lam=0.1, mu0=1.0, L0=6.0, seed=3)
    spec = surrogate_constants(kind, p)
    for f in p.losses:
        x = rng.standard_normal(5)
        num = central_diff_gradient(lambda u: model_value(spec, f, x, u), x)
        assert np.linalg.norm(num - f.gradient(x)) <= 1e-8 * (1 + np.linalg.norm(f.gradient(x)))
        assert np.allclose(model_gradient(spec, f, x, x), f.gradient(x), atol=1e-12)


@pytest.mark.parametrize("kind", ["linearization", "local_f"])
def test_model_curvature_at_least_mu_tilde(kind, rng):
    p = make_ridge_problem(m=4, n=30, d=5, lam=0.1, mu0=1.0, L0=6.0, seed=4)
    spec = surrogate_constants(kind, p)
    x = rng.standard_normal(5)
    for f in p.losses:
        for _ in range(10):
            u = rng.standard_normal(5)
            u /= np.linalg.norm(u)
            # second difference along u around a random point
            z = rng.standard_normal(5)
            # the models are quadratic, so the second difference is exact up
            # to roundoff for any h; a moderate h keeps roundoff tiny
            h = 1e-2
            second = (
                model_value(spec, f, x, z + h * u)
                - 2 * model_value(spec, f, x, z)
                + model_value(spec, f, x, z - h * u)
            ) / h**2
            assert second >= spec.mu_tilde - 1e-8


def test_descent_property(rng):
    # the solved subproblem objective at x_hat never exceeds its value at x
    p = make_ridge_problem(m=3, n=20, d=4, lam=0.1, mu0=1.0, L0=5.0, seed=5)
    for kind in ("linearization", "local_f"):
        spec = surrogate_constants(kind, p)
        for f in p.losses:
            x = rng.standard_normal(4)
            y = rng.standard_normal(4)
            res = solve_subproblem(spec, f, ZeroTerm(), AllSpace(), x, y)
            lin = y - f.gradient(x)

            def total(u):
                return model_value(spec, f, x, u) + lin @ (u - x)

            assert total(res.x_hat) <= total(x) + 1e-12


# ---------------------------------------------------------------------------
# iterative path


def test_iterative_matches_exact_linear_solve(rng):
    p = make_ridge_problem(m=2, n=15, d=4, lam=0.2, mu0=1.0, L0=4.0, seed=6)
    spec = surrogate_constants("local_f", p)
    f = p.losses[0]
    x, y = rng.standard_normal(4), rng.standard_normal(4)
    exact = solve_subproblem(spec, f, ZeroTerm(), AllSpace(), x, y)
    assert exact.inner_iterations == 0 and exact.residual == 0.0
    iterative = solve_subproblem(spec, OpaqueLoss(f), ZeroTerm(), AllSpace(), x, y, tol=1e-10)
    assert np.linalg.norm(exact.x_hat - iterative.x_hat) < 1e-8
    assert iterative.residual <= 1e-10


def test_iterative_residual_within_tol(rng):
    p = make_ridge_problem(m=2, n=15, d=4, lam=0.2, mu0=1.0, L0=4.0, seed=7)
    spec = surrogate_constants("local_f", p)
    x, y = rng.standard_normal(4), rng.standard_normal(4)
    # l1 term forces the proximal inner loop
    res = solve_subproblem(spec, p.losses[0], L1Term(0.3), AllSpace(), x, y, tol=1e-9)
    assert res.residual <= 1e-9
    assert res.inner_iterations > 0
    # ball constraint: solution must be feasible
    res2 = solve_subproblem(spec, p.losses[1], ZeroTerm(), Ball(0.5), x, y, tol=1e-9)
    assert np.linalg.norm(res2.x_hat) <= 0.5 + 1e-12


def test_verify_mu_tilde_accepts_true_and_rejects_inflated(rng):
    from gradtrack.surrogate import verify_mu_tilde

    p = make_ridge_problem(m=2, n=15, d=4, lam=0.2, mu0=1.0, L0=4.0, seed=9)
    f = p.losses[0]
    honest = SurrogateSpec("custom", 0.5, f.hessian_bounds[0] + 0.5,
                           f.hessian_bounds[1] + 0.5, -1.0, 1.0)
    assert verify_mu_tilde(honest, f, np.zeros(4))
    inflated = SurrogateSpec("custom", 0.5, f.hessian_bounds[1] + 10.0,
                             f.hessian_bounds[1] + 10.0, -1.0, 1.0)
    with pytest.raises(ConfigError, match="curvature"):
        verify_mu_tilde(inflated, f, np.zeros(4))


def test_solver_reuse_matches_one_shot(rng):
    p = make_ridge_problem(m=2, n=10, d=3, lam=0.1, mu0=1.0, L0=3.0, seed=8)
    spec = surrogate_constants("linearization", p)
    solve = subproblem_solver(spec, p.losses[0], p.g, p.constraint)
    x, y = rng.standard_normal(3), rng.standard_normal(3)
    a = solve(x, y)
    b = solve_subproblem(spec, p.losses[0], p.g, p.constraint, x, y)
    assert np.array_equal(a.x_hat, b.x_hat)
