import hashlib

import numpy as np
import pytest

from gradtrack.errors import CapabilityError, ConfigError
from gradtrack.problem import (
    AllSpace,
    Ball,
    BallIndicator,
    Box,
    L1Term,
    LogisticLoss,
    QuadraticLoss,
    ZeroTerm,
    build_problem,
    centralized_solution,
    composite_prox,
    estimate_beta,
    load_agent_csv,
    make_example1_problem,
    make_ridge_problem,
    problem_from_json,
    problem_to_json,
    prox_g,
    ridge_losses_for_lambda,
)

from conftest import central_diff_gradient


# ---------------------------------------------------------------------------
# nonsmooth terms and constraint sets


def test_prox_l1_soft_threshold():
    assert prox_g(L1Term(0.5), np.array([2.0]), 1.0) == pytest.approx([1.5])
    assert prox_g(L1Term(0.5), np.array([-0.3]), 1.0) == pytest.approx([0.0])


def test_prox_zero_identity(rng):
    x = rng.standard_normal(5)
    assert np.array_equal(prox_g(ZeroTerm(), x, 2.0), x)


def test_prox_ball_indicator_radial():
    out = prox_g(BallIndicator(1.0), np.array([3.0, 4.0]), 7.3)
    assert out == pytest.approx([0.6, 0.8])
    # t = 0 degenerates to the projection
    out0 = prox_g(BallIndicator(1.0), np.array([3.0, 4.0]), 0.0)
    assert out0 == pytest.approx([0.6, 0.8])


def test_prox_firmly_nonexpansive(rng):
    for g in (L1Term(0.7), BallIndicator(2.0), ZeroTerm()):
        for _ in range(10):
            x, y = rng.standard_normal(4), rng.standard_normal(4)
            px, py = prox_g(g, x, 1.3), prox_g(g, y, 1.3)
            assert np.linalg.norm(px - py) ** 2 <= (px - py) @ (x - y) + 1e-12


def test_projection_idempotent(rng):
    for K in (Ball(1.5), Box(-np.ones(4), np.ones(4)), AllSpace()):
        x = 3 * rng.standard_normal(4)
        p1 = K.project(x)
        assert K.contains(p1)
        assert np.allclose(K.project(p1), p1, atol=1e-15)


def test_composite_prox_supported_pairs(rng):
    v = rng.standard_normal(3) * 4
    lo, hi = -np.ones(3), np.ones(3)
    out = composite_prox(L1Term(0.5), Box(lo, hi), v, 1.0)
    # separable: clip after soft threshold
    assert np.allclose(out, np.clip(np.sign(v) * np.maximum(np.abs(v) - 0.5, 0), lo, hi))
    with pytest.raises(CapabilityError):
        composite_prox(L1Term(0.5), Ball(1.0), v, 1.0)


# ---------------------------------------------------------------------------
# losses and constants


def test_single_quadratic_constants():
    p = build_problem([QuadraticLoss(np.array([[2.0]]))])
    assert p.mu == p.L == 2.0
    assert p.kappa_g == 1.0
    assert p.beta == 0.0


def test_gradients_match_finite_differences(rng):
    p = make_ridge_problem(m=3, n=25, d=6, lam=0.1, mu0=1.0, L0=5.0, seed=2)
    for _ in range(20):
        x = rng.standard_normal(6)
        for f in p.losses:
            fd = central_diff_gradient(f.evaluate, x)
            g = f.gradient(x)
            assert np.linalg.norm(fd - g) <= 1e-5 * (1 + np.linalg.norm(g))
    # logistic extension too
    A = rng.standard_normal((30, 4))
    y = np.sign(rng.standard_normal(30))
    lg = LogisticLoss(A, y, reg=0.05)
    for _ in range(5):
        x = rng.standard_normal(4)
        fd = central_diff_gradient(lg.evaluate, x)
        assert np.linalg.norm(fd - lg.gradient(x)) <= 1e-5 * (1 + np.linalg.norm(lg.gradient(x)))


def test_ridge_constants_against_eigen_oracle():
    p = make_ridge_problem(m=4, n=30, d=6, lam=0.2, mu0=1.0, L0=10.0, seed=5)
    # oracle: rebuild Hessians from the stored data
    H_avg = sum(A.T @ A / A.shape[0] + 2 * 0.2 * np.eye(6) for (A, _) in p.data) / 4
    eigs = np.linalg.eigvalsh(H_avg)
    assert abs(p.mu - eigs[0]) < 1e-10
    assert abs(p.L - eigs[-1]) < 1e-10


def test_ridge_deterministic_and_spec_shapes():
    p1 = make_ridge_problem(m=3, n=10, d=4, lam=0.1, mu0=1.0, L0=3.0, seed=7)
    p2 = make_ridge_problem(m=3, n=10, d=4, lam=0.1, mu0=1.0, L0=3.0, seed=7)
    assert all(np.array_equal(a1, a2) for (a1, _), (a2, _) in zip(p1.data, p2.data))
    assert p1.d == 4 and p1.m == 3


def test_ridge_lam0_requires_enough_samples():
    with pytest.raises(ConfigError):
        make_ridge_problem(m=2, n=3, d=10, lam=0.0, mu0=1.0, L0=2.0, seed=0)


def test_table4_s1_setting_constructs():
    # headline sweep setting: n = 1e3, mu0 = 1, L0 = 1e3 (reduced agent count)
    p = make_ridge_problem(m=5, n=1000, d=20, lam=0.0, mu0=1.0, L0=1000.0, seed=1,
                           keep_data=False)
    assert p.kappa_g > 10
    assert p.mu > 0


def test_example1_ratios():
    p = make_example1_problem(1.0, 1.0, 4)
    assert p.kappa_l / p.kappa_g == pytest.approx(1 + 4 * 1.0, abs=1e-12)
    p0 = make_example1_problem(1.0, 0.0, 4)
    assert p0.beta == pytest.approx(0.0, abs=1e-12)
    assert p0.kappa_l == pytest.approx(p0.kappa_g) == pytest.approx(1.0)
    p2 = make_example1_problem(2.0, 3.0, 10)
    assert p2.kappa_breve / p2.kappa_g == pytest.approx((1 + 10 * 1.5) / (1 + 1.5), abs=1e-12)


def test_example1_constants():
    p = make_example1_problem(1.0, 1.0, 4, d=8)
    assert p.mu == pytest.approx(2.0, abs=1e-12)
    assert p.L == pytest.approx(2.0, abs=1e-12)
    assert np.allclose(p.mu_i, 1.0)
    assert np.allclose(p.L_i, 5.0)
    with pytest.raises(ConfigError):
        make_example1_problem(1.0, 1.0, 4, d=6)  # not a multiple of m


# ---------------------------------------------------------------------------
# similarity constant


def test_beta_identical_losses_zero():
    H = np.diag([1.0, 3.0])
    p = build_problem([QuadraticLoss(H), QuadraticLoss(H.copy())])
    assert estimate_beta(p) == 0.0


def test_beta_example1_matches_eigensolver_oracle():
    p = make_example1_problem(1.0, 1.0, 2)
    H_avg = sum(f.H for f in p.losses) / 2
    oracle = max(np.abs(np.linalg.eigvalsh(H_avg - f.H)).max() for f in p.losses)
    assert abs(estimate_beta(p) - oracle) < 1e-10
    assert abs(p.beta - oracle) < 1e-10


def test_beta_decreases_with_sample_size():
    betas = []
    for n in (10, 100, 1000):
        p = make_ridge_problem(m=4, n=n, d=5, lam=0.0, mu0=1.0, L0=10.0, seed=3,
                               data_seed=77, keep_data=False)
        betas.append(p.beta)
    assert betas[0] > betas[1] > betas[2]


def test_sampled_constants_bracket_average_hessian(rng):
    A = rng.standard_normal((60, 4))
    y = np.sign(rng.standard_normal(60))
    losses = [LogisticLoss(A[k * 20:(k + 1) * 20], y[k * 20:(k + 1) * 20], reg=0.1)
              for k in range(3)]
    p = build_problem(losses, beta_samples=10, seed=1)
    # replay the constructor's deterministic sample stream
    sampler = np.random.default_rng(np.random.SeedSequence(1))
    mins, maxs = [], []
    for _ in range(10):
        x = p.constraint.project(sampler.standard_normal(4))
        eigs = np.linalg.eigvalsh(p.average_hessian(x))
        mins.append(eigs[0])
        maxs.append(eigs[-1])
    assert p.mu <= min(mins) + 1e-8
    assert p.L >= max(maxs) - 1e-8
    assert p.mu >= 2 * 0.1 - 1e-12  # the analytic floor from the ridge term


def test_beta_sampled_for_logistic(rng):
    A = rng.standard_normal((40, 3))
    y = np.sign(rng.standard_normal(40))
    losses = [LogisticLoss(A[:20], y[:20], reg=0.1), LogisticLoss(A[20:], y[20:], reg=0.1)]
    p = build_problem(losses, beta_samples=8, seed=0)
    assert not p.beta_exact
    assert p.beta > 0
    assert estimate_beta(p, sample_points=8, seed=0) > 0
    with pytest.raises(CapabilityError):
        estimate_beta(p, sample_points=0)


# ---------------------------------------------------------------------------
# centralized oracle


def test_centralized_simple_quadratic():
    p = build_problem([QuadraticLoss(np.array([[2.0]]))])
    x, u = centralized_solution(p)
    assert x == pytest.approx([0.0], abs=1e-12)
    assert u == pytest.approx(0.0, abs=1e-12)


def test_centralized_ridge_vs_normal_equations():
    p = make_ridge_problem(m=4, n=20, d=5, lam=0.3, mu0=1.0, L0=4.0, seed=11)
    x, u = centralized_solution(p)
    H = sum(f.H for f in p.losses) / 4
    q = sum(f.q for f in p.losses) / 4
    oracle = np.linalg.solve(H, -q)
    assert np.linalg.norm(x - oracle) < 1e-10


def test_centralized_l1_soft_threshold_fixed_point():
    # F = 0.5 (x - 3)^2, G = |x|: x* = 2 by the soft-threshold fixed point
    p = build_problem([QuadraticLoss(np.array([[1.0]]), np.array([-3.0]), 4.5)], g=L1Term(1.0))
    x, u = centralized_solution(p, tol=1e-12)
    assert x == pytest.approx([2.0], abs=1e-9)
    assert u == pytest.approx(0.5 + 2.0, abs=1e-9)


def test_centralized_constrained():
    # minimize 0.5 x^T x - [3,0]^T x over the unit ball: solution (1, 0)
    p = build_problem([QuadraticLoss(np.eye(2), np.array([-3.0, 0.0]))], constraint=Ball(1.0))
    x, _ = centralized_solution(p, tol=1e-12)
    assert x == pytest.approx([1.0, 0.0], abs=1e-9)


def test_objective_convexity(rng):
    p = make_ridge_problem(m=3, n=15, d=4, lam=0.1, mu0=1.0, L0=6.0, seed=4)
    for _ in range(20):
        x, y = rng.standard_normal(4), rng.standard_normal(4)
        th = rng.uniform()
        lhs = p.U(th * x + (1 - th) * y)
        rhs = th * p.U(x) + (1 - th) * p.U(y)
        assert lhs <= rhs + 1e-10 * (1 + abs(rhs))


# ---------------------------------------------------------------------------
# dataset sharing, serialization


def test_ridge_relambda_shares_dataset():
    base = make_ridge_problem(m=3, n=12, d=4, lam=0.0, mu0=1.0, L0=5.0, seed=6)
    shifted = ridge_losses_for_lambda(base, 0.7)
    h0 = [hashlib.sha256(A.tobytes()).hexdigest() for (A, _) in base.data]
    h1 = [hashlib.sha256(A.tobytes()).hexdigest() for (A, _) in shifted.data]
    assert h0 == h1
    assert shifted.mu == pytest.approx(base.mu + 1.4, rel=1e-12)
    assert shifted.beta == pytest.approx(base.beta, rel=1e-12)


def test_problem_json_roundtrip():
    p = make_ridge_problem(m=2, n=8, d=3, lam=0.2, mu0=1.0, L0=2.0, seed=8, g=L1Term(0.1))
    p2 = problem_from_json(problem_to_json(p))
    assert p2.mu == pytest.approx(p.mu, rel=1e-15)
    assert p2.beta == pytest.approx(p.beta, rel=1e-15)
    x = np.ones(3)
    assert p2.U(x) == pytest.approx(p.U(x), rel=1e-12)


def test_load_agent_csv(tmp_path, rng):
    paths = []
    for i in range(3):
        A = rng.standard_normal((6, 2))
        b = rng.standard_normal(6)
        path = tmp_path / f"agent{i}.csv"
        np.savetxt(path, np.column_stack([A, b]), delimiter=",")
        paths.append(path)
    p = load_agent_csv(paths, lam=0.1)
    assert p.m == 3 and p.d == 2
    assert p.mu > 0
