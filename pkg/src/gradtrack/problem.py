"""Composite objectives U = F + G over a constraint set, with exact constants.

The average loss F = (1/m) sum_i f_i is strongly convex; G is a convex,
possibly nonsmooth term with a closed-form prox; the constraint set supports
projection. For quadratic losses all smoothness/convexity constants and the
similarity bound beta are computed exactly from the Hessians.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import CapabilityError, ConfigError, ConvergenceError

NOISE_VARIANCE = 0.1  # measurement-noise variance in the synthetic ridge model
SIGNAL_MEAN = 5.0  # mean of the synthetic ground-truth coefficients


# ---------------------------------------------------------------------------
# nonsmooth terms G


class ZeroTerm:
    kind = "zero"

    def evaluate(self, x):
        return 0.0

    def prox(self, x, t):
        return np.asarray(x, dtype=float)


class L1Term:
    """G(x) = weight * ||x||_1 with the soft-threshold prox."""

    kind = "l1"

    def __init__(self, weight):
        if weight < 0:
            raise ConfigError(f"l1 weight must be nonnegative, got {weight}")
        self.weight = float(weight)

    def evaluate(self, x):
        return self.weight * float(np.abs(x).sum())

    def prox(self, x, t):
        x = np.asarray(x, dtype=float)
        if t == 0.0:
            return x.copy()
        s = t * self.weight
        return np.sign(x) * np.maximum(np.abs(x) - s, 0.0)


class BallIndicator:
    """Indicator of the Euclidean ball; prox is radial projection for any t."""

    kind = "indicator_ball"

    def __init__(self, radius):
        if radius <= 0:
            raise ConfigError(f"ball radius must be positive, got {radius}")
        self.radius = float(radius)

    def evaluate(self, x):
        return 0.0 if np.linalg.norm(x) <= self.radius * (1 + 1e-12) else np.inf

    def prox(self, x, t):
        x = np.asarray(x, dtype=float)
        nrm = np.linalg.norm(x)
        if nrm <= self.radius:
            return x.copy()
        return x * (self.radius / nrm)


# ---------------------------------------------------------------------------
# constraint sets K


class AllSpace:
    kind = "all_space"

    def project(self, x):
        return np.asarray(x, dtype=float)

    def contains(self, x):
        return True


class Ball:
    kind = "ball"

    def __init__(self, radius):
        if radius <= 0:
            raise ConfigError(f"ball radius must be positive, got {radius}")
        self.radius = float(radius)

    def project(self, x):
        x = np.asarray(x, dtype=float)
        nrm = np.linalg.norm(x)
        return x.copy() if nrm <= self.radius else x * (self.radius / nrm)

    def contains(self, x, tol=1e-12):
        return np.linalg.norm(x) <= self.radius * (1 + tol)


class Box:
    kind = "box"

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if np.any(self.lo > self.hi):
            raise ConfigError("box bounds must satisfy lo <= hi")

    def project(self, x):
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def contains(self, x, tol=1e-12):
        x = np.asarray(x)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))


def prox_g(g, x, t):
    """argmin_u g(u) + (1/2t) ||u - x||^2 in closed form.

    t = 0 degenerates to the identity for finite g and to the domain
    projection for indicators.
    """
    if t < 0:
        raise ConfigError(f"prox step must be nonnegative, got {t}")
    return g.prox(x, t)


def composite_prox(g, constraint, v, t):
    """argmin over the constraint set of g(u) + (1/2t) ||u - v||^2.

    Exact for: any g on all of R^d, g = 0 on any projectable set, and
    l1 with a box (the problem separates per coordinate). Other pairs have
    no closed form here and are rejected.
    """
    if isinstance(constraint, AllSpace):
        return g.prox(v, t)
    if isinstance(g, ZeroTerm):
        return constraint.project(v)
    if isinstance(g, L1Term) and isinstance(constraint, Box):
        return constraint.project(g.prox(v, t))
    raise CapabilityError(
        f"no exact prox for G kind {g.kind!r} restricted to set kind {constraint.kind!r}"
    )


# ---------------------------------------------------------------------------
# smooth losses f_i


class QuadraticLoss:
    """f(x) = 0.5 x^T H x + q^T x + c with exact Hessian bounds."""

    def __init__(self, H, q=None, c=0.0):
        self.H = np.asarray(H, dtype=float)
        d = self.H.shape[0]
        self.q = np.zeros(d) if q is None else np.asarray(q, dtype=float)
        self.c = float(c)
        eigs = np.linalg.eigvalsh(self.H)
        self.hessian_bounds = (max(float(eigs[0]), 0.0), float(eigs[-1]))

    @property
    def dimension(self):
        return self.H.shape[0]

    def evaluate(self, x):
        return 0.5 * float(x @ (self.H @ x)) + float(self.q @ x) + self.c

    def gradient(self, x):
        return self.H @ x + self.q

    def hessian(self, x=None):
        return self.H


class LogisticLoss:
    """Regularized logistic loss (1/n) sum log(1 + exp(-y a^T x)) + reg ||x||^2.

    Supported as an extension behind the same interface; its similarity
    constant can only be sampled, not computed exactly.
    """

    def __init__(self, A, y, reg=0.0):
        self.A = np.asarray(A, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.reg = float(reg)
        n = self.A.shape[0]
        top = float(np.linalg.eigvalsh(self.A.T @ self.A)[-1])
        self.hessian_bounds = (2 * self.reg, 2 * self.reg + 0.25 * top / n)

    @property
    def dimension(self):
        return self.A.shape[1]

    def evaluate(self, x):
        margins = -self.y * (self.A @ x)
        n = self.A.shape[0]
        return float(np.logaddexp(0.0, margins).mean()) + self.reg * float(x @ x)

    def gradient(self, x):
        margins = -self.y * (self.A @ x)
        sig = 1.0 / (1.0 + np.exp(-margins))
        n = self.A.shape[0]
        return -(self.A.T @ (self.y * sig)) / n + 2 * self.reg * x

    def hessian(self, x):
        margins = -self.y * (self.A @ x)
        sig = 1.0 / (1.0 + np.exp(-margins))
        w = sig * (1.0 - sig)
        n = self.A.shape[0]
        return (self.A.T * w) @ self.A / n + 2 * self.reg * np.eye(self.dimension)


# ---------------------------------------------------------------------------
# the composite problem


@dataclass
class CompositeProblem:
    """Local losses, nonsmooth term, constraint set, and all problem constants.

    ``beta_exact`` records whether the similarity constant was computed from
    exact Hessians (quadratic losses) or sampled, in which case it is only a
    lower bound on the true supremum.
    """

    losses: list
    g: object
    constraint: object
    mu: float
    L: float
    beta: float
    beta_exact: bool
    mu_i: np.ndarray
    L_i: np.ndarray
    data: list | None = None  # optional per-agent (A_i, b_i) pairs
    ridge_lambda: float | None = None  # set by the ridge constructors
    _avg_quad: tuple | None = field(default=None, repr=False)

    @property
    def m(self):
        return len(self.losses)

    @property
    def d(self):
        return self.losses[0].dimension

    @property
    def kappa_g(self):
        return self.L / self.mu

    @property
    def L_mx(self):
        return float(self.L_i.max())

    @property
    def mu_mn(self):
        return float(self.mu_i.min())

    @property
    def mu_mx(self):
        return float(self.mu_i.max())

    @property
    def kappa_l(self):
        return self.L_mx / self.mu_mn if self.mu_mn > 0 else np.inf

    @property
    def kappa_hat(self):
        avg = float(self.mu_i.mean())
        return self.L_mx / avg if avg > 0 else np.inf

    @property
    def kappa_breve(self):
        return self.L_mx / self.mu

    @property
    def kappa_bar(self):
        return self.L_mx / self.mu_mx if self.mu_mx > 0 else np.inf

    def is_quadratic(self):
        return all(isinstance(f, QuadraticLoss) for f in self.losses)

    def F(self, x):
        if self._avg_quad is not None:
            H, q, c = self._avg_quad
            return 0.5 * float(x @ (H @ x)) + float(q @ x) + c
        return sum(f.evaluate(x) for f in self.losses) / self.m

    def grad_F(self, x):
        if self._avg_quad is not None:
            H, q, _ = self._avg_quad
            return H @ x + q
        out = self.losses[0].gradient(x).copy()
        for f in self.losses[1:]:
            out += f.gradient(x)
        return out / self.m

    def average_hessian(self, x=None):
        if self._avg_quad is not None:
            return self._avg_quad[0]
        return sum(f.hessian(x) for f in self.losses) / self.m

    def U(self, x):
        return self.F(x) + self.g.evaluate(x)


def build_problem(losses, g=None, constraint=None, data=None, beta_samples=0, seed=0):
    """Assemble a CompositeProblem and compute its constants.

    For all-quadratic losses mu, L, and beta come from exact eigenvalue
    computations on the Hessians; otherwise they are estimated by sampling
    Hessians at random feasible points (and flagged as such).
    """
    g = g if g is not None else ZeroTerm()
    constraint = constraint if constraint is not None else AllSpace()
    m = len(losses)
    if m < 1:
        raise ConfigError("need at least one loss")
    bounds = np.array([f.hessian_bounds for f in losses])
    mu_i, L_i = bounds[:, 0], bounds[:, 1]

    if all(isinstance(f, QuadraticLoss) for f in losses):
        H_avg = sum(f.H for f in losses) / m
        q_avg = sum(f.q for f in losses) / m
        c_avg = sum(f.c for f in losses) / m
        eigs = np.linalg.eigvalsh(H_avg)
        mu, L = float(eigs[0]), float(eigs[-1])
        beta = max(
            float(np.abs(np.linalg.eigvalsh(H_avg - f.H)).max()) for f in losses
        )
        if mu <= 0:
            raise ConfigError(f"average Hessian is not positive definite (min eig {mu:.3e})")
        prob = CompositeProblem(
            list(losses), g, constraint, mu, L, beta, True, mu_i, L_i, data,
            _avg_quad=(H_avg, q_avg, c_avg),
        )
    else:
        if beta_samples < 1:
            raise CapabilityError(
                "non-quadratic losses need beta_samples >= 1 to sample Hessians"
            )
        d = losses[0].dimension
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        mu, L, beta = np.inf, 0.0, 0.0
        for _ in range(beta_samples):
            x = constraint.project(rng.standard_normal(d))
            H_avg = sum(f.hessian(x) for f in losses) / m
            eigs = np.linalg.eigvalsh(H_avg)
            mu, L = min(mu, float(eigs[0])), max(L, float(eigs[-1]))
            for f in losses:
                diff = np.abs(np.linalg.eigvalsh(H_avg - f.hessian(x))).max()
                beta = max(beta, float(diff))
        if mu <= 0:
            raise ConfigError("sampled average Hessian is not positive definite")
        prob = CompositeProblem(list(losses), g, constraint, mu, L, beta, False, mu_i, L_i, data)
    return prob


def estimate_beta(problem, sample_points=0, seed=0):
    """Largest spectral norm of (average Hessian - local Hessian).

    Exact for quadratic losses. Otherwise the maximum is taken over
    ``sample_points`` random feasible points, which yields a lower bound on
    the true supremum (mirrored by ``problem.beta_exact``).
    """
    if problem.is_quadratic():
        H_avg = problem.average_hessian()
        return max(
            float(np.abs(np.linalg.eigvalsh(H_avg - f.H)).max()) for f in problem.losses
        )
    if sample_points < 1:
        raise CapabilityError("sampling disabled and exact Hessians unavailable")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    beta = 0.0
    for _ in range(sample_points):
        x = problem.constraint.project(rng.standard_normal(problem.d))
        H_avg = problem.average_hessian(x)
        for f in problem.losses:
            beta = max(beta, float(np.abs(np.linalg.eigvalsh(H_avg - f.hessian(x))).max()))
    return beta


# ---------------------------------------------------------------------------
# synthetic instances


def make_ridge_problem(m, n, d, lam, mu0, L0, seed=0, keep_data=True, g=None,
                       constraint=None, data_seed=None):
    """Distributed ridge regression with Gaussian data.

    Each agent holds f_i(x) = (1/2n) ||A_i x - b_i||^2 + lam ||x||^2, where
    the rows of A_i are N(0, Sigma) with Sigma's eigenvalues uniform in
    [mu0, L0] and eigenvectors from the QR factorization of a Gaussian
    matrix; b_i = A_i x_true + noise with x_true ~ N(5*1, I) and noise
    variance 0.1. All constants are exact (quadratic losses). With lam = 0
    the empirical average Hessian must be positive definite, which requires
    n*m >= d and generic data.

    ``data_seed`` resamples the per-agent data while keeping the population
    (Sigma, x_true) pinned by ``seed``; sample-size sweeps use this to vary
    only the statistical similarity of the local losses.

    Set ``keep_data=False`` to drop the raw (A_i, b_i) after the Hessians
    are formed (useful for large n).
    """
    if min(m, n, d) < 1:
        raise ConfigError("m, n, d must be positive")
    if not (0 < mu0 <= L0):
        raise ConfigError(f"need 0 < mu0 <= L0, got mu0={mu0}, L0={L0}")
    if lam < 0:
        raise ConfigError(f"need lam >= 0, got {lam}")
    if lam == 0 and n * m < d:
        raise ConfigError(f"lam=0 needs n*m >= d for a positive definite average Hessian "
                          f"(n*m={n*m}, d={d})")
    root = np.random.SeedSequence(seed)
    keys = root.spawn(3 + m)
    if data_seed is not None:
        keys[3:] = np.random.SeedSequence(data_seed).spawn(m)
    rng_cov = np.random.default_rng(keys[0])
    rng_xs = np.random.default_rng(keys[1])

    eigvals = rng_cov.uniform(mu0, L0, size=d)
    Umat, _ = np.linalg.qr(rng_cov.standard_normal((d, d)))
    sqrt_cov = Umat * np.sqrt(eigvals)  # Sigma^{1/2} up to rotation: rows ~ N(0, Sigma)
    x_true = rng_xs.normal(SIGNAL_MEAN, 1.0, size=d)

    losses, data = [], []
    for i in range(m):
        rng_i = np.random.default_rng(keys[3 + i])
        A = rng_i.standard_normal((n, d)) @ sqrt_cov.T
        noise = rng_i.normal(0.0, np.sqrt(NOISE_VARIANCE), size=n)
        b = A @ x_true + noise
        H = A.T @ A / n + 2.0 * lam * np.eye(d)
        q = -(A.T @ b) / n
        c = 0.5 * float(b @ b) / n
        losses.append(QuadraticLoss(H, q, c))
        if keep_data:
            data.append((A, b))
    prob = build_problem(losses, g=g, constraint=constraint, data=data if keep_data else None)
    prob.ridge_lambda = float(lam)
    return prob


def ridge_losses_for_lambda(problem, lam):
    """Rebuild the quadratic losses of a ridge problem at a new ridge weight.

    The data-dependent part of each Hessian is recovered from the stored
    loss, so the same dataset is shared across regularization levels.
    """
    if not problem.is_quadratic():
        raise CapabilityError("only quadratic ridge problems can be re-regularized")
    if problem.ridge_lambda is None:
        raise CapabilityError("problem does not carry a ridge weight to shift from")
    d = problem.d
    losses = []
    for f in problem.losses:
        H = f.H + 2.0 * (lam - problem.ridge_lambda) * np.eye(d)
        losses.append(QuadraticLoss(H, f.q, f.c))
    out = build_problem(losses, g=problem.g, constraint=problem.constraint, data=problem.data)
    out.ridge_lambda = float(lam)
    return out


def make_example1_problem(a, b, m, d=None):
    """Separable quadratics whose local conditioning is m times worse than F's.

    f_i(x) = 0.5 x^T (a I + m b diag(mask_i)) x, where mask_i selects the
    coordinates congruent to i mod m. The average is 0.5 (a + b) ||x||^2, so
    mu = L = a + b while mu_i = a and L_i = a + m b. d must be a multiple of
    m (default d = m) for the coordinate assignment to be balanced.
    """
    if a <= 0 or b < 0:
        raise ConfigError(f"need a > 0 and b >= 0, got a={a}, b={b}")
    d = m if d is None else d
    if d < m or d % m != 0:
        raise ConfigError(f"need d a positive multiple of m, got d={d}, m={m}")
    losses = []
    for i in range(m):
        diag = np.full(d, a)
        diag[np.arange(d) % m == i] += m * b
        losses.append(QuadraticLoss(np.diag(diag)))
    return build_problem(losses)


# ---------------------------------------------------------------------------
# centralized oracle


def centralized_solution(problem, tol=1e-12, max_iters=200_000):
    """Minimizer and optimal value of U = F + G over the constraint set.

    Quadratic F with G = 0 and no constraints is solved directly by a
    Cholesky solve of the normal equations. Everything else runs an
    accelerated projected proximal-gradient loop down to a gradient-mapping
    norm of ``tol``.
    """
    d = problem.d
    if (
        problem.is_quadratic()
        and isinstance(problem.g, ZeroTerm)
        and isinstance(problem.constraint, AllSpace)
    ):
        H, q, _ = problem._avg_quad
        x_star = cho_solve(cho_factor(H), -q)
        return x_star, problem.U(x_star)

    L, mu = problem.L, problem.mu
    step = 1.0 / L
    momentum = (np.sqrt(L) - np.sqrt(mu)) / (np.sqrt(L) + np.sqrt(mu))

    def pg_step(z):
        return composite_prox(problem.g, problem.constraint, z - step * problem.grad_F(z), step)

    x = problem.constraint.project(np.zeros(d))
    v = x.copy()
    residual = np.inf
    for k in range(max_iters):
        x_new = pg_step(v)
        residual = float(np.linalg.norm(x_new - pg_step(x_new))) / step
        if residual <= tol:
            return x_new, problem.U(x_new)
        v = x_new + momentum * (x_new - x)
        x = x_new
    raise ConvergenceError(
        f"centralized solver stalled at residual {residual:.3e} after {max_iters} iterations",
        best=x, residual=residual, iterations=max_iters,
    )


# ---------------------------------------------------------------------------
# serialization


def _term_to_dict(g):
    if isinstance(g, ZeroTerm):
        return {"kind": "zero"}
    if isinstance(g, L1Term):
        return {"kind": "l1", "weight": g.weight}
    if isinstance(g, BallIndicator):
        return {"kind": "indicator_ball", "radius": g.radius}
    raise ConfigError(f"unsupported nonsmooth term {g!r}")


def _term_from_dict(d):
    if d["kind"] == "zero":
        return ZeroTerm()
    if d["kind"] == "l1":
        return L1Term(d["weight"])
    if d["kind"] == "indicator_ball":
        return BallIndicator(d["radius"])
    raise ConfigError(f"unknown nonsmooth kind {d['kind']!r}")


def _set_to_dict(k):
    if isinstance(k, AllSpace):
        return {"kind": "all_space"}
    if isinstance(k, Ball):
        return {"kind": "ball", "radius": k.radius}
    if isinstance(k, Box):
        return {"kind": "box", "lo": k.lo.tolist(), "hi": k.hi.tolist()}
    raise ConfigError(f"unsupported constraint set {k!r}")


def _set_from_dict(d):
    if d["kind"] == "all_space":
        return AllSpace()
    if d["kind"] == "ball":
        return Ball(d["radius"])
    if d["kind"] == "box":
        return Box(d["lo"], d["hi"])
    raise ConfigError(f"unknown constraint kind {d['kind']!r}")


def problem_to_json(problem):
    """Serialize a quadratic composite problem to a binary-free JSON schema."""
    if not problem.is_quadratic():
        raise CapabilityError("only quadratic problems serialize to JSON")
    payload = {
        "schema": "quadratic_composite/1",
        "losses": [
            {"H": f.H.tolist(), "q": f.q.tolist(), "c": f.c} for f in problem.losses
        ],
        "g": _term_to_dict(problem.g),
        "constraint": _set_to_dict(problem.constraint),
    }
    return json.dumps(payload)


def problem_from_json(text):
    d = json.loads(text)
    if d.get("schema") != "quadratic_composite/1":
        raise ConfigError(f"unknown problem schema {d.get('schema')!r}")
    losses = [QuadraticLoss(np.array(e["H"]), np.array(e["q"]), e["c"]) for e in d["losses"]]
    return build_problem(losses, g=_term_from_dict(d["g"]), constraint=_set_from_dict(d["constraint"]))


def load_agent_csv(paths, lam=0.0, g=None, constraint=None):
    """Build a ridge problem from per-agent CSV files.

    Each file holds one agent's samples: feature columns followed by a final
    target column, no header.
    """
    losses, data = [], []
    for path in paths:
        table = np.loadtxt(path, delimiter=",", ndmin=2)
        if table.shape[1] < 2:
            raise ConfigError(f"{path}: need at least one feature column and a target")
        A, b = table[:, :-1], table[:, -1]
        n, d = A.shape
        H = A.T @ A / n + 2.0 * lam * np.eye(d)
        q = -(A.T @ b) / n
        c = 0.5 * float(b @ b) / n
        losses.append(QuadraticLoss(H, q, c))
        data.append((A, b))
    prob = build_problem(losses, g=g, constraint=constraint, data=data)
    prob.ridge_lambda = float(lam)
    return prob
