"""Bulk-synchronous drivers for tracking-based distributed minimization.

Three communication regimes share one iteration template (local surrogate
minimization, a damped move, then information mixing): a doubly stochastic
matrix on a static undirected graph, a master/worker star, and a push-sum
corrected column-stochastic sequence on time-varying digraphs. All reductions
run in fixed agent order, so traces are bit-reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .network import MixingMatrix, TimeVaryingNetwork, chebyshev_mix
from .problem import AllSpace, centralized_solution
from .surrogate import subproblem_solver

TRACE_HEADER = ("iter", "p", "x_perp", "y_perp", "delta", "dx", "obj_mean")

MODES = ("undirected", "star", "time_varying")


@dataclass
class SolverConfig:
    """Step-size, iteration budget, and communication options for a run."""

    alpha: float = 1.0
    max_iters: int = 100_000
    comm_rounds: int = 1
    chebyshev: bool = False
    epsilon: float = 1e-7
    inner_tol: float = 1e-12
    mode: str = "undirected"
    seed: int = 0
    x0: object = "zeros"  # "zeros", "random", or an (m, d) / (d,) array

    def validate(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError(f"need step-size alpha in (0, 1], got {self.alpha}")
        if self.comm_rounds < 1:
            raise ConfigError(f"need comm_rounds >= 1, got {self.comm_rounds}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.max_iters < 1:
            raise ConfigError(f"need max_iters >= 1, got {self.max_iters}")
        return self


@dataclass
class AgentState:
    """One agent's view: iterate, tracker, cached gradient, push-sum weight."""

    x: np.ndarray
    y: np.ndarray
    grad: np.ndarray
    phi: float


@dataclass
class NetworkState:
    """Stacked per-agent states; rows index agents."""

    x: np.ndarray
    y: np.ndarray
    grad: np.ndarray
    phi: np.ndarray

    def agent(self, i):
        return AgentState(self.x[i], self.y[i], self.grad[i], float(self.phi[i]))

    def copy(self):
        return NetworkState(self.x.copy(), self.y.copy(), self.grad.copy(), self.phi.copy())


def init_state(problem, x0="zeros", seed=0, y0=None):
    """Initial stacked state: trackers start at the local gradients.

    ``y0`` overrides the tracker initialization (used e.g. to start every
    tracker at the exact average gradient when mirroring the master/worker
    variant on an averaging matrix).
    """
    m, d = problem.m, problem.d
    if isinstance(x0, str) and x0 == "zeros":
        X = np.tile(problem.constraint.project(np.zeros(d)), (m, 1))
    elif isinstance(x0, str) and x0 == "random":
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        X = np.vstack([problem.constraint.project(rng.standard_normal(d)) for _ in range(m)])
    else:
        X = np.asarray(x0, dtype=float)
        if X.ndim == 1:
            X = np.tile(X, (m, 1))
        X = np.vstack([problem.constraint.project(X[i]) for i in range(m)])
    G = np.vstack([problem.losses[i].gradient(X[i]) for i in range(m)])
    Y = G.copy() if y0 is None else np.array(y0, dtype=float, copy=True)
    return NetworkState(X, Y, G, np.ones(m))


def _mix(W, V, rounds, chebyshev):
    if chebyshev and rounds > 1:
        return chebyshev_mix(W, V, rounds)
    out = V
    for _ in range(rounds):
        out = W.weights @ out
    return out


def undirected_step(problem, solvers, W, state, alpha, comm_rounds=1, chebyshev=False):
    """One iteration over a static undirected graph.

    Order matters: local solve, damped move, consensus on the iterates,
    gradient refresh at the mixed iterates, then the perturbed consensus on
    the trackers. Multi-round communication applies the same effective
    operator to both mixing steps, which preserves the tracker-mean identity.

    Returns the new state and the stacked direction norm.
    """
    m = problem.m
    x_hat = np.empty_like(state.x)
    for i in range(m):
        x_hat[i] = solvers[i](state.x[i], state.y[i]).x_hat
    direction = x_hat - state.x
    x_half = state.x + alpha * direction

    x_new = _mix(W, x_half, comm_rounds, chebyshev)
    grad_new = np.vstack([problem.losses[i].gradient(x_new[i]) for i in range(m)])
    y_new = _mix(W, state.y + grad_new - state.grad, comm_rounds, chebyshev)

    new_state = NetworkState(x_new, y_new, grad_new, state.phi.copy())
    return new_state, float(np.linalg.norm(direction))


def star_step(problem, solvers, x, alpha):
    """One master/worker iteration on a shared iterate.

    Workers receive the exact average gradient, solve their surrogate
    subproblems around the shared point, and the master averages the
    proposals and takes a damped step.
    """
    m = problem.m
    grads = np.vstack([problem.losses[i].gradient(x) for i in range(m)])
    grad_avg = grads.mean(axis=0)
    proposals = np.empty_like(grads)
    for i in range(m):
        # with y = grad F(x) the solver's linear term is grad F - grad f_i
        proposals[i] = solvers[i](x, grad_avg).x_hat
    x_new = x + alpha * (proposals.mean(axis=0) - x)
    return x_new, float(np.linalg.norm(proposals - x[None, :]))


def tv_step(problem, solvers, frames, state, alpha):
    """One iteration over time-varying digraphs with push-sum correction.

    ``frames`` is the list of column-stochastic matrices consumed this
    iteration (one per communication round). Rounds beyond the first re-mix
    iterates and trackers without new gradient evaluations; the gradient
    perturbation enters in the last round, so the weighted tracker mean
    stays equal to the running average gradient.
    """
    m = problem.m
    x_hat = np.empty_like(state.x)
    for i in range(m):
        x_hat[i] = solvers[i](state.x[i], state.y[i]).x_hat
    direction = x_hat - state.x
    x_cur = state.x + alpha * direction

    phi = state.phi
    y_weighted = phi[:, None] * state.y
    for C in frames:
        phi_new = C @ phi
        if np.any(phi_new <= 0):
            raise ConfigError("push-sum weight hit zero; weight sequence violates its floor")
        x_cur = (C @ (phi[:, None] * x_cur)) / phi_new[:, None]
        y_weighted = C @ y_weighted
        phi = phi_new

    grad_new = np.vstack([problem.losses[i].gradient(x_cur[i]) for i in range(m)])
    # the perturbation is routed through the last frame, matching the
    # single-round update when len(frames) == 1
    y_weighted = y_weighted + frames[-1] @ (grad_new - state.grad)
    y_new = y_weighted / phi[:, None]

    new_state = NetworkState(x_cur, y_new, grad_new, phi)
    return new_state, float(np.linalg.norm(direction))


@dataclass
class RunTrace:
    """Per-iteration optimality and consensus metrics for one run.

    ``t_eps`` is the first iteration at which the mean objective gap drops
    to ``epsilon``, or None if the budget ran out first.
    """

    iters: np.ndarray
    p: np.ndarray
    x_perp: np.ndarray
    y_perp: np.ndarray
    delta: np.ndarray
    dx: np.ndarray
    obj_mean: np.ndarray
    epsilon: float
    t_eps: int | None
    x_star: np.ndarray
    u_star: float
    obj_agents: np.ndarray = field(repr=False, default=None)
    final_state: object = field(repr=False, default=None)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_HEADER)
            for k in range(len(self.iters)):
                writer.writerow(
                    [int(self.iters[k])]
                    + [format(v[k], ".17g") for v in (self.p, self.x_perp, self.y_perp,
                                                      self.delta, self.dx, self.obj_mean)]
                )
        return path


def _metrics(problem, state, u_star, f_star, weighted):
    m = problem.m
    obj = np.array([problem.U(state.x[i]) for i in range(m)])
    fgap = np.array([problem.F(state.x[i]) for i in range(m)]) - f_star
    if weighted:
        # push-sum mode: the gap and disagreements are weight-corrected
        p = float(state.phi @ (obj - u_star))
        x_bar = (state.phi[:, None] * state.x).mean(axis=0)
        y_bar = (state.phi[:, None] * state.y).mean(axis=0)
    else:
        p = float(np.sum(obj) - m * u_star)
        x_bar = state.x.mean(axis=0)
        y_bar = state.y.mean(axis=0)
    x_perp = float(np.linalg.norm(state.x - x_bar))
    y_perp = float(np.linalg.norm(state.y - y_bar))
    delta = float(np.linalg.norm(np.vstack([problem.grad_F(state.x[i]) - state.y[i] for i in range(m)])))
    return p, x_perp, y_perp, delta, obj, float(fgap.mean())


def run(problem, network, spec, config, oracle=None):
    """Drive one of the three variants and trace every iteration.

    Parameters
    ----------
    problem : CompositeProblem
    network : MixingMatrix | TimeVaryingNetwork | None
        Matching ``config.mode``; None is allowed for star mode.
    spec : SurrogateSpec
    config : SolverConfig
    oracle : (x_star, u_star), optional
        Reference solution; computed by the centralized oracle when omitted.

    Returns
    -------
    RunTrace
        Metrics for iterations 0..T where T is the stopping iteration
        (mean objective gap <= epsilon, or the iteration budget).
    """
    config.validate()
    if config.mode == "undirected" and not isinstance(network, MixingMatrix):
        raise ConfigError("undirected mode needs a MixingMatrix")
    if config.mode == "time_varying" and not isinstance(network, TimeVaryingNetwork):
        raise ConfigError("time-varying mode needs a TimeVaryingNetwork")
    if config.chebyshev and not isinstance(problem.constraint, AllSpace):
        raise ConfigError(
            "Chebyshev mixing can leave a constraint set (negative polynomial weights); "
            "use plain communication rounds instead"
        )
    if config.mode == "time_varying" and config.chebyshev:
        raise ConfigError("Chebyshev acceleration applies to static doubly stochastic mixing only")

    x_star, u_star = centralized_solution(problem) if oracle is None else oracle
    f_star = problem.F(x_star)
    m = problem.m

    solvers = [
        subproblem_solver(spec, problem.losses[i], problem.g, problem.constraint, config.inner_tol)
        for i in range(m)
    ]

    state = init_state(problem, config.x0, config.seed)
    if config.mode == "star":
        x = state.x[0].copy()

    rows = {name: [] for name in ("p", "x_perp", "y_perp", "delta", "dx", "obj_mean")}
    per_agent = []
    t_eps = None
    weighted = config.mode == "time_varying"

    def record(dx_val):
        if config.mode == "star":
            obj = np.full(m, problem.U(x))
            p = float(m * (obj[0] - u_star))
            vals = (p, 0.0, 0.0, 0.0, dx_val, float(obj[0]))
            fgap = problem.F(x) - f_star
        else:
            p, x_perp, y_perp, delta, obj, fgap = _metrics(problem, state, u_star, f_star, weighted)
            vals = (p, x_perp, y_perp, delta, dx_val, float(obj.mean()))
        for name, v in zip(rows, vals):
            rows[name].append(v)
        per_agent.append(obj)
        return fgap

    fgap = record(0.0)
    if fgap <= config.epsilon:
        t_eps = 0
    nu = 0
    while t_eps is None and nu < config.max_iters:
        if config.mode == "undirected":
            state, dx_val = undirected_step(
                problem, solvers, network, state, config.alpha,
                config.comm_rounds, config.chebyshev,
            )
        elif config.mode == "star":
            x, dx_val = star_step(problem, solvers, x, config.alpha)
        else:
            frames = [network.frame(nu * config.comm_rounds + r)[1] for r in range(config.comm_rounds)]
            state, dx_val = tv_step(problem, solvers, frames, state, config.alpha)
        nu += 1
        fgap = record(dx_val)
        if fgap <= config.epsilon:
            t_eps = nu

    final = state if config.mode != "star" else x
    return RunTrace(
        iters=np.arange(nu + 1),
        p=np.array(rows["p"]),
        x_perp=np.array(rows["x_perp"]),
        y_perp=np.array(rows["y_perp"]),
        delta=np.array(rows["delta"]),
        dx=np.array(rows["dx"]),
        obj_mean=np.array(rows["obj_mean"]),
        epsilon=config.epsilon,
        t_eps=t_eps,
        x_star=x_star,
        u_star=u_star,
        obj_agents=np.vstack(per_agent),
        final_state=final,
    )
