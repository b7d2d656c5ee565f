"""Experiment configuration, scenario runners, and CSV emission.

Scenarios mirror the two scaling studies (condition-number sweep on a shared
dataset; similarity sweep via the local sample size) plus a surrogate
comparison with Monte-Carlo replication. All outputs are plain CSV so plots
can be produced externally; no graphics dependency.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - environment dependent
    import tomli as tomllib

from .errors import ConfigError
from .network import generate_topology, generate_tv_network, metropolis_weights, star_master_matrix
from .problem import centralized_solution, make_ridge_problem, ridge_losses_for_lambda
from .rates import corollary_complexity, rate_inputs, star_corollary_z
from .solver import SolverConfig, run
from .surrogate import surrogate_constants

SCHEMA_VERSION = 1
SCENARIOS = ("single_run", "sweep_kappa", "sweep_beta", "compare_surrogates", "tv_run")
SUMMARY_HEADER = (
    "grid_value", "kappa_g", "beta_over_mu", "alpha_used",
    "T_eps_mean", "T_eps_std", "z_predicted", "flag",
)


@dataclass
class ExperimentConfig:
    scenario: str
    seed: int = 0
    out_dir: str = "out"
    # problem
    m: int = 10
    n: int = 200
    d: int = 20
    mu0: float = 1.0
    L0: float = 100.0
    lam: float = 0.0
    kappa_grid: list = field(default_factory=list)
    n_grid: list = field(default_factory=list)
    # network
    network_kind: str = "erdos_renyi"
    p: float = 0.5
    comm_rounds: int = 1
    chebyshev: bool = False
    tv_kind: str = "alternating_subgraphs"
    B: int = 2
    c_ell: float = 0.05
    # solver
    surrogate: str = "linearization"
    tau: float | None = None
    inner_tol: float = 1e-12
    alpha_rule: str = "fixed"
    alpha: float = 1.0
    c: float = 0.9
    epsilon: float = 1e-7
    max_iters: int = 100_000
    # replication
    replications: int = 1

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.scenario == "sweep_kappa" and not self.kappa_grid:
            raise ConfigError("sweep_kappa needs a nonempty kappa_grid")
        if self.scenario in ("sweep_beta", "compare_surrogates") and not self.n_grid:
            raise ConfigError(f"{self.scenario} needs a nonempty n_grid")
        if self.alpha_rule not in ("fixed", "c_times_alpha_max"):
            raise ConfigError(f"unknown alpha rule {self.alpha_rule!r}")
        if self.alpha_rule == "c_times_alpha_max" and not (0.0 < self.c < 1.0):
            raise ConfigError(f"alpha rule c*alpha_max needs c in (0,1), got {self.c}")
        if self.replications < 1:
            raise ConfigError(f"need replications >= 1, got {self.replications}")
        if self.surrogate not in ("linearization", "local_f"):
            raise ConfigError(f"unknown surrogate {self.surrogate!r}")
        return self


_SECTION_KEYS = {
    "problem": {"m", "n", "d", "mu0", "L0", "lam", "kappa_grid", "n_grid"},
    "network": {"kind", "p", "comm_rounds", "chebyshev", "tv_kind", "B", "c_ell"},
    "solver": {"surrogate", "tau", "inner_tol", "alpha_rule", "alpha", "c", "epsilon", "max_iters"},
    "monte_carlo": {"replications"},
    # processed last: the dedicated surrogate table wins over [solver] aliases
    "surrogate": {"kind", "tau", "inner_tol"},
}
# section-qualified keys that map onto differently named config fields
_KEY_REMAP = {("network", "kind"): "network_kind", ("surrogate", "kind"): "surrogate"}


def config_from_dict(raw):
    """Validate a parsed config mapping and build an ExperimentConfig."""
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            f"config schema_version must be {SCHEMA_VERSION}, got {raw.get('schema_version')!r}"
        )
    kwargs = {}
    for key in ("scenario", "seed", "out_dir"):
        if key in raw:
            kwargs[key] = raw[key]
    if "scenario" not in kwargs:
        raise ConfigError("config must name a scenario")
    for section, allowed in _SECTION_KEYS.items():
        body = raw.get(section, {})
        if not isinstance(body, dict):
            raise ConfigError(f"section [{section}] must be a table")
        for key, value in body.items():
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            kwargs[_KEY_REMAP.get((section, key), key)] = value
    unknown = set(raw) - {"schema_version", "scenario", "seed", "out_dir", *_SECTION_KEYS}
    if unknown:
        raise ConfigError(f"unknown top-level config keys {sorted(unknown)}")
    try:
        cfg = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_config(path):
    """Parse a TOML (or JSON) experiment file."""
    text = open(path, "rb").read()
    if str(path).endswith(".json"):
        raw = json.loads(text.decode())
    else:
        try:
            raw = tomllib.loads(text.decode())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# helpers


def _child_seed(seed, *tags):
    ss = np.random.SeedSequence([int(seed), *[int(t) for t in tags]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _build_static_network(cfg, m, seed):
    if cfg.network_kind == "star_matrix":
        return star_master_matrix(m)
    topo = generate_topology(cfg.network_kind, m, seed=seed, p=cfg.p)
    return metropolis_weights(topo)


def _alpha_for(cfg, problem, spec, rho):
    if cfg.alpha_rule == "fixed":
        return cfg.alpha, ""
    inputs = rate_inputs(problem, spec, rho)
    report = corollary_complexity(cfg.surrogate, inputs, "general", c=cfg.c)
    return report.alpha, ""


def _predicted_z(kind, problem, spec):
    # prediction column carries the network-free (centralized-order) bound,
    # the quantity whose scaling the sweeps probe
    inputs = rate_inputs(problem, spec, 0.0)
    return star_corollary_z(kind, inputs, 1.0)


def _write_rows(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)
    return path


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


def _single(problem, network, cfg, kind, alpha, mode, oracle=None, trace_path=None):
    spec = surrogate_constants(kind, problem, cfg.tau)
    scfg = SolverConfig(
        alpha=alpha, max_iters=cfg.max_iters, comm_rounds=cfg.comm_rounds,
        chebyshev=cfg.chebyshev, epsilon=cfg.epsilon, inner_tol=cfg.inner_tol,
        mode=mode, seed=cfg.seed,
    )
    trace = run(problem, network, spec, scfg, oracle=oracle)
    if trace_path is not None:
        trace.to_csv(trace_path)
    return trace


# ---------------------------------------------------------------------------
# scenarios


def run_scenario(cfg):
    """Execute a configured scenario; returns summary rows (list of dicts).

    Writes ``summary.csv`` plus one trace CSV per run under ``cfg.out_dir``.
    """
    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    if cfg.scenario == "single_run":
        rows = _scenario_single(cfg, tv=False)
    elif cfg.scenario == "tv_run":
        rows = _scenario_single(cfg, tv=True)
    elif cfg.scenario == "sweep_kappa":
        rows = _scenario_sweep_kappa(cfg)
    elif cfg.scenario == "sweep_beta":
        rows = _scenario_sweep_beta(cfg)
    else:
        rows = _scenario_compare(cfg)
    path = os.path.join(cfg.out_dir, "summary.csv")
    _write_rows(path, SUMMARY_HEADER, [[r[k] for k in SUMMARY_HEADER] for r in rows])
    return rows


def _summary_row(grid_value, problem, alpha, t_eps_values, z_pred, flag, max_iters):
    vals = [float(t) if t is not None else float(max_iters) for t in t_eps_values]
    unreached = any(t is None for t in t_eps_values)
    return {
        "grid_value": float(grid_value),
        "kappa_g": problem.kappa_g,
        "beta_over_mu": problem.beta / problem.mu,
        "alpha_used": float(alpha),
        "T_eps_mean": float(np.mean(vals)),
        "T_eps_std": float(np.std(vals)),
        "z_predicted": z_pred,
        "flag": flag if not unreached else (flag + "+unreached").lstrip("+"),
    }


def _scenario_single(cfg, tv):
    problem = make_ridge_problem(cfg.m, cfg.n, cfg.d, cfg.lam, cfg.mu0, cfg.L0,
                                 seed=_child_seed(cfg.seed, 0))
    if tv:
        base = generate_topology(cfg.network_kind, cfg.m, seed=_child_seed(cfg.seed, 1), p=cfg.p)
        network = generate_tv_network(cfg.tv_kind, base, cfg.B, cfg.c_ell,
                                      seed=_child_seed(cfg.seed, 2))
        mode, rho = "time_varying", None
    else:
        network = _build_static_network(cfg, cfg.m, _child_seed(cfg.seed, 1))
        mode, rho = "undirected", network.rho
    spec = surrogate_constants(cfg.surrogate, problem, cfg.tau)
    alpha, flag = (cfg.alpha, "") if tv or cfg.alpha_rule == "fixed" \
        else _alpha_for(cfg, problem, spec, rho)
    trace = _single(problem, network, cfg, cfg.surrogate, alpha, mode,
                    trace_path=os.path.join(cfg.out_dir, "trace_run_0.csv"))
    z_pred = _predicted_z(cfg.surrogate, problem, spec)
    return [_summary_row(0.0, problem, alpha, [trace.t_eps], z_pred, flag, cfg.max_iters)]


def _scenario_sweep_kappa(cfg):
    """Shared-dataset sweep: one dataset, regularization set per target kappa."""
    base = make_ridge_problem(cfg.m, cfg.n, cfg.d, 0.0, cfg.mu0, cfg.L0,
                              seed=_child_seed(cfg.seed, 0))
    network = _build_static_network(cfg, cfg.m, _child_seed(cfg.seed, 1))
    mu_data, L_data = base.mu, base.L
    rows = []
    for gi, kappa in enumerate(cfg.kappa_grid):
        flag = ""
        lam = (L_data - kappa * mu_data) / (2.0 * (kappa - 1.0)) if kappa > 1 else math.inf
        if not math.isfinite(lam) or lam < 0:
            lam, flag = 0.0, "kappa_unreachable"
        problem = ridge_losses_for_lambda(base, lam)
        spec = surrogate_constants(cfg.surrogate, problem, cfg.tau)
        alpha, aflag = _alpha_for(cfg, problem, spec, network.rho)
        flag = "+".join(x for x in (flag, aflag) if x)
        trace = _single(
            problem, network, cfg, cfg.surrogate, alpha, "undirected",
            trace_path=os.path.join(cfg.out_dir, f"trace_kappa_{gi}_0.csv"),
        )
        z_pred = _predicted_z(cfg.surrogate, problem, spec)
        rows.append(_summary_row(kappa, problem, alpha, [trace.t_eps], z_pred, flag, cfg.max_iters))
    return rows


def _scenario_sweep_beta(cfg):
    """Similarity sweep: lam = 0, local sample size from the grid, fresh data per replication."""
    rows = []
    for gi, n in enumerate(cfg.n_grid):
        t_vals, problem = [], None
        alpha = cfg.alpha
        for r in range(cfg.replications):
            problem = make_ridge_problem(cfg.m, int(n), cfg.d, 0.0, cfg.mu0, cfg.L0,
                                         seed=_child_seed(cfg.seed, 10 + gi, r))
            network = _build_static_network(cfg, cfg.m, _child_seed(cfg.seed, 20 + gi, r))
            spec = surrogate_constants(cfg.surrogate, problem, cfg.tau)
            alpha = cfg.alpha if cfg.alpha_rule == "fixed" else \
                _alpha_for(cfg, problem, spec, network.rho)[0]
            trace = _single(
                problem, network, cfg, cfg.surrogate, alpha, "undirected",
                trace_path=os.path.join(cfg.out_dir, f"trace_beta_{gi}_{r}.csv"),
            )
            t_vals.append(trace.t_eps)
        spec = surrogate_constants(cfg.surrogate, problem, cfg.tau)
        z_pred = _predicted_z(cfg.surrogate, problem, spec)
        rows.append(_summary_row(n, problem, alpha, t_vals, z_pred, "", cfg.max_iters))
    return rows


def _scenario_compare(cfg):
    """Both surrogates on identical instances; one summary row per (n, kind)."""
    rows = []
    for gi, n in enumerate(cfg.n_grid):
        per_kind = {"linearization": [], "local_f": []}
        problem = None
        for r in range(cfg.replications):
            problem = make_ridge_problem(cfg.m, int(n), cfg.d, 0.0, cfg.mu0, cfg.L0,
                                         seed=_child_seed(cfg.seed, 10 + gi, r))
            network = _build_static_network(cfg, cfg.m, _child_seed(cfg.seed, 20 + gi, r))
            oracle = centralized_solution(problem)
            for kind in per_kind:
                trace = _single(
                    problem, network, cfg, kind, cfg.alpha, "undirected", oracle=oracle,
                    trace_path=os.path.join(cfg.out_dir, f"trace_cmp_{kind}_{gi}_{r}.csv"),
                )
                per_kind[kind].append(trace.t_eps)
        for kind, t_vals in per_kind.items():
            spec = surrogate_constants(kind, problem, cfg.tau)
            z_pred = _predicted_z(kind, problem, spec)
            rows.append(_summary_row(n, problem, cfg.alpha, t_vals, z_pred, kind, cfg.max_iters))
    return rows


# ---------------------------------------------------------------------------
# post-processing


def fit_scaling_exponent(rows, x_column, y_column):
    """Least-squares slope of log(y) against log(x) over summary rows."""
    xs = np.array([float(r[x_column]) for r in rows])
    ys = np.array([float(r[y_column]) for r in rows])
    if len(xs) < 3:
        raise ConfigError(f"need at least 3 rows to fit a slope, got {len(xs)}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ConfigError("log-log fit needs positive values")
    slope, _ = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope)
