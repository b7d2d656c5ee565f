"""Command-line entry point.

Subcommands: ``run``, ``sweep``, ``compare``, ``rate``, ``validate-config``.
Exit codes: 0 on success, 1 on runtime failure, 2 on configuration errors
(including unknown flags).
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import CapabilityError, ConfigError, ConvergenceError
from .harness import fit_scaling_exponent, load_config, run_scenario
from .network import _tv_constants
from .rates import (
    TVRateInputs,
    corollary_complexity,
    inputs_from_constants,
    theorem_rate_tv,
    theorem_rate_undirected,
)


def _add_common(sub):
    # SUPPRESS keeps an absent subcommand flag from clobbering the global one
    sub.add_argument("--config", default=argparse.SUPPRESS, help="TOML or JSON experiment file")
    sub.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    sub.add_argument("--out-dir", default=argparse.SUPPRESS, help="override the config output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gradtrack",
        description="distributed surrogate-minimization solvers with gradient tracking",
    )
    # global flags; subcommand-level duplicates take precedence when given
    parser.add_argument("--config", default=None, help="TOML or JSON experiment file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out-dir", default=None, help="override the config output directory")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, doc in (
        ("run", "single configured run"),
        ("sweep", "grid scenario from a config file"),
        ("compare", "surrogate comparison scenario"),
    ):
        sub = subs.add_parser(name, help=doc)
        _add_common(sub)

    sub = subs.add_parser("validate-config", help="check a config file and exit")
    sub.add_argument("--config", default=argparse.SUPPRESS)

    sub = subs.add_parser("rate", help="evaluate rate certificates from raw constants")
    sub.add_argument("--mu", type=float, required=True)
    sub.add_argument("--L", type=float, required=True)
    sub.add_argument("--beta", type=float, default=0.0)
    sub.add_argument("--rho", type=float, default=0.0)
    sub.add_argument("--surrogate", choices=("linearization", "local_f"), required=True)
    sub.add_argument("--tau", type=float, default=None)
    sub.add_argument("--alpha", type=float, default=None)
    sub.add_argument("--c", type=float, default=0.9, help="fraction of alpha_max when --alpha is omitted")
    sub.add_argument("--topology", choices=("star", "general"), default=None,
                     help="default: star when rho = 0, else general")
    sub.add_argument("--certified", action="store_true",
                     help="also evaluate the theorem-level certified rate")
    sub.add_argument("--tv", action="store_true", help="time-varying directed network constants")
    sub.add_argument("--m", type=int, default=None, help="agent count (tv only)")
    sub.add_argument("--B", type=int, default=None, help="connectivity window (tv only)")
    sub.add_argument("--c-ell", type=float, default=None, help="weight floor (tv only)")
    sub.add_argument("--json", action="store_true", dest="as_json")
    return parser


def _print_report(pairs, as_json):
    if as_json:
        print(json.dumps({k: v for k, v in pairs}))
        return
    width = max(len(k) for k, _ in pairs)
    for k, v in pairs:
        if isinstance(v, float):
            v = format(v, ".17g")
        print(f"{k:<{width}}  {v}")


def _cmd_rate(args):
    if args.tv:
        if None in (args.m, args.B, args.c_ell):
            raise ConfigError("--tv needs --m, --B, and --c-ell")
        phi_lb, phi_ub, c0, rho_B, gap, _ = _tv_constants(args.m, args.B, args.c_ell)
        base = inputs_from_constants(args.surrogate, args.mu, args.L, args.beta, 0.0, args.tau)
        inputs = TVRateInputs(
            mu=base.mu, L=base.L, beta=base.beta, mu_tilde_mn=base.mu_tilde_mn,
            L_tilde_mx=base.L_tilde_mx, D_mn_ell=base.D_mn_ell, D_mx=base.D_mx,
            L_mx=base.L_mx, m=args.m, rho_B=rho_B, one_minus_rho_B=gap,
            c0=c0, phi_lb=phi_lb, phi_ub=phi_ub,
        )
        topo = "general"
    else:
        inputs = inputs_from_constants(args.surrogate, args.mu, args.L, args.beta,
                                       args.rho, args.tau)
        topo = args.topology or ("star" if args.rho == 0.0 else "general")

    report = corollary_complexity(args.surrogate, inputs, topo, alpha=args.alpha, c=args.c)
    pairs = [
        ("surrogate", args.surrogate),
        ("topology", topo),
        ("kappa_g", inputs.kappa_g),
        ("beta_over_mu", args.beta / args.mu),
        ("alpha", report.alpha),
        ("alpha_max", report.alpha_max),
        ("regime", report.regime),
        ("z_corollary", report.corollary_z),
        ("iteration_driver", report.iteration_driver),
    ]
    if report.M is not None:
        pairs.append(("case1_threshold", report.case1_threshold))
    if report.vacuous:
        pairs.append(("vacuous_certificate", True))
    if args.certified:
        fn = theorem_rate_tv if args.tv else theorem_rate_undirected
        cert = fn(inputs, args.alpha if args.alpha is not None else None)
        pairs += [
            ("J", cert.J),
            ("A_half", cert.A_half),
            ("alpha_star", cert.alpha_star),
            ("certified_alpha_max", cert.alpha_max),
        ]
        if cert.certified_z is not None:
            pairs += [("z_certified", cert.certified_z), ("branch", cert.branch)]
        if cert.vacuous:
            pairs.append(("vacuous_certificate", True))
    _print_report(pairs, args.as_json)
    return 0


def _require_config(args):
    path = getattr(args, "config", None)
    if path is None:
        raise ConfigError("a --config file is required")
    return path


def _cmd_scenario(args, expected=None):
    cfg = load_config(_require_config(args))
    seed = getattr(args, "seed", None)
    out_dir = getattr(args, "out_dir", None)
    if seed is not None:
        cfg.seed = seed
    if out_dir is not None:
        cfg.out_dir = out_dir
    if expected and cfg.scenario not in expected:
        raise ConfigError(
            f"config scenario {cfg.scenario!r} does not match subcommand (expected {expected})"
        )
    rows = run_scenario(cfg)
    print(f"wrote {len(rows)} summary rows to {cfg.out_dir}/summary.csv")
    if cfg.scenario in ("sweep_kappa", "sweep_beta") and len(rows) >= 3:
        try:
            slope = fit_scaling_exponent(rows, "grid_value", "T_eps_mean")
            print(f"log-log slope of T_eps vs grid value: {slope:.4f}")
        except ConfigError:
            pass
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rate":
            return _cmd_rate(args)
        if args.command == "validate-config":
            load_config(_require_config(args))
            print("config ok")
            return 0
        if args.command == "run":
            return _cmd_scenario(args, expected=("single_run", "tv_run"))
        if args.command == "sweep":
            return _cmd_scenario(args, expected=("sweep_kappa", "sweep_beta"))
        if args.command == "compare":
            return _cmd_scenario(args, expected=("compare_surrogates",))
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CapabilityError, ConvergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
