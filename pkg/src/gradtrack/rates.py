"""Closed-form rate certificates, certified step-sizes, and complexity regimes.

Two layers are kept apart on purpose:

* ``theorem_rate_*`` evaluates the certified per-iteration contraction
  z(alpha) = max{1 - J alpha, <network branch>} from the exact small-gain
  constants of the analysis; this is an upper bound that holds for every
  admissible step-size.
* ``corollary_complexity`` evaluates the order-level regime classification
  (Case I: connectivity good enough that the rate matches the centralized
  order; Case II: network-limited) with its explicit, deliberately loose
  margin constants.

All margin constants live in ``CASE1_MARGIN`` / ``TV_CASE1_MARGIN`` so an
audit of the formulas touches a single file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError
from .network import chebyshev_contraction

# Case-I margins: the regime threshold is rho/(1-rho)^2 <= 1/M with
# M = margin * <conditioning factor>; see ``_corollary_M``.
CASE1_MARGIN = {
    "linearization": 110.0,
    "local_f_small_beta": 193.0,  # beta <= mu
    "local_f_large_beta": 253.0,  # beta > mu
}
# Time-varying counterparts scale the same structure by a network constant.
TV_CASE1_MARGIN = {
    "local_f_small_beta": 1087.0,
    "local_f_large_beta": 1428.0,
    "linearization_cm": 608.0,
}

VACUOUS_ALPHA_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# inputs


@dataclass(frozen=True)
class RateInputs:
    """Problem, surrogate, and static-network constants consumed by the bounds."""

    mu: float
    L: float
    beta: float
    mu_tilde_mn: float
    L_tilde_mx: float
    D_mn_ell: float
    D_mx: float
    L_mx: float
    rho: float

    def __post_init__(self):
        if not (0 < self.mu <= self.L):
            raise ConfigError("need 0 < mu <= L")
        if self.mu_tilde_mn <= 0:
            raise ConfigError("need mu_tilde_mn > 0")
        if self.mu_tilde_mn < self.D_mn_ell:
            raise ConfigError("certificates require mu_tilde_mn >= D_mn_ell")
        if not (0.0 <= self.rho < 1.0):
            raise ConfigError("need rho in [0, 1)")
        if self.beta < 0 or self.D_mx < 0:
            raise ConfigError("beta and D_mx must be nonnegative")

    @property
    def kappa_g(self):
        return self.L / self.mu


@dataclass(frozen=True)
class TVRateInputs:
    """As RateInputs but with push-sum network constants instead of rho."""

    mu: float
    L: float
    beta: float
    mu_tilde_mn: float
    L_tilde_mx: float
    D_mn_ell: float
    D_mx: float
    L_mx: float
    m: int
    rho_B: float
    one_minus_rho_B: float
    c0: float
    phi_lb: float
    phi_ub: float

    @property
    def kappa_g(self):
        return self.L / self.mu


def inputs_from_constants(kind, mu, L, beta, rho, tau=None):
    """RateInputs straight from raw constants, via the canonical surrogate spec."""
    from .surrogate import constants_from_values

    spec = constants_from_values(kind, mu, L, beta, tau)
    return RateInputs(
        mu=mu, L=L, beta=beta, mu_tilde_mn=spec.mu_tilde, L_tilde_mx=spec.L_tilde,
        D_mn_ell=spec.d_ell, D_mx=spec.d_max, L_mx=L + beta, rho=float(rho),
    )


def rate_inputs(problem, spec, rho):
    """Assemble RateInputs from a problem and surrogate spec.

    The per-agent smoothness bound is taken as L + beta (implied by the
    similarity constant), matching the bound under which the explicit
    corollary constants were derived.
    """
    return RateInputs(
        mu=problem.mu, L=problem.L, beta=problem.beta,
        mu_tilde_mn=spec.mu_tilde, L_tilde_mx=spec.L_tilde,
        D_mn_ell=spec.d_ell, D_mx=spec.d_max,
        L_mx=problem.L + problem.beta, rho=float(rho),
    )


def tv_rate_inputs(problem, spec, net):
    return TVRateInputs(
        mu=problem.mu, L=problem.L, beta=problem.beta,
        mu_tilde_mn=spec.mu_tilde, L_tilde_mx=spec.L_tilde,
        D_mn_ell=spec.d_ell, D_mx=spec.d_max,
        L_mx=problem.L + problem.beta,
        m=net.node_count, rho_B=net.rho_B, one_minus_rho_B=net.one_minus_rho_B,
        c0=net.c0, phi_lb=net.phi_lb, phi_ub=net.phi_ub,
    )


# ---------------------------------------------------------------------------
# shared small-gain pieces


def _eps_opt_star(inputs, alpha):
    return (1.0 - 0.5 * alpha) * inputs.mu_tilde_mn + 0.5 * alpha * inputs.D_mn_ell


def sigma_eta(inputs, alpha):
    """Per-iteration gap contraction sigma and consensus-coupling gain eta.

    Evaluated at the optimizing choice of the descent slack, under which the
    net descent margin equals half of it.
    """
    eps = _eps_opt_star(inputs, alpha)
    if eps <= 0:
        raise ConfigError(f"step-size {alpha} leaves no descent margin")
    margin = 0.5 * eps
    denom = inputs.D_mx**2 / inputs.mu + margin
    sigma = 1.0 - alpha * margin / denom
    eta = (0.5 / eps * alpha * inputs.D_mx**2 / inputs.mu + alpha / inputs.mu * margin) / denom
    return sigma, eta


def _c1_c2(inputs, tv=False):
    mt = inputs.mu_tilde_mn
    c1 = 6.0 / inputs.mu * ((inputs.D_mx / mt + 1.0) ** 2 + 4.0 * inputs.L_mx**2 / mt**2)
    if tv:
        c1 /= inputs.phi_lb
    c2 = 4.0 / mt**2
    return c1, c2


def _alpha_cap(inputs):
    """Upper step-size cap mu_tilde/(mu_tilde - D_mn_ell); +inf when equal."""
    gap = inputs.mu_tilde_mn - inputs.D_mn_ell
    return math.inf if gap <= 0 else inputs.mu_tilde_mn / gap


def _gp_star_at_cap(inputs):
    # value of the optimization gain at the step-size cap: the descent
    # margin there is mu_tilde/2 (or mu_tilde when the cap is infinite)
    mt = inputs.mu_tilde_mn
    s = mt if math.isinf(_alpha_cap(inputs)) else 0.5 * mt
    return (inputs.D_mx**2 / inputs.mu + s**2 / inputs.mu) / s**2


def rate_J(inputs):
    """Slope of the optimization branch z = 1 - J alpha."""
    mt = inputs.mu_tilde_mn
    return 0.5 * mt * inputs.mu / (4.0 * inputs.D_mx**2 + mt * inputs.mu)


def _a_half_undirected(inputs):
    gp = _gp_star_at_cap(inputs)
    c1, c2 = _c1_c2(inputs)
    L2, rho = inputs.L_mx**2, inputs.rho
    a1 = gp * 2.0 * c1 * 4.0 * L2 * rho**2
    a2 = (gp * 2.0 * 2.0 * c1 + c2) * 2.0 * L2 * rho**2
    a3 = (gp * 2.0 * 2.0 * c1 + c2) * 8.0 * L2 * rho**4
    return math.sqrt(a1 + a2 + a3)


def _a_half_tv(inputs):
    gp = _gp_star_at_cap(inputs)
    c1, c2 = _c1_c2(inputs, tv=True)
    L2 = inputs.L_mx**2
    gap = inputs.one_minus_rho_B
    if gap <= 0 or math.isinf(inputs.c0):
        return math.inf
    rb2 = inputs.rho_B**2
    base = 2.0 * inputs.c0**2 * rb2 / gap
    a1 = gp * 2.0 * c1 * 8.0 * inputs.phi_ub * L2 * base
    mid = gp * 2.0 * 2.0 * inputs.phi_ub * c1 + c2
    a2 = mid * 2.0 * inputs.m / inputs.phi_lb**2 * L2 * base
    a3 = mid * 8.0 * inputs.m / inputs.phi_lb**2 * L2 * (2.0 * inputs.c0**2 * rb2 / gap) ** 2
    return math.sqrt(a1 + a2 + a3)


# ---------------------------------------------------------------------------
# stability polynomial


def stability_polynomial(inputs, alpha, z):
    """Value of the small-gain polynomial P(alpha, z); P < 1 certifies rate z.

    For static networks the free Young parameters are fixed at their z = 1
    optimizer (1 - rho)/rho, so the admissible window is
    max(sigma(alpha), rho) < z < 1. The time-varying variant has no free
    parameters and needs z > max(sigma(alpha), rho_B).
    """
    tv = isinstance(inputs, TVRateInputs)
    if not z < 1.0:
        raise ConfigError(f"need z < 1, got {z}")
    if alpha == 0.0:
        return 0.0  # every term carries alpha^2; the window is degenerate here
    if not tv and inputs.rho == 0.0:
        return 0.0  # every term carries rho^2: no consensus error to chain
    sigma, eta = sigma_eta(inputs, alpha)
    if z <= sigma:
        raise ConfigError(f"z={z} is not above sigma(alpha)={sigma}")
    gp = eta / (z - sigma)
    if tv:
        if z <= inputs.rho_B:
            raise ConfigError(f"z={z} is not above rho_B={inputs.rho_B}")
        c1, c2 = _c1_c2(inputs, tv=True)
        gx = gy = 2.0 * inputs.c0**2 / (inputs.one_minus_rho_B * (z - inputs.rho_B))
        L2, rb2 = inputs.L_mx**2, inputs.rho_B**2
        mid = gp * 2.0 * inputs.phi_ub * c1 + c2
        term1 = gp * gx * c1 * 8.0 * inputs.phi_ub * L2 * rb2 * alpha**2
        term2 = mid * gy * 2.0 * inputs.m / inputs.phi_lb**2 * L2 * rb2 * alpha**2
        term3 = mid * gy * 8.0 * inputs.m / inputs.phi_lb**2 * L2 * gx * rb2**2 * alpha**2
        return term1 + term2 + term3

    rho = inputs.rho
    if rho == 0.0:
        return 0.0
    if z <= rho:
        raise ConfigError(f"z={z} is not above rho={rho} (Young-parameter window)")
    c1, c2 = _c1_c2(inputs)
    eps = (1.0 - rho) / rho
    gx = gy = (1.0 + 1.0 / eps) / (z - rho**2 * (1.0 + eps))
    L2 = inputs.L_mx**2
    mid = gp * 2.0 * c1 + c2
    term1 = gp * gx * c1 * 4.0 * L2 * rho**2 * alpha**2
    term2 = mid * gy * 2.0 * L2 * rho**2 * alpha**2
    term3 = mid * gy * 8.0 * L2 * rho**2 * gx * rho**2 * alpha**2
    return term1 + term2 + term3


# ---------------------------------------------------------------------------
# reports


@dataclass
class RateReport:
    """Everything a certificate evaluation produced.

    ``certified_z`` comes from the exact theorem-level bound; ``corollary_z``
    carries the order-level explicit-constant bound and is generally much
    looser. They must never be conflated.
    """

    inputs: object
    alpha: float | None = None
    sigma_alpha: float | None = None
    eta_alpha: float | None = None
    C1: float | None = None
    C2: float | None = None
    G_P_star: float | None = None
    J: float | None = None
    A_half: float | None = None
    alpha_star: float | None = None
    alpha_max: float | None = None
    certified_z: float | None = None
    branch: str | None = None  # "optimization" or "network"
    corollary_z: float | None = None
    regime: str | None = None  # "CaseI" or "CaseII"
    M: float | None = None
    case1_threshold: float | None = None
    iteration_driver: str | None = None
    iteration_complexity_coeff: float | None = None
    vacuous: bool = False

    def iteration_complexity(self, eps_target):
        """Iterations to reach eps_target implied by the corollary bound."""
        z = self.corollary_z if self.corollary_z is not None else self.certified_z
        if z is None or not (0 < z < 1):
            return math.inf
        return math.log(1.0 / eps_target) / -math.log(z)


def _theorem_report(inputs, alpha, a_half, net_gap, tv):
    cap = _alpha_cap(inputs)
    J = rate_J(inputs)
    if a_half > 0:
        alpha_net = net_gap**2 / a_half if not tv else net_gap / a_half
    else:
        alpha_net = math.inf
    alpha_max = min(alpha_net, cap, 1.0)
    report = RateReport(
        inputs=inputs, alpha=alpha, J=J, A_half=a_half, alpha_max=alpha_max,
        C1=_c1_c2(inputs, tv=tv)[0], C2=_c1_c2(inputs, tv=tv)[1],
        G_P_star=_gp_star_at_cap(inputs),
        vacuous=alpha_max < VACUOUS_ALPHA_FLOOR,
    )
    if tv:
        report.alpha_star = net_gap / (a_half + J)
    else:
        rho = inputs.rho
        report.alpha_star = (
            (-rho * math.sqrt(a_half) + math.sqrt(a_half + J * (1.0 - rho**2)))
            / (a_half + J)
        ) ** 2
    if alpha is None:
        return report
    if not (0 < alpha < alpha_max):
        raise ConfigError(f"alpha={alpha} outside the certified range (0, {alpha_max:.6g})")
    report.sigma_alpha, report.eta_alpha = sigma_eta(inputs, alpha)
    opt_branch = 1.0 - J * alpha
    if tv:
        net_branch = inputs.rho_B + a_half * alpha
    else:
        net_branch = (inputs.rho + math.sqrt(alpha * a_half)) ** 2
    report.certified_z = max(opt_branch, net_branch)
    report.branch = "optimization" if opt_branch >= net_branch else "network"
    return report


def theorem_rate_undirected(inputs, alpha=None):
    """Certified rate report on a static undirected network.

    With alpha = None only the step-size landscape (J, A_half, alpha_star,
    alpha_max) is filled in; passing alpha also evaluates the certified z.
    """
    return _theorem_report(inputs, alpha, _a_half_undirected(inputs), 1.0 - inputs.rho, tv=False)


def theorem_rate_tv(inputs, alpha=None):
    """Certified rate report over a time-varying directed sequence."""
    return _theorem_report(inputs, alpha, _a_half_tv(inputs), inputs.one_minus_rho_B, tv=True)


# ---------------------------------------------------------------------------
# corollary-level regimes


def _local_f_regime(beta, mu):
    return "local_f_large_beta" if beta > mu else "local_f_small_beta"


def _corollary_M(kind, inputs, tv=False):
    kg, beta, mu, L = inputs.kappa_g, inputs.beta, inputs.mu, inputs.L
    if kind == "linearization":
        base = kg * (1.0 + beta / L) ** 2
        if tv:
            cm = TV_CASE1_MARGIN["linearization_cm"] / inputs.phi_lb * inputs.c0 \
                * math.sqrt(inputs.phi_ub / inputs.phi_lb * inputs.m)
            return cm * base
        return CASE1_MARGIN["linearization"] * base
    if kind == "local_f":
        regime = _local_f_regime(beta, mu)
        if regime == "local_f_large_beta":
            base = (1.0 + L / beta) * (kg + beta / mu)
        else:
            base = (1.0 + beta / mu) ** 2 * (kg + beta / mu) ** 2
        if tv:
            cm = inputs.c0**2 / inputs.phi_lb * math.sqrt(inputs.phi_ub / inputs.phi_lb * inputs.m)
            return TV_CASE1_MARGIN[regime] * cm * base
        return CASE1_MARGIN[regime] * base
    raise ConfigError(f"no corollary constants for surrogate kind {kind!r}")


def _corollary_J(kind, inputs):
    kg, beta, mu = inputs.kappa_g, inputs.beta, inputs.mu
    if kind == "linearization":
        return 0.5 * kg / (4.0 * (kg - 1.0) ** 2 + kg)
    r = beta / mu
    return 0.5 / (1.0 + 16.0 * r * min(1.0, r))


def star_corollary_z(kind, inputs, alpha=1.0):
    """Closed-form master/worker rate bound.

    At alpha = 1 this returns the published reductions: 1 - 1/kappa_g for
    linearization (proximal gradient) and
    1 - 1/(1 + 4 (beta/mu) min(1, beta/mu)) for the local-loss model
    (mirror-descent / preconditioned average). Other step-sizes evaluate the
    general star expression with the model constants.
    """
    if alpha == 1.0:
        if kind == "linearization":
            return 1.0 - 1.0 / inputs.kappa_g
        if kind == "local_f":
            r = inputs.beta / inputs.mu
            return 1.0 - 1.0 / (1.0 + 4.0 * r * min(1.0, r))
    s = _eps_opt_star(inputs, alpha)
    return 1.0 - alpha * s / (inputs.D_mx**2 / (2.0 * inputs.mu) + s)


def corollary_complexity(kind, inputs, topology_kind="general", alpha=None, c=0.9):
    """Order-level regime classification and explicit-constant rate bound.

    Parameters
    ----------
    kind : str
        ``linearization`` or ``local_f``.
    inputs : RateInputs | TVRateInputs
    topology_kind : str
        ``star`` evaluates the network-free closed forms; ``general`` uses
        the Case I / II split at connectivity rho (or rho_B).
    alpha : float, optional
        Step-size; defaults to c * alpha_max.
    c : float
        Fraction of alpha_max used when alpha is not given, in (0, 1).
    """
    tv = isinstance(inputs, TVRateInputs)
    report = RateReport(inputs=inputs)
    if topology_kind == "star":
        report.alpha_max = 1.0
        report.alpha = 1.0 if alpha is None else alpha
        report.regime = "CaseI"
        report.corollary_z = star_corollary_z(kind, inputs, report.alpha)
        report.iteration_driver = {
            "linearization": "kappa_g",
            "local_f": "max(1, beta/mu)",
        }[kind]
        return report

    if not (0.0 < c < 1.0):
        raise ConfigError(f"need c in (0,1), got {c}")
    rho = inputs.rho_B if tv else inputs.rho
    gap = inputs.one_minus_rho_B if tv else 1.0 - rho
    M = _corollary_M(kind, inputs, tv=tv)
    J = _corollary_J(kind, inputs)
    threshold = 1.0 / M
    ratio = math.inf if gap <= 0 else rho / gap**2
    case1 = ratio <= threshold
    alpha_max = 1.0 if case1 else gap**2 / (M * rho)
    at_cap = False
    if alpha is None:
        alpha = c * alpha_max
    else:
        c = alpha / alpha_max
        if not (0.0 < c <= 1.0 + 1e-12):
            raise ConfigError(f"alpha={alpha} exceeds corollary alpha_max={alpha_max:.6g}")
        at_cap = c >= 1.0 - 1e-12

    kg, beta, mu = inputs.kappa_g, inputs.beta, inputs.mu
    key = "linearization" if kind == "linearization" else _local_f_regime(beta, mu)
    floor = M if tv else max(CASE1_MARGIN[key], 1.0)
    shrink = c * (1.0 - c) if tv else c * (1.0 - math.sqrt(c)) ** 2
    if case1:
        if at_cap:
            # c in (0,1) is required by the shrink factors; at the full
            # step-size Case I matches the network-free closed form
            z = star_corollary_z(kind, inputs, 1.0)
        else:
            pw = 1 if tv else 2
            z = 1.0 - shrink * (1.0 - 1.0 / floor) ** pw * J
        drivers = {
            "linearization": ("kappa_g", 8.0),
            "local_f_small_beta": ("1", 2.0 + 32.0 * (beta / mu) ** 2),
            "local_f_large_beta": ("beta/mu", 34.0),
        }
    else:
        z = 1.0 - shrink * J * gap**2 / (M * rho)
        drivers = {
            "linearization": ("(kappa_g + beta/mu)^2 * rho/(1-rho)^2", 1.0),
            "local_f_small_beta": ("kappa_g^2 * rho/(1-rho)^2", 1.0),
            "local_f_large_beta": ("(kappa_g + beta/mu)^2 * rho/(1-rho)^2", 1.0),
        }
    report.alpha = alpha
    report.alpha_max = alpha_max
    report.M = M
    report.J = J
    report.case1_threshold = threshold
    report.regime = "CaseI" if case1 else "CaseII"
    report.corollary_z = z
    report.iteration_driver = drivers[key][0]
    report.iteration_complexity_coeff = drivers[key][1]
    report.vacuous = alpha_max < VACUOUS_ALPHA_FLOOR
    return report


@dataclass
class ChebyshevRounds:
    """Round count needed to land in Case I, with the effective contraction."""

    rounds: int
    effective_rho: float
    capped: bool


def chebyshev_round_count(inputs, kind, cap=200):
    """Smallest K whose K-round accelerated contraction triggers Case I.

    Returns K = cap with ``capped=True`` if the budget is insufficient.
    """
    if not (0.0 <= inputs.rho < 1.0):
        raise ConfigError("need rho in [0, 1)")
    M = _corollary_M(kind, inputs)
    threshold = 1.0 / M
    for K in range(1, cap + 1):
        eff = chebyshev_contraction(inputs.rho, K)
        if eff / (1.0 - eff) ** 2 <= threshold:
            return ChebyshevRounds(K, eff, False)
    return ChebyshevRounds(cap, chebyshev_contraction(inputs.rho, cap), True)
