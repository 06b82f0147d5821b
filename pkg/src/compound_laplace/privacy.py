"""Privacy guarantees of the compound Laplace mechanism.

With ``1/b`` drawn from a spec, the mechanism is ``eps``-DP with

    eps = log(E[1/b]) - log(M'(-dq))

where ``M`` is the MGF of ``1/b`` and ``dq`` the query sensitivity.
"""

from __future__ import annotations

import dataclasses
import math

from compound_laplace import _normal
from compound_laplace.distributions import (
    INF,
    Bernoulli,
    BaseFamily,
    Degenerate,
    DistributionSpec,
    Gamma,
    TruncGauss,
    Uniform,
    log_mgf,
    log_mgf_deriv,
    mean_inv_b,
    mgf,
)

# relative slack under which exp(eps) < M(dq) is treated as equality
BOUNDARY_RTOL = 1e-12


class PrivacyDomainError(ArithmeticError):
    pass


def eps_general(spec: DistributionSpec, delta_q: float) -> float:
    """Exact eps of the mechanism whose inverse scale follows ``spec``."""
    if not delta_q > 0:
        raise ValueError("delta_q must be positive")
    denom = log_mgf_deriv(spec, -delta_q)
    if not math.isfinite(denom):
        raise PrivacyDomainError(f"M'(-{delta_q}) is not a positive finite number")
    return math.log(mean_inv_b(spec)) - denom


def eps_avg_leakage(spec: DistributionSpec, delta_q: float) -> float:
    """``log E[exp(dq / b)] = log M(dq)``; ``inf`` when the MGF diverges there."""
    return log_mgf(spec, delta_q)


def _uniform_closed_form(a: float, b: float, dq: float) -> float:
    lo, hi = a * dq, b * dq
    w = hi - lo
    # (1+lo)e^{-lo} - (1+hi)e^{-hi} = e^{-lo} ((1+hi)(1-e^{-w}) - w)
    bracket = (1.0 + hi) * -math.expm1(-w) - w
    return math.log((hi - lo) * (hi + lo)) - math.log(2.0) + lo - math.log(bracket)


def _trunc_gauss_closed_form(fam: TruncGauss, dq: float) -> float:
    mu, sigma, a, b = fam.mu, fam.sigma, fam.alpha, fam.beta
    log_z = _normal.log_cdf_diff(a, b)
    numerator = mu + sigma * _normal.truncated_mean_offset(a, b)
    # d/dt of exp(mu t + s^2 t^2 / 2) [Phi(b - s t) - Phi(a - s t)] / Z, at t = -dq
    t = -dq
    st = sigma * t
    lo_t, hi_t = a - st, b - st
    mass = math.exp(_normal.log_cdf_diff(lo_t, hi_t) - log_z)
    phi_lo = math.exp(_normal.log_pdf(lo_t) - log_z)
    phi_hi = math.exp(_normal.log_pdf(hi_t) - log_z) if math.isfinite(hi_t) else 0.0
    bracket = (mu + sigma * sigma * t) * mass + sigma * (phi_lo - phi_hi)
    return math.log(numerator) - (mu * t + 0.5 * st * st) - math.log(bracket)


def eps_closed_form(family: BaseFamily, delta_q: float) -> float:
    """Per-family closed-form guarantee.

    For Bernoulli this is the averaged-leakage value ``log(p e^{dq x0} +
    (1-p) e^{dq x1})``. It bounds :func:`eps_general` from above only when
    the necessary condition holds; otherwise it can understate it.
    """
    if isinstance(family, Degenerate):
        return delta_q * family.k0
    if isinstance(family, Gamma):
        return (family.k + 1.0) * math.log1p(delta_q * family.theta)
    if isinstance(family, Uniform):
        return _uniform_closed_form(family.a, family.b, delta_q)
    if isinstance(family, Bernoulli):
        p = family.p
        if p == 0.0:
            return delta_q * family.x1
        if p == 1.0:
            return delta_q * family.x0
        u = math.log(p) + delta_q * family.x0
        v = math.log1p(-p) + delta_q * family.x1
        m = max(u, v)
        return m + math.log(math.exp(u - m) + math.exp(v - m))
    if isinstance(family, TruncGauss):
        return _trunc_gauss_closed_form(family, delta_q)
    raise TypeError(f"no closed form for {type(family).__name__}")


@dataclasses.dataclass(frozen=True)
class NecessaryCondition:
    holds: bool
    margin: float  # M(dq) - exp(eps)
    mgf_divergent: bool


def necessary_condition(spec: DistributionSpec, delta_q: float) -> NecessaryCondition:
    """Whether ``exp(eps) < M(dq)``, required for beating plain Laplace.

    Equality (always the case for a degenerate spec) counts as failure.
    """
    eps = eps_general(spec, delta_q)
    leak = eps_avg_leakage(spec, delta_q)
    if leak == INF:
        return NecessaryCondition(True, INF, True)
    holds = leak - eps > BOUNDARY_RTOL * max(1.0, abs(eps))
    margin = mgf(spec, delta_q) - math.exp(eps)
    return NecessaryCondition(holds, margin, False)


def gamma_threshold(delta_q: float, theta_ratio: float, tol: float = 1e-10) -> float:
    """Smallest Gamma shape ``k`` meeting the necessary condition at
    ``theta = theta_ratio / delta_q``, found by bisection."""
    if not 0.0 < theta_ratio < 1.0:
        raise ValueError("theta_ratio must lie in (0, 1)")
    theta = theta_ratio / delta_q

    def holds(k):
        return necessary_condition(DistributionSpec.single(Gamma(k, theta)), delta_q).holds

    lo, hi = 1e-9, 1.0
    while not holds(hi):
        lo, hi = hi, hi * 2.0
        if hi > 1e15:
            raise ArithmeticError("no threshold below 1e15")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclasses.dataclass(frozen=True)
class ImprovementVerdict:
    improves: bool
    usefulness: float
    baseline_usefulness: float
    budget_matched: bool
    budget_gap: float  # log M(1) - eps0


def improvement_criterion(spec: DistributionSpec, eps0: float, zeta: float) -> ImprovementVerdict:
    """Compare a spec, read as the distribution of eps at unit sensitivity,
    with the fixed-budget Laplace mechanism at ``eps0``."""
    useful = -math.expm1(log_mgf(spec, -zeta))
    baseline = -math.expm1(-zeta * eps0)
    gap = log_mgf(spec, 1.0) - eps0
    return ImprovementVerdict(
        improves=useful > baseline,
        usefulness=useful,
        baseline_usefulness=baseline,
        budget_matched=abs(gap) <= 1e-6,
        budget_gap=gap,
    )


@dataclasses.dataclass(frozen=True)
class PrivacyReport:
    eps_general: float
    eps_closed_form: float | None
    eps_avg_leakage: float
    necessary_condition_holds: bool
    necessary_margin: float
    mgf_divergent: bool
    sensitivity: float


def analyze_privacy(spec: DistributionSpec, delta_q: float) -> PrivacyReport:
    closed = None
    if len(spec.active) == 1:
        term = spec.active[0]
        closed = eps_closed_form(term.family.scaled(term.coef), delta_q)
    necc = necessary_condition(spec, delta_q)
    return PrivacyReport(
        eps_general=eps_general(spec, delta_q),
        eps_closed_form=closed,
        eps_avg_leakage=eps_avg_leakage(spec, delta_q),
        necessary_condition_holds=necc.holds,
        necessary_margin=necc.margin,
        mgf_divergent=necc.mgf_divergent,
        sensitivity=delta_q,
    )
