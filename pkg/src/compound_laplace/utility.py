"""Noise density, CDF and utility metrics of the compound Laplace mechanism.

The released noise has density ``f(x) = M'(-|x|) / 2`` and the metrics are
one-dimensional integrals of the MGF of ``1/b`` over ``[0, inf)``:

* l1 error:  ``int M(-x) dx``                (= E[b])
* l2 error:  ``sqrt(2 int int_x^inf M(-u) du dx)``  (= sqrt(2 E[b^2]))
* entropy:   ``int -M'(-x) log M'(-x) dx``
* usefulness at error bound ``gamma``: ``1 - M(-gamma)``
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy import integrate, optimize

from compound_laplace.distributions import (
    DistributionSpec,
    log_mgf,
    log_mgf_deriv,
    mean_inv_b,
)

LN2 = math.log(2.0)


def log_pdf_noise(spec: DistributionSpec, x):
    return log_mgf_deriv(spec, -np.abs(x)) - LN2


def pdf_noise(spec: DistributionSpec, x):
    """Density of the additive noise at ``x``."""
    return np.exp(log_pdf_noise(spec, x)) if np.ndim(x) else math.exp(log_pdf_noise(spec, x))


def cdf_noise(spec: DistributionSpec, x):
    """``P(noise <= x)``: ``M(-|x|)/2`` left of zero, ``1 - M(-x)/2`` right of it."""
    if np.ndim(x):
        x = np.asarray(x, dtype=float)
        half = 0.5 * np.exp(log_mgf(spec, -np.abs(x)))
        return np.where(x < 0, half, 1.0 - half)
    half = 0.5 * math.exp(log_mgf(spec, -abs(x)))
    return half if x < 0 else 1.0 - half


def usefulness(spec: DistributionSpec, gamma: float) -> float:
    """``P(|noise| <= gamma) = 1 - M(-gamma)``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return -math.expm1(log_mgf(spec, -gamma))


def integrate_tail(fn, scale: float, tol: float = 1e-10, max_doublings: int = 400) -> float:
    """Integrate a smooth non-negative ``fn`` over ``[0, inf)``.

    Integrates over doubling windows ``[X, 2X]`` starting at ``scale``. After
    each window the local power-law exponent ``p`` of the integrand is
    estimated; the remaining tail is approximated by ``X f(X) / (p - 1)``.
    Returns ``inf`` if the tail decays no faster than ``1/x``.
    """
    quad = dict(epsabs=tol * 1e-2, epsrel=1e-11, limit=200, full_output=1)
    total = integrate.quad(fn, 0.0, scale, **quad)[0]
    x = scale
    p = math.inf
    tail = 0.0
    for _ in range(max_doublings):
        total += integrate.quad(fn, x, 2.0 * x, **quad)[0]
        x *= 2.0
        f_x = fn(x)
        if f_x <= 0.0:
            return total
        f_half = fn(0.5 * x)
        p = math.log2(f_half / f_x)
        if p <= 1.0 + 1e-4:
            if x >= 1e6 * scale:
                return math.inf
            continue
        tail = x * f_x / (p - 1.0)
        if tail <= max(tol, 1e-13 * total):
            return total + tail
    return total + tail if p > 1.0 + 1e-4 else math.inf


def _scale(spec):
    return 1.0 / mean_inv_b(spec)


def l1_error(spec: DistributionSpec, tol: float = 1e-10) -> float:
    """Expected absolute noise ``E|noise| = E[b]``; ``inf`` if it diverges."""
    return integrate_tail(lambda x: math.exp(log_mgf(spec, -x)), _scale(spec), tol)


def l2_error(spec: DistributionSpec, tol: float = 1e-10) -> float:
    """Root mean squared noise; ``inf`` if it diverges.

    The iterated integral ``int_0^inf int_x^inf M(-u) du dx`` is evaluated in
    its swapped form ``int_0^inf u M(-u) du``.
    """
    inner = integrate_tail(lambda u: u * math.exp(log_mgf(spec, -u)), _scale(spec), tol)
    return math.sqrt(2.0 * inner)


def entropy_table(spec: DistributionSpec, tol: float = 1e-10) -> float:
    """``int_0^inf -M'(-x) log M'(-x) dx`` (differential entropy minus log 2)."""

    def integrand(x):
        lg = log_mgf_deriv(spec, -x)
        return -math.exp(lg) * lg

    scale = _scale(spec)
    # M'(-x) is decreasing with M'(0) = E[1/b]; the integrand is negative
    # until M'(-x) drops below 1
    head = 0.0
    start = 0.0
    if log_mgf_deriv(spec, 0.0) > 0.0:
        hi = scale
        while log_mgf_deriv(spec, -hi) > 0.0:
            hi *= 2.0
        start = optimize.brentq(lambda x: log_mgf_deriv(spec, -x), 0.0, hi, xtol=1e-14)
        head = integrate.quad(integrand, 0.0, start, epsabs=tol * 1e-2, epsrel=1e-11)[0]
    return head + integrate_tail(lambda y: max(integrand(start + y), 0.0), scale, tol)


def entropy_true(spec: DistributionSpec, tol: float = 1e-10) -> float:
    """Differential entropy of the noise density over the whole real line."""
    return entropy_table(spec, tol) + LN2


@dataclasses.dataclass(frozen=True)
class UtilityReport:
    l1: float
    l2: float
    entropy_table: float
    entropy_true: float
    usefulness: float
    gamma: float


def analyze_utility(spec: DistributionSpec, gamma: float, tol: float = 1e-10) -> UtilityReport:
    ent = entropy_table(spec, tol)
    return UtilityReport(
        l1=l1_error(spec, tol),
        l2=l2_error(spec, tol),
        entropy_table=ent,
        entropy_true=ent + LN2,
        usefulness=usefulness(spec, gamma),
        gamma=gamma,
    )
