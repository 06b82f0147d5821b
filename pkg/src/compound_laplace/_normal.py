"""Standard-normal helpers that stay accurate deep in the tails.

Interval probabilities are represented as ``Phi(y) - Phi(x) =
exp(-anchor^2 / 2 + rest)`` where ``anchor`` is the interval end closest to
zero (or 0 when the interval straddles it); ``rest`` is computed with the
scaled complementary error function so no huge exponents cancel.
"""

import math

from scipy import special

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_LOG_HALF = math.log(0.5)


def log_pdf(x):
    return -0.5 * x * x - LOG_SQRT_2PI


def cdf(x):
    return float(special.ndtr(x))


def log_cdf(x):
    return float(special.log_ndtr(x))


def _erfcx(x):
    return float(special.erfcx(x))


def _gauss_ratio(x, y):
    # exp(-(y^2 - x^2) / 2) for |y| >= |x|, with infinite y giving 0
    if math.isinf(y):
        return 0.0
    return math.exp(-0.5 * (y - x) * (y + x))


def interval_mass(x, y):
    """``(anchor, rest)`` with ``Phi(y) - Phi(x) = exp(-anchor**2 / 2 + rest)``.

    ``anchor`` is None when the interval contains 0 (then ``rest`` is the
    plain log probability).
    """
    if x >= 0.0:
        tail = _erfcx(y * _INV_SQRT2) * _gauss_ratio(x, y) if not math.isinf(y) else 0.0
        return x, _LOG_HALF + math.log(_erfcx(x * _INV_SQRT2) - tail)
    if y <= 0.0:
        tail = _erfcx(-x * _INV_SQRT2) * _gauss_ratio(y, x) if not math.isinf(x) else 0.0
        return y, _LOG_HALF + math.log(_erfcx(-y * _INV_SQRT2) - tail)
    return None, math.log1p(-(cdf(x) + cdf(-y)))


def log_cdf_diff(x, y):
    """``log(Phi(y) - Phi(x))`` for ``x < y``."""
    if y <= x:
        return -math.inf
    anchor, rest = interval_mass(x, y)
    return rest if anchor is None else rest - 0.5 * anchor * anchor


def _mills_excess_cf(x):
    # phi(x)/Q(x) - x as a continued fraction; accurate for x >= 30
    acc = 0.0
    for n in range(24, 1, -1):
        acc = n / (x + acc)
    return 1.0 / (x + acc)


def upper_tail_excess(x, y):
    """``E[Z | x < Z < y] - x`` for standard normal ``Z`` and ``x >= 0``."""
    r = _gauss_ratio(x, y)
    ex, ey = _erfcx(x * _INV_SQRT2), (_erfcx(y * _INV_SQRT2) if not math.isinf(y) else 0.0)
    if x < 30.0:
        return SQRT_2_OVER_PI * (1.0 - r) / (ex - ey * r) - x
    c = _mills_excess_cf(x)
    if r == 0.0:
        return c
    lam = x + c
    q = r * ey / ex  # Q(y) / Q(x)
    return c + lam * (q - r) / (1.0 - q)


def truncated_mean_offset(alpha, beta):
    """``(phi(alpha) - phi(beta)) / (Phi(beta) - Phi(alpha))``."""
    log_z = log_cdf_diff(alpha, beta)
    la = log_pdf(alpha) if math.isfinite(alpha) else -math.inf
    lb = log_pdf(beta) if math.isfinite(beta) else -math.inf
    return math.exp(la - log_z) - math.exp(lb - log_z)
