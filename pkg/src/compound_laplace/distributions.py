"""Randomizing distributions for the inverse Laplace scale ``1/b``.

Every family has non-negative support and a moment generating function
(MGF) that exists for all ``t <= 0``. A :class:`DistributionSpec` is a
non-negative linear combination of independent family members; its MGF is
the product of the member MGFs at the scaled arguments.

All evaluation happens in log space. An MGF that does not exist (Gamma with
``coef * t * theta >= 1``) is reported as ``+inf``.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Any, ClassVar, Mapping, Sequence

import numpy as np
from scipy import special

from compound_laplace import _normal

INF = math.inf


class SpecError(ValueError):
    """Invalid distribution parameters; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise SpecError(path, message)


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def _logaddexp(a: float, b: float) -> float:
    if a == -INF:
        return b
    if b == -INF:
        return a
    m = max(a, b)
    return m + math.log1p(math.exp(-abs(a - b)))


# ---------------------------------------------------------------------------
# Base families


@dataclasses.dataclass(frozen=True)
class Degenerate:
    """Point mass at ``k0``: the ordinary Laplace mechanism with ``b = 1/k0``."""

    k0: float
    key: ClassVar[str] = "degenerate"

    def __post_init__(self):
        _require(_finite(self.k0) and self.k0 > 0, "k0", "must be a positive finite number")

    def log_mgf(self, t: float) -> float:
        return t * self.k0

    def log_mgf_deriv(self, t: float) -> float:
        return math.log(self.k0) + t * self.k0

    def mean(self) -> float:
        return self.k0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, float(self.k0))

    def scaled(self, s: float) -> Degenerate:
        return Degenerate(self.k0 * s)


@dataclasses.dataclass(frozen=True)
class Bernoulli:
    """Two-point distribution: ``x0`` with probability ``p``, else ``x1``."""

    p: float
    x0: float
    x1: float
    key: ClassVar[str] = "bernoulli"

    def __post_init__(self):
        _require(_finite(self.p) and 0.0 <= self.p <= 1.0, "p", "must lie in [0, 1]")
        _require(_finite(self.x0) and self.x0 > 0, "x0", "must be a positive finite number")
        _require(_finite(self.x1) and self.x1 > 0, "x1", "must be a positive finite number")

    def _weights(self):
        out = []
        if self.p > 0:
            out.append((math.log(self.p), self.x0))
        if self.p < 1:
            out.append((math.log1p(-self.p), self.x1))
        return out

    def log_mgf(self, t: float) -> float:
        acc = -INF
        for lw, x in self._weights():
            acc = _logaddexp(acc, lw + t * x)
        return acc

    def log_mgf_deriv(self, t: float) -> float:
        acc = -INF
        for lw, x in self._weights():
            acc = _logaddexp(acc, lw + math.log(x) + t * x)
        return acc

    def mean(self) -> float:
        return self.p * self.x0 + (1.0 - self.p) * self.x1

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.where(rng.random(size) < self.p, float(self.x0), float(self.x1))

    def scaled(self, s: float) -> Bernoulli:
        return Bernoulli(self.p, self.x0 * s, self.x1 * s)


@dataclasses.dataclass(frozen=True)
class Gamma:
    """Gamma distribution with shape ``k`` and scale ``theta``."""

    k: float
    theta: float
    key: ClassVar[str] = "gamma"

    def __post_init__(self):
        _require(_finite(self.k) and self.k > 0, "k", "must be a positive finite number")
        _require(_finite(self.theta) and self.theta > 0, "theta", "must be a positive finite number")

    def log_mgf(self, t: float) -> float:
        if self.theta * t >= 1.0:
            return INF
        return -self.k * math.log1p(-self.theta * t)

    def log_mgf_deriv(self, t: float) -> float:
        if self.theta * t >= 1.0:
            return INF
        return math.log(self.k * self.theta) - (self.k + 1.0) * math.log1p(-self.theta * t)

    def mean(self) -> float:
        return self.k * self.theta

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.gamma(self.k, self.theta, size)

    def scaled(self, s: float) -> Gamma:
        return Gamma(self.k, self.theta * s)


# Taylor coefficients of g'(s) = d/ds (e^s - 1)/s = sum_{n>=1} n s^(n-1) / (n+1)!
_GPRIME_SERIES = [n / math.factorial(n + 1) for n in range(1, 16)]


def _log_g(s: float) -> float:
    """log((e^s - 1) / s)."""
    if s == 0.0:
        return 0.0
    if abs(s) < 1.0:
        return math.log(math.expm1(s) / s)
    if s > 0:
        return s + math.log(-math.expm1(-s)) - math.log(s)
    return math.log(-math.expm1(s)) - math.log(-s)


def _log_gprime(s: float) -> float:
    """log of g'(s) = (e^s (s - 1) + 1) / s^2, which is positive everywhere."""
    if abs(s) < 0.1:
        acc = 0.0
        for c in reversed(_GPRIME_SERIES):
            acc = acc * s + c
        return math.log(acc)
    if s < 0:
        return math.log(math.exp(s) * (s - 1.0) + 1.0) - 2.0 * math.log(-s)
    return s + math.log(s - 1.0 + math.exp(-s)) - 2.0 * math.log(s)


@dataclasses.dataclass(frozen=True)
class Uniform:
    """Continuous uniform distribution on ``[a, b]``."""

    a: float
    b: float
    key: ClassVar[str] = "uniform"

    def __post_init__(self):
        _require(_finite(self.a) and self.a >= 0, "a", "must be a finite number >= 0")
        _require(_finite(self.b) and self.b > self.a, "b", "must be finite and greater than a")

    def log_mgf(self, t: float) -> float:
        return t * self.a + _log_g(t * (self.b - self.a))

    def log_mgf_deriv(self, t: float) -> float:
        # M(t) = e^{ta} g(tw),  M'(t) = e^{ta} (a g(tw) + w g'(tw))
        w = self.b - self.a
        s = t * w
        body = math.log(w) + _log_gprime(s)
        if self.a > 0:
            body = _logaddexp(body, math.log(self.a) + _log_g(s))
        return t * self.a + body

    def mean(self) -> float:
        return 0.5 * (self.a + self.b)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.a, self.b, size)

    def scaled(self, s: float) -> Uniform:
        return Uniform(self.a * s, self.b * s)


def truncated_normal_mean(mu: float, sigma: float, lo: float, hi: float) -> float:
    """Mean of N(mu, sigma^2) conditioned on ``lo < X < hi`` (``hi`` may be inf)."""
    alpha = (lo - mu) / sigma
    beta = (hi - mu) / sigma
    if alpha >= 0.0:
        return lo + sigma * _normal.upper_tail_excess(alpha, beta)
    if beta <= 0.0:
        return hi - sigma * _normal.upper_tail_excess(-beta, -alpha)
    return mu + sigma * _normal.truncated_mean_offset(alpha, beta)


@dataclasses.dataclass(frozen=True)
class TruncGauss:
    """Normal(mu, sigma^2) truncated to ``[lo, hi]``; ``hi`` may be ``inf``."""

    mu: float
    sigma: float
    lo: float
    hi: float = INF
    key: ClassVar[str] = "trunc_gauss"

    def __post_init__(self):
        _require(_finite(self.mu), "mu", "must be a finite number")
        _require(_finite(self.sigma) and self.sigma > 0, "sigma", "must be a positive finite number")
        _require(_finite(self.lo) and self.lo >= 0, "lo", "must be a finite number >= 0")
        _require(
            isinstance(self.hi, (int, float)) and not math.isnan(self.hi) and self.hi > self.lo,
            "hi",
            "must be greater than lo (or inf)",
        )
        _require(
            self._log_z() > -INF, "sigma", "truncation interval carries no probability mass"
        )

    @property
    def alpha(self) -> float:
        return (self.lo - self.mu) / self.sigma

    @property
    def beta(self) -> float:
        return (self.hi - self.mu) / self.sigma

    def _log_z(self) -> float:
        return _normal.log_cdf_diff(self.alpha, self.beta)

    def log_mgf(self, t: float) -> float:
        st = self.sigma * t
        a, b = self.alpha, self.beta
        anchor0, rest0 = _normal.interval_mass(a, b)
        anchor_t, rest_t = _normal.interval_mass(a - st, b - st)
        # mu t + (sigma t)^2 / 2 - anchor_t^2 / 2 + anchor0^2 / 2, expanded so
        # that no large squares cancel
        if anchor_t is None:
            quad = 0.5 * st * st
            if anchor0 is not None:
                quad += 0.5 * anchor0 * anchor0
        else:
            edge = a if anchor_t == a - st else b
            quad = edge * st
            if anchor0 != edge:
                quad -= 0.5 * edge * edge
                if anchor0 is not None:
                    quad += 0.5 * anchor0 * anchor0
        return self.mu * t + quad + rest_t - rest0

    def log_mgf_deriv(self, t: float) -> float:
        # exponential tilting: M'(t) = M(t) * mean of the normal with mu + sigma^2 t
        tilted = truncated_normal_mean(self.mu + self.sigma**2 * t, self.sigma, self.lo, self.hi)
        if tilted <= 0.0:
            return -INF
        return self.log_mgf(t) + math.log(tilted)

    def mean(self) -> float:
        return truncated_normal_mean(self.mu, self.sigma, self.lo, self.hi)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        a, b = self.alpha, self.beta
        if a > 0:
            log_qa = _normal.log_cdf(-a)
            log_qb = _normal.log_cdf(-b) if b != INF else -INF
            frac = -np.expm1(log_qb - log_qa)
            z = -special.ndtri_exp(log_qa + np.log1p(-u * frac))
        else:
            log_pa = _normal.log_cdf(a)
            log_mass = self._log_z()
            with np.errstate(divide="ignore"):
                z = special.ndtri_exp(np.logaddexp(log_pa, np.log(u) + log_mass))
        z = np.clip(z, a, b)
        return self.mu + self.sigma * z

    def scaled(self, s: float) -> TruncGauss:
        return TruncGauss(self.mu * s, self.sigma * s, self.lo * s, self.hi * s)


FAMILIES = {cls.key: cls for cls in (Degenerate, Bernoulli, Gamma, Uniform, TruncGauss)}
BaseFamily = Degenerate | Bernoulli | Gamma | Uniform | TruncGauss


# ---------------------------------------------------------------------------
# Linear combinations


@dataclasses.dataclass(frozen=True)
class Term:
    coef: float
    family: BaseFamily


@dataclasses.dataclass(frozen=True)
class DistributionSpec:
    """``1/b = sum_i coef_i * x_i`` over independent family draws ``x_i``."""

    terms: tuple[Term, ...]

    def __post_init__(self):
        terms = tuple(
            t if isinstance(t, Term) else Term(float(t[0]), t[1]) for t in self.terms
        )
        object.__setattr__(self, "terms", terms)
        _require(len(terms) > 0, "terms", "must be a non-empty list")
        for i, term in enumerate(terms):
            _require(
                _finite(term.coef) and term.coef >= 0, f"terms[{i}].coef", "must be finite and >= 0"
            )
            _require(
                isinstance(term.family, tuple(FAMILIES.values())),
                f"terms[{i}].family",
                "unknown family",
            )
        _require(any(t.coef > 0 for t in terms), "terms", "at least one coef must be positive")

    @classmethod
    def single(cls, family: BaseFamily, coef: float = 1.0) -> DistributionSpec:
        return cls((Term(coef, family),))

    @property
    def active(self) -> tuple[Term, ...]:
        return tuple(t for t in self.terms if t.coef > 0)

    def scaled(self, s: float) -> DistributionSpec:
        """Spec of ``s * (1/b)``."""
        return DistributionSpec(tuple(Term(t.coef * s, t.family) for t in self.terms))

    def describe(self) -> str:
        """Compact one-line rendering, e.g. ``0.6*gamma(k=2,theta=0.5)``."""
        parts = []
        for t in self.active:
            fields = ",".join(
                f"{f.name}={getattr(t.family, f.name):.6g}" for f in dataclasses.fields(t.family)
            )
            parts.append(f"{t.coef:.6g}*{t.family.key}({fields})")
        return "+".join(parts)

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        terms = []
        for t in self.terms:
            params = {}
            for f in dataclasses.fields(t.family):
                v = getattr(t.family, f.name)
                params[f.name] = "inf" if v == INF else float(v)
            terms.append({"coef": float(t.coef), "family": {t.family.key: params}})
        return {"terms": terms}

    @classmethod
    def from_dict(cls, data: Any) -> DistributionSpec:
        _require(isinstance(data, Mapping), "$", "expected an object with a 'terms' list")
        raw = data.get("terms")
        _require(isinstance(raw, Sequence) and not isinstance(raw, str), "terms", "expected a list")
        terms = []
        for i, item in enumerate(raw):
            path = f"terms[{i}]"
            _require(isinstance(item, Mapping), path, "expected an object")
            coef = item.get("coef")
            _require(
                isinstance(coef, (int, float)) and not isinstance(coef, bool),
                f"{path}.coef",
                "expected a number",
            )
            fam = item.get("family")
            _require(
                isinstance(fam, Mapping) and len(fam) == 1,
                f"{path}.family",
                "expected an object with exactly one family key",
            )
            (key, params), = fam.items()
            _require(key in FAMILIES, f"{path}.family", f"unknown family {key!r}")
            terms.append(Term(float(coef), _family_from_dict(key, params, f"{path}.family.{key}")))
        try:
            return cls(tuple(terms))
        except SpecError as exc:
            raise SpecError(exc.path, str(exc).split(": ", 1)[1]) from None


def _family_from_dict(key: str, params: Any, path: str) -> BaseFamily:
    cls = FAMILIES[key]
    _require(isinstance(params, Mapping), path, "expected an object of parameters")
    names = [f.name for f in dataclasses.fields(cls)]
    kwargs = {}
    for name in names:
        if name not in params:
            if name == "hi" and cls is TruncGauss:
                continue
            raise SpecError(f"{path}.{name}", "missing")
        v = params[name]
        if name == "hi" and v == "inf":
            v = INF
        _require(
            isinstance(v, (int, float)) and not isinstance(v, bool),
            f"{path}.{name}",
            "expected a number",
        )
        kwargs[name] = float(v)
    extra = set(params) - set(names)
    _require(not extra, f"{path}.{sorted(extra)[0] if extra else ''}", "unexpected field")
    try:
        return cls(**kwargs)
    except SpecError as exc:
        raise SpecError(f"{path}.{exc.path}", str(exc).split(": ", 1)[1]) from None


# ---------------------------------------------------------------------------
# Evaluation


def _vectorized(fn):
    def wrapper(spec, t):
        if np.ndim(t) == 0:
            return fn(spec, float(t))
        return np.vectorize(lambda v: fn(spec, float(v)), otypes=[float])(t)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_vectorized
def log_mgf(spec: DistributionSpec, t: float) -> float:
    """``log M(t)`` of the combination; ``+inf`` where the MGF does not exist."""
    return math.fsum(term.family.log_mgf(term.coef * t) for term in spec.active)


@_vectorized
def log_mgf_deriv(spec: DistributionSpec, t: float) -> float:
    """``log M'(t)`` using the product rule over the member MGFs."""
    logs = [(term.coef, term.family.log_mgf(term.coef * t)) for term in spec.active]
    total = math.fsum(lm for _, lm in logs)
    if total == INF:
        return INF
    acc = -INF
    for (coef, lm), term in zip(logs, spec.active):
        acc = _logaddexp(acc, math.log(coef) + term.family.log_mgf_deriv(coef * t) - lm)
    return total + acc


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return INF


def mgf(spec: DistributionSpec, t):
    """``M(t) = E[exp(t / b)]``; ``inf`` when the MGF does not exist."""
    if np.ndim(t) == 0:
        return _exp(log_mgf(spec, t))
    with np.errstate(over="ignore"):
        return np.exp(log_mgf(spec, t))


def mgf_deriv(spec: DistributionSpec, t):
    """``M'(t) = sum_j a_j M_j'(a_j t) prod_{i != j} M_i(a_i t)``."""
    if np.ndim(t) == 0:
        return _exp(log_mgf_deriv(spec, t))
    with np.errstate(over="ignore"):
        return np.exp(log_mgf_deriv(spec, t))


def mean_inv_b(spec: DistributionSpec) -> float:
    """``E[1/b]``."""
    return math.fsum(t.coef * t.family.mean() for t in spec.active)


def sample_inv_b(spec: DistributionSpec, rng: np.random.Generator, size: int | None = None):
    """Draw ``1/b``; a scalar when ``size`` is None, otherwise an array.

    Exact zeros (possible only for families touching 0) are redrawn.
    """
    n = 1 if size is None else int(size)
    out = np.zeros(n)
    for term in spec.active:
        out += term.coef * term.family.sample(rng, n)
    bad = out <= 0
    while bad.any():
        redraw = np.zeros(int(bad.sum()))
        for term in spec.active:
            redraw += term.coef * term.family.sample(rng, redraw.size)
        out[bad] = redraw
        bad = out <= 0
    return float(out[0]) if size is None else out
