"""Utility-maximizing randomizing distributions under an eps-DP constraint.

For a family with parameters ``u`` the problem is

    minimize   objective(u)      (e.g. M_u(-gamma) for usefulness)
    subject to eps_general(u, dq) = eps_target

Each restart runs a quadratic-penalty ladder (rho = 1e2 ... 1e8) with
Nelder-Mead as the inner solver, then projects onto the constraint exactly.
The projection uses the fact that multiplying ``1/b`` by ``s`` is the same as
evaluating the guarantee at sensitivity ``s * dq``, and eps is strictly
increasing in the sensitivity, so a single root-find in ``log s`` lands on
the constraint surface. The best projected restarts are then polished by
Nelder-Mead on the constraint surface itself.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import math
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy import optimize as sopt
from scipy.stats import qmc

from compound_laplace import privacy, utility
from compound_laplace.distributions import (
    INF,
    Bernoulli,
    Degenerate,
    DistributionSpec,
    Gamma,
    SpecError,
    Term,
    TruncGauss,
    Uniform,
    log_mgf,
)

METRICS = ("usefulness", "l1", "l2", "entropy")
FAMILY_KEYS = ("degenerate", "bernoulli", "gamma", "uniform", "trunc_gauss")
COMBINED_FAMILIES = ("gamma", "uniform", "trunc_gauss")
FEASIBILITY_TOL = 1e-4
_BIG = 1e10

DEFAULT_BOUNDS: dict[str, tuple[float, float]] = {
    "k0": (1e-6, 1e6),
    "p": (0.0, 1.0),
    "x0": (1e-3, 100.0),
    "x1": (1e-3, 100.0),
    "k": (0.05, 100.0),
    "theta": (1e-4, 50.0),
    "uniform_a": (0.0, 100.0),
    "uniform_b": (1e-4, 100.0),
    "mu": (-10.0, 100.0),
    "sigma": (1e-3, 50.0),
    "lo": (0.0, 200.0),
    "hi": (1e-3, 200.0),
    "coef": (0.0, 10.0),
}


class InfeasibleError(RuntimeError):
    """No restart reached the target eps inside the parameter box."""


@dataclasses.dataclass(frozen=True)
class OptimizationProblem:
    eps_target: float
    delta_q: float = 1.0
    gamma: float = 1.0
    metric: str = "usefulness"
    families: tuple[str, ...] = ("degenerate", "gamma", "uniform", "trunc_gauss")
    restarts: int = 64
    seed: int = 0
    bounds: Mapping[str, tuple[float, float]] = dataclasses.field(default_factory=dict)
    combined: bool = False
    polish_top: int = 4
    workers: int = 1

    def __post_init__(self):
        if not self.eps_target > 0:
            raise ValueError("eps_target must be positive")
        if not self.delta_q > 0:
            raise ValueError("delta_q must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        object.__setattr__(self, "families", tuple(self.families))
        if not self.families:
            raise ValueError("at least one family is required")
        unknown = set(self.families) - set(FAMILY_KEYS)
        if unknown:
            raise ValueError(f"unknown families: {sorted(unknown)}")
        if self.restarts < 1:
            raise ValueError("restarts must be positive")
        unknown = set(self.bounds) - set(_all_bound_names())
        if unknown:
            raise ValueError(f"unknown bounds: {sorted(unknown)}")

    def bound(self, name: str) -> tuple[float, float]:
        if name in self.bounds:
            return tuple(float(v) for v in self.bounds[name])
        if name.startswith("coef_"):
            return self.bound("coef") if "coef" in self.bounds else DEFAULT_BOUNDS["coef"]
        return DEFAULT_BOUNDS[name]


def _all_bound_names():
    return list(DEFAULT_BOUNDS) + [f"coef_{k}" for k in FAMILY_KEYS]


@dataclasses.dataclass(frozen=True)
class RestartLog:
    start: dict[str, float]
    end: dict[str, float]
    objective: float
    feasible: bool


@dataclasses.dataclass(frozen=True)
class OptimizationResult:
    best_spec: DistributionSpec
    metric: str
    objective: float
    eps_target: float
    eps_achieved: float
    constraint_residual: float
    baseline_objective: float
    improved: bool
    necessary_condition_holds: bool
    necessary_margin: float
    family: str
    per_restart_log: list[RestartLog]

    def to_dict(self) -> dict[str, Any]:
        return {
            "best_spec": self.best_spec.to_dict(),
            "best_spec_compact": self.best_spec.describe(),
            "family": self.family,
            "metric": self.metric,
            "objective": self.objective,
            "eps_target": self.eps_target,
            "eps_achieved": self.eps_achieved,
            "constraint_residual": self.constraint_residual,
            "baseline_objective": self.baseline_objective,
            "improved": self.improved,
            "necessary_condition_holds": self.necessary_condition_holds,
            "necessary_margin": _json_float(self.necessary_margin),
            "per_restart_log": [
                {"start": r.start, "end": r.end, "objective": _json_float(r.objective), "feasible": r.feasible}
                for r in self.per_restart_log
            ],
        }


def _json_float(x):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")


def baseline_usefulness(eps: float, gamma: float, delta_q: float = 1.0) -> float:
    """Usefulness of the plain Laplace mechanism, ``1 - exp(-gamma eps / dq)``."""
    if not (eps > 0 and gamma > 0 and delta_q > 0):
        raise ValueError("eps, gamma and delta_q must be positive")
    return -math.expm1(-gamma * eps / delta_q)


# ---------------------------------------------------------------------------
# Objective plumbing


def metric_value(spec: DistributionSpec, metric: str, gamma: float, tol: float = 1e-10) -> float:
    """Reported metric: usefulness (higher is better) or l1/l2/entropy (lower)."""
    if metric == "usefulness":
        return utility.usefulness(spec, gamma)
    if metric == "l1":
        return utility.l1_error(spec, tol)
    if metric == "l2":
        return utility.l2_error(spec, tol)
    return utility.entropy_table(spec, tol)


def _loss(spec: DistributionSpec, metric: str, gamma: float) -> float:
    # quantity minimized; for usefulness that is M(-gamma)
    if metric == "usefulness":
        return math.exp(log_mgf(spec, -gamma))
    return metric_value(spec, metric, gamma, tol=1e-8)


def _better(metric: str, a: float, b: float, margin: float = 0.0) -> bool:
    if metric == "usefulness":
        return a > b + margin
    return a < b - margin


# ---------------------------------------------------------------------------
# Parameter layouts


@dataclasses.dataclass(frozen=True)
class _Param:
    name: str
    lo: float
    hi: float
    log: bool

    def to_natural(self, u: float) -> float:
        u = min(max(u, 0.0), 1.0)
        if self.log:
            return math.exp(math.log(self.lo) + u * (math.log(self.hi) - math.log(self.lo)))
        return self.lo + u * (self.hi - self.lo)

    def to_unit(self, v: float) -> float:
        if self.hi == self.lo:
            return 0.0
        if self.log:
            return (math.log(v) - math.log(self.lo)) / (math.log(self.hi) - math.log(self.lo))
        return (v - self.lo) / (self.hi - self.lo)


def _param(problem, name, bound_name=None, lo_floor=None, hi_cap=None):
    lo, hi = problem.bound(bound_name or name)
    if lo_floor is not None:
        lo = max(lo, lo_floor)
    if hi_cap is not None:
        hi = min(hi, hi_cap)
    use_log = lo > 0 and hi / lo > 100.0
    return _Param(name, lo, hi, use_log)


# natural parameters of each family and which of them scale with 1/b
_FAMILY_PARAMS = {
    "degenerate": (("k0",), ("k0",)),
    "bernoulli": (("p", "x0", "x1"), ("x0", "x1")),
    "gamma": (("k", "theta"), ("theta",)),
    "uniform": (("uniform_b", "uniform_ratio"), ("uniform_b",)),
    "trunc_gauss": (("mu", "sigma", "lo", "width"), ("mu", "sigma", "lo", "width")),
}


def _family_params(problem, key, prefix=""):
    out = []
    for name in _FAMILY_PARAMS[key][0]:
        if name == "uniform_ratio":
            out.append(_Param(prefix + name, 0.0, 1.0 - 1e-6, False))
        elif name == "width":
            lo, hi = problem.bound("hi")
            out.append(_Param(prefix + name, max(lo, 1e-3) if lo > 0 else 1e-3, hi, True))
        else:
            p = _param(problem, name)
            out.append(dataclasses.replace(p, name=prefix + name))
    return out


def _build_family(key: str, v: Mapping[str, float], prefix: str = ""):
    g = lambda n: v[prefix + n]  # noqa: E731
    if key == "degenerate":
        return Degenerate(g("k0"))
    if key == "bernoulli":
        return Bernoulli(g("p"), g("x0"), g("x1"))
    if key == "gamma":
        return Gamma(g("k"), g("theta"))
    if key == "uniform":
        b = g("uniform_b")
        return Uniform(g("uniform_ratio") * b, b)
    lo = g("lo")
    return TruncGauss(g("mu"), g("sigma"), lo, lo + g("width"))


class _Layout:
    """Maps a unit-cube vector to a DistributionSpec and back."""

    def __init__(self, problem: OptimizationProblem, keys: Sequence[str]):
        self.problem = problem
        self.keys = tuple(keys)
        self.combined = len(keys) > 1
        params = []
        for key in self.keys:
            prefix = f"{key}." if self.combined else ""
            if self.combined:
                params.append(dataclasses.replace(_param(problem, f"coef_{key}"), name=f"coef_{key}"))
            params.extend(_family_params(problem, key, prefix))
        self.params = params
        self.free = [p for p in params if p.hi > p.lo]
        self.fixed = {p.name: p.lo for p in params if p.hi <= p.lo}

    @property
    def dim(self) -> int:
        return len(self.free)

    def natural(self, x: Sequence[float]) -> dict[str, float]:
        v = dict(self.fixed)
        for p, u in zip(self.free, x):
            v[p.name] = p.to_natural(float(u))
        return v

    def unit(self, v: Mapping[str, float]) -> np.ndarray:
        return np.array([min(max(p.to_unit(v[p.name]), 0.0), 1.0) for p in self.free])

    def scaled(self, v: Mapping[str, float], s: float) -> dict[str, float]:
        out = dict(v)
        if self.combined:
            for key in self.keys:
                out[f"coef_{key}"] *= s
        else:
            for name in _FAMILY_PARAMS[self.keys[0]][1]:
                out[name] *= s
        return out

    def in_box(self, v: Mapping[str, float]) -> bool:
        prob = self.problem
        tol = 1e-12
        for p in self.params:
            x = v[p.name]
            if x < p.lo * (1 - tol) - tol or x > p.hi * (1 + tol) + tol:
                return False
        for key in self.keys:
            prefix = f"{key}." if self.combined else ""
            if key == "uniform":
                a = v[prefix + "uniform_ratio"] * v[prefix + "uniform_b"]
                lo, hi = prob.bound("uniform_a")
                if not lo - tol <= a <= hi + tol:
                    return False
            if key == "trunc_gauss":
                lo_b, hi_b = prob.bound("hi")
                hi = v[prefix + "lo"] + v[prefix + "width"]
                if not lo_b - tol <= hi <= hi_b * (1 + tol):
                    return False
        return True

    def spec(self, v: Mapping[str, float]) -> DistributionSpec | None:
        terms = []
        try:
            for key in self.keys:
                prefix = f"{key}." if self.combined else ""
                coef = v[f"coef_{key}"] if self.combined else 1.0
                if coef > 0:
                    terms.append(Term(coef, _build_family(key, v, prefix)))
            if not terms:
                return None
            return DistributionSpec(tuple(terms))
        except SpecError:
            return None

    def active_count(self, v: Mapping[str, float]) -> int:
        if not self.combined:
            return 1
        return sum(1 for key in self.keys if v[f"coef_{key}"] > 0)


def _eps(spec, dq):
    try:
        return privacy.eps_general(spec, dq)
    except (privacy.PrivacyDomainError, OverflowError, ValueError):
        return math.nan


def _project(layout: _Layout, v: Mapping[str, float]):
    """Rescale ``1/b`` so that eps hits the target; None if impossible in the box."""
    prob = layout.problem
    spec = layout.spec(v)
    if spec is None:
        return None
    target = prob.eps_target

    def gap(log_s):
        return _eps(spec, prob.delta_q * math.exp(log_s)) - target

    lo, hi = -1.0, 1.0
    g_lo, g_hi = gap(lo), gap(hi)
    steps = 0
    while g_lo > 0 and steps < 80:
        lo -= 2.0 ** min(steps, 5)
        g_lo = gap(lo)
        steps += 1
    steps = 0
    while g_hi < 0 and steps < 80:
        hi += 2.0 ** min(steps, 5)
        g_hi = gap(hi)
        steps += 1
    if not (math.isfinite(g_lo) and math.isfinite(g_hi)) or g_lo > 0 or g_hi < 0:
        return None
    log_s = sopt.brentq(gap, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    w = layout.scaled(v, math.exp(log_s))
    if not layout.in_box(w):
        return None
    return w


_RHO_LADDER = (1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8)


def _penalized(layout, rho):
    prob = layout.problem

    def f(x):
        v = layout.natural(x)
        if not layout.in_box(v):
            return _BIG
        spec = layout.spec(v)
        if spec is None:
            return _BIG
        eps = _eps(spec, prob.delta_q)
        loss = _loss(spec, prob.metric, prob.gamma)
        if not (math.isfinite(eps) and math.isfinite(loss)):
            return _BIG
        return loss + rho * (eps - prob.eps_target) ** 2

    return f


def _on_surface(layout):
    prob = layout.problem

    def f(x):
        w = _project(layout, layout.natural(x))
        if w is None:
            return _BIG
        loss = _loss(layout.spec(w), prob.metric, prob.gamma)
        return loss if math.isfinite(loss) else _BIG

    return f


def _nelder_mead(f, x0, dim, maxiter, xatol=1e-10, fatol=1e-13):
    if dim == 0:
        return np.asarray(x0, dtype=float)
    res = sopt.minimize(
        f,
        x0,
        method="Nelder-Mead",
        bounds=[(0.0, 1.0)] * dim,
        options={"maxiter": maxiter, "xatol": xatol, "fatol": fatol, "adaptive": dim > 3},
    )
    return res.x


def _run_restart(args):
    problem, keys, x0 = args
    layout = _Layout(problem, keys)
    x = np.asarray(x0, dtype=float)
    # the ladder only needs to land near the surface; projection and the
    # polish stage take care of the last digits
    for rho in _RHO_LADDER:
        x = _nelder_mead(_penalized(layout, rho), x, layout.dim, 100 * max(layout.dim, 1), 1e-7, 1e-10)
    w = _project(layout, layout.natural(x))
    if w is None:
        return x0, layout.natural(x), None, INF
    return x0, w, w, _loss(layout.spec(w), problem.metric, problem.gamma)


def _polish(args):
    problem, keys, v = args
    layout = _Layout(problem, keys)
    x = _nelder_mead(_on_surface(layout), layout.unit(v), layout.dim, 400 * max(layout.dim, 1))
    w = _project(layout, layout.natural(x))
    if w is None:
        return v, _loss(layout.spec(v), problem.metric, problem.gamma)
    loss = _loss(layout.spec(w), problem.metric, problem.gamma)
    old = _loss(layout.spec(v), problem.metric, problem.gamma)
    return (w, loss) if loss <= old else (v, old)


def _map(fn, items, workers):
    if workers and workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _starts(layout: _Layout, n: int, seed: int, extra: Iterable[np.ndarray] = ()) -> list[np.ndarray]:
    starts = [np.asarray(e, dtype=float) for e in extra]
    if layout.dim == 0:
        return starts + [np.zeros(0)]
    sampler = qmc.LatinHypercube(d=layout.dim, seed=np.random.default_rng(seed))
    starts.extend(sampler.random(n))
    return starts


def _solve(problem: OptimizationProblem, keys: Sequence[str], label: str, extra_starts=()) -> OptimizationResult:
    layout = _Layout(problem, keys)
    n = problem.restarts if layout.dim else 1
    starts = _starts(layout, n, problem.seed, extra_starts)
    runs = _map(_run_restart, [(problem, tuple(keys), s) for s in starts], problem.workers)
    log = [
        RestartLog(layout.natural(s), dict(end), loss, proj is not None)
        for s, end, proj, loss in runs
    ]
    feasible = [(loss, proj) for _, _, proj, loss in runs if proj is not None and math.isfinite(loss)]
    if not feasible:
        raise InfeasibleError(
            f"{label}: no restart reached eps={problem.eps_target} within the parameter box"
        )
    # polish the best distinct candidates on the constraint surface
    feasible.sort(key=lambda t: t[0])
    picked = []
    for loss, proj in feasible:
        if all(abs(loss - l2) > 1e-12 for l2, _ in picked):
            picked.append((loss, proj))
        if len(picked) >= problem.polish_top:
            break
    if layout.dim:
        polished = _map(_polish, [(problem, tuple(keys), v) for _, v in picked], problem.workers)
    else:
        polished = [(v, loss) for loss, v in picked]
    return _finalize(problem, layout, polished, label, log)


def _finalize(problem, layout, candidates, label, log):
    scored = []
    for v, _ in candidates:
        spec = layout.spec(v)
        spec = DistributionSpec(spec.active)
        eps = privacy.eps_general(spec, problem.delta_q)
        value = metric_value(spec, problem.metric, problem.gamma)
        scored.append((spec, value, abs(eps - problem.eps_target), layout.active_count(v), eps))
    best = scored[0]
    for cand in scored[1:]:
        if _better(problem.metric, cand[1], best[1], 1e-9):
            best = cand
        elif abs(cand[1] - best[1]) <= 1e-9 and (cand[2], cand[3]) < (best[2], best[3]):
            best = cand
    spec, value, resid, _, eps = best
    if resid > FEASIBILITY_TOL:
        raise InfeasibleError(f"{label}: best point misses eps target by {resid:.3g}")
    base_spec = DistributionSpec.single(Degenerate(problem.eps_target / problem.delta_q))
    baseline = metric_value(base_spec, problem.metric, problem.gamma)
    necc = privacy.necessary_condition(spec, problem.delta_q)
    return OptimizationResult(
        best_spec=spec,
        metric=problem.metric,
        objective=value,
        eps_target=problem.eps_target,
        eps_achieved=eps,
        constraint_residual=resid,
        baseline_objective=baseline,
        improved=_better(problem.metric, value, baseline, 1e-9),
        necessary_condition_holds=necc.holds,
        necessary_margin=necc.margin,
        family=label,
        per_restart_log=log,
    )


def optimize_single(problem: OptimizationProblem, family: str) -> OptimizationResult:
    """Best member of one family meeting the eps target."""
    if family not in problem.families:
        raise ValueError(f"{family!r} is not among the problem's families")
    return _solve(problem, (family,), family)


def optimize_combined(
    problem: OptimizationProblem, single_results: Mapping[str, OptimizationResult] | None = None
) -> OptimizationResult:
    """Best non-negative combination of Gamma, Uniform and truncated Gaussian.

    Optima of the single families (computed here unless supplied) are added
    as extra starting points, embedded with the other coefficients at zero.
    """
    keys = COMBINED_FAMILIES
    layout = _Layout(problem, keys)
    extra = []
    sub = dataclasses.replace(problem, families=tuple(keys), combined=False)
    for key in keys:
        lo, hi = problem.bound(f"coef_{key}")
        if hi <= 0:
            continue
        res = (single_results or {}).get(key)
        if res is None:
            try:
                res = optimize_single(sub, key)
            except InfeasibleError:
                continue
        v = _embed(layout, key, res.best_spec)
        if v is not None:
            extra.append(layout.unit(v))
    return _solve(problem, keys, "combined", extra)


def _embed(layout: _Layout, key: str, spec: DistributionSpec):
    """Natural parameter dict of the combined layout reproducing a one-family spec."""
    v = layout.natural(np.full(layout.dim, 0.5))
    fam = spec.active[0].family
    coef = spec.active[0].coef
    for other in layout.keys:
        v[f"coef_{other}"] = 0.0 if other != key else coef
    p = f"{key}."
    if key == "gamma":
        v[p + "k"], v[p + "theta"] = fam.k, fam.theta
    elif key == "uniform":
        v[p + "uniform_b"], v[p + "uniform_ratio"] = fam.b, fam.a / fam.b
    else:
        v[p + "mu"], v[p + "sigma"], v[p + "lo"] = fam.mu, fam.sigma, fam.lo
        v[p + "width"] = fam.hi - fam.lo
    v.update(layout.fixed)
    return v if layout.in_box(v) else None


def optimize(problem: OptimizationProblem) -> OptimizationResult:
    """Best result over every selected family (and the combination if enabled)."""
    results = {}
    for key in problem.families:
        try:
            results[key] = optimize_single(problem, key)
        except InfeasibleError:
            continue
    if problem.combined and set(COMBINED_FAMILIES) <= set(problem.families):
        try:
            results["combined"] = optimize_combined(problem, results)
        except InfeasibleError:
            pass
    if not results:
        raise InfeasibleError(f"no family reached eps={problem.eps_target}")
    order = list(results)
    best = results[order[0]]
    for key in order[1:]:
        cand = results[key]
        if _better(problem.metric, cand.objective, best.objective, 1e-9):
            best = cand
        elif abs(cand.objective - best.objective) <= 1e-9 and (
            cand.constraint_residual,
            len(cand.best_spec.active),
        ) < (best.constraint_residual, len(best.best_spec.active)):
            best = cand
    return best


def combined_eps_expanded(
    a: Sequence[float], gamma_fam: Gamma, uniform_fam: Uniform, tg_fam: TruncGauss, delta_q: float
) -> float:
    """Guarantee of ``a1 X1 + a2 X2 + a3 X3`` from the written-out numerator
    and three-term product-rule denominator (regression check for the generic
    product-rule path)."""
    a1, a2, a3 = a
    t1, t2, t3 = -a1 * delta_q, -a2 * delta_q, -a3 * delta_q
    numerator = a1 * gamma_fam.k * gamma_fam.theta + a2 * 0.5 * (uniform_fam.a + uniform_fam.b) + a3 * tg_fam.mean()
    m = [math.exp(f.log_mgf(t)) for f, t in ((gamma_fam, t1), (uniform_fam, t2), (tg_fam, t3))]
    d = [math.exp(f.log_mgf_deriv(t)) for f, t in ((gamma_fam, t1), (uniform_fam, t2), (tg_fam, t3))]
    denominator = a1 * d[0] * m[1] * m[2] + a2 * m[0] * d[1] * m[2] + a3 * m[0] * m[1] * d[2]
    return math.log(numerator / denominator)
