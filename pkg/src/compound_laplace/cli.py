"""Command-line interface: ``analyze``, ``optimize``, ``run``, ``verify``, ``sweep``.

Settings come from flags, then a ``--config`` file (JSON or TOML), then
built-in defaults. The default seed is read from ``RDP_SEED``.

Exit codes: 0 success, 2 input error, 3 infeasible target, 4 failed
verification.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import io
import json
import math
import os
import sys
from typing import Any, Sequence

import numpy as np

from compound_laplace import optimizer, privacy, utility, verify
from compound_laplace.distributions import DistributionSpec, SpecError
from compound_laplace.mechanism import DataError, QueryJob, load_column, release

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 2, 3, 4
SWEEP_HEADER = ("eps", "baseline_usefulness", "optimized_usefulness", "best_family_mix", "necc_holds")

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class InputError(Exception):
    pass


DEFAULTS: dict[str, Any] = {
    "sensitivity": 1.0,
    "gamma": 1.0,
    "metric": "usefulness",
    "families": ",".join(optimizer.FAMILY_KEYS),
    "restarts": 16,
    "combined": False,
    "workers": 1,
    "query": "count",
    "clip": None,
    "samples": 1_000_000,
    "eps_min": 0.1,
    "eps_max": 10.0,
    "steps": 20,
    "tol": 1e-10,
}


def jsonable(obj: Any) -> Any:
    """Turn reports into JSON-safe data; non-finite floats become strings."""
    if isinstance(obj, DistributionSpec):
        return obj.to_dict()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _dump(data: Any, out: str | None) -> None:
    text = json.dumps(jsonable(data), indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def _load_spec(path: str) -> DistributionSpec:
    data = _read_json(path)
    try:
        return DistributionSpec.from_dict(data)
    except SpecError as exc:
        raise InputError(f"{path}: invalid spec at {exc}") from exc


def _load_config(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    if path.endswith(".toml"):
        try:
            with open(path, "rb") as fh:
                cfg = tomllib.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc.strerror}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise InputError(f"{path}: invalid TOML ({exc})") from exc
    else:
        cfg = _read_json(path)
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: config must be a table/object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _env_seed() -> int:
    raw = os.environ.get("RDP_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"RDP_SEED must be an integer, got {raw!r}") from None


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Merge flags over the config file over defaults."""
    cfg = _load_config(getattr(args, "config", None))
    merged = dict(DEFAULTS)
    merged["seed"] = _env_seed()
    merged.update(cfg)
    merged.update({k: v for k, v in vars(args).items() if v is not None})
    return merged


def _int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise InputError(f"{name} must be an integer")
    try:
        return int(value)
    except ValueError:
        raise InputError(f"{name} must be an integer, got {value!r}") from None


def _float(value: Any, name: str, positive: bool = False) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise InputError(f"{name} must be a number, got {value!r}") from None
    if not math.isfinite(x) or (positive and x <= 0):
        raise InputError(f"{name} must be a {'positive ' if positive else ''}finite number")
    return x


def _families(value: Any) -> tuple[str, ...]:
    items = value.split(",") if isinstance(value, str) else list(value)
    fams = tuple(f.strip() for f in items if f.strip())
    bad = [f for f in fams if f not in optimizer.FAMILY_KEYS]
    if bad or not fams:
        raise InputError(f"families must be drawn from {', '.join(optimizer.FAMILY_KEYS)}")
    return fams


def _problem(cfg: dict[str, Any], eps: float) -> optimizer.OptimizationProblem:
    metric = cfg["metric"]
    if metric not in optimizer.METRICS:
        raise InputError(f"metric must be one of {', '.join(optimizer.METRICS)}")
    try:
        return optimizer.OptimizationProblem(
            eps_target=eps,
            delta_q=_float(cfg["sensitivity"], "sensitivity", True),
            gamma=_float(cfg["gamma"], "gamma", True),
            metric=metric,
            families=_families(cfg["families"]),
            restarts=_int(cfg["restarts"], "restarts"),
            seed=_int(cfg["seed"], "seed"),
            combined=bool(cfg["combined"]),
            bounds={k: tuple(v) for k, v in (cfg.get("bounds") or {}).items()},
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _workers(cfg) -> int:
    return max(1, min(_int(cfg["workers"], "workers"), os.cpu_count() or 1))


# ---------------------------------------------------------------------------
# commands


def cmd_analyze(cfg: dict[str, Any]) -> int:
    spec = _load_spec(cfg["spec_file"])
    dq = _float(cfg["sensitivity"], "sensitivity", True)
    gamma = _float(cfg["gamma"], "gamma", True)
    report = {
        "spec": spec,
        "spec_compact": spec.describe(),
        "privacy": privacy.analyze_privacy(spec, dq),
        "utility": utility.analyze_utility(spec, gamma, _float(cfg["tol"], "tol", True)),
    }
    _dump(report, cfg.get("out"))
    return EXIT_OK


def cmd_optimize(cfg: dict[str, Any]) -> int:
    if cfg.get("epsilon") is None:
        raise InputError("--epsilon is required")
    problem = _problem(cfg, _float(cfg["epsilon"], "epsilon", True))
    problem = dataclasses.replace(problem, workers=_workers(cfg))
    result = optimizer.optimize(problem)
    _dump(result.to_dict(), cfg.get("out"))
    return EXIT_OK


def _clip(value: Any) -> tuple[float, float] | None:
    if value is None:
        return None
    parts = value.split(",") if isinstance(value, str) else list(value)
    if len(parts) != 2:
        raise InputError("clip must be two numbers LO,HI")
    return _float(parts[0], "clip"), _float(parts[1], "clip")


def cmd_run(cfg: dict[str, Any]) -> int:
    for name in ("data", "column"):
        if not cfg.get(name):
            raise InputError(f"--{name} is required")
    data = load_column(cfg["data"], cfg["column"])
    spec = _load_spec(cfg["spec"]) if cfg.get("spec") else None
    eps = cfg.get("epsilon")
    if spec is None and eps is None:
        raise InputError("--epsilon is required unless --spec is given")
    problem = _problem(cfg, _float(eps, "epsilon", True) if eps is not None else 1.0)
    try:
        job = QueryJob(
            data=data,
            query=cfg["query"],
            clip=_clip(cfg.get("clip")),
            eps_target=problem.eps_target,
            gamma=problem.gamma,
            metric=problem.metric,
            seed=problem.seed,
            spec_override=spec,
            families=problem.families,
            restarts=problem.restarts,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    _dump(release(job).public_dict(), cfg.get("out"))
    return EXIT_OK


def _verify_one(args):
    spec, dq, gamma, n, seed = args
    return verify.verify_spec(spec, dq, gamma, n, seed)


def cmd_verify(cfg: dict[str, Any]) -> int:
    if bool(cfg.get("spec")) == bool(cfg.get("corpus")):
        raise InputError("give exactly one of --spec or --corpus")
    specs = verify.regression_corpus() if cfg.get("corpus") else [_load_spec(cfg["spec"])]
    dq = _float(cfg["sensitivity"], "sensitivity", True)
    gamma = _float(cfg["gamma"], "gamma", True)
    n = _int(cfg["samples"], "samples")
    seed = _int(cfg["seed"], "seed")
    if n < 1000:
        raise InputError("samples must be at least 1000")
    jobs = [(spec, dq, gamma, n, seed + i) for i, spec in enumerate(specs)]
    reports = _pool_map(_verify_one, jobs, _workers(cfg))
    for i, rep in enumerate(reports):
        if rep.low_confidence:
            print(
                f"warning: spec {i} ({rep.spec.describe()}): empirical privacy estimate is "
                "low-confidence; tail bins are underpopulated",
                file=sys.stderr,
            )
    out = [dict(jsonable(rep), passed=rep.passed, spec_compact=rep.spec.describe()) for rep in reports]
    _dump({"passed": all(r.passed for r in reports), "reports": out}, cfg.get("out"))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY


def _pool_map(fn, items, workers):
    if workers > 1 and len(items) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def sweep_row(problem: optimizer.OptimizationProblem) -> tuple[float, float, float, str, bool]:
    """One sweep row: plain Laplace against the best distribution found."""
    base = optimizer.baseline_usefulness(problem.eps_target, problem.gamma, problem.delta_q)
    try:
        best = optimizer.optimize(dataclasses.replace(problem, metric="usefulness"))
    except optimizer.InfeasibleError:
        return problem.eps_target, base, math.nan, "infeasible", False
    value = optimizer.metric_value(best.best_spec, "usefulness", problem.gamma)
    return problem.eps_target, base, value, best.best_spec.describe(), best.necessary_condition_holds


def sweep_rows(problem: optimizer.OptimizationProblem, grid: Sequence[float], workers: int = 1):
    problems = [dataclasses.replace(problem, eps_target=float(e)) for e in grid]
    return _pool_map(sweep_row, problems, workers)


def format_sweep(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for eps, base, opt, mix, necc in rows:
        w.writerow([repr(float(eps)), repr(float(base)), repr(float(opt)), mix, "true" if necc else "false"])
    return buf.getvalue()


def cmd_sweep(cfg: dict[str, Any]) -> int:
    lo = _float(cfg["eps_min"], "eps-min", True)
    hi = _float(cfg["eps_max"], "eps-max", True)
    steps = _int(cfg["steps"], "steps")
    if steps < 1 or hi < lo:
        raise InputError("need steps >= 1 and eps-max >= eps-min")
    if cfg["metric"] != "usefulness":
        print("note: sweep rows always report usefulness; --metric is ignored", file=sys.stderr)
    problem = _problem(dict(cfg, metric="usefulness"), lo)
    if "degenerate" not in problem.families:
        problem = dataclasses.replace(problem, families=("degenerate",) + problem.families)
    grid = np.linspace(lo, hi, steps) if steps > 1 else np.array([lo])
    text = format_sweep(sweep_rows(problem, grid, _workers(cfg)))
    if cfg.get("out"):
        with open(cfg["out"], "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="compound-laplace", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--config", help="JSON or TOML file with default settings")
        sp.add_argument("--sensitivity", type=float, help="query sensitivity (default 1)")
        sp.add_argument("--gamma", type=float, help="usefulness error bound (default 1)")
        sp.add_argument("--out", help="write output here instead of stdout")
        if seed:
            sp.add_argument("--seed", type=int, help="random seed (default $RDP_SEED or 0)")

    def search(sp):
        sp.add_argument("--metric", choices=optimizer.METRICS)
        sp.add_argument("--families", help="comma-separated subset of " + ",".join(optimizer.FAMILY_KEYS))
        sp.add_argument("--restarts", type=int)
        sp.add_argument("--combined", action="store_const", const=True, help="also optimize the combination")
        sp.add_argument("--workers", type=int, help="worker processes (default 1)")

    a = sub.add_parser("analyze", help="privacy and utility of a spec file")
    a.add_argument("spec_file")
    a.add_argument("--tol", type=float, help="quadrature tolerance")
    common(a, seed=False)

    o = sub.add_parser("optimize", help="search for the best distribution at a target epsilon")
    o.add_argument("--epsilon", type=float)
    common(o)
    search(o)

    r = sub.add_parser("run", help="release one noisy query answer from a CSV column")
    r.add_argument("--data")
    r.add_argument("--column")
    r.add_argument("--query", choices=("count", "sum", "mean"))
    r.add_argument("--clip", help="LO,HI clamp range for sum/mean")
    r.add_argument("--epsilon", type=float)
    r.add_argument("--spec", help="use this spec file instead of optimizing")
    common(r)
    search(r)

    v = sub.add_parser("verify", help="check the analytic formulas against Monte Carlo oracles")
    v.add_argument("--spec")
    v.add_argument("--corpus", action="store_const", const=True)
    v.add_argument("--samples", type=int)
    v.add_argument("--workers", type=int)
    common(v)

    s = sub.add_parser("sweep", help="baseline vs optimized usefulness over an epsilon grid (CSV)")
    s.add_argument("--eps-min", type=float)
    s.add_argument("--eps-max", type=float)
    s.add_argument("--steps", type=int)
    common(s)
    search(s)
    return p


COMMANDS = {
    "analyze": cmd_analyze,
    "optimize": cmd_optimize,
    "run": cmd_run,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (InputError, DataError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except optimizer.InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
