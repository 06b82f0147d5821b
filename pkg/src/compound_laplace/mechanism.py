"""End-to-end release of a scalar query answer through the compound mechanism.

A release computes the query sensitivity, obtains a distribution for
``1/b`` (optimized, or given explicitly), draws one ``1/b`` and then one
Laplace variate of scale ``b``. Each release uses its own generator seeded
from ``(seed, index)``, so batches are reproducible in any order.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime
import math
import os
from typing import Any, Sequence

import numpy as np

from compound_laplace.distributions import DistributionSpec, sample_inv_b
from compound_laplace.optimizer import OptimizationProblem, optimize
from compound_laplace.privacy import eps_general

QUERIES = ("count", "sum", "mean")


class DataError(ValueError):
    """The dataset could not be read or does not fit the query."""


def load_column(path: str | os.PathLike, column: str) -> np.ndarray:
    """Read one numeric column from a CSV file with a header row."""
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise DataError(f"column {column!r} not found in {path}")
        values = []
        for line, row in enumerate(reader, start=2):
            cell = (row.get(column) or "").strip()
            try:
                x = float(cell)
            except ValueError:
                raise DataError(f"{path}:{line}: non-numeric value {cell!r} in column {column!r}") from None
            if not math.isfinite(x):
                raise DataError(f"{path}:{line}: non-finite value {cell!r} in column {column!r}")
            values.append(x)
    return np.asarray(values, dtype=float)


@dataclasses.dataclass(frozen=True)
class QueryJob:
    data: np.ndarray
    query: str = "count"
    clip: tuple[float, float] | None = None
    eps_target: float = 1.0
    gamma: float = 1.0
    metric: str = "usefulness"
    seed: int = 0
    spec_override: DistributionSpec | None = None
    families: tuple[str, ...] = ("degenerate", "gamma", "uniform", "trunc_gauss", "bernoulli")
    restarts: int = 16

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=float).ravel())
        if self.query not in QUERIES:
            raise ValueError(f"query must be one of {QUERIES}")
        if self.query != "count":
            if self.clip is None:
                raise ValueError(f"{self.query} query needs clip bounds")
            lo, hi = self.clip
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError("clip bounds must be finite with lo < hi")
        if not self.eps_target > 0:
            raise ValueError("eps_target must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


def sensitivity(job: QueryJob) -> float:
    """L1 sensitivity of the job's query."""
    if job.query == "count":
        return 1.0
    lo, hi = job.clip
    if job.query == "sum":
        return hi - lo
    if job.data.size == 0:
        raise DataError("mean of an empty dataset")
    return (hi - lo) / job.data.size


def true_value(job: QueryJob) -> float:
    if job.query == "count":
        return float(job.data.size)
    clipped = np.clip(job.data, *job.clip)
    if job.query == "sum":
        return float(clipped.sum())
    if clipped.size == 0:
        raise DataError("mean of an empty dataset")
    return float(clipped.mean())


@dataclasses.dataclass(frozen=True)
class ReleaseRecord:
    true_value: float
    noisy_value: float
    spec_used: DistributionSpec
    eps_certified: float
    b_r_drawn: float
    seed: int
    index: int
    timestamp: str

    def public_dict(self) -> dict[str, Any]:
        """What a release may disclose: the true value is left out."""
        return {
            "noisy_value": self.noisy_value,
            "eps_certified": self.eps_certified,
            "spec_used": self.spec_used.to_dict(),
            "seed": self.seed,
        }


def resolve_spec(job: QueryJob, delta_q: float) -> DistributionSpec:
    if job.spec_override is not None:
        return job.spec_override
    problem = OptimizationProblem(
        eps_target=job.eps_target,
        delta_q=delta_q,
        gamma=job.gamma,
        metric=job.metric,
        families=job.families,
        restarts=job.restarts,
        seed=job.seed,
    )
    return optimize(problem).best_spec


def _draw(spec: DistributionSpec, seed: int, index: int) -> tuple[float, float]:
    rng = np.random.default_rng([seed, index])
    inv_b = float(sample_inv_b(spec, rng))
    b = 1.0 / inv_b
    return b, float(rng.laplace(0.0, b))


def release_many(job: QueryJob, count: int, start: int = 0) -> list[ReleaseRecord]:
    """``count`` independent releases of the same job (indices ``start...``).

    The distribution is resolved once; every release draws its own ``b``.
    """
    dq = sensitivity(job)
    value = true_value(job)
    spec = resolve_spec(job, dq)
    eps = eps_general(spec, dq)
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    out = []
    for index in range(start, start + count):
        b, noise = _draw(spec, job.seed, index)
        out.append(ReleaseRecord(value, value + noise, spec, eps, b, job.seed, index, stamp))
    return out


def release(job: QueryJob, index: int = 0) -> ReleaseRecord:
    """One noisy answer to ``job``."""
    return release_many(job, 1, start=index)[0]


def noise_draws(spec: DistributionSpec, seed: int, indices: Sequence[int]) -> np.ndarray:
    """The additive noise of the releases with the given indices."""
    return np.array([_draw(spec, seed, i)[1] for i in indices])
