"""Independent-trajectory ensembles with seed bookkeeping.

Trajectory ``i`` of an ensemble always uses seed ``base_seed + i``. Results
are collected in seed order, so statistics do not depend on the number of
worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from slowbond.errors import SimulationError, UsageError

__all__ = ["EnsembleStats", "run_ensemble", "seed_blocks", "variance_std_error", "z_score"]


def variance_std_error(x: np.ndarray) -> np.ndarray:
    """Standard error of the unbiased sample variance, from the fourth central moment."""
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[0]
    d = x - x.mean(axis=0)
    s2 = (d**2).sum(axis=0) / (m - 1)
    m4 = (d**4).mean(axis=0)
    v = (m4 - s2**2 * (m - 3) / (m - 1)) / m
    return np.sqrt(np.maximum(v, 0.0))


@dataclass
class EnsembleStats:
    names: list
    m: int
    mean: np.ndarray
    sample_variance: np.ndarray
    std_error: np.ndarray
    variance_std_error: np.ndarray
    seeds: list = field(repr=False, default_factory=list)

    @classmethod
    def from_samples(cls, samples: np.ndarray, names, seeds) -> "EnsembleStats":
        samples = np.asarray(samples, dtype=np.float64)
        m = samples.shape[0]
        if m < 2:
            raise UsageError("statistics need at least two trajectories")
        var = samples.var(axis=0, ddof=1)
        return cls(
            names=list(names), m=m, mean=samples.mean(axis=0), sample_variance=var,
            std_error=np.sqrt(var / m), variance_std_error=variance_std_error(samples),
            seeds=[int(s) for s in seeds],
        )

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UsageError(f"no observable named {name!r}") from None

    def summary(self, name: str) -> dict:
        i = self.index(name)
        return {
            "mean": float(self.mean[i]),
            "std_error": float(self.std_error[i]),
            "variance": float(self.sample_variance[i]),
            "variance_std_error": float(self.variance_std_error[i]),
            "m": self.m,
        }

    def manifest(self) -> dict:
        return {"m": self.m, "first_seed": self.seeds[0], "last_seed": self.seeds[-1]}


def seed_blocks(base_seed: int, sizes) -> list:
    """Disjoint consecutive seed ranges, one per sub-ensemble."""
    blocks, start = [], int(base_seed)
    for size in sizes:
        blocks.append(list(range(start, start + int(size))))
        start += int(size)
    return blocks


def _run_chunk(fn, seeds):
    return [np.asarray(fn(s), dtype=np.float64) for s in seeds]


def run_ensemble(fn, m: int | None = None, base_seed: int | None = None, names=None,
                 workers: int = 1, seeds=None, chunk: int = 64):
    """Evaluate ``fn(seed)`` for every seed and summarise the observables.

    ``fn`` returns a 1-D array of observables. Either ``m`` and ``base_seed``
    or an explicit ``seeds`` list is given. Returns ``(samples, stats)``
    where ``samples`` has one row per trajectory in seed order.
    """
    if seeds is None:
        if m is None or base_seed is None:
            raise UsageError("give m and base_seed, or seeds")
        if m < 2:
            raise UsageError("an ensemble needs m >= 2")
        seeds = list(range(int(base_seed), int(base_seed) + int(m)))
    seeds = [int(s) for s in seeds]
    if len(set(seeds)) != len(seeds):
        raise UsageError("ensemble seeds must be distinct")
    if len(seeds) < 2:
        raise UsageError("an ensemble needs m >= 2")
    pieces = [seeds[i:i + chunk] for i in range(0, len(seeds), chunk)]
    if workers <= 1 or len(pieces) == 1:
        results = [r for p in pieces for r in _run_chunk(fn, p)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [r for rs in pool.map(_run_chunk, [fn] * len(pieces), pieces) for r in rs]
    samples = np.vstack(results)
    if not np.all(np.isfinite(samples)):
        bad = int(np.argmax(~np.all(np.isfinite(samples), axis=1)))
        raise SimulationError(
            f"non-finite observable in trajectory with seed {seeds[bad]}; "
            f"completed seeds {seeds[0]}..{seeds[bad - 1] if bad else 'none'}")
    if names is None:
        names = [f"obs_{i}" for i in range(samples.shape[1])]
    return samples, EnsembleStats.from_samples(samples, names, seeds)


def z_score(estimate: float, target: float, std_error: float) -> float:
    if std_error > 0:
        return (estimate - target) / std_error
    return 0.0 if estimate == target else math.copysign(math.inf, estimate - target)
