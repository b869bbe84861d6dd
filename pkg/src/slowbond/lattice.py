"""Configurations, bond rates, initial measures and the empirical measure.

Sites of the discrete torus are labelled ``0..L-1`` and bond ``b`` joins
``b`` and ``b+1 mod L``. The slow bond is always the wrap-around bond
``L-1``, so the macroscopic point of the slow bond is ``0 == 1``. For the
hydrodynamic experiments the torus length ``L`` equals the scaling
parameter ``n``; the infinite-volume experiments use a longer torus
(``L = K n``) while rates and time scales still refer to ``n``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from slowbond.errors import UsageError

__all__ = [
    "SlowBondParams",
    "Configuration",
    "DensityProfile",
    "swap_rate",
    "apply_swap",
    "sample_bernoulli_product",
    "sample_independent",
    "sample_conditioned",
    "empirical_pairing",
    "parse_beta",
    "site_coordinates",
]


def parse_beta(value) -> float:
    """Accept floats, ints and the strings ``"inf"``/``"infinity"``."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "+inf"):
            return math.inf
        try:
            value = float(value)
        except ValueError as exc:
            raise UsageError(f"cannot parse beta from {value!r}") from exc
    return float(value)


@dataclass(frozen=True)
class SlowBondParams:
    """Scaling parameter ``n`` and slow-bond strength ``alpha * n**-beta``."""

    n: int
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise UsageError(f"n must be an integer >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "beta", parse_beta(self.beta))
        if not self.alpha > 0 or not math.isfinite(self.alpha):
            raise UsageError(f"alpha must be a positive real, got {self.alpha}")
        if not self.beta >= 0:
            raise UsageError(f"beta must be >= 0 or inf, got {self.beta}")

    @property
    def slow_rate(self) -> float:
        if math.isinf(self.beta):
            return 0.0
        return self.alpha * self.n ** (-self.beta)

    @property
    def regime(self) -> str:
        """``"sub"`` for beta < 1, ``"critical"`` for beta == 1, else ``"super"``."""
        if self.beta < 1:
            return "sub"
        if self.beta == 1:
            return "critical"
        return "super"

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "alpha": self.alpha,
            "beta": "inf" if math.isinf(self.beta) else self.beta,
        }


@dataclass(frozen=True)
class Configuration:
    """Occupancy vector on the torus; the array is stored read-only."""

    occupancy: np.ndarray = field(repr=False)

    def __post_init__(self):
        occ = np.array(self.occupancy, dtype=np.uint8, copy=True).ravel()
        if occ.size < 2:
            raise UsageError("a configuration needs at least two sites")
        if occ.max(initial=0) > 1:
            raise UsageError("occupancies must be 0 or 1")
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @property
    def sites(self) -> int:
        return self.occupancy.size

    @property
    def particles(self) -> int:
        return int(self.occupancy.sum())

    def __len__(self):
        return self.occupancy.size

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.occupancy, other.occupancy)

    def __hash__(self):
        return hash(self.occupancy.tobytes())

    def __repr__(self):
        if self.sites <= 32:
            return f"Configuration({''.join(map(str, self.occupancy))})"
        return f"Configuration(sites={self.sites}, particles={self.particles})"

    def to_array(self) -> np.ndarray:
        """Writable copy of the occupancy vector."""
        return self.occupancy.copy()


def _check_bond(bond_index: int, sites: int) -> int:
    if int(bond_index) != bond_index or not 0 <= bond_index < sites:
        raise UsageError(f"bond index {bond_index} out of range 0..{sites - 1}")
    return int(bond_index)


def swap_rate(params: SlowBondParams, bond_index: int, sites: int | None = None) -> float:
    """Clock rate of bond ``bond_index`` on a torus with ``sites`` sites.

    ``sites`` defaults to ``params.n``. The slow bond is ``sites - 1``.
    """
    sites = params.n if sites is None else int(sites)
    b = _check_bond(bond_index, sites)
    return params.slow_rate if b == sites - 1 else 1.0


def apply_swap(config: Configuration, bond_index: int) -> Configuration:
    """Exchange the occupations at the two ends of ``bond_index``."""
    b = _check_bond(bond_index, config.sites)
    occ = config.to_array()
    y = (b + 1) % config.sites
    occ[b], occ[y] = occ[y], occ[b]
    return Configuration(occ)


def site_coordinates(sites: int, n: int, centered: bool = False) -> np.ndarray:
    """Macroscopic coordinate ``x/n`` of every site.

    With ``centered=True`` sites in the upper half of the torus get negative
    coordinates so that the slow bond sits between ``-1/n`` and ``0``.
    """
    x = np.arange(sites, dtype=np.float64)
    if centered:
        x = np.where(x >= (sites + 1) // 2, x - sites, x)
    return x / n


class DensityProfile:
    """Initial density ``rho0: [0, 1) -> [0, 1]``.

    Built from a callable or from a table of ``(u, rho0(u))`` pairs that is
    linearly interpolated. Named profiles are parsed by :meth:`parse`.
    """

    def __init__(self, func: Callable | None = None, table: Sequence | None = None, name: str | None = None):
        if (func is None) == (table is None):
            raise UsageError("give exactly one of func or table")
        self._func = func
        self.table = None
        if table is not None:
            arr = np.asarray(table, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
                raise UsageError("profile table must be a list of (u, rho) pairs")
            arr = arr[np.argsort(arr[:, 0], kind="stable")]
            if arr[:, 1].min() < 0 or arr[:, 1].max() > 1:
                raise UsageError("profile values must lie in [0, 1]")
            self.table = arr
        self.name = name

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if self.table is not None:
            vals = np.interp(u, self.table[:, 0], self.table[:, 1])
        else:
            vals = np.broadcast_to(np.asarray(self._func(u), dtype=np.float64), u.shape).copy()
        if vals.size and (vals.min() < -1e-12 or vals.max() > 1 + 1e-12):
            raise UsageError("density profile takes values outside [0, 1]")
        return np.clip(vals, 0.0, 1.0)

    def __repr__(self):
        return f"DensityProfile({self.name or ('table' if self.table is not None else 'callable')})"

    @classmethod
    def constant(cls, rho: float) -> "DensityProfile":
        if not 0 <= rho <= 1:
            raise UsageError("constant density must lie in [0, 1]")
        return cls(lambda u: np.full_like(np.asarray(u, dtype=float), rho), name=f"constant:{rho:g}")

    @classmethod
    def step(cls, left: float, right: float) -> "DensityProfile":
        """``left`` on ``[0, 1/2)``, ``right`` on ``[1/2, 1)``."""
        if not (0 <= left <= 1 and 0 <= right <= 1):
            raise UsageError("step values must lie in [0, 1]")
        return cls(lambda u: np.where(np.asarray(u) < 0.5, left, right), name=f"step:{left:g},{right:g}")

    @classmethod
    def cosine(cls, mean: float, amplitude: float, wavenumber: int = 2) -> "DensityProfile":
        """``mean + amplitude * cos(wavenumber * pi * u)``."""
        if abs(amplitude) > min(mean, 1 - mean) + 1e-15:
            raise UsageError("cosine profile leaves [0, 1]")
        k = wavenumber
        return cls(
            lambda u: mean + amplitude * np.cos(k * np.pi * np.asarray(u)),
            name=f"cos{k}:{mean:g},{amplitude:g}",
        )

    @classmethod
    def parse(cls, text: str) -> "DensityProfile":
        """Parse ``constant:r``, ``step:a,b``, ``cos1:m,a``, ``cos2:m,a`` or a CSV path."""
        kind, _, rest = text.partition(":")
        try:
            args = [float(v) for v in rest.split(",")] if rest else []
        except ValueError as exc:
            raise UsageError(f"bad profile arguments in {text!r}") from exc
        if kind == "constant" and len(args) == 1:
            return cls.constant(args[0])
        if kind == "step" and len(args) == 2:
            return cls.step(*args)
        if kind in ("cos1", "cos2") and len(args) == 2:
            return cls.cosine(args[0], args[1], wavenumber=int(kind[-1]))
        path = Path(text)
        if path.exists():
            return cls.from_csv(path)
        raise UsageError(f"unknown profile {text!r}")

    @classmethod
    def from_csv(cls, path) -> "DensityProfile":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    continue  # header
        return cls(table=rows, name=str(path))

    def to_csv(self, path, points: int = 257) -> None:
        u = self.table[:, 0] if self.table is not None else np.linspace(0, 1, points, endpoint=False)
        vals = self(u)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "rho0"])
            for a, b in zip(u, vals):
                w.writerow([repr(float(a)), repr(float(b))])


def sample_bernoulli_product(profile: DensityProfile, n: int, seed: int, sites: int | None = None) -> Configuration:
    """Independent occupations with ``P[eta(x) = 1] = rho0(x / n)``."""
    sites = n if sites is None else sites
    return sample_independent(profile(np.arange(sites) / n), seed)


def sample_independent(probabilities, seed: int) -> Configuration:
    """Independent occupations with ``P[eta(x) = 1] = probabilities[x]``."""
    p = np.asarray(probabilities, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return Configuration((rng.random(p.size) < p).astype(np.uint8))


def sample_conditioned(rho: float, n: int, tagged_site: int, seed: int) -> Configuration:
    """Bernoulli(rho) product measure on ``n`` sites conditioned on ``tagged_site`` being occupied."""
    if not 0 < rho < 1:
        raise UsageError(f"rho must lie in (0, 1), got {rho}")
    if int(tagged_site) != tagged_site or not 0 <= tagged_site < n:
        raise UsageError(f"tagged site {tagged_site} out of range")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    occ = (rng.random(n) < rho).astype(np.uint8)
    occ[int(tagged_site)] = 1
    return Configuration(occ)


def empirical_pairing(config: Configuration, H: Callable, n: int | None = None) -> float:
    """``(1/n) sum_x H(x/n) eta(x)``; ``n`` defaults to the number of sites."""
    n = config.sites if n is None else n
    u = np.arange(config.sites) / n
    return float(np.dot(np.asarray(H(u), dtype=np.float64), config.occupancy) / n)
