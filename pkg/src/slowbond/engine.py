"""Exact continuous-time simulation of the slow-bond exclusion process.

The total clock rate ``R = (L - 1) + alpha n**-beta`` does not depend on the
configuration, so the number of clock rings in a time window is Poisson and
the rings form an i.i.d. sequence of bonds: a unit bond with probability
``1/R`` each, the slow bond with probability ``slow_rate/R``. Rings on bonds
whose two sites agree are no-ops; observers only see effective jumps.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numba
import numpy as np

from slowbond.errors import SimulationError, UsageError
from slowbond.lattice import Configuration, SlowBondParams

__all__ = [
    "CurrentObserver",
    "TaggedObserver",
    "TrajectoryRecord",
    "simulate",
    "current_at",
    "rescaled_current",
    "tagged_identity_holds",
    "MAX_EVENTS",
]

MAX_EVENTS = 2**62

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 2.0**-53


@numba.njit(cache=True)
def _run_intervals(occ, slow_rate, counts, rng_state, watch_map, currents,
                   tagged, displacement, snap_occ, snap_cur, snap_tag, store_occ):
    """Event loop. Snapshot ``k`` is taken after the ``k``-th interval."""
    L = occ.size
    n_unit = L - 1
    total = n_unit + slow_rate
    s = rng_state[0]
    n_tag = tagged.size
    tag_at = np.full(L, -1, dtype=np.int64)
    for j in range(n_tag):
        tag_at[tagged[j]] = j
    for k in range(counts.size):
        for _ in range(counts[k]):
            # splitmix64
            s = s + _GOLDEN
            z = s
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            z = z ^ (z >> np.uint64(31))
            x = np.float64(np.int64(z >> np.uint64(11))) * _TO_UNIT * total
            if x < n_unit:
                b = np.int64(x)
            else:
                b = L - 1
            y = b + 1
            if y == L:
                y = 0
            left = occ[b]
            right = occ[y]
            occ[b] = right
            occ[y] = left
            w = watch_map[b]
            if w >= 0:
                currents[w] += np.int64(left) - np.int64(right)
            if n_tag:
                j = tag_at[b]
                if j >= 0 and right == 0:
                    tag_at[b] = -1
                    tag_at[y] = j
                    displacement[j] += 1
                else:
                    j = tag_at[y]
                    if j >= 0 and left == 0:
                        tag_at[y] = -1
                        tag_at[b] = j
                        displacement[j] -= 1
        if store_occ:
            snap_occ[k, :] = occ
        snap_cur[k, :] = currents
        snap_tag[k, :] = displacement
    for x in range(L):
        if tag_at[x] >= 0:
            tagged[tag_at[x]] = x
    rng_state[0] = s


@dataclass
class CurrentObserver:
    """Signed crossing counts for a set of watched bonds."""

    watched_bonds: tuple
    counts: np.ndarray = None

    def __post_init__(self):
        self.watched_bonds = tuple(int(b) for b in self.watched_bonds)
        if len(set(self.watched_bonds)) != len(self.watched_bonds):
            raise UsageError("watched bonds must be distinct")
        if self.counts is None:
            self.counts = np.zeros(len(self.watched_bonds), dtype=np.int64)


@dataclass
class TaggedObserver:
    """Tagged particle: current site and net signed displacement (with winding)."""

    start: int
    position: int = None
    displacement: int = 0

    def __post_init__(self):
        if self.position is None:
            self.position = int(self.start)


def current_at(observer: CurrentObserver, bond: int) -> int:
    if bond not in observer.watched_bonds:
        raise UsageError(f"bond {bond} is not watched")
    return int(observer.counts[observer.watched_bonds.index(bond)])


def rescaled_current(observer: CurrentObserver, bond: int, n: int) -> float:
    """``J / sqrt(n)`` for the central limit experiments."""
    return current_at(observer, bond) / math.sqrt(n)


@dataclass
class TrajectoryRecord:
    params: SlowBondParams
    seed: int
    sites: int
    times: np.ndarray                 # macro times of the snapshots
    configs: np.ndarray | None        # (S, L) uint8, or None if not stored
    currents: np.ndarray              # (S, W) int64
    tagged_displacement: np.ndarray   # (S, T) int64
    final: Configuration
    current: CurrentObserver
    tagged: list = field(default_factory=list)
    events: int = 0
    wall_time: float = 0.0

    def snapshot(self, k: int) -> Configuration:
        if self.configs is None:
            raise UsageError("configurations were not stored for this run")
        return Configuration(self.configs[k])

    def density_bins(self, bins: int = 16) -> np.ndarray:
        """Mean occupation in ``bins`` equal blocks of sites, per snapshot."""
        if self.configs is None:
            raise UsageError("configurations were not stored for this run")
        edges = np.linspace(0, self.sites, bins + 1).round().astype(int)
        sums = np.add.reduceat(self.configs.astype(np.int64), edges[:-1], axis=1)
        return sums / np.diff(edges)

    def to_csv(self, path, bins: int = 16) -> None:
        dens = self.density_bins(bins) if self.configs is not None else None
        header = ["macro_time"]
        if dens is not None:
            header += [f"density_{i}" for i in range(dens.shape[1])]
        header += [f"current_bond_{b}" for b in self.current.watched_bonds]
        header += [f"tagged_{t.start}_displacement" for t in self.tagged]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(self.times):
                row = [repr(float(t))]
                if dens is not None:
                    row += [repr(float(v)) for v in dens[k]]
                row += [int(v) for v in self.currents[k]]
                row += [int(v) for v in self.tagged_displacement[k]]
                w.writerow(row)

    def manifest(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "sites": self.sites,
            "seed": self.seed,
            "events": self.events,
            "wall_time": self.wall_time,
            "snapshot_times": [float(t) for t in self.times],
            "watched_bonds": list(self.current.watched_bonds),
            "tagged_sites": [t.start for t in self.tagged],
        }

    def write_manifest(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)


def _rng_words(seed: int):
    """Independent streams for Poisson counts and for the bond sequence."""
    ss = np.random.SeedSequence(seed)
    count_ss, bond_ss = ss.spawn(2)
    state = bond_ss.generate_state(1, dtype=np.uint64)
    return np.random.default_rng(count_ss), state


def simulate(params: SlowBondParams, init: Configuration, macro_horizon: float, seed: int,
             current_bonds=(), tagged_sites=(), snapshot_times=None,
             store_configs: bool = True) -> TrajectoryRecord:
    """Run the process from ``init`` up to micro time ``macro_horizon * n**2``.

    ``snapshot_times`` are macro times in ``[0, macro_horizon]``; the final
    time is always recorded as the last snapshot. Currents are counted on
    ``current_bonds`` (bond ``b`` joins ``b`` and ``b+1``), positive for jumps
    from ``b`` to ``b+1``. Each site in ``tagged_sites`` must be occupied and
    starts a tagged particle.
    """
    if not macro_horizon >= 0 or not math.isfinite(macro_horizon):
        raise UsageError("macro_horizon must be a finite nonnegative number")
    L = init.sites
    if L < params.n:
        raise UsageError("the torus must have at least n sites")
    times = np.sort(np.asarray([] if snapshot_times is None else snapshot_times, dtype=np.float64))
    if times.size and (times[0] < 0 or times[-1] > macro_horizon):
        raise UsageError("snapshot times must lie in [0, macro_horizon]")
    if times.size == 0 or times[-1] < macro_horizon:
        times = np.append(times, macro_horizon)

    current = CurrentObserver(current_bonds)
    watch_map = np.full(L, -1, dtype=np.int64)
    for i, b in enumerate(current.watched_bonds):
        if not 0 <= b < L:
            raise UsageError(f"watched bond {b} out of range")
        watch_map[b] = i
    tags = [TaggedObserver(int(s)) for s in tagged_sites]
    if len({t.start for t in tags}) != len(tags):
        raise UsageError("tagged sites must be distinct")
    for t in tags:
        if not 0 <= t.start < L or init.occupancy[t.start] != 1:
            raise UsageError(f"tagged site {t.start} is not occupied")

    total_rate = (L - 1) + params.slow_rate
    scale = float(params.n) ** 2
    if total_rate * macro_horizon * scale >= MAX_EVENTS / 16:
        raise SimulationError(
            f"expected event count {total_rate * macro_horizon * scale:.3g} overflows the 64-bit counter")
    count_rng, state = _rng_words(seed)
    gaps = np.diff(np.concatenate(([0.0], times)))
    counts = count_rng.poisson(total_rate * scale * gaps).astype(np.int64)

    occ = init.to_array()
    tagged = np.array([t.start for t in tags], dtype=np.int64)
    disp = np.zeros(len(tags), dtype=np.int64)
    S = times.size
    snap_occ = np.empty((S if store_configs else 0, L), dtype=np.uint8)
    snap_cur = np.empty((S, len(current.watched_bonds)), dtype=np.int64)
    snap_tag = np.empty((S, len(tags)), dtype=np.int64)
    started = time.perf_counter()
    _run_intervals(occ, float(params.slow_rate), counts, state, watch_map, current.counts,
                   tagged, disp, snap_occ, snap_cur, snap_tag, store_configs)
    elapsed = time.perf_counter() - started
    for j, t in enumerate(tags):
        t.position = int(tagged[j])
        t.displacement = int(disp[j])
        if occ[t.position] != 1:
            raise SimulationError(f"tagged particle from site {t.start} lost")
    return TrajectoryRecord(
        params=params, seed=int(seed), sites=L, times=times,
        configs=snap_occ if store_configs else None,
        currents=snap_cur, tagged_displacement=snap_tag,
        final=Configuration(occ), current=current, tagged=tags,
        events=int(counts.sum()), wall_time=elapsed,
    )


def tagged_identity_holds(config: np.ndarray, current: int, displacement: int,
                          start: int, ks=range(1, 11)) -> bool:
    """Check ``{X >= k} <=> {J >= sum_{x=start}^{start+k-1} eta(x)}`` for every ``k``.

    ``current`` is the count on the bond ``(start - 1, start)``. Nonpositive
    ``k`` use the mirrored form ``{X >= k} <=> {J >= -sum_{x=start+k}^{start-1} eta(x)}``.
    """
    L = config.size
    for k in ks:
        if k >= 1:
            idx = (start + np.arange(k)) % L
            rhs = int(config[idx].sum())
        else:
            idx = (start + np.arange(k, 0)) % L
            rhs = -int(config[idx].sum())
        if (displacement >= k) != (current >= rhs):
            return False
    return True
