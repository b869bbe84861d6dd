"""Exact generator of the process on small tori, used as an oracle for :func:`simulate`.

States are integers ``0..2**n - 1`` with bit ``x`` holding ``eta(x)``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from slowbond.errors import UsageError
from slowbond.lattice import Configuration, SlowBondParams, swap_rate

__all__ = [
    "MAX_GENERATOR_SITES",
    "GeneratorMatrix",
    "build_generator",
    "exact_distribution",
    "bernoulli_product_vector",
    "stationarity_residual",
    "state_index",
    "index_state",
    "uniformize",
]

MAX_GENERATOR_SITES = 12


def state_index(config: Configuration) -> int:
    return int(np.dot(config.occupancy.astype(np.int64), 1 << np.arange(config.sites, dtype=np.int64)))


def index_state(index: int, n: int) -> Configuration:
    return Configuration((index >> np.arange(n)) & 1)


class GeneratorMatrix:
    """Sparse rate matrix ``Q`` with ``Q[eta, eta^{x,x+1}] = a_{x,x+1}`` and zero row sums."""

    def __init__(self, params: SlowBondParams, matrix: sp.csr_matrix):
        self.params = params
        self.matrix = matrix

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def max_exit_rate(self) -> float:
        return float(-self.matrix.diagonal().min())


def build_generator(params: SlowBondParams) -> GeneratorMatrix:
    n = params.n
    if n > MAX_GENERATOR_SITES:
        raise UsageError(
            f"n={n} gives a {2**n}-state generator; exact enumeration is limited to n <= {MAX_GENERATOR_SITES}")
    states = np.arange(2**n, dtype=np.int64)
    rows, cols, vals = [], [], []
    for b in range(n):
        rate = swap_rate(params, b)
        if rate == 0.0:
            continue
        y = (b + 1) % n
        bit_b = (states >> b) & 1
        bit_y = (states >> y) & 1
        moves = bit_b != bit_y
        src = states[moves]
        dst = src ^ ((1 << b) | (1 << y))
        rows.append(src)
        cols.append(dst)
        vals.append(np.full(src.size, rate))
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(2**n, 2**n)).tocsr()
    off.sum_duplicates()
    exit_rates = np.asarray(off.sum(axis=1)).ravel()
    Q = (off - sp.diags(exit_rates)).tocsr()
    return GeneratorMatrix(params, Q)


def uniformize(matvec, vector: np.ndarray, rate: float, time: float, tol: float = 1e-15) -> np.ndarray:
    """``sum_k Poisson(k; rate*time) P^k v`` where ``matvec`` applies ``P = I + Q/rate``.

    The series is truncated once the neglected Poisson tail is below ``tol``.
    """
    lam = rate * time
    v = np.array(vector, dtype=np.float64, copy=True)
    if lam == 0:
        return v
    kmax = int(poisson.isf(tol, lam)) + 1
    kmin = max(0, int(poisson.ppf(tol, lam)) - 1)
    weights = poisson.pmf(np.arange(kmax + 1), lam)
    acc = np.zeros_like(v)
    for k in range(kmax + 1):
        if k >= kmin:
            acc += weights[k] * v
        if k < kmax:
            v = matvec(v)
    return acc


def exact_distribution(gen: GeneratorMatrix, init_dist, micro_time: float) -> np.ndarray:
    """Row vector ``init_dist @ expm(micro_time * Q)`` by uniformization."""
    p = np.asarray(init_dist, dtype=np.float64)
    if p.shape != (gen.dimension,):
        raise UsageError(f"distribution must have length {gen.dimension}")
    if p.min() < 0 or abs(p.sum() - 1) > 1e-10:
        raise UsageError("init_dist must be a probability vector")
    if micro_time < 0:
        raise UsageError("micro_time must be nonnegative")
    rate = gen.max_exit_rate()
    if rate == 0 or micro_time == 0:
        return p.copy()
    QT = gen.matrix.T.tocsr()
    out = uniformize(lambda v: v + (QT @ v) / rate, p, rate, micro_time)
    out[(out < 0) & (out >= -1e-12)] = 0.0
    return out


def bernoulli_product_vector(n: int, rho: float) -> np.ndarray:
    """``nu_rho`` on ``{0,1}**n`` as a probability vector over state indices."""
    if not 0 <= rho <= 1:
        raise UsageError("rho must lie in [0, 1]")
    states = np.arange(2**n, dtype=np.int64)
    k = np.zeros(states.size, dtype=np.int64)
    for x in range(n):
        k += (states >> x) & 1
    return rho**k * (1 - rho) ** (n - k)


def stationarity_residual(gen: GeneratorMatrix, rho: float) -> float:
    """``max |nu_rho Q|``; zero exactly when ``nu_rho`` is invariant."""
    nu = bernoulli_product_vector(gen.n, rho)
    return float(np.abs(gen.matrix.T @ nu).max())
