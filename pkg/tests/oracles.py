"""Independent finite-n oracle for the current variance.

Under the stirring construction each particle label performs a random walk
that crosses the slow bond at its own rate, and the labels form a
permutation, so from a product Bernoulli(rho) start

    Var J = chi(rho) * sum_x E[c_x^2]

where ``c_x`` is the net number of crossings of the observed bond by a walk
started at ``x``. The walk is followed on the lifted line (the torus
unrolled), where ``c_x`` is a function of the end point; its law is computed
by uniformization.
"""

import numpy as np
from scipy.stats import poisson


def exact_current_variance(n: int, sites: int, slow_rate: float, site: int, t: float, rho: float) -> float:
    """``Var(J / sqrt(n))`` for the bond ``(site - 1, site)`` at micro time ``t n^2``."""
    T = t * n * n
    spread = int(12 * np.sqrt(2 * T)) + 2
    ys = np.arange(site - sites - spread, site + spread + 1)
    rate = np.ones(ys.size - 1)
    rate[ys[1:] % sites == 0] = slow_rate  # edge (y, y+1) is the slow bond when y+1 = 0 mod sites
    lam = 2.0
    exit_rate = np.r_[rate, 0.0] + np.r_[0.0, rate]
    # net crossings of a walk started in [site - sites, site) and ending at y
    v = (np.floor((ys - site) / sites) + 1.0) ** 2
    kmax = int(lam * T + 12 * np.sqrt(lam * T) + 20)
    kmin = max(0, int(lam * T - 12 * np.sqrt(lam * T)))
    w = poisson.pmf(np.arange(kmax + 1), lam * T)
    acc = np.zeros(ys.size)
    for k in range(kmax + 1):
        if k >= kmin:
            acc += w[k] * v
        nv = (1 - exit_rate / lam) * v
        nv[:-1] += rate / lam * v[1:]
        nv[1:] += rate / lam * v[:-1]
        v = nv
    start = (ys >= site - sites) & (ys < site)
    return rho * (1 - rho) * acc[start].sum() / n
