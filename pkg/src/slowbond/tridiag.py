"""Tridiagonal and cyclic-tridiagonal solvers (Thomas algorithm + Sherman-Morrison)."""

import numba
import numpy as np

__all__ = ["thomas", "CyclicTridiagonal"]


@numba.njit(cache=True)
def _thomas(a, b, c, d):
    n = b.size
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / m
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m
    x = np.empty(n)
    x[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def thomas(a, b, c, d):
    """Solve a tridiagonal system.

    ``a[i]`` multiplies ``x[i-1]`` (``a[0]`` unused), ``b`` is the diagonal and
    ``c[i]`` multiplies ``x[i+1]`` (``c[-1]`` unused). No pivoting, so the
    matrix should be diagonally dominant.
    """
    a, b, c, d = (np.ascontiguousarray(v, dtype=np.float64) for v in (a, b, c, d))
    if not (a.size == b.size == c.size == d.size):
        raise ValueError("a, b, c and d must have the same length")
    return _thomas(a, b, c, d)


class CyclicTridiagonal:
    """Tridiagonal matrix plus the two corner entries, solved in O(n).

    ``top`` is ``A[0, n-1]`` and ``bottom`` is ``A[n-1, 0]``. The corners are
    moved into a rank-one update and removed with the Sherman-Morrison
    formula; the correction vector is computed once at construction.
    """

    def __init__(self, a, b, c, top=0.0, bottom=0.0):
        self.a = np.ascontiguousarray(a, dtype=np.float64)
        self.b = np.array(b, dtype=np.float64)
        self.c = np.ascontiguousarray(c, dtype=np.float64)
        self.top = float(top)
        self.bottom = float(bottom)
        n = self.b.size
        self.cyclic = self.top != 0.0 or self.bottom != 0.0
        if not self.cyclic:
            return
        self.gamma = -self.b[0] if self.b[0] != 0 else 1.0
        self.bb = self.b.copy()
        self.bb[0] -= self.gamma
        self.bb[-1] -= self.bottom * self.top / self.gamma
        u = np.zeros(n)
        u[0] = self.gamma
        u[-1] = self.bottom
        self.z = _thomas(self.a, self.bb, self.c, u)
        self.denom = 1.0 + self.z[0] + self.top * self.z[-1] / self.gamma

    def solve(self, rhs):
        rhs = np.ascontiguousarray(rhs, dtype=np.float64)
        if not self.cyclic:
            return _thomas(self.a, self.b, self.c, rhs)
        x = _thomas(self.a, self.bb, self.c, rhs)
        fact = (x[0] + self.top * x[-1] / self.gamma) / self.denom
        return x - fact * self.z

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        y = self.b * x
        y[1:] += self.a[1:] * x[:-1]
        y[:-1] += self.c[:-1] * x[1:]
        y[0] += self.top * x[-1]
        y[-1] += self.bottom * x[0]
        return y

    def toarray(self):
        n = self.b.size
        A = np.diag(self.b) + np.diag(self.a[1:], -1) + np.diag(self.c[:-1], 1)
        A[0, n - 1] += self.top
        A[n - 1, 0] += self.bottom
        return A
