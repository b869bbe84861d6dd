"""Two-sided test functions for the fluctuation field around the slow bond.

Each side is a Gaussian-modulated cubic ``(a + b u + c u^2 + d u^3) exp(-u^2)``
with its own coefficients; the right branch is used at ``u = 0``. Derivatives
of order 1..3 agree across 0 (higher orders cannot all agree for this
family when the function jumps), and the regime adds one condition at 0:

* sub: ``H(0-) = H(0+)``
* critical: ``H'(0) = alpha (H(0+) - H(0-))``
* super: ``H'(0) = 0``
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad

from slowbond.closed_forms import Regime, chi
from slowbond.errors import UsageError

__all__ = [
    "SBetaFunction",
    "SBetaConstraintError",
    "solve_left_branch",
    "make_test_family",
    "y0_variance",
    "covariance",
    "norm_2beta_sq",
    "nabla_beta",
    "delta_beta",
]

TOL = 1e-10
MATCHED_ORDERS = (1, 2, 3)


class SBetaConstraintError(UsageError):
    """Coefficients violate the matching or boundary conditions at 0."""


def _deriv_polys(coeffs, order):
    """Polynomials ``q_k`` with ``d^k/du^k [p(u) e^{-u^2}] = q_k(u) e^{-u^2}``."""
    q = Polynomial(coeffs)
    out = [q]
    two_u = Polynomial([0.0, 2.0])
    for _ in range(order):
        q = q.deriv() - two_u * q
        out.append(q)
    return out


class SBetaFunction:
    def __init__(self, left, right, regime: Regime, name: str = ""):
        self.left = np.asarray(left, dtype=np.float64)
        self.right = np.asarray(right, dtype=np.float64)
        if self.left.shape != (4,) or self.right.shape != (4,):
            raise UsageError("each branch needs four cubic coefficients")
        self.regime = regime
        self.name = name
        self._left = _deriv_polys(self.left, 4)
        self._right = _deriv_polys(self.right, 4)
        self.check()

    def __repr__(self):
        return f"SBetaFunction({self.name or 'unnamed'}, {self.regime})"

    def derivative(self, u, k: int = 0):
        u = np.asarray(u, dtype=np.float64)
        g = np.exp(-u * u)
        return np.where(u >= 0, self._right[k](u), self._left[k](u)) * g

    def __call__(self, u):
        return self.derivative(u, 0)

    def at_zero(self, k: int = 0, side: str = "+") -> float:
        polys = self._right if side == "+" else self._left
        return float(polys[k](0.0))

    @property
    def jump(self) -> float:
        """``H(0+) - H(0-)``."""
        return self.at_zero(0, "+") - self.at_zero(0, "-")

    def constraint_residuals(self) -> dict:
        res = {f"match_{k}": abs(self.at_zero(k, "+") - self.at_zero(k, "-")) for k in MATCHED_ORDERS}
        kind = self.regime.kind
        if kind == "sub":
            res["regime"] = abs(self.jump)
        elif kind == "critical":
            res["regime"] = abs(self.at_zero(1, "+") - self.regime.alpha * self.jump)
        else:
            res["regime"] = abs(self.at_zero(1, "+"))
        return res

    def check(self, tol: float = TOL) -> None:
        bad = {k: v for k, v in self.constraint_residuals().items() if v > tol}
        if bad:
            raise SBetaConstraintError(f"{self.name or 'test function'} violates {bad} for regime {self.regime}")

    def l2_sq(self) -> float:
        return _integrate(lambda x: self(x) ** 2)

    def inner(self, other: "SBetaFunction") -> float:
        return _integrate(lambda x: self(x) * other(x))


def _integrate(f) -> float:
    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=200)
    return quad(f, -math.inf, 0.0, **opts)[0] + quad(f, 0.0, math.inf, **opts)[0]


def solve_left_branch(regime: Regime, right, jump: float | None = None) -> np.ndarray:
    """Left coefficients completing ``right`` to a member of the regime's space.

    Orders 1..3 are matched across 0 and the regime condition closes the
    4x4 linear system. ``jump`` (``H(0+) - H(0-)``) is needed only in the
    super regime, where the condition at 0 constrains ``right`` instead.
    """
    a, b, c, d = (float(v) for v in right)
    # value, first, second/2, third/6 of p e^{-u^2} at 0: a, b, c - a, d - b
    A = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0, 1.0],
        [1.0, 0.0, 0.0, 0.0],
    ])
    rhs = np.array([b, c - a, d - b, 0.0])
    if regime.kind == "sub":
        if jump not in (None, 0, 0.0):
            raise SBetaConstraintError("the sub regime admits no jump at 0")
        rhs[3] = a
    elif regime.kind == "critical":
        if jump is not None and abs(b - regime.alpha * jump) > TOL:
            raise SBetaConstraintError("requested jump is inconsistent with H'(0) = alpha * jump")
        rhs[3] = a - b / regime.alpha
    else:
        if abs(b) > TOL:
            raise SBetaConstraintError("the super regime needs H'(0) = 0")
        rhs[3] = a - (0.0 if jump is None else float(jump))
    left = np.linalg.solve(A, rhs)
    if np.abs(A @ left - rhs).max() > TOL:
        raise SBetaConstraintError("linear solve residual above tolerance")
    return left


def make_test_family(regime: Regime) -> list:
    """Linearly independent members of the regime's test space.

    Always: ``e^{-u^2}``, ``u^2 e^{-u^2}`` and ``u^3 e^{-u^2}`` (smooth, zero
    slope at 0). Sub adds ``u e^{-u^2}``; critical adds a jump of 1 with slope
    ``alpha``; super adds an odd jump ``sign(u) (1 + u^2) e^{-u^2} / 2``.
    """
    entries = [
        ("gauss", (1.0, 0.0, 0.0, 0.0), None),
        ("u2_gauss", (0.0, 0.0, 1.0, 0.0), None),
        ("u3_gauss", (0.0, 0.0, 0.0, 1.0), None),
    ]
    if regime.kind == "sub":
        entries.append(("u_gauss", (0.0, 1.0, 0.0, 0.0), None))
    elif regime.kind == "critical":
        entries.append(("jump_slope", (0.5, regime.alpha, 0.5, 0.0), 1.0))
    else:
        entries.append(("jump", (0.5, 0.0, 0.5, 0.0), 1.0))
    family = []
    for name, right, jump in entries:
        left = solve_left_branch(regime, right, jump)
        family.append(SBetaFunction(left, right, regime, name=name))
    return family


def y0_variance(H: SBetaFunction, rho: float) -> float:
    """``chi(rho) * ||H||_2^2``, the variance of the initial field."""
    return chi(rho) * H.l2_sq()


def covariance(G: SBetaFunction, H: SBetaFunction, rho: float) -> float:
    """``chi(rho) * int G H``."""
    return chi(rho) * G.inner(H)


def norm_2beta_sq(H: SBetaFunction, regime: Regime) -> float:
    """``||H||_2^2`` plus ``H(0+)^2`` in the critical regime."""
    extra = H.at_zero(0, "+") ** 2 if regime.kind == "critical" else 0.0
    return H.l2_sq() + extra


class _DerivativeView:
    """A derivative of an :class:`SBetaFunction`, evaluated with the right limit at 0."""

    def __init__(self, base: SBetaFunction, order: int):
        self.base = base
        self.order = order

    def __call__(self, u):
        return self.base.derivative(u, self.order)

    def at_zero(self, k: int = 0, side: str = "+") -> float:
        return self.base.at_zero(self.order + k, side)

    def l2_sq(self) -> float:
        return _integrate(lambda x: self(x) ** 2)


def nabla_beta(H: SBetaFunction) -> _DerivativeView:
    return _DerivativeView(H, 1)


def delta_beta(H: SBetaFunction) -> _DerivativeView:
    return _DerivativeView(H, 2)


def norm_2beta_sq_of(view, regime: Regime) -> float:
    """:func:`norm_2beta_sq` for derivative views (``||nabla_beta H||_{2,beta}^2``)."""
    extra = view.at_zero(0, "+") ** 2 if regime.kind == "critical" else 0.0
    return view.l2_sq() + extra
