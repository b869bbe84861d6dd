"""Closed-form variances of the density field, the current and a tagged particle.

The critical-regime current variance contains ``Phi_{2t}(2u + 4 alpha t) *
exp(4 alpha u + 4 alpha**2 t)``. Writing ``z = u/sqrt(t) + 2 alpha sqrt(t)``
gives ``4 alpha u + 4 alpha**2 t = z**2 - u**2/t``, so the product equals
``erfcx(z) * exp(-u**2/t) / 2`` and never overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx

from slowbond.errors import UsageError

__all__ = [
    "Regime",
    "chi",
    "phi",
    "phi_quadrature",
    "current_variance",
    "tagged_variance",
    "tagged_variance_printed",
    "variance_table",
]


@dataclass(frozen=True)
class Regime:
    """``sub`` (beta < 1), ``critical`` (beta = 1, carries alpha) or ``super`` (beta > 1)."""

    kind: str
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in ("sub", "critical", "super"):
            raise UsageError(f"unknown regime {self.kind!r}")
        if self.kind == "critical":
            if self.alpha is None or not self.alpha > 0:
                raise UsageError("the critical regime needs a positive alpha")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.alpha is not None:
            raise UsageError(f"the {self.kind} regime takes no alpha")

    @classmethod
    def from_beta(cls, beta: float, alpha: float = 1.0) -> "Regime":
        if beta < 1:
            return cls("sub")
        if beta == 1:
            return cls("critical", alpha)
        return cls("super")

    @classmethod
    def parse(cls, text: str, alpha: float | None = None) -> "Regime":
        return cls(text, alpha if text == "critical" else None)

    def __str__(self):
        return f"critical({self.alpha:g})" if self.kind == "critical" else self.kind


def chi(rho: float) -> float:
    """Static compressibility ``rho (1 - rho)``."""
    if not 0 <= rho <= 1:
        raise UsageError(f"rho must lie in [0, 1], got {rho}")
    return rho * (1.0 - rho)


def phi(t: float, x):
    """Upper tail ``int_x^inf exp(-v**2/(4t)) / sqrt(4 pi t) dv`` of a N(0, 2t) law."""
    if not t > 0:
        raise UsageError(f"phi needs t > 0, got {t}")
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / (2.0 * math.sqrt(t)))


def phi_quadrature(t: float, x: float) -> float:
    """Adaptive quadrature of the defining integral; an oracle for :func:`phi`."""
    from scipy.integrate import quad

    if not t > 0:
        raise UsageError(f"phi needs t > 0, got {t}")
    dens = lambda v: math.exp(-v * v / (4 * t)) / math.sqrt(4 * math.pi * t)
    s = math.sqrt(2 * t)
    # the bulk of the mass lies within a few standard deviations of 0
    lo, hi = -12 * s, 12 * s
    if x >= hi:
        return quad(dens, x, math.inf, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    start = max(x, lo)
    bulk = quad(dens, start, hi, epsabs=1e-15, epsrel=1e-13, limit=200, points=[0.0] if start < 0 < hi else None)[0]
    tail = quad(dens, hi, math.inf, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
    left = quad(dens, x, lo, epsabs=1e-15, epsrel=1e-13, limit=200)[0] if x < lo else 0.0
    return left + bulk + tail


def _critical_bracket(alpha: float, u: float, t: float) -> float:
    """``(Phi_{2t}(2u + 4 alpha t) e^{4 alpha u + 4 alpha^2 t} - Phi_{2t}(2u)) / (2 alpha)``."""
    st = math.sqrt(t)
    z = u / st + 2.0 * alpha * st
    product = 0.5 * erfcx(z) * math.exp(-u * u / t)
    return (product - 0.5 * erfc(u / st)) / (2.0 * alpha)


def _critical_product_printed(alpha: float, u: float, t: float) -> float:
    st = math.sqrt(t)
    z = u / st + 2.0 * alpha * st
    return 0.5 * erfcx(z) * math.exp(-u * u / t) / (2.0 * alpha)


def _check(rho, t):
    if not t > 0:
        raise UsageError(f"t must be positive, got {t}")
    chi(rho)


def current_variance(regime: Regime, rho: float, u: float, t: float) -> float:
    """Limiting variance of ``J_u(t)``, the rescaled current through macroscopic point ``u``.

    The printed formulas are stated for ``u >= 0``; the slow bond is a mirror
    symmetry of the lattice, so ``|u|`` is used.
    """
    _check(rho, t)
    if not isinstance(regime, Regime):
        raise UsageError("regime must be a Regime")
    u = abs(float(u))
    base = math.sqrt(t / math.pi)
    c2 = 2.0 * chi(rho)
    if regime.kind == "sub":
        return c2 * base
    if regime.kind == "critical":
        return max(float(c2 * (base + _critical_bracket(regime.alpha, u, t))), 0.0)
    if u == 0.0:
        return 0.0
    return max(c2 * (base * -math.expm1(-u * u / t) + 2.0 * u * float(phi(t, 2.0 * u))), 0.0)


def tagged_variance(regime: Regime, rho: float, u: float, t: float) -> float:
    """Variance of the rescaled tagged particle: current variance divided by ``rho**2``."""
    if not 0 < rho < 1:
        raise UsageError(f"tagged particle variance needs rho in (0, 1), got {rho}")
    return current_variance(regime, rho, u, t) / rho**2


def tagged_variance_printed(regime: Regime, rho: float, u: float, t: float) -> float:
    """Tagged variance with the critical bracket missing the ``-Phi_{2t}(2u)`` term.

    Kept only to compare against :func:`tagged_variance`; the two agree for
    the other regimes.
    """
    if regime.kind != "critical":
        return tagged_variance(regime, rho, u, t)
    if not 0 < rho < 1:
        raise UsageError(f"tagged particle variance needs rho in (0, 1), got {rho}")
    _check(rho, t)
    u = abs(float(u))
    return float(2.0 * chi(rho) / rho**2 * (math.sqrt(t / math.pi) + _critical_product_printed(regime.alpha, u, t)))


def variance_table(regimes, rhos, us, ts):
    """Rows ``(regime, alpha, rho, u, t, current_variance, tagged_variance)``."""
    rows = []
    for reg in regimes:
        for rho in rhos:
            for u in us:
                for t in ts:
                    cv = current_variance(reg, rho, u, t)
                    tv = cv / rho**2 if 0 < rho < 1 else float("nan")
                    rows.append((reg.kind, reg.alpha if reg.alpha is not None else "", rho, u, t, cv, tv))
    return rows
