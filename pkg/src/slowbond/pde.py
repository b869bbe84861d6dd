"""Finite-difference solvers for the periodic, Robin and Neumann heat equations.

All solutions live on the closed grid ``u_j = j/M, j = 0..M``. For the
periodic problem the value at ``u = 1`` repeats the value at ``u = 0``. The
Robin condition ``d_u rho(0) = d_u rho(1) = alpha (rho(0) - rho(1))`` couples
the two ends of the cut torus; with ghost nodes this gives a tridiagonal
matrix with two corner entries, which :class:`CyclicTridiagonal` handles.

Time stepping is Crank-Nicolson. When ``dt / h**2 > 1/2`` a few backward
Euler half-steps are taken first so that the high-frequency content of
rough initial data is damped before Crank-Nicolson starts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from slowbond.errors import SimulationError, UsageError
from slowbond.lattice import DensityProfile
from slowbond.tridiag import CyclicTridiagonal

MAX_PRINCIPLE_TOL = 1e-9

__all__ = [
    "GridSolution",
    "TestFunctionCT",
    "control_volume_average",
    "solve_periodic",
    "solve_robin",
    "solve_neumann",
    "solve_for_regime",
    "weak_residual",
    "l2_spacetime_distance",
    "phase_transition_curve",
    "trapezoid_weights",
]


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    w = np.zeros_like(x)
    if x.size < 2:
        return w
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


@dataclass
class GridSolution:
    u: np.ndarray          # (M+1,) closed grid on [0, 1]
    times: np.ndarray      # (S,) saved times
    values: np.ndarray     # (S, M+1)
    bc: str                # "periodic", "robin" or "neumann"
    dt: float
    alpha: float | None = None

    @property
    def M(self) -> int:
        return self.u.size - 1

    @property
    def bc_tag(self) -> str:
        return f"robin({self.alpha:g})" if self.bc == "robin" else self.bc

    def mass(self) -> np.ndarray:
        """Trapezoidal mass of every saved profile."""
        return self.values @ trapezoid_weights(self.u)

    def at(self, t: float) -> np.ndarray:
        k = self.time_index(t)
        return self.values[k]

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise UsageError(f"time {t} is not a saved time of this solution")
        return k

    def pairing(self, H: Callable, t: float) -> float:
        """``int_0^1 H(u) rho(t, u) du`` by the trapezoid rule."""
        return float(np.dot(trapezoid_weights(self.u), np.asarray(H(self.u), dtype=float) * self.at(t)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [repr(float(x)) for x in self.u])
            for t, row in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


@dataclass
class TestFunctionCT:
    """Test function ``H(t, u)`` with its derivatives ``d_t H``, ``d_u H``, ``d_uu H``."""

    __test__ = False  # not a pytest class

    H: Callable
    dt_H: Callable
    du_H: Callable
    duu_H: Callable
    name: str = ""

    @classmethod
    def static(cls, f, df, d2f, name=""):
        """Time-independent test function from ``f(u)`` and its derivatives."""
        zero = lambda t, u: np.zeros_like(np.asarray(u, dtype=float))
        return cls(lambda t, u: f(u), zero, lambda t, u: df(u), lambda t, u: d2f(u), name)

    def derivative_error(self, t: float, u: np.ndarray, h: float = 1e-4) -> float:
        """Largest gap between the supplied derivatives and centred differences."""
        u = np.asarray(u, dtype=float)
        e1 = np.abs((self.H(t, u + h) - self.H(t, u - h)) / (2 * h) - self.du_H(t, u)).max()
        e2 = np.abs((self.H(t, u + h) - 2 * self.H(t, u) + self.H(t, u - h)) / h**2 - self.duu_H(t, u)).max()
        e3 = np.abs((self.H(t + h, u) - self.H(t - h, u)) / (2 * h) - self.dt_H(t, u)).max()
        return float(max(e1, e2, e3))


def control_volume_average(rho0, M: int, bc: str, points: int = 8) -> np.ndarray:
    """Initial nodal values: mean of ``rho0`` over ``[u_i - h/2, u_i + h/2]``.

    The end nodes of the interval get half volumes; on the torus the volume
    of node 0 wraps around. A jump placed on a node is then split evenly and
    the discrete mass equals the exact one for piecewise constant data.
    """
    h = 1.0 / M
    u = _grid(M)
    offsets = (np.arange(points) + 0.5) / points - 0.5
    samples = u[:, None] + h * offsets[None, :]
    if bc == "periodic":
        vals = np.asarray(rho0(np.mod(samples, 1.0)), dtype=np.float64).mean(axis=1)
        vals[-1] = vals[0]
        return vals
    vals = np.asarray(rho0(np.clip(samples, 0.0, 1.0)), dtype=np.float64)
    out = vals.mean(axis=1)
    half = offsets >= 0
    out[0] = vals[0, half].mean()
    out[-1] = vals[-1, ~half].mean()
    return out


def _grid(M: int) -> np.ndarray:
    if int(M) != M or M < 4:
        raise UsageError("M must be an integer >= 4")
    return np.linspace(0.0, 1.0, int(M) + 1)


def _laplacian(M: int, bc: str, alpha: float = 0.0):
    """Diagonals and corners of ``h**2`` times the discrete Laplacian."""
    h = 1.0 / M
    if bc == "periodic":
        N = M
        a = np.ones(N)
        c = np.ones(N)
        b = np.full(N, -2.0)
        return a, b, c, 1.0, 1.0
    N = M + 1
    a = np.ones(N)
    c = np.ones(N)
    b = np.full(N, -2.0)
    c[0] = 2.0
    a[-1] = 2.0
    top = bottom = 0.0
    if bc == "robin":
        b[0] -= 2 * h * alpha
        b[-1] -= 2 * h * alpha
        top = 2 * h * alpha
        bottom = 2 * h * alpha
    return a, b, c, top, bottom


def _solve(rho0: DensityProfile, M: int, T: float, dt: float, bc: str, alpha: float = 0.0,
           scheme: str = "cn", save_every: int = 1) -> GridSolution:
    u = _grid(M)
    if not T >= 0 or not dt > 0:
        raise UsageError("need T >= 0 and dt > 0")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise UsageError("T must be an integer multiple of dt")
    h = 1.0 / M
    r = dt / h**2
    a, b, c, top, bottom = _laplacian(M, bc, alpha)
    N = b.size
    if scheme == "explicit":
        if r * max(-b.min(), 2.0) > 1.0 + 1e-12:
            raise UsageError(f"explicit step dt={dt} unstable for M={M}; need dt <= {h**2 / max(-b.min(), 2.0):.3g}")
    elif scheme != "cn":
        raise UsageError(f"unknown scheme {scheme!r}")

    lap = CyclicTridiagonal(a, b, c, top, bottom)
    # I - (dt/2) A: Crank-Nicolson left side, also backward Euler with step dt/2
    implicit = CyclicTridiagonal(-0.5 * r * a, 1.0 - 0.5 * r * b, -0.5 * r * c, -0.5 * r * top, -0.5 * r * bottom)

    x = control_volume_average(rho0, M, bc)[:N]
    if scheme == "cn" and r > 0.5:
        damping = math.log1p(2 * r)
        startup = min(2 * steps, 2 * math.ceil(15.0 / damping))
    else:
        startup = 0

    def full(v):
        return np.append(v, v[0]) if bc == "periodic" else v

    saved_t = [0.0]
    saved = [full(x).copy()]
    half = 0
    for k in range(1, steps + 1):
        if scheme == "explicit":
            x = x + r * lap.matvec(x)
        elif half < startup:
            x = implicit.solve(x)
            x = implicit.solve(x)
            half += 2
        else:
            x = implicit.solve(x + 0.5 * r * lap.matvec(x))
        if k % save_every == 0 or k == steps:
            saved_t.append(k * dt)
            saved.append(full(x).copy())
    values = np.array(saved)
    if values.min() < -MAX_PRINCIPLE_TOL or values.max() > 1.0 + MAX_PRINCIPLE_TOL:
        raise SimulationError(f"solution left [0, 1]: range [{values.min():.3g}, {values.max():.3g}]")
    return GridSolution(u=u, times=np.array(saved_t), values=values, bc=bc, dt=dt,
                        alpha=alpha if bc == "robin" else None)


def solve_periodic(rho0, M: int, T: float, dt: float, scheme: str = "cn", save_every: int = 1) -> GridSolution:
    """Heat equation on the torus."""
    return _solve(rho0, M, T, dt, "periodic", scheme=scheme, save_every=save_every)


def solve_robin(rho0, alpha: float, M: int, T: float, dt: float, scheme: str = "cn",
                save_every: int = 1) -> GridSolution:
    """Heat equation on (0, 1) with ``d_u rho(0) = d_u rho(1) = alpha (rho(0) - rho(1))``."""
    if not alpha > 0:
        raise UsageError(f"alpha must be positive, got {alpha}")
    return _solve(rho0, M, T, dt, "robin", alpha=float(alpha), scheme=scheme, save_every=save_every)


def solve_neumann(rho0, M: int, T: float, dt: float, scheme: str = "cn", save_every: int = 1) -> GridSolution:
    """Heat equation on (0, 1) with zero flux at both ends."""
    return _solve(rho0, M, T, dt, "neumann", scheme=scheme, save_every=save_every)


def solve_for_regime(regime: str, rho0, M: int, T: float, dt: float, alpha: float = 1.0, **kw) -> GridSolution:
    """Hydrodynamic equation of a regime: ``sub`` periodic, ``critical`` Robin, ``super`` Neumann."""
    if regime == "sub":
        return solve_periodic(rho0, M, T, dt, **kw)
    if regime == "critical":
        return solve_robin(rho0, alpha, M, T, dt, **kw)
    if regime == "super":
        return solve_neumann(rho0, M, T, dt, **kw)
    raise UsageError(f"unknown regime {regime!r}")


def weak_residual(sol: GridSolution, H: TestFunctionCT, t: float) -> float:
    """Absolute residual of the integral identity defining a weak solution, at time ``t``.

    Space and time integrals use the trapezoid rule on the solution grid. The
    boundary terms are included for Robin (flux and coupling terms) and
    Neumann (flux terms) solutions; periodic solutions need a periodic ``H``.
    """
    k = sol.time_index(t)
    u = sol.u
    wu = trapezoid_weights(u)
    ts = sol.times[: k + 1]
    wt = trapezoid_weights(ts)
    rho = sol.values[: k + 1]
    if sol.bc == "periodic":
        for s in (0.0, float(ts[-1])):
            H0, H1 = H.H(s, np.array([0.0, 1.0]))
            d0, d1 = H.du_H(s, np.array([0.0, 1.0]))
            if abs(H0 - H1) > 1e-8 or abs(d0 - d1) > 1e-8:
                raise UsageError("periodic solutions need a periodic test function")
    Hgrid = np.array([H.H(s, u) for s in ts])
    inner = np.array([H.dt_H(s, u) + H.duu_H(s, u) for s in ts])
    res = wu @ (rho[-1] * Hgrid[-1]) - wu @ (rho[0] * Hgrid[0])
    res -= wt @ ((rho * inner) @ wu)
    if sol.bc in ("robin", "neumann"):
        ends = np.array([0.0, 1.0])
        dH = np.array([H.du_H(s, ends) for s in ts])
        flux = rho[:, 0] * dH[:, 0] - rho[:, -1] * dH[:, 1]
        res -= wt @ flux
        if sol.bc == "robin":
            Hends = np.array([H.H(s, ends) for s in ts])
            res += wt @ (sol.alpha * (rho[:, 0] - rho[:, -1]) * (Hends[:, 0] - Hends[:, 1]))
    return float(abs(res))


def l2_spacetime_distance(a: GridSolution, b: GridSolution) -> float:
    """``sqrt(int int (a - b)**2 du dt)`` with the trapezoid rule in both variables."""
    if a.u.shape != b.u.shape or not np.allclose(a.u, b.u) or a.times.shape != b.times.shape \
            or not np.allclose(a.times, b.times):
        raise UsageError("solutions are on different grids")
    sq = (a.values - b.values) ** 2
    return float(math.sqrt(max(trapezoid_weights(a.times) @ (sq @ trapezoid_weights(a.u)), 0.0)))


def phase_transition_curve(rho0, alphas, M: int, T: float, dt: float, save_every: int = 1):
    """Robin solutions along ``alphas`` compared with the Neumann and periodic ones.

    Returns ``(rows, reference)`` where each row is ``(alpha, dist_neumann,
    dist_periodic)`` and ``reference`` is the periodic-to-Neumann distance.
    """
    alphas = [float(a) for a in alphas]
    if any(not a > 0 for a in alphas):
        raise UsageError("alphas must be positive")
    neu = solve_neumann(rho0, M, T, dt, save_every=save_every)
    per = solve_periodic(rho0, M, T, dt, save_every=save_every)
    rows = []
    for a in alphas:
        rob = solve_robin(rho0, a, M, T, dt, save_every=save_every)
        rows.append((a, l2_spacetime_distance(rob, neu), l2_spacetime_distance(rob, per)))
    return rows, l2_spacetime_distance(per, neu)
