import math

import numpy as np
import pytest

from slowbond.errors import UsageError
from slowbond.lattice import DensityProfile
from slowbond.pde import (
    TestFunctionCT,
    l2_spacetime_distance,
    phase_transition_curve,
    solve_neumann,
    solve_periodic,
    solve_robin,
    trapezoid_weights,
    weak_residual,
)
from slowbond.tridiag import CyclicTridiagonal, thomas

COS2 = DensityProfile.cosine(0.5, 0.5, 2)
COS1 = DensityProfile.cosine(0.5, 0.5, 1)
STEP = DensityProfile.step(1.0, 0.0)


def test_thomas_against_dense():
    rng = np.random.default_rng(0)
    n = 12
    a, c = rng.normal(size=n), rng.normal(size=n)
    b = 4 + rng.random(n)
    d = rng.normal(size=n)
    A = np.diag(b) + np.diag(a[1:], -1) + np.diag(c[:-1], 1)
    assert np.allclose(thomas(a, b, c, d), np.linalg.solve(A, d), atol=1e-12)


def test_cyclic_against_dense():
    rng = np.random.default_rng(1)
    n = 9
    a, c = rng.normal(size=n), rng.normal(size=n)
    b = 5 + rng.random(n)
    T = CyclicTridiagonal(a, b, c, top=0.7, bottom=-0.3)
    A = T.toarray()
    assert A[0, -1] == 0.7 and A[-1, 0] == -0.3
    d = rng.normal(size=n)
    assert np.allclose(T.solve(d), np.linalg.solve(A, d), atol=1e-12)
    assert np.allclose(T.matvec(d), A @ d, atol=1e-12)


@pytest.mark.parametrize("solver", [
    lambda p: solve_periodic(p, 64, 0.5, 0.005),
    lambda p: solve_robin(p, 2.0, 64, 0.5, 0.005),
    lambda p: solve_neumann(p, 64, 0.5, 0.005),
])
def test_constants_are_exact(solver):
    sol = solver(DensityProfile.constant(0.3))
    assert np.abs(sol.values - 0.3).max() <= 1e-13


def _max_error(sol, exact):
    return max(np.abs(v - exact(t, sol.u)).max() for t, v in zip(sol.times, sol.values))


def test_periodic_eigenfunction_second_order():
    exact = lambda t, u: 0.5 + 0.5 * np.exp(-4 * np.pi**2 * t) * np.cos(2 * np.pi * u)
    errs = []
    for M in (128, 256, 512):
        sol = solve_periodic(COS2, M, 0.1, 0.1 / (100 * M // 128))
        errs.append(np.abs(sol.at(0.1) - exact(0.1, sol.u)).max())
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5
    assert errs[2] * 512**2 < 1.0  # C/M^2 with a modest C


def test_neumann_eigenfunction_second_order():
    exact = lambda t, u: 0.5 + 0.5 * np.exp(-np.pi**2 * t) * np.cos(np.pi * u)
    errs = []
    for M in (128, 256, 512):
        sol = solve_neumann(COS1, M, 0.1, 0.1 / (100 * M // 128))
        errs.append(np.abs(sol.at(0.1) - exact(0.1, sol.u)).max())
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_robin_eigenfunction():
    # rho = 1/2 + e^{-k^2 t} cos(k (u - 1/2)) / 4 with k tan(k/2) ... solves the Robin problem when
    # -k sin(k/2) = -2 alpha cos(k/2) * 0 for the even mode; use the odd mode instead:
    # rho = 1/2 + A e^{-k^2 t} sin(k (u - 1/2)) with k cot(k/2) = -2 alpha ... checked numerically below
    alpha = 1.5
    from scipy.optimize import brentq

    # odd mode: d_u rho(0) = A k cos(k/2) e^{..}, rho(0) - rho(1) = -2 A sin(k/2) e^{..}
    # Robin: k cos(k/2) = -2 alpha sin(k/2)
    k = brentq(lambda k: k * math.cos(k / 2) + 2 * alpha * math.sin(k / 2), math.pi + 1e-9, 3 * math.pi - 1e-9)
    A = 0.2
    exact = lambda t, u: 0.5 + A * math.exp(-k * k * t) * np.sin(k * (u - 0.5))
    prof = DensityProfile(lambda u: exact(0.0, u))
    errs = []
    for M in (128, 256, 512):
        sol = solve_robin(prof, alpha, M, 0.05, 0.05 / (50 * M // 128))
        errs.append(np.abs(sol.at(0.05) - exact(0.05, sol.u)).max())
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5


def test_periodic_mass_conservation():
    sol = solve_periodic(STEP, 256, 0.5, 0.001)
    m = sol.mass()
    assert np.abs(m - m[0]).max() <= 1e-8


def test_explicit_scheme_and_stability_guard():
    sol = solve_periodic(COS2, 64, 0.01, 0.0001, scheme="explicit")
    exact = 0.5 + 0.5 * np.exp(-4 * np.pi**2 * 0.01) * np.cos(2 * np.pi * sol.u)
    assert np.abs(sol.at(0.01) - exact).max() < 1e-3
    with pytest.raises(UsageError):
        solve_periodic(COS2, 32, 0.01, 0.001, scheme="explicit")


def test_step_relaxes_monotonically_under_neumann():
    sol = solve_neumann(STEP, 256, 1.0, 0.002, save_every=25)
    w = trapezoid_weights(sol.u)
    d = np.sqrt(((sol.values - 0.5) ** 2) @ w)
    assert np.all(np.diff(d) < 0)
    assert np.abs(sol.values[-1] - 0.5).max() < 1e-4
    assert np.abs(sol.mass() - 0.5).max() <= 1e-12


def test_robin_limits_at_t01():
    per = solve_periodic(STEP, 256, 0.1, 0.1 / 512)
    neu = solve_neumann(STEP, 256, 0.1, 0.1 / 512)
    w = trapezoid_weights(per.u)
    l2 = lambda a, b: math.sqrt(((a - b) ** 2) @ w)
    assert l2(solve_robin(STEP, 1e3, 256, 0.1, 0.1 / 512).at(0.1), per.at(0.1)) <= 2e-2
    assert l2(solve_robin(STEP, 1e-3, 256, 0.1, 0.1 / 512).at(0.1), neu.at(0.1)) <= 2e-2


def test_robin_rejects_nonpositive_alpha():
    with pytest.raises(UsageError):
        solve_robin(STEP, 0.0, 32, 0.1, 0.01)


def test_weak_residual_constant_one_periodic():
    sol = solve_periodic(STEP, 128, 0.2, 0.001)
    one = TestFunctionCT.static(lambda u: np.ones_like(u), lambda u: 0 * u, lambda u: 0 * u)
    assert weak_residual(sol, one, 0.2) <= 1e-8


def test_weak_residual_eigenfunction_shrinks():
    H = TestFunctionCT(
        lambda t, u: np.exp(t) * np.cos(np.pi * u), lambda t, u: np.exp(t) * np.cos(np.pi * u),
        lambda t, u: -np.pi * np.exp(t) * np.sin(np.pi * u), lambda t, u: -np.pi**2 * np.exp(t) * np.cos(np.pi * u),
    )
    assert H.derivative_error(0.3, np.linspace(0.1, 0.9, 5)) < 1e-5
    res = [weak_residual(solve_neumann(COS1, M, 0.1, 0.1 / M), H, 0.1) for M in (64, 128, 256)]
    assert res[0] / res[1] >= 3 and res[1] / res[2] >= 3


def test_weak_residual_robin_with_linear_H():
    # H(u) = u exercises the alpha (rho(0) - rho(1)) (H(0) - H(1)) coupling term
    H = TestFunctionCT.static(lambda u: u, lambda u: np.ones_like(u), lambda u: 0 * u)
    for M in (64, 128, 256):
        assert weak_residual(solve_robin(COS2, 2.0, M, 0.1, 0.1 / M), H, 0.1) <= 1e-10
    Hq = TestFunctionCT.static(lambda u: u * u * (1 - u), lambda u: 2 * u - 3 * u * u, lambda u: 2 - 6 * u)
    res = [weak_residual(solve_robin(COS2, 2.0, M, 0.1, 0.1 / M), Hq, 0.1) for M in (64, 128, 256)]
    assert res[0] / res[1] >= 3 and res[1] / res[2] >= 3


def test_weak_residual_needs_periodic_H_on_torus():
    H = TestFunctionCT.static(lambda u: u, lambda u: np.ones_like(u), lambda u: 0 * u)
    with pytest.raises(UsageError):
        weak_residual(solve_periodic(COS2, 32, 0.1, 0.01), H, 0.1)


def test_distance_examples():
    a = solve_periodic(DensityProfile.constant(0.0), 32, 1.0, 0.01)
    b = solve_periodic(DensityProfile.constant(1.0), 32, 1.0, 0.01)
    assert l2_spacetime_distance(a, a) == 0.0
    assert l2_spacetime_distance(a, b) == pytest.approx(1.0, abs=1e-12)


def test_phase_transition_small_grid():
    rows, ref = phase_transition_curve(STEP, [0.01, 0.1, 1, 10], 128, 0.5, 0.5 / 512)
    neu = [r[1] for r in rows]
    per = [r[2] for r in rows]
    assert all(x < y for x, y in zip(neu, neu[1:]))
    assert all(x > y for x, y in zip(per, per[1:]))
    assert max(neu + per) <= ref + 1e-12


def test_solution_csv(tmp_path):
    sol = solve_neumann(STEP, 8, 0.01, 0.005)
    sol.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].split(",")[0] == "t" and len(lines) == 4
    with pytest.raises(UsageError):
        sol.at(0.0025)


def test_maximum_principle_post_check(monkeypatch):
    import slowbond.pde as pde
    from slowbond.errors import SimulationError

    monkeypatch.setattr(pde, "control_volume_average", lambda rho0, M, bc: np.full(M + 1, 1.5))
    with pytest.raises(SimulationError):
        solve_periodic(COS2, 16, 0.01, 0.001)
