"""Statistical experiments confronting the particle system with its limits.

Hydrodynamic experiments run on a torus of ``n`` sites. The fluctuation,
current and tagged-particle experiments concern the process on the whole
line; they run on a torus of ``K n`` sites, with ``K`` chosen by
:func:`torus_factor` so that wrap-around is far below statistical error,
and use centred coordinates in which the slow bond sits at ``0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from slowbond.closed_forms import Regime, chi, current_variance
from slowbond.engine import simulate, tagged_identity_holds
from slowbond.ensemble import run_ensemble, seed_blocks, z_score
from slowbond.errors import UsageError
from slowbond.generator import (
    bernoulli_product_vector,
    build_generator,
    exact_distribution,
    state_index,
    stationarity_residual,
)
from slowbond.io import content_hash, write_csv, write_json
from slowbond.lattice import (
    Configuration,
    DensityProfile,
    SlowBondParams,
    sample_bernoulli_product,
    sample_conditioned,
    sample_independent,
    site_coordinates,
)
from slowbond.pde import solve_for_regime
from slowbond.testfunctions import delta_beta, make_test_family, nabla_beta, norm_2beta_sq_of

__all__ = [
    "Gate",
    "ExperimentResult",
    "torus_factor",
    "regime_of",
    "LLN_TEST_FUNCTIONS",
    "oracle_experiment",
    "lln_experiment",
    "field_experiment",
    "martingale_check",
    "current_clt_experiment",
    "tagged_clt_experiment",
    "bond_for",
]

Z_GATE = 3.0
GAUSSIAN_TAIL = 1e-12
SNAPSHOTS_PER_UNIT_TIME = 64
ROUNDOFF = 1e-12


def regime_of(params: SlowBondParams) -> Regime:
    return Regime.from_beta(params.beta, params.alpha)


def torus_factor(t: float, window: float = 0.0, gaussian_tests: bool = False, z: float = 4.0) -> int:
    """Torus length in macroscopic units for an infinite-volume experiment.

    A stirring walk started at the observation point reaches the antipode
    only with probability ``P(|N(0, 2t)| > K - window)``; ``z`` standard
    deviations keep that below ~1e-4. Gaussian test functions additionally
    need ``exp(-(K/2)^2)`` below ``GAUSSIAN_TAIL``.
    """
    K = math.ceil(abs(window) + z * math.sqrt(2.0 * max(t, 0.0)))
    if gaussian_tests:
        K = max(K, math.ceil(2.0 * math.sqrt(-math.log(GAUSSIAN_TAIL))))
    return max(K, 2)


def bond_for(u: float, n: int, sites: int) -> tuple:
    """``(site, bond)``: the site ``floor(u n)`` and the bond joining it to its left neighbour."""
    x = math.floor(u * n)
    return x % sites, (x - 1) % sites


@dataclass
class Gate:
    name: str
    observed: float
    target: float
    rule: str
    passed: bool
    z: float | None = None

    def line(self) -> str:
        z = "" if self.z is None else f" z={self.z:+.2f}"
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: observed={self.observed:.6g} target={self.target:.6g}{z} ({self.rule})"


@dataclass
class ExperimentResult:
    name: str
    columns: list
    rows: list
    gates: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def summary(self) -> str:
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        lines += [g.line() for g in self.gates]
        return "\n".join(lines) + "\n"

    def write(self, out_dir, stem: str | None = None) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.name
        paths = {
            "results": out / f"{stem}.csv",
            "manifest": out / f"{stem}_manifest.json",
            "summary": out / f"{stem}_summary.txt",
        }
        write_csv(paths["results"], self.columns, self.rows)
        manifest = dict(self.manifest)
        manifest["input_hash"] = content_hash(manifest.get("inputs", {}))
        manifest["passed"] = self.passed
        write_json(paths["manifest"], manifest)
        paths["summary"].write_text(self.summary(), encoding="utf-8")
        return paths


def _field_weights(H, coords: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(H(coords), dtype=np.float64) / math.sqrt(n)


# --- exact oracle -----------------------------------------------------------

class _OracleTrajectory:
    def __init__(self, params, probabilities, micro_time):
        self.params, self.probabilities, self.micro_time = params, probabilities, micro_time

    def __call__(self, seed):
        init = sample_independent(self.probabilities, seed)
        rec = simulate(self.params, init, self.micro_time / self.params.n**2, seed, store_configs=False)
        return np.array([state_index(rec.final)], dtype=np.float64)


def oracle_experiment(params: SlowBondParams, rho: float, micro_time: float = 1.0, m: int = 0,
                      base_seed: int | None = None, init: str | None = None, workers: int = 1,
                      residual_tol: float = 1e-12, tv_tol: float = 0.01) -> ExperimentResult:
    """Stationarity of ``nu_rho`` and, when ``m > 0``, the simulator's law against the exact one.

    ``init`` is a 0/1 string fixing the initial configuration; by default
    trajectories start from ``nu_rho``.
    """
    gen = build_generator(params)
    n = params.n
    residual = stationarity_residual(gen, rho)
    gates = [Gate(f"stationarity n={n} rho={rho:g} beta={params.beta:g} alpha={params.alpha:g}", residual, 0.0,
                  f"<= {residual_tol:g}", residual <= residual_tol)]
    rows = []
    inputs = {"params": params.to_dict(), "rho": rho, "micro_time": micro_time, "m": m, "base_seed": base_seed,
              "init": init}
    seeds = {}
    if m:
        if init is None:
            probs = np.full(n, float(rho))
            start = bernoulli_product_vector(n, rho)
        else:
            if len(init) != n or set(init) - {"0", "1"}:
                raise UsageError(f"init must be a 0/1 string of length {n}")
            probs = np.array([float(c) for c in init])
            start = np.zeros(2**n)
            start[state_index(Configuration(probs.astype(np.uint8)))] = 1.0
        exact = exact_distribution(gen, start, micro_time)
        samples, stats = run_ensemble(_OracleTrajectory(params, probs, micro_time), m, base_seed,
                                      names=["state"], workers=workers)
        emp = np.bincount(samples[:, 0].astype(np.int64), minlength=2**n) / m
        tv = 0.5 * float(np.abs(emp - exact).sum())
        gates.append(Gate(f"total variation n={n} m={m} micro_time={micro_time:g}", tv, 0.0, f"<= {tv_tol:g}",
                          tv <= tv_tol))
        rows = [(i, format(i, f"0{n}b")[::-1], exact[i], emp[i]) for i in range(2**n)]
        seeds = stats.manifest()
    rows.append(("residual", "", residual, ""))
    manifest = {"experiment": "oracle-check", "inputs": inputs, "seeds": seeds}
    return ExperimentResult("oracle-check", ["state", "configuration", "exact", "empirical"], rows, gates, manifest)


# --- hydrodynamic limit -----------------------------------------------------

def _h_one(u):
    return np.ones_like(np.asarray(u, dtype=float))


def _h_cos(u):
    return np.cos(2 * np.pi * np.asarray(u, dtype=float))


def _h_bump(u):
    return np.exp(-((np.asarray(u, dtype=float) - 0.5) ** 2) / (2 * 0.1**2))


LLN_TEST_FUNCTIONS = {"one": _h_one, "cos2pi": _h_cos, "bump": _h_bump}


class _LLNTrajectory:
    def __init__(self, params, probabilities, t, weights, targets):
        self.params, self.probabilities, self.t = params, probabilities, t
        self.weights, self.targets = weights, targets

    def __call__(self, seed):
        init = sample_independent(self.probabilities, seed)
        rec = simulate(self.params, init, self.t, seed, store_configs=False)
        occ = rec.final.occupancy.astype(np.float64)
        pair = self.weights @ occ
        return np.concatenate([np.abs(pair - self.targets), pair])


def lln_experiment(alpha: float, beta, profile: DensityProfile, t: float, n_list, m: int, base_seed: int,
                   H_names=("one", "cos2pi", "bump"), M: int = 512, steps: int = 4096,
                   workers: int = 1, max_error: float = 0.05) -> ExperimentResult:
    """Mean pairing error against the regime's PDE solution, for each ``n``."""
    n_list = sorted(int(n) for n in n_list)
    if t <= 0:
        raise UsageError("t must be positive")
    regime = regime_of(SlowBondParams(n_list[0], alpha, beta))
    sol = solve_for_regime(regime.kind, profile, M, t, t / steps, alpha=alpha)
    Hs = [(name, LLN_TEST_FUNCTIONS[name]) for name in H_names]
    targets = np.array([sol.pairing(H, t) for _, H in Hs])
    rows, by_n = [], {}
    blocks = seed_blocks(base_seed, [m] * len(n_list))
    for n, seeds in zip(n_list, blocks):
        params = SlowBondParams(n, alpha, beta)
        u = np.arange(n) / n
        weights = np.array([H(u) / n for _, H in Hs])
        names = [f"err_{h}" for h, _ in Hs] + [f"pair_{h}" for h, _ in Hs]
        _, stats = run_ensemble(_LLNTrajectory(params, profile(u), t, weights, targets), names=names,
                                seeds=seeds, workers=workers)
        for i, (h, _) in enumerate(Hs):
            s = stats.summary(f"err_{h}")
            p = stats.summary(f"pair_{h}")
            by_n[(n, h)] = s["mean"]
            rows.append((regime.kind, n, h, s["mean"], s["std_error"], p["mean"], float(targets[i])))
    gates = []
    big = n_list[-1]
    for h, _ in Hs:
        e = by_n[(big, h)]
        gates.append(Gate(f"lln {regime} n={big} H={h} error", e, max_error, f"<= {max_error}", e <= max_error))
        if len(n_list) > 1:
            prev = by_n[(n_list[-2], h)]
            # H = 1 with a deterministic start gives equal errors up to roundoff
            gates.append(Gate(f"lln {regime} H={h} error(n={big}) <= error(n={n_list[-2]})", e, prev,
                              f"nonincreasing in n, up to {ROUNDOFF:g}", e <= prev + ROUNDOFF))
    manifest = {
        "experiment": "lln",
        "inputs": {"alpha": alpha, "beta": str(beta), "profile": repr(profile), "t": t, "n_list": n_list,
                   "m": m, "base_seed": base_seed, "H": list(H_names), "M": M, "steps": steps},
        "seeds": {str(n): [b[0], b[-1]] for n, b in zip(n_list, blocks)},
    }
    cols = ["regime", "n", "H", "mean_abs_error", "std_error", "mean_pairing", "pde_pairing"]
    return ExperimentResult("lln", cols, rows, gates, manifest)


# --- density fluctuation field ------------------------------------------------

class _FieldTrajectory:
    def __init__(self, params, rho, sites, t_list, weights):
        self.params, self.rho, self.sites = params, rho, sites
        self.t_list, self.weights = list(t_list), weights

    def __call__(self, seed):
        init = sample_bernoulli_product(DensityProfile.constant(self.rho), self.params.n, seed, sites=self.sites)
        out = []
        positive = [t for t in self.t_list if t > 0]
        if positive:
            rec = simulate(self.params, init, max(positive), seed, snapshot_times=positive)
            snaps = {float(t): rec.configs[k] for k, t in enumerate(rec.times)}
        for t in self.t_list:
            occ = init.occupancy if t == 0 else snaps[float(t)]
            out.append(self.weights @ (occ.astype(np.float64) - self.rho))
        return np.concatenate(out)


def field_experiment(params: SlowBondParams, rho: float, t_list, m: int, base_seed: int, H_list=None,
                     workers: int = 1, rel_tol: float = 0.10) -> ExperimentResult:
    """Mean, variance and pairwise covariances of ``Y_t(H)`` started from ``nu_rho``."""
    regime = regime_of(params)
    H_list = list(H_list) if H_list is not None else make_test_family(regime)
    t_list = sorted(float(t) for t in t_list)
    K = torus_factor(max(t_list), gaussian_tests=True)
    sites = K * params.n
    coords = site_coordinates(sites, params.n, centered=True)
    weights = np.array([_field_weights(H, coords, params.n) for H in H_list])
    names = [f"Y[t={t:g},{H.name}]" for t in t_list for H in H_list]
    samples, stats = run_ensemble(_FieldTrajectory(params, rho, sites, t_list, weights), m, base_seed,
                                  names=names, workers=workers)
    c = chi(rho)
    rows, gates = [], []
    nH = len(H_list)
    for ti, t in enumerate(t_list):
        for hi, H in enumerate(H_list):
            j = ti * nH + hi
            mean, se = stats.mean[j], stats.std_error[j]
            var, vse = stats.sample_variance[j], stats.variance_std_error[j]
            theory = c * H.l2_sq()
            rel = abs(var - theory) / theory
            zm, zv = z_score(mean, 0.0, se), z_score(var, theory, vse)
            rows.append(("variance", t, H.name, "", mean, se, var, vse, theory, rel, zm, zv))
            gates.append(Gate(f"field t={t:g} {H.name} mean", mean, 0.0, "|z| <= 3", abs(zm) <= Z_GATE, zm))
            gates.append(Gate(f"field t={t:g} {H.name} variance", var, theory, f"rel <= {rel_tol:.0%}",
                              rel <= rel_tol, zv))
        for a in range(nH):
            for b in range(a + 1, nH):
                x = samples[:, ti * nH + a]
                y = samples[:, ti * nH + b]
                prod = (x - x.mean()) * (y - y.mean())
                cov = prod.sum() / (m - 1)
                cse = prod.std(ddof=1) / math.sqrt(m)
                theory = c * H_list[a].inner(H_list[b])
                zc = z_score(cov, theory, cse)
                rows.append(("covariance", t, H_list[a].name, H_list[b].name, "", "", cov, cse, theory,
                             abs(cov - theory) / abs(theory) if theory else "", "", zc))
                gates.append(Gate(f"field t={t:g} cov({H_list[a].name},{H_list[b].name})", cov, theory,
                                  "|z| <= 3", abs(zc) <= Z_GATE, zc))
    manifest = {
        "experiment": "field",
        "inputs": {"params": params.to_dict(), "rho": rho, "t_list": t_list, "m": m, "base_seed": base_seed,
                   "H": [H.name for H in H_list], "torus_factor": K},
        "seeds": stats.manifest(),
        "approximation": f"line approximated by a torus of {sites} sites",
    }
    cols = ["kind", "t", "H", "G", "mean", "mean_se", "variance", "variance_se", "theory", "rel_error",
            "z_mean", "z_variance"]
    return ExperimentResult("field", cols, rows, gates, manifest)


# --- martingale -------------------------------------------------------------

class _MartingaleTrajectory:
    def __init__(self, params, rho, sites, t, times, w_h, w_lap):
        self.params, self.rho, self.sites, self.t = params, rho, sites, t
        self.times, self.w_h, self.w_lap = times, w_h, w_lap

    def __call__(self, seed):
        init = sample_bernoulli_product(DensityProfile.constant(self.rho), self.params.n, seed, sites=self.sites)
        rec = simulate(self.params, init, self.t, seed, snapshot_times=self.times[1:])
        configs = np.vstack([init.occupancy[None, :], rec.configs]).astype(np.float64) - self.rho
        y = configs @ self.w_h
        ylap = configs @ self.w_lap
        integral = np.sum((ylap[1:] + ylap[:-1]) * np.diff(self.times)) / 2.0
        return np.array([y[-1] - y[0] - integral, y[0], y[-1]])


def martingale_check(params: SlowBondParams, rho: float, H, t: float, m: int, base_seed: int,
                     workers: int = 1, rel_tol: float = 0.15) -> ExperimentResult:
    """``M_t(H) = Y_t(H) - Y_0(H) - int_0^t Y_s(Delta_beta H) ds``: mean and variance."""
    regime = regime_of(params)
    if H.regime != regime:
        raise UsageError(f"test function built for {H.regime}, experiment is {regime}")
    steps = round(t * SNAPSHOTS_PER_UNIT_TIME)
    if steps < 1 or abs(steps - t * SNAPSHOTS_PER_UNIT_TIME) > 1e-9:
        raise UsageError(f"t must be a positive multiple of 1/{SNAPSHOTS_PER_UNIT_TIME}")
    times = np.arange(steps + 1) / SNAPSHOTS_PER_UNIT_TIME
    K = torus_factor(t, gaussian_tests=True)
    sites = K * params.n
    coords = site_coordinates(sites, params.n, centered=True)
    w_h = _field_weights(H, coords, params.n)
    w_lap = _field_weights(delta_beta(H), coords, params.n)
    _, stats = run_ensemble(_MartingaleTrajectory(params, rho, sites, t, times, w_h, w_lap), m, base_seed,
                            names=["M", "Y0", "Yt"], workers=workers)
    c = chi(rho)
    grad = nabla_beta(H)
    target = 2.0 * c * t * norm_2beta_sq_of(grad, regime)
    lattice_extra = regime.alpha * H.jump**2 if regime.kind == "critical" else 0.0
    target_lattice = 2.0 * c * t * (grad.l2_sq() + lattice_extra)
    s = stats.summary("M")
    zm = z_score(s["mean"], 0.0, s["std_error"])
    rel = abs(s["variance"] - target) / target
    zv = z_score(s["variance"], target, s["variance_std_error"])
    rows = [(str(regime), H.name, t, s["mean"], s["std_error"], s["variance"], s["variance_std_error"],
             target, target_lattice, rel, zm, zv)]
    gates = [
        Gate(f"martingale {regime} {H.name} mean", s["mean"], 0.0, "|z| <= 3", abs(zm) <= Z_GATE, zm),
        Gate(f"martingale {regime} {H.name} variance", s["variance"], target, f"rel <= {rel_tol:.0%}",
             rel <= rel_tol, zv),
    ]
    manifest = {
        "experiment": "martingale",
        "inputs": {"params": params.to_dict(), "rho": rho, "H": H.name, "t": t, "m": m, "base_seed": base_seed,
                   "torus_factor": K, "snapshots_per_unit_time": SNAPSHOTS_PER_UNIT_TIME},
        "seeds": stats.manifest(),
        "approximation": f"line approximated by a torus of {sites} sites",
    }
    cols = ["regime", "H", "t", "mean", "mean_se", "variance", "variance_se", "target", "target_lattice",
            "rel_error", "z_mean", "z_variance"]
    return ExperimentResult("martingale", cols, rows, gates, manifest)


# --- current and tagged particle ----------------------------------------------

class _CurrentTrajectory:
    def __init__(self, params, rho, sites, bonds, t_list):
        self.params, self.rho, self.sites = params, rho, sites
        self.bonds, self.t_list = bonds, list(t_list)

    def __call__(self, seed):
        init = sample_bernoulli_product(DensityProfile.constant(self.rho), self.params.n, seed, sites=self.sites)
        rec = simulate(self.params, init, max(self.t_list), seed, current_bonds=self.bonds,
                       snapshot_times=self.t_list, store_configs=False)
        idx = [int(np.argmin(np.abs(rec.times - t))) for t in self.t_list]
        return (rec.currents[idx, :] / math.sqrt(self.params.n)).ravel()


def _variance_gates(label, var, vse, theory, rel_tol):
    gates = []
    if theory == 0.0:
        gates.append(Gate(f"{label} variance", var, 0.0, "exactly 0", var == 0.0))
        return gates, 0.0 if var == 0 else math.inf, float("nan")
    zv = z_score(var, theory, vse)
    rel = abs(var - theory) / theory
    gates.append(Gate(f"{label} variance", var, theory, "|z| <= 3", abs(zv) <= Z_GATE, zv))
    if rel_tol is not None:
        gates.append(Gate(f"{label} variance", var, theory, f"rel <= {rel_tol:.0%}", rel <= rel_tol, zv))
    return gates, zv, rel


def current_clt_experiment(params: SlowBondParams, rho: float, u_list, t_list, m: int, base_seed: int,
                           workers: int = 1, rel_tol: float = 0.10) -> ExperimentResult:
    """Variance of ``J_u(t)/sqrt(n)`` from ``nu_rho`` against the regime's closed form."""
    regime = regime_of(params)
    u_list = [float(u) for u in u_list]
    t_list = sorted(float(t) for t in t_list)
    K = torus_factor(max(t_list), window=max(abs(u) for u in u_list))
    sites = K * params.n
    bonds = [bond_for(u, params.n, sites)[1] for u in u_list]
    if len(set(bonds)) != len(bonds):
        raise UsageError("distinct u values map to the same bond")
    names = [f"J[t={t:g},u={u:g}]" for t in t_list for u in u_list]
    _, stats = run_ensemble(_CurrentTrajectory(params, rho, sites, bonds, t_list), m, base_seed,
                            names=names, workers=workers)
    rows, gates = [], []
    for ti, t in enumerate(t_list):
        for ui, u in enumerate(u_list):
            j = ti * len(u_list) + ui
            mean, se = stats.mean[j], stats.std_error[j]
            var, vse = stats.sample_variance[j], stats.variance_std_error[j]
            theory = current_variance(regime, rho, u, t)
            label = f"current {regime} u={u:g} t={t:g}"
            g, zv, rel = _variance_gates(label, var, vse, theory, rel_tol)
            gates += g
            zm = z_score(mean, 0.0, se)
            gates.append(Gate(f"{label} mean", mean, 0.0, "|z| <= 3", abs(zm) <= Z_GATE or se == 0, zm))
            rows.append((str(regime), u, t, bonds[ui], mean, se, var, vse, theory, rel, zm, zv))
    manifest = {
        "experiment": "current-clt",
        "inputs": {"params": params.to_dict(), "rho": rho, "u_list": u_list, "t_list": t_list, "m": m,
                   "base_seed": base_seed, "torus_factor": K},
        "seeds": stats.manifest(),
        "approximation": f"line approximated by a torus of {sites} sites",
    }
    cols = ["regime", "u", "t", "bond", "mean", "mean_se", "variance", "variance_se", "theory", "rel_error",
            "z_mean", "z_variance"]
    return ExperimentResult("current-clt", cols, rows, gates, manifest)


class _TaggedTrajectory:
    def __init__(self, params, rho, sites, site, bond, t_list, ks):
        self.params, self.rho, self.sites = params, rho, sites
        self.site, self.bond, self.t_list, self.ks = site, bond, list(t_list), list(ks)

    def __call__(self, seed):
        init = sample_conditioned(self.rho, self.sites, self.site, seed)
        rec = simulate(self.params, init, max(self.t_list), seed, current_bonds=[self.bond],
                       tagged_sites=[self.site], snapshot_times=self.t_list)
        ok = all(
            tagged_identity_holds(rec.configs[k], int(rec.currents[k, 0]), int(rec.tagged_displacement[k, 0]),
                                  self.site, self.ks)
            for k in range(rec.times.size)
        )
        idx = [int(np.argmin(np.abs(rec.times - t))) for t in self.t_list]
        root = math.sqrt(self.params.n)
        return np.concatenate([rec.tagged_displacement[idx, 0] / root, rec.currents[idx, 0] / root, [float(ok)]])


def tagged_clt_experiment(params: SlowBondParams, rho: float, u_list, t_list, m: int, base_seed: int,
                          workers: int = 1, ks=range(1, 11), rel_tol: float | None = None) -> ExperimentResult:
    """Variance of ``X_u(t)/sqrt(n)`` from the measure conditioned on an occupied ``floor(u n)``.

    Every snapshot of every trajectory is also checked against the
    order-preservation identity linking the tagged particle to the current.
    """
    regime = regime_of(params)
    u_list = [float(u) for u in u_list]
    t_list = sorted(float(t) for t in t_list)
    K = torus_factor(max(t_list), window=max(abs(u) for u in u_list))
    sites = K * params.n
    blocks = seed_blocks(base_seed, [m] * len(u_list))
    rows, gates, seeds = [], [], {}
    for u, block in zip(u_list, blocks):
        site, bond = bond_for(u, params.n, sites)
        names = [f"X[t={t:g}]" for t in t_list] + [f"J[t={t:g}]" for t in t_list] + ["identity"]
        _, stats = run_ensemble(_TaggedTrajectory(params, rho, sites, site, bond, t_list, ks), names=names,
                                seeds=block, workers=workers)
        seeds[f"u={u:g}"] = [block[0], block[-1]]
        ident = stats.mean[-1]
        gates.append(Gate(f"tagged {regime} u={u:g} pathwise identity", ident, 1.0,
                          f"all trajectories, k in {min(ks)}..{max(ks)}", ident == 1.0))
        for ti, t in enumerate(t_list):
            var, vse = stats.sample_variance[ti], stats.variance_std_error[ti]
            theory = current_variance(regime, rho, u, t) / rho**2
            label = f"tagged {regime} u={u:g} t={t:g}"
            g, zv, rel = _variance_gates(label, var, vse, theory, rel_tol)
            if theory == 0.0:
                # the |z| rule still applies to a zero target
                zv = z_score(var, 0.0, vse)
                g = [Gate(f"{label} variance", var, 0.0, "|z| <= 3", abs(zv) <= Z_GATE, zv)]
                rel = float("nan")
            gates += g
            jv = stats.sample_variance[len(t_list) + ti]
            rows.append((str(regime), u, t, site, stats.mean[ti], stats.std_error[ti], var, vse, theory, rel, zv,
                         jv / rho**2, ident))
    manifest = {
        "experiment": "tagged-clt",
        "inputs": {"params": params.to_dict(), "rho": rho, "u_list": u_list, "t_list": t_list, "m": m,
                   "base_seed": base_seed, "torus_factor": K, "ks": [min(ks), max(ks)]},
        "seeds": seeds,
        "approximation": f"line approximated by a torus of {sites} sites",
    }
    cols = ["regime", "u", "t", "site", "mean", "mean_se", "variance", "variance_se", "theory", "rel_error",
            "z_variance", "current_variance_over_rho2", "identity_fraction"]
    return ExperimentResult("tagged-clt", cols, rows, gates, manifest)
