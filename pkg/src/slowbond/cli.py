"""Command-line entry point.

Every subcommand takes its parameters from defaults, then an optional
``--config`` JSON file (a plain object or a manifest written by an earlier
run), then explicit flags. The effective configuration is stored in the
manifest, so ``--config out/<name>_manifest.json`` replays a run.

Exit status: 0 on success, 1 when a statistical or numerical gate fails,
2 on a usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from slowbond import __version__
from slowbond.closed_forms import Regime, current_variance, phi_quadrature, tagged_variance, tagged_variance_printed
from slowbond.engine import simulate
from slowbond.errors import SimulationError, UsageError
from slowbond.experiments import (
    ExperimentResult,
    Gate,
    LLN_TEST_FUNCTIONS,
    current_clt_experiment,
    field_experiment,
    lln_experiment,
    martingale_check,
    oracle_experiment,
    regime_of,
    tagged_clt_experiment,
)
from slowbond.io import content_hash, read_json, write_json
from slowbond.lattice import DensityProfile, SlowBondParams, parse_beta, sample_bernoulli_product
from slowbond.pde import TestFunctionCT, phase_transition_curve, solve_for_regime, weak_residual
from slowbond.testfunctions import make_test_family

__all__ = ["main", "main_exit", "build_parser", "resolve_config", "run_command", "COMMANDS"]


# --- parameter converters ---------------------------------------------------

def _int(v):
    if isinstance(v, bool):
        raise UsageError(f"expected an integer, got {v!r}")
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise UsageError(f"expected an integer, got {v!r}") from None
    if not f.is_integer():
        raise UsageError(f"expected an integer, got {v!r}")
    return int(f)


def _float(v):
    if isinstance(v, bool):
        raise UsageError(f"expected a number, got {v!r}")
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise UsageError(f"expected a number, got {v!r}") from None
    if not math.isfinite(f):
        raise UsageError(f"expected a finite number, got {v!r}")
    return f


def _beta(v):
    b = parse_beta(v)
    return "inf" if math.isinf(b) else b


def _str(v):
    if not isinstance(v, str):
        raise UsageError(f"expected a string, got {v!r}")
    return v


def _choice(*options):
    def conv(v):
        if v not in options:
            raise UsageError(f"expected one of {', '.join(options)}, got {v!r}")
        return v
    return conv


def _optional(conv):
    def wrapped(v):
        return None if v is None else conv(v)
    return wrapped


class _ListOf:
    def __init__(self, conv):
        self.conv = conv

    def __call__(self, v):
        if isinstance(v, str):
            v = [p for p in v.split(",") if p.strip()]
        if not isinstance(v, (list, tuple)):
            v = [v]
        return [self.conv(x) for x in v]


# --- command table ---------------------------------------------------------
# name -> {key: (default, converter, help)}

_MODEL = {
    "n": (100, _int, "scaling parameter (sites per unit length)"),
    "alpha": (1.0, _float, "slow bond prefactor"),
    "beta": (0.0, _beta, "slow bond exponent; 'inf' closes the bond"),
}
_STAT = {
    "rho": (0.5, _float, "density of the product measure"),
    "m": (10000, _int, "number of trajectories"),
    "seed": (None, _optional(_int), "base seed; trajectory i uses seed+i"),
}

COMMANDS = {
    "simulate": {
        **_MODEL,
        "profile": ("constant:0.5", _str, "initial profile: constant:r, step:a,b, cos1:m,a, cos2:m,a or CSV"),
        "t": (0.1, _float, "macroscopic horizon"),
        "sites": (None, _optional(_int), "torus length (default n)"),
        "current_bonds": ([], _ListOf(_int), "bonds whose current is recorded"),
        "tagged_sites": ([], _ListOf(_int), "occupied sites whose particles are tagged"),
        "snapshots": (10, _int, "equally spaced snapshots after time 0"),
        "bins": (16, _int, "density bins per snapshot"),
        "seed": (None, _optional(_int), "seed"),
    },
    "oracle-check": {
        "n": (4, _int, "torus length (at most 12)"),
        "alpha": (1.0, _float, "slow bond prefactor"),
        "beta": (0.0, _beta, "slow bond exponent"),
        "rho": (0.5, _float, "density of the product measure"),
        "micro_time": (1.0, _float, "time for the law comparison (unscaled)"),
        "m": (0, _int, "trajectories for the law comparison; 0 skips it"),
        "init": (None, _optional(_str), "0/1 string fixing the start (default: product measure)"),
        "residual_tol": (1e-12, _float, "stationarity tolerance"),
        "tv_tol": (0.01, _float, "total variation tolerance"),
        "seed": (None, _optional(_int), "base seed (needed when m > 0)"),
    },
    "pde": {
        "bc": ("periodic", _choice("periodic", "robin", "neumann"), "boundary condition"),
        "alpha": (1.0, _float, "Robin coefficient"),
        "profile": ("step:1,0", _str, "initial profile"),
        "T": (0.1, _float, "final time"),
        "M": (256, _int, "grid intervals"),
        "dt": (None, _optional(_float), "time step (default T/1000)"),
        "scheme": ("cn", _choice("cn", "explicit"), "time stepping"),
        "save_every": (None, _optional(_int), "save every k steps (default: about 100 rows)"),
        "residual_tol": (None, _optional(_float), "fail if a weak-form residual exceeds this"),
        "mass_tol": (1e-8, _float, "tolerance on the drift of the total mass"),
    },
    "phase-transition": {
        "profile": ("step:1,0", _str, "initial profile"),
        "T": (0.5, _float, "final time"),
        "M": (512, _int, "grid intervals"),
        "steps": (4096, _int, "time steps"),
        "alphas": ([1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3], _ListOf(_float), "Robin coefficients"),
        "tol": (0.02, _float, "tolerance on the endpoint distances"),
    },
    "lln": {
        "alpha": (1.0, _float, "slow bond prefactor"),
        "beta": (0.0, _beta, "slow bond exponent"),
        "profile": ("step:1,0", _str, "initial profile"),
        "t": (0.1, _float, "macroscopic time"),
        "n_list": ([200, 400], _ListOf(_int), "values of n"),
        "H": (list(LLN_TEST_FUNCTIONS), _ListOf(_choice(*LLN_TEST_FUNCTIONS)), "test functions"),
        "m": (100, _int, "trajectories per n"),
        "M": (512, _int, "PDE grid intervals"),
        "steps": (4096, _int, "PDE time steps"),
        "max_error": (0.05, _float, "tolerance on the mean pairing error at the largest n"),
        "seed": (None, _optional(_int), "base seed"),
    },
    "field": {
        **_MODEL, **_STAT,
        "n": (500, _int, "scaling parameter"),
        "t_list": ([0.0], _ListOf(_float), "observation times"),
        "H": (None, _optional(_ListOf(_str)), "test function names (default: the regime's family)"),
        "rel_tol": (0.10, _float, "relative tolerance on the variance"),
    },
    "martingale": {
        **_MODEL, **_STAT,
        "H": (None, _optional(_str), "test function name (default per regime)"),
        "t": (0.25, _float, "macroscopic time, a multiple of 1/64"),
        "rel_tol": (0.15, _float, "relative tolerance on the variance"),
    },
    "current-clt": {
        **_MODEL, **_STAT,
        "u_list": ([0.0, 0.2], _ListOf(_float), "macroscopic positions"),
        "t_list": ([0.5], _ListOf(_float), "macroscopic times"),
        "rel_tol": (0.10, _float, "relative tolerance on the variance"),
    },
    "tagged-clt": {
        **_MODEL, **_STAT,
        "u_list": ([0.0, 0.2], _ListOf(_float), "macroscopic positions"),
        "t_list": ([0.5], _ListOf(_float), "macroscopic times"),
        "kmax": (10, _int, "identity checked for k = 1..kmax"),
    },
    "formulas": {
        "regime": ("sub", _choice("sub", "critical", "super"), "regime"),
        "alpha": (1.0, _float, "slow bond prefactor (critical regime)"),
        "rho": (0.5, _float, "density"),
        "u": ([0.0], _ListOf(_float), "macroscopic positions"),
        "t": ([1.0], _ListOf(_float), "macroscopic times"),
        "quad_tol": (1e-9, _float, "tolerance against the quadrature evaluation"),
    },
}

SUMMARIES = {
    "simulate": "simulate one trajectory and record its observables",
    "oracle-check": "stationarity and simulator law against the exact generator",
    "pde": "solve the hydrodynamic equation for one boundary condition",
    "phase-transition": "Robin solutions against the periodic and Neumann limits",
    "lln": "empirical pairings against the PDE solution",
    "field": "equilibrium fluctuation field variances and covariances",
    "martingale": "Dynkin martingale mean and variance for one test function",
    "current-clt": "variance of the rescaled current through a bond",
    "tagged-clt": "variance of a tagged particle and its identity with the current",
    "formulas": "closed-form variances with a quadrature cross-check",
}

STOCHASTIC = {"simulate", "lln", "field", "martingale", "current-clt", "tagged-clt"}
DEFAULT_MARTINGALE_H = {"sub": "gauss", "critical": "jump_slope", "super": "jump"}


# --- configuration ---------------------------------------------------------

def _flag(key):
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slowbond", description="Slow-bond exclusion process laboratory.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, params in COMMANDS.items():
        p = sub.add_parser(name, help=SUMMARIES[name], description=SUMMARIES[name].capitalize() + ".", argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON config or manifest of an earlier run")
        p.add_argument("--out", help="output directory (default: out)")
        p.add_argument("--workers", type=int, help="worker processes (default 1)")
        for key, (default, conv, text) in params.items():
            shown = "" if default is None else f" (default {default})"
            if isinstance(conv, _ListOf) or (key == "H" and name == "field"):
                p.add_argument(_flag(key), dest=key, nargs="+", help=text + shown)
            else:
                p.add_argument(_flag(key), dest=key, help=text + shown)
    return parser


def resolve_config(command: str, cli: dict) -> tuple:
    """``(config, out, workers)`` from defaults, the config file and flags."""
    params = COMMANDS[command]
    merged = {k: v[0] for k, v in params.items()}
    out, workers = "out", 1
    path = cli.pop("config", None)
    if path is not None:
        data = read_json(path)
        if "config" in data and "command" in data:
            if data["command"] != command:
                raise UsageError(f"manifest is for {data['command']!r}, not {command!r}")
            data = data["config"]
        data = dict(data)
        out = data.pop("out", out)
        workers = data.pop("workers", workers)
        unknown = sorted(set(data) - set(params))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        merged.update(data)
    out = cli.pop("out", out)
    workers = cli.pop("workers", workers)
    merged.update(cli)
    config = {}
    for key, value in merged.items():
        try:
            config[key] = params[key][1](value)
        except UsageError as exc:
            raise UsageError(f"{_flag(key)}: {exc}") from None
    workers = _int(workers)
    if workers < 1:
        raise UsageError("--workers must be at least 1")
    if command in STOCHASTIC and config.get("seed") is None:
        raise UsageError(f"{command} needs --seed")
    if command == "oracle-check" and config["m"] > 0 and config.get("seed") is None:
        raise UsageError("oracle-check with --m needs --seed")
    return config, str(out), workers


def _params(cfg) -> SlowBondParams:
    return SlowBondParams(cfg["n"], cfg["alpha"], parse_beta(cfg["beta"]))


# --- runners ---------------------------------------------------------------

def _run_simulate(cfg, workers, out: Path) -> ExperimentResult:
    params = _params(cfg)
    profile = DensityProfile.parse(cfg["profile"])
    sites = cfg["sites"] or params.n
    if cfg["snapshots"] < 1:
        raise UsageError("--snapshots must be at least 1")
    if not cfg["t"] > 0:
        raise UsageError("--t must be positive")
    times = [cfg["t"] * (k + 1) / cfg["snapshots"] for k in range(cfg["snapshots"])]
    init = sample_bernoulli_product(profile, params.n, cfg["seed"], sites=sites)
    rec = simulate(params, init, cfg["t"], cfg["seed"], current_bonds=cfg["current_bonds"],
                   tagged_sites=cfg["tagged_sites"], snapshot_times=times)
    out.mkdir(parents=True, exist_ok=True)
    rec.to_csv(out / "simulate.csv", bins=min(cfg["bins"], sites))
    mass_ok = bool(np.all(rec.configs.sum(axis=1) == init.particles))
    gates = [Gate("particle number conserved", float(rec.final.particles), float(init.particles), "exact", mass_ok)]
    manifest = rec.manifest()
    manifest.pop("wall_time")
    return ExperimentResult("simulate", [], [], gates, {"experiment": "simulate", "trajectory": manifest})


def _run_oracle(cfg, workers, out) -> ExperimentResult:
    params = SlowBondParams(cfg["n"], cfg["alpha"], parse_beta(cfg["beta"]))
    return oracle_experiment(params, cfg["rho"], cfg["micro_time"], cfg["m"], cfg["seed"], init=cfg["init"],
                             workers=workers, residual_tol=cfg["residual_tol"], tv_tol=cfg["tv_tol"])


def _pde_test_functions(bc):
    k = 2 * np.pi
    fns = [TestFunctionCT.static(lambda u: np.cos(k * u), lambda u: -k * np.sin(k * u),
                                 lambda u: -k * k * np.cos(k * u), "cos2pi")]
    if bc != "periodic":
        fns.append(TestFunctionCT.static(lambda u: np.cos(np.pi * u), lambda u: -np.pi * np.sin(np.pi * u),
                                         lambda u: -np.pi**2 * np.cos(np.pi * u), "cospi"))
        fns.append(TestFunctionCT.static(lambda u: u * u, lambda u: 2 * u, lambda u: 2 + 0 * u, "u2"))
    return fns


def _run_pde(cfg, workers, out) -> ExperimentResult:
    T = cfg["T"]
    if not T > 0:
        raise UsageError("--T must be positive")
    dt = cfg["dt"] or T / 1000
    steps = int(round(T / dt))
    save_every = cfg["save_every"] or max(1, steps // 100)
    regime = {"periodic": "sub", "robin": "critical", "neumann": "super"}[cfg["bc"]]
    sol = solve_for_regime(regime, DensityProfile.parse(cfg["profile"]), cfg["M"], T, dt, alpha=cfg["alpha"],
                           scheme=cfg["scheme"], save_every=save_every)
    out.mkdir(parents=True, exist_ok=True)
    sol.to_csv(out / "pde.csv")
    mass = sol.mass()
    drift = float(np.abs(mass - mass[0]).max())
    gates = [
        Gate("mass conservation", drift, 0.0, f"<= {cfg['mass_tol']:g}", drift <= cfg["mass_tol"]),
        Gate("values in [0, 1]", float(sol.values.min()), 0.0, "min >= -1e-12 and max <= 1 + 1e-12",
             bool(sol.values.min() >= -1e-12 and sol.values.max() <= 1 + 1e-12)),
    ]
    tol = cfg["residual_tol"]
    for H in _pde_test_functions(cfg["bc"]):
        res = weak_residual(sol, H, T)
        gates.append(Gate(f"weak residual H={H.name}", res, 0.0, "reported" if tol is None else f"<= {tol:g}",
                          tol is None or res <= tol))
    return ExperimentResult("pde", [], [], gates, {"experiment": "pde", "bc": sol.bc_tag, "dt": dt,
                                                   "save_every": save_every})


def _is_monotone(values, increasing):
    d = np.diff(values)
    return bool(np.all(d >= 0) if increasing else np.all(d <= 0))


def _run_phase(cfg, workers, out) -> ExperimentResult:
    alphas = sorted(cfg["alphas"])
    if cfg["steps"] < 1:
        raise UsageError("--steps must be positive")
    rows, ref = phase_transition_curve(DensityProfile.parse(cfg["profile"]), alphas, cfg["M"], cfg["T"],
                                       cfg["T"] / cfg["steps"], save_every=max(1, cfg["steps"] // 256))
    neu = [r[1] for r in rows]
    per = [r[2] for r in rows]
    tol = cfg["tol"]
    gates = [
        Gate(f"dist_to_periodic(alpha={alphas[-1]:g})", per[-1], 0.0, f"<= {tol:g}", per[-1] <= tol),
        Gate(f"dist_to_neumann(alpha={alphas[0]:g})", neu[0], 0.0, f"<= {tol:g}", neu[0] <= tol),
        Gate("dist_to_neumann nondecreasing in alpha", neu[-1], neu[0], "monotone", _is_monotone(neu, True)),
        Gate("dist_to_periodic nonincreasing in alpha", per[-1], per[0], "monotone", _is_monotone(per, False)),
    ]
    rows = [r + (ref,) for r in rows]
    return ExperimentResult("phase-transition", ["alpha", "dist_to_neumann", "dist_to_periodic",
                                                 "periodic_to_neumann"], rows, gates,
                            {"experiment": "phase-transition"})


def _run_lln(cfg, workers, out) -> ExperimentResult:
    return lln_experiment(cfg["alpha"], parse_beta(cfg["beta"]), DensityProfile.parse(cfg["profile"]), cfg["t"],
                          cfg["n_list"], cfg["m"], cfg["seed"], H_names=cfg["H"], M=cfg["M"], steps=cfg["steps"],
                          workers=workers, max_error=cfg["max_error"])


def _family(params, names):
    family = make_test_family(regime_of(params))
    if names is None:
        return family
    by_name = {H.name: H for H in family}
    missing = [h for h in names if h not in by_name]
    if missing:
        raise UsageError(f"unknown test functions {missing}; available: {sorted(by_name)}")
    return [by_name[h] for h in names]


def _run_field(cfg, workers, out) -> ExperimentResult:
    params = _params(cfg)
    return field_experiment(params, cfg["rho"], cfg["t_list"], cfg["m"], cfg["seed"],
                            H_list=_family(params, cfg["H"]), workers=workers, rel_tol=cfg["rel_tol"])


def _run_martingale(cfg, workers, out) -> ExperimentResult:
    params = _params(cfg)
    name = cfg["H"] or DEFAULT_MARTINGALE_H[regime_of(params).kind]
    H = _family(params, [name])[0]
    return martingale_check(params, cfg["rho"], H, cfg["t"], cfg["m"], cfg["seed"], workers=workers,
                            rel_tol=cfg["rel_tol"])


def _run_current(cfg, workers, out) -> ExperimentResult:
    return current_clt_experiment(_params(cfg), cfg["rho"], cfg["u_list"], cfg["t_list"], cfg["m"], cfg["seed"],
                                  workers=workers, rel_tol=cfg["rel_tol"])


def _run_tagged(cfg, workers, out) -> ExperimentResult:
    if cfg["kmax"] < 1:
        raise UsageError("--kmax must be at least 1")
    return tagged_clt_experiment(_params(cfg), cfg["rho"], cfg["u_list"], cfg["t_list"], cfg["m"], cfg["seed"],
                                 workers=workers, ks=range(1, cfg["kmax"] + 1))


def _variance_by_quadrature(regime: Regime, rho, u, t):
    """Current variance with every ``Phi`` evaluated by quadrature; ``nan`` where ``exp`` overflows."""
    u = abs(u)
    c2 = 2 * rho * (1 - rho)
    base = math.sqrt(t / math.pi)
    if regime.kind == "sub":
        return c2 * base
    if regime.kind == "critical":
        a = regime.alpha
        expo = 4 * a * u + 4 * a * a * t
        if expo > 700:
            return float("nan")
        bracket = (phi_quadrature(t, 2 * u + 4 * a * t) * math.exp(expo) - phi_quadrature(t, 2 * u)) / (2 * a)
        return c2 * (base + bracket)
    return c2 * (base * (1 - math.exp(-u * u / t)) + 2 * u * phi_quadrature(t, 2 * u))


def _run_formulas(cfg, workers, out) -> ExperimentResult:
    regime = Regime.parse(cfg["regime"], cfg["alpha"])
    rho = cfg["rho"]
    rows, gates = [], []
    for u in cfg["u"]:
        for t in cfg["t"]:
            cv = float(current_variance(regime, rho, u, t))
            tv = float(tagged_variance(regime, rho, u, t)) if 0 < rho < 1 else float("nan")
            tp = float(tagged_variance_printed(regime, rho, u, t)) if 0 < rho < 1 else float("nan")
            quad = _variance_by_quadrature(regime, rho, u, t)
            diff = abs(cv - quad)
            rows.append((str(regime), rho, u, t, cv, tv, tp, quad, diff))
            print(f"{regime} rho={rho:g} u={u:g} t={t:g}: current_variance={cv!r} tagged_variance={tv!r}")
            if not math.isnan(quad):
                gates.append(Gate(f"quadrature cross-check u={u:g} t={t:g}", cv, quad,
                                  f"|diff| <= {cfg['quad_tol']:g}", diff <= cfg["quad_tol"]))
    cols = ["regime", "rho", "u", "t", "current_variance", "tagged_variance", "tagged_variance_printed",
            "current_variance_quadrature", "abs_diff"]
    return ExperimentResult("formulas", cols, rows, gates, {"experiment": "formulas"})


RUNNERS = {
    "simulate": _run_simulate,
    "oracle-check": _run_oracle,
    "pde": _run_pde,
    "phase-transition": _run_phase,
    "lln": _run_lln,
    "field": _run_field,
    "martingale": _run_martingale,
    "current-clt": _run_current,
    "tagged-clt": _run_tagged,
    "formulas": _run_formulas,
}


def run_command(command: str, config: dict, out: str, workers: int = 1) -> ExperimentResult:
    out_dir = Path(out)
    result = RUNNERS[command](config, workers, out_dir)
    result.manifest = {**result.manifest, "command": command, "config": config, "version": __version__}
    result.manifest.setdefault("inputs", config)
    stem = command
    if result.columns:
        result.write(out_dir, stem)
    else:
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = dict(result.manifest)
        manifest["input_hash"] = content_hash(manifest.get("inputs", {}))
        manifest["passed"] = result.passed
        write_json(out_dir / f"{stem}_manifest.json", manifest)
        (out_dir / f"{stem}_summary.txt").write_text(result.summary(), encoding="utf-8")
    return result


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cli = vars(ns)
    command = cli.pop("command")
    try:
        config, out, workers = resolve_config(command, cli)
        result = run_command(command, config, out, workers)
    except UsageError as exc:
        print(f"slowbond {command}: error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"slowbond {command}: simulation failed: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(result.summary())
    return 0 if result.passed else 1


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
