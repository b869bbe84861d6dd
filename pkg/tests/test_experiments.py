import json
import math

import numpy as np
import pytest

from slowbond.closed_forms import Regime, current_variance
from slowbond.errors import UsageError
from slowbond.experiments import (
    bond_for,
    current_clt_experiment,
    field_experiment,
    lln_experiment,
    martingale_check,
    oracle_experiment,
    tagged_clt_experiment,
    torus_factor,
)
from slowbond.lattice import DensityProfile, SlowBondParams
from slowbond.testfunctions import make_test_family
from tests.oracles import exact_current_variance


def _row(result, **match):
    for r in result.rows:
        d = dict(zip(result.columns, r))
        if all(d[k] == v for k, v in match.items()):
            return d
    raise KeyError(match)


def test_torus_factor_policy():
    assert torus_factor(0.5, window=0.2) == 5
    assert torus_factor(0.0) == 2
    assert torus_factor(0.0, gaussian_tests=True) == 11
    assert math.exp(-(torus_factor(0.25, gaussian_tests=True) / 2) ** 2) < 1e-12


def test_bond_for_wraps_negative_positions():
    assert bond_for(0.0, 100, 500) == (0, 499)
    assert bond_for(0.2, 100, 500) == (20, 19)
    assert bond_for(-0.2, 100, 500) == (480, 479)


def test_closed_bond_current_variance_is_exactly_zero():
    res = current_clt_experiment(SlowBondParams(20, 1.0, "inf"), 0.5, [0.0], [0.5], 200, 1)
    row = _row(res, u=0.0)
    assert row["variance"] == 0.0 and row["theory"] == 0.0
    assert res.passed


def test_slow_bond_current_has_zero_mean():
    res = current_clt_experiment(SlowBondParams(20, 1.0, 0), 0.5, [0.0], [0.5], 1000, 5)
    row = _row(res, u=0.0)
    assert abs(row["z_mean"]) <= 3


@pytest.mark.parametrize("beta,slow", [(0, 1.0), (1, 1 / 20), ("inf", 0.0)])
def test_simulated_current_variance_matches_exact_oracle(beta, slow):
    n, m = 20, 4000
    res = current_clt_experiment(SlowBondParams(n, 1.0, beta), 0.5, [0.0, 0.2], [0.5], m, 77)
    sites = torus_factor(0.5, 0.2) * n
    for u in (0.0, 0.2):
        row = _row(res, u=u)
        exact = exact_current_variance(n, sites, slow, bond_for(u, n, sites)[0], 0.5, 0.5)
        if exact == 0.0:
            assert row["variance"] == 0.0
        else:
            assert abs(row["variance"] - exact) <= 3 * row["variance_se"]


def test_tagged_experiment_identity_and_columns():
    res = tagged_clt_experiment(SlowBondParams(20, 1.0, 1), 0.5, [0.0, 0.2], [0.25, 0.5], 100, 3)
    assert all(r[-1] == 1.0 for r in res.rows)
    assert [g.passed for g in res.gates if "identity" in g.name] == [True, True]
    assert _row(res, u=0.2, t=0.5)["theory"] == pytest.approx(
        current_variance(Regime("critical", 1.0), 0.5, 0.2, 0.5) / 0.25)


def test_field_experiment_small():
    params = SlowBondParams(40, 1.0, 1)
    res = field_experiment(params, 0.5, [0.0, 0.05], 1500, 11)
    for t in (0.0, 0.05):
        for H in make_test_family(Regime("critical", 1.0)):
            row = _row(res, kind="variance", t=t, H=H.name)
            assert abs(row["z_mean"]) <= 3
    # stationarity: the variance does not drift between the two times
    for H in ("gauss", "jump_slope"):
        a, b = _row(res, kind="variance", t=0.0, H=H), _row(res, kind="variance", t=0.05, H=H)
        assert abs(a["variance"] - b["variance"]) <= 3 * math.hypot(a["variance_se"], b["variance_se"])


def test_martingale_check_small():
    params = SlowBondParams(30, 1.0, "inf")
    H = [h for h in make_test_family(Regime("super")) if h.name == "jump"][0]
    res = martingale_check(params, 0.5, H, 0.125, 400, 2)
    row = res.rows[0]
    d = dict(zip(res.columns, row))
    assert abs(d["z_mean"]) <= 3
    assert d["target"] == d["target_lattice"]  # no boundary term outside the critical regime


def test_martingale_rejects_mismatched_regime():
    H = make_test_family(Regime("sub"))[0]
    with pytest.raises(UsageError):
        martingale_check(SlowBondParams(30, 1.0, 1), 0.5, H, 0.125, 4, 0)
    H = make_test_family(Regime("critical", 1.0))[0]
    with pytest.raises(UsageError):
        martingale_check(SlowBondParams(30, 1.0, 1), 0.5, H, 0.1, 4, 0)


def test_lln_small_and_outputs(tmp_path):
    res = lln_experiment(1.0, 0, DensityProfile.step(1.0, 0.0), 0.05, [20, 40], 20, 0, M=128, steps=256)
    assert len(res.rows) == 6
    paths = res.write(tmp_path)
    manifest = json.loads(paths["manifest"].read_text())
    assert manifest["input_hash"].startswith("sha256:")
    assert not {"wall_time", "timestamp", "date"} & set(manifest)
    assert paths["results"].read_bytes().startswith(b"regime,n,H,")
    assert paths["summary"].read_text().startswith("lln:")


def test_lln_closed_bond_follows_neumann_solution():
    res = lln_experiment(1.0, "inf", DensityProfile.step(1.0, 0.0), 0.05, [80], 20, 3, H_names=["cos2pi", "bump"],
                         M=128, steps=256)
    for h in ("cos2pi", "bump"):
        assert _row(res, H=h)["mean_abs_error"] <= 0.05


def test_oracle_experiment():
    res = oracle_experiment(SlowBondParams(3, 2.0, 1), 0.3, 1.0, 4000, 5, init="110", tv_tol=0.05)
    assert res.passed
    assert res.gates[0].observed <= 1e-12
    with pytest.raises(UsageError):
        oracle_experiment(SlowBondParams(3), 0.3, 1.0, 10, 5, init="11")
