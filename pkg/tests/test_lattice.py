import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2

from slowbond.errors import UsageError
from slowbond.lattice import (
    Configuration,
    DensityProfile,
    SlowBondParams,
    apply_swap,
    empirical_pairing,
    parse_beta,
    sample_bernoulli_product,
    sample_conditioned,
    site_coordinates,
    swap_rate,
)


def test_swap_rate_slow_bond_critical():
    assert swap_rate(SlowBondParams(10, 2.0, 1), 9) == pytest.approx(0.2, abs=1e-15)


def test_swap_rate_slow_bond_beta_zero():
    assert swap_rate(SlowBondParams(10, 2.0, 0), 9) == 2.0


@pytest.mark.parametrize("beta", [0, 0.5, 1, 3, "inf"])
def test_swap_rate_other_bonds(beta):
    p = SlowBondParams(10, 2.0, beta)
    assert all(swap_rate(p, b) == 1.0 for b in range(9))


def test_beta_infinity_closes_the_bond():
    p = SlowBondParams(10, 5.0, "inf")
    assert p.slow_rate == 0.0
    assert p.regime == "super"


def test_slow_bond_on_longer_torus():
    p = SlowBondParams(10, 2.0, 1)
    assert swap_rate(p, 49, sites=50) == pytest.approx(0.2)
    assert swap_rate(p, 9, sites=50) == 1.0


@pytest.mark.parametrize("bad", [dict(n=1), dict(n=10, alpha=0.0), dict(n=10, alpha=-1), dict(n=10, beta=-0.5),
                                 dict(n=2.5)])
def test_params_validation(bad):
    with pytest.raises(UsageError):
        SlowBondParams(**bad)


def test_bond_index_out_of_range():
    with pytest.raises(UsageError):
        swap_rate(SlowBondParams(10), 10)


def test_parse_beta():
    assert parse_beta("inf") == math.inf
    assert parse_beta("1") == 1.0
    with pytest.raises(UsageError):
        parse_beta("big")


@pytest.mark.parametrize("occ,bond,expected", [
    ((1, 0, 0), 0, (0, 1, 0)),
    ((1, 1, 0), 0, (1, 1, 0)),
    ((0, 0, 1), 2, (1, 0, 0)),
])
def test_apply_swap(occ, bond, expected):
    assert apply_swap(Configuration(occ), bond) == Configuration(expected)


@given(st.lists(st.integers(0, 1), min_size=2, max_size=30), st.data())
def test_apply_swap_involution_and_conservation(occ, data):
    c = Configuration(occ)
    b = data.draw(st.integers(0, len(occ) - 1))
    once = apply_swap(c, b)
    assert once.particles == c.particles
    assert apply_swap(once, b) == c


def test_configuration_is_immutable():
    c = Configuration([1, 0, 1])
    with pytest.raises(ValueError):
        c.occupancy[0] = 0
    with pytest.raises(UsageError):
        Configuration([0, 2])


def test_sample_degenerate_profiles():
    assert sample_bernoulli_product(DensityProfile.constant(1.0), 50, 0).particles == 50
    assert sample_bernoulli_product(DensityProfile.constant(0.0), 50, 0).particles == 0


def test_sample_half_density_mean():
    c = sample_bernoulli_product(DensityProfile.constant(0.5), 10**4, 123)
    assert abs(c.occupancy.mean() - 0.5) <= 0.02


def test_sample_is_seed_deterministic():
    prof = DensityProfile.step(0.8, 0.1)
    a = sample_bernoulli_product(prof, 200, 9)
    assert a == sample_bernoulli_product(prof, 200, 9)
    assert a != sample_bernoulli_product(prof, 200, 10)


def test_sample_follows_profile():
    c = sample_bernoulli_product(DensityProfile.step(1.0, 0.0), 100, 4)
    assert c.occupancy[:50].all() and not c.occupancy[50:].any()


def test_conditioned_site_always_occupied():
    for seed in range(200):
        assert sample_conditioned(0.5, 4, 0, seed).occupancy[0] == 1


def test_conditioned_small_density_leaves_only_tagged():
    hits = sum(sample_conditioned(1e-9, 20, 3, s).particles == 1 for s in range(100))
    assert hits == 100


def test_conditioned_other_sites_are_product_measure():
    # pairs of non-tagged sites: four cells with probabilities rho^k (1 - rho)^(2 - k)
    rho, m = 0.3, 10**5
    occ = np.array([sample_conditioned(rho, 3, 0, s).occupancy for s in range(m)])
    cells = occ[:, 1] * 2 + occ[:, 2]
    rng_counts = np.bincount(cells, minlength=4)
    p = np.array([(1 - rho) ** 2, (1 - rho) * rho, rho * (1 - rho), rho**2])
    stat = ((rng_counts - m * p) ** 2 / (m * p)).sum()
    assert stat < chi2.ppf(0.99, 3)


def test_pairing_examples():
    assert empirical_pairing(Configuration(np.ones(8)), lambda u: np.ones_like(u)) == 1.0
    assert empirical_pairing(Configuration(np.zeros(8)), np.cos) == 0.0
    assert empirical_pairing(Configuration([1, 0, 1, 0]), lambda u: u, n=4) == pytest.approx(0.125, abs=1e-15)


@given(st.lists(st.integers(0, 1), min_size=2, max_size=40), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=50)
def test_pairing_is_linear_in_H(occ, a, b):
    c = Configuration(occ)
    f, g = np.sin, np.cos
    lhs = empirical_pairing(c, lambda u: a * f(u) + b * g(u))
    rhs = a * empirical_pairing(c, f) + b * empirical_pairing(c, g)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_centered_coordinates():
    u = site_coordinates(10, 10, centered=True)
    assert u[0] == 0.0 and u[9] == pytest.approx(-0.1)
    assert u[4] == pytest.approx(0.4) and u[5] == pytest.approx(-0.5)


def test_profile_parsing_and_csv(tmp_path):
    assert DensityProfile.parse("constant:0.25")(np.array([0.1, 0.9])).tolist() == [0.25, 0.25]
    assert DensityProfile.parse("step:1,0")(np.array([0.25, 0.75])).tolist() == [1.0, 0.0]
    cos = DensityProfile.parse("cos2:0.5,0.5")
    assert cos(np.array([0.0]))[0] == pytest.approx(1.0)
    path = tmp_path / "p.csv"
    DensityProfile.parse("cos1:0.5,0.25").to_csv(path)
    table = DensityProfile.parse(str(path))
    assert table(np.array([0.0]))[0] == pytest.approx(0.75)
    for bad in ("constant:2", "step:1", "wave:1", "cos2:0.9,0.5"):
        with pytest.raises(UsageError):
            DensityProfile.parse(bad)
