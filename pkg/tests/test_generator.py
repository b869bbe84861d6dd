import itertools

import numpy as np
import pytest

from slowbond.engine import simulate
from slowbond.errors import UsageError
from slowbond.generator import (
    bernoulli_product_vector,
    build_generator,
    exact_distribution,
    index_state,
    state_index,
    stationarity_residual,
)
from slowbond.lattice import Configuration, SlowBondParams


def test_state_index_roundtrip():
    for i in range(16):
        assert state_index(index_state(i, 4)) == i
    assert state_index(Configuration([1, 0, 0, 1])) == 0b1001


def test_two_site_rates_by_hand():
    # bonds (0,1) with rate 1 and (1,0) with the slow rate alpha n^-beta both connect the two sites
    p = SlowBondParams(2, 3.0, 1)
    Q = build_generator(p).toarray()
    expected = np.zeros((4, 4))
    total = 1.0 + 1.5
    expected[1, 2] = expected[2, 1] = total
    expected[1, 1] = expected[2, 2] = -total
    assert np.allclose(Q, expected, atol=1e-15)


@pytest.mark.parametrize("n", [2, 3, 5, 8])
@pytest.mark.parametrize("beta", [0, 1, "inf"])
def test_rows_sum_to_zero_and_symmetric(n, beta):
    Q = build_generator(SlowBondParams(n, 0.7, beta)).toarray()
    assert np.abs(Q.sum(axis=1)).max() <= 1e-12
    assert np.array_equal(Q - np.diag(np.diag(Q)), (Q - np.diag(np.diag(Q))).T)


def test_generator_size_limit():
    with pytest.raises(UsageError):
        build_generator(SlowBondParams(13))


@pytest.mark.parametrize("n,rho,beta,alpha", [(4, 0.3, 1, 2.0), (5, 0.7, "inf", 1.0), (3, 0.5, 0, 0.5)])
def test_stationarity(n, rho, beta, alpha):
    assert stationarity_residual(build_generator(SlowBondParams(n, alpha, beta)), rho) <= 1e-12


@pytest.mark.parametrize("rho", [0.0, 1.0])
def test_stationarity_degenerate(rho):
    assert stationarity_residual(build_generator(SlowBondParams(4, 2.0, 1)), rho) == 0.0


def test_exact_distribution_time_zero():
    gen = build_generator(SlowBondParams(3))
    p = np.zeros(8)
    p[3] = 1
    assert np.array_equal(exact_distribution(gen, p, 0.0), p)


def test_invariant_measure_is_preserved():
    gen = build_generator(SlowBondParams(4, 2.0, 1))
    nu = bernoulli_product_vector(4, 0.3)
    for t in (0.5, 3.0, 20.0):
        assert np.abs(exact_distribution(gen, nu, t) - nu).max() <= 1e-10


def test_long_time_mixture_by_particle_number():
    # from a point mass the law tends to the uniform law on its particle-number sector
    gen = build_generator(SlowBondParams(3, 1.0, 1))
    p = np.zeros(8)
    p[0b001] = 1
    out = exact_distribution(gen, p, 1e3)
    sector = [i for i in range(8) if bin(i).count("1") == 1]
    target = np.zeros(8)
    target[sector] = 1 / 3
    assert np.abs(out - target).max() <= 1e-6


def test_matches_dense_matrix_exponential():
    from scipy.linalg import expm

    gen = build_generator(SlowBondParams(4, 2.0, 1))
    p = np.zeros(16)
    p[0b0011] = 1
    assert np.abs(exact_distribution(gen, p, 0.8) - p @ expm(0.8 * gen.toarray())).max() <= 1e-12


def test_simulator_matches_exact_law_from_point_mass():
    params = SlowBondParams(4, 2.0, 1)
    init = Configuration([1, 1, 0, 0])
    gen = build_generator(params)
    p0 = np.zeros(16)
    p0[state_index(init)] = 1
    exact = exact_distribution(gen, p0, 1.0)
    m = 20000
    counts = np.zeros(16)
    for seed in range(m):
        counts[state_index(simulate(params, init, 1.0 / 16, seed, store_configs=False).final)] += 1
    tv = 0.5 * np.abs(counts / m - exact).sum()
    assert tv <= 0.02


def test_bernoulli_vector_is_probability():
    for n, rho in itertools.product([1, 3, 6], [0.0, 0.2, 1.0]):
        v = bernoulli_product_vector(n, rho)
        assert v.min() >= 0 and v.sum() == pytest.approx(1.0)
