"""Symmetric simple exclusion with a single slow bond.

Exact event-driven simulation, the three limiting heat equations, closed-form
fluctuation variances and the statistical experiments that compare them.
"""

from slowbond.lattice import (
    Configuration,
    DensityProfile,
    SlowBondParams,
    apply_swap,
    empirical_pairing,
    sample_bernoulli_product,
    sample_conditioned,
    swap_rate,
)

__version__ = "0.1.0"

__all__ = [
    "Configuration",
    "DensityProfile",
    "SlowBondParams",
    "apply_swap",
    "empirical_pairing",
    "sample_bernoulli_product",
    "sample_conditioned",
    "swap_rate",
]
