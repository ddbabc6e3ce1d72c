"""Measures on cell grids, potentials and energies.

Run with ``python3 demos/02_measures_and_energies.py``.
"""

# %% A grid measure stores one mass per cell; potentials are exact per cell
import math

import numpy as np

from nikishin.measures import (
    DiscreteMeasure,
    GridMeasure,
    cauchy_transform,
    cdf_distance,
    energy_forms,
    log_potential,
    make_grid,
    modified_potential,
    zero_counting,
)

nodes, widths = make_grid(0.0, 1.0, 8)
mu = GridMeasure(nodes, widths, np.full(8, 1 / 8))
print("total mass", mu.total_mass)
print("log potential of the uniform measure at 0:", log_potential(mu, 0.0), "(exact value 1)")
print("modified potential at 0:", modified_potential(mu, 0.0))

# %% Energies: the logarithmic energy of uniform measure on [0, 1] is 3/2
e = energy_forms(mu, mu)
print("I(mu) =", e.I_self_1)

# Measures of equal mass have nonnegative difference energy
rng = np.random.default_rng(0)
a = GridMeasure(*make_grid(0, 5, 20), rng.dirichlet(np.ones(20)))
b = GridMeasure(*make_grid(0, 5, 20, "power", power=2.0), rng.dirichlet(np.ones(20)))
print("I(a - b) =", energy_forms(a, b).difference_energy)

# %% Cauchy transforms of atomic measures: the constraint of the built-in system
k = np.arange(200_000)
sigma2 = DiscreteMeasure(tuple(zip(-(2.0 * k + 1) ** 2, np.full(k.size, 4 / math.pi))))
print("sigma2 transform at 1:", cauchy_transform(sigma2, 1.0).real, "vs tanh(pi/2) =", math.tanh(math.pi / 2))

# %% Zero counting measures and the Kolmogorov-type distance
roots = [(11 - math.sqrt(97)) / 2, (11 + math.sqrt(97)) / 2]
nu = zero_counting(roots, 2)
print("zero counting atoms", nu.atoms)
print("distance to the uniform measure on [0, 11]:",
      cdf_distance(nu, GridMeasure(*make_grid(0, 11, 1), np.array([1.0]))))
