"""Solving a constrained vector equilibrium problem.

The first measure lives on the positive half-line in the external field
``phi``.  The second lives on the negative half-line below the constraint
``sigma``.  Run with ``python3 demos/03_equilibrium_solver.py``.
"""

# %% Built-in problems come with their field, constraint and window
import numpy as np

from nikishin.equilibrium import (
    builtin_problem,
    effective_fields,
    solve_equilibrium,
    variational_report,
)
from nikishin.spectral_curves import halfline_density

p = builtin_problem("pollaczek", n_plus=200)
print(p.name, "cells", p.n_plus, "+", p.n_minus)

# %% Solve; the result carries supports, constants and a residual report
sol = solve_equilibrium(p)
print("w1 =", sol.w1, "w2 =", sol.w2)
print("supp lambda1", sol.supp1)
print("saturation region", sol.saturation_region)
for key, val in sol.residual_report.items():
    if isinstance(val, float):
        print(f"  {key:20s} {val:.2e}")

# %% Certify the minimiser with random admissible directions
rep = variational_report(p, sol.lam, directions=100, seed=1)
print("accepted:", rep["accepted"], "smallest first variation", round(rep["directional_min"], 4))

# %% Compare with the densities read off the spectral curve
x = np.array([0.25, 1.0, 2.0, 2.5])
idx = np.searchsorted(sol.lambda1.right_edges, x)
print("solver density", np.round(sol.lambda1.densities[idx], 4))
print("curve density ", np.round(halfline_density("pollaczek", x), 4))

# %% The effective field W1 equals w1 on the support and exceeds it outside
W1 = effective_fields(sol, np.array([0.5, 1.5, 3.5]), "plus")
print("W1 - w1 at 0.5, 1.5, 3.5:", np.round(W1 - sol.w1, 5))

# %% Adding a constant to the field only shifts w1
shifted = solve_equilibrium(p.with_field_shift(5.0))
print("w1 shift", shifted.w1 - sol.w1, "max cell change",
      np.max(np.abs(shifted.lambda1.masses - sol.lambda1.masses)))
