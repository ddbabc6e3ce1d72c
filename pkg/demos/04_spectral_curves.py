"""Cubic spectral curves, branch points and densities.

Run with ``python3 demos/04_spectral_curves.py``.
"""

# %% Branch points are the zeros of the discriminant
import numpy as np

from nikishin.spectral_curves import (
    boundary_values,
    branch_points,
    branch_values,
    builtin_curve,
    density_lambda1,
    density_lambda2,
    pollaczek_uniformization,
    quartic_region_bounds,
)

pol = builtin_curve("pollaczek_psi")
bp = branch_points(pol)
print("discriminant (lowest degree first):", bp.discriminant)
for z in bp.points:
    print("  branch point", np.round(z, 9), "residual", f"{bp.residual(z):.1e}")

# %% The three sheets are labelled by their behaviour at infinity
h = branch_values(builtin_curve("bessel"), 30 + 5j)
print("Bessel branches at 30+5i:", np.round(h.as_array(), 6))

# %% Boundary values on the real line give the densities
x = np.linspace(0.5, 13, 6)
print("Bessel lambda1 density:", np.round(density_lambda1(builtin_curve("bessel"), x), 5))
print("Bessel lambda1 at x = 1 is 1/pi:", density_lambda1(builtin_curve("bessel"), np.array([1.0]))[0], 1 / np.pi)
y = np.array([0.05, 0.1, 0.5, 5.0])
print("Pollaczek lambda2 density (saturated = 1 near 0):", np.round(density_lambda2(pol, y), 6))
print("boundary values at 1.0:", np.round(boundary_values(pol, np.array([1.0]))[0], 6))

# %% Rational uniformization of the Pollaczek curve
zeta = pollaczek_uniformization(2.0)
print("psi = 2 maps to zeta =", zeta)

# %% Parameter region of the quartic external-source curve
print("a range for b = -2:", quartic_region_bounds(-2.0))
print("a range for b = -sqrt 3:", quartic_region_bounds(-np.sqrt(3)))
