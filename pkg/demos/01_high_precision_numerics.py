"""High-precision building blocks.

Run with ``python3 demos/01_high_precision_numerics.py``.  Everything below
works on mpmath numbers at a chosen mantissa length.
"""

# %% Precision contexts fix the working precision and default tolerances
import mpmath as mp

from nikishin.hp_numerics import (
    DegenerateRootError,
    Polynomial,
    PrecisionContext,
    integrate_adaptive,
    isolate_real_roots,
    solve_cubic,
)

ctx = PrecisionContext(256)
print("bits", ctx.mantissa_bits, "digits", ctx.digits, "abs_tol", mp.nstr(ctx.abs_tol, 3))

# %% Adaptive double-exponential quadrature with an error bound.
# The density 1/sinh(pi sqrt(x)/2) on the half-line has total mass 2.
value, bound = integrate_adaptive(lambda x: 1 / mp.sinh(mp.pi * mp.sqrt(x) / 2), 0, mp.inf, ctx)
print("mass", mp.nstr(value, 40), "bound", mp.nstr(bound, 3))

# Endpoint singularities are handled by the same rule.
value, bound = integrate_adaptive(lambda y: -mp.log(y), 0, 1, ctx)
print("int -log y", mp.nstr(value, 40))

# %% Real root isolation by Sturm sequences plus bisection/Newton polish
p = Polynomial((6, -11, 1))  # x^2 - 11x + 6, lowest degree first
for root, residual in isolate_real_roots(p, (0, 20), ctx):
    print("root", mp.nstr(root, 30), "residual", mp.nstr(residual, 3))

# A double root is reported, not silently returned twice.
try:
    isolate_real_roots(Polynomial.from_roots([0, 1, 1]), (-1, 2), ctx)
except DegenerateRootError as exc:
    print("multiple roots near", [mp.nstr(r, 8) for r in exc.multiple])

# %% Closed-form cubic solver used by the spectral curves (double precision)
r = solve_cubic(-2, 1, 0)  # H^3 - 2H^2 + H = H (H - 1)^2
print("cubic roots", r.roots, "multiplicities", r.multiplicity)
