"""Multiple orthogonal polynomials of the built-in Nikishin system.

Run with ``python3 demos/05_multiple_orthogonal_polynomials.py``.  The
degrees used here take a few seconds at 512 bits.
"""

# %% The system: a continuous measure on [0, inf) and atoms on (-inf, 0)
import mpmath as mp

from nikishin.hp_numerics import PrecisionContext
from nikishin.measures import zero_counting
from nikishin.nikishin_mop import (
    check_assumptions,
    compute_pair,
    moment,
    norm_integrals,
    nth_root_report,
    pollaczek_system,
    reference_equilibrium,
    rescale_pair,
    zero_distribution_report,
)

sys = pollaczek_system()
ctx = PrecisionContext(512)
with mp.workprec(512):
    print("moments of s1:", [int(moment(sys, 1, k, ctx)) for k in range(4)])
    print("moments of s2:", [mp.nstr(moment(sys, 2, k, ctx), 12) for k in range(4)])

# %% P_n has degree 2n; P_{n,2} has n zeros, one per gap between atoms
pairs = {n: compute_pair(sys, n, ctx) for n in (1, 2, 4, 8)}
p1 = pairs[1]
print("P_1 coefficients:", [mp.nstr(c, 20) for c in p1.Pn.coefficients])
print("P_1,2 zero:", mp.nstr(p1.zeros_Pn2[0], 20))
for n, p in pairs.items():
    print(f"n={n}: residual {mp.nstr(p.residual, 3)}, P_n2 zeros in gaps {list(p.gaps_Pn2)}")

# %% Norms N1 and N2 at n = 1 are rational
N1, N2 = norm_integrals(sys, p1, ctx)
print("N1 =", mp.nstr(N1, 20), "N2 =", mp.nstr(N2, 20))

# %% Rescaled zeros approach the equilibrium measures
ref = reference_equilibrium(sys, 300)
rows = zero_distribution_report(sys, list(pairs.values()), ref.lambda1, ref.lambda2)
for r in rows:
    print(f"n={r['n']}: d1 {r['d1']:.4f}  d2 {r['d2']:.4f}")
norms = [norm_integrals(sys, p, ctx) for p in pairs.values()]
for r in nth_root_report(list(pairs.values()), norms, ref.w1, ref.w2):
    print(f"n={r['n']}: -log(N1)/n = {r['rate1']:.4f} (w1 = {ref.w1:.4f})")

_, _, zq, _ = rescale_pair(pairs[8], sys.scaling(8))
nu = zero_counting([float(z) for z in zq], len(zq))
print("largest rescaled zero at n=8:", nu.locations[-1], "support edge", ref.supp1[-1][1])

# %% Hypotheses of the limit theorem, measured rather than assumed
rep = check_assumptions(sys, n_list=(10, 50))
for r in rep.records:
    tag = " (informational)" if r.get("informational") else ""
    print(r["condition"], r.get("n"), ("passed" if r["passed"] else "FAILED") + tag)
