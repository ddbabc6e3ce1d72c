"""Acceptance criteria 1-11, one test per criterion.

Every test prints a single ``criterion NN: PASS/FAIL`` line through the
``acceptance`` fixture; the lines are collected again in the terminal summary.
"""

import json
import math
import time

import mpmath as mp
import numpy as np
import pytest

from nikishin.cli import main
from nikishin.equilibrium import builtin_problem, solve_equilibrium, variational_report
from nikishin.hp_numerics import PrecisionContext
from nikishin.measures import GridMeasure, discretize_density, energy_forms, make_grid
from nikishin.nikishin_mop import (
    check_assumptions,
    compute_Pn,
    moment,
    nth_root_report,
    zero_distribution_report,
)
from nikishin.spectral_curves import (
    branch_values_batch,
    builtin_curve,
    density_lambda1,
    density_lambda2,
    halfline_density,
    pollaczek_uniformization,
    quartic_region_bounds,
)

from conftest import MOP_BITS

E1 = math.sqrt((11 + 5 * math.sqrt(5)) / 8)
E2 = math.sqrt((5 * math.sqrt(5) - 11) / 8)
RIGHT_EDGE = {"bessel": 13.5, "pollaczek": 2.77254}


def graded_mass(f, a, b, n=400, p=3):
    """Gauss-Legendre after a polynomial endpoint-clustering map."""
    u, wu = np.polynomial.legendre.leggauss(n)
    u, wu = (u + 1) / 2, wu / 2
    g = u ** p / (u ** p + (1 - u) ** p)
    dg = p * u ** (p - 1) * (1 - u) ** (p - 1) / (u ** p + (1 - u) ** p) ** 2
    return float(np.sum(f(a + (b - a) * g) * dg * wu) * (b - a))


def l1_gap(kind, sol):
    f = lambda x: halfline_density(kind, x)
    o1 = discretize_density(f, sol.lambda1)
    o2 = discretize_density(f, sol.lambda2, singular_point=0.0)
    return float(np.abs(o1.masses - sol.lambda1.masses).sum() + np.abs(o2.masses - sol.lambda2.masses).sum())


def test_01_branch_points(tmp_path, acceptance):
    t0 = time.perf_counter()
    status = main(["curve", "branch-points", "pollaczek", "--out", str(tmp_path)])
    dt = time.perf_counter() - t0
    obj = json.loads((tmp_path / "branch_points.json").read_text())
    pts = [complex(*p) for p in obj["points"]]
    want = [E1, -E1, 1j * E2, -1j * E2]
    err = max(min(abs(p - w) for p in pts) for w in want)
    res = max(obj["residuals"])
    ok = status == 0 and len(pts) == 4 and err <= 1e-10 and res <= 1e-10 and dt < 1.0
    assert acceptance(1, ok, f"max point error {err:.1e}, residual {res:.1e}, {dt:.2f} s")


def test_02_curve_masses(acceptance):
    t0 = time.perf_counter()
    bes = builtin_curve("bessel")
    pol = builtin_curve("pollaczek_psi")
    m_bes = graded_mass(lambda x: density_lambda1(bes, x), 0.0, 27 / 2)
    m_pol = 2 * graded_mass(lambda x: density_lambda1(pol, x), 0.0, E1)  # even density on [-e1, e1]
    y = np.linspace(-E2, E2, 201)[1:-1]
    sat = float(np.max(np.abs(density_lambda2(pol, y[y != 0]) - 1)))
    dt = time.perf_counter() - t0
    ok = abs(m_bes - 2) <= 1e-3 and abs(m_pol - 2) <= 1e-3 and sat <= 1e-6 and dt < 30
    assert acceptance(2, ok, f"bessel {m_bes:.6f}, pollaczek {m_pol:.6f}, saturation error {sat:.1e}, {dt:.1f} s")


@pytest.fixture(scope="module")
def solved_1000():
    out = {}
    for name in ("bessel", "pollaczek"):
        t = time.perf_counter()
        out[name] = (solve_equilibrium(builtin_problem(name, n_plus=1000)), time.perf_counter() - t)
    return out


def test_03_solver_oracle(solved, solved_1000, acceptance):
    ok, parts = True, []
    for name in ("bessel", "pollaczek"):
        s500, t500 = solved[name].value, solved[name].seconds
        s1000 = solved_1000[name][0]
        g500, g1000 = l1_gap(name, s500), l1_gap(name, s1000)
        edges = []
        for s in (s500, s1000):
            b = s.supp1[-1][1]
            cell = s.lambda1.cell_widths[np.searchsorted(s.lambda1.right_edges, b - 1e-12)]
            edges.append(abs(b - RIGHT_EDGE[name]) / cell)
        good = g500 <= 5e-2 and g1000 <= 0.7 * g500 and max(edges) <= 2 and t500 <= 600
        ok &= good
        parts.append(f"{name}: gap {g500:.2e} -> {g1000:.2e}, edge {max(edges):.2f} cells, {t500:.0f} s")
    assert acceptance(3, ok, "; ".join(parts))


def test_04_variational(solved, acceptance):
    ok, parts = True, []
    keys = ("W1_equality", "W1_lower", "W2_contact", "W2_upper_on_supp", "W2_lower_off_sat")
    for name in ("bessel", "pollaczek"):
        s = solved[name].value
        worst = max(s.residual_report[k] for k in keys)
        rep = variational_report(s.problem, s.lam, directions=100, seed=0)
        good = worst <= 1e-3 and rep["directional_min"] >= -1e-3 and len(rep["directional_derivatives"]) == 100
        ok &= good
        parts.append(f"{name}: max residual {worst:.1e}, min derivative {rep['directional_min']:.3f}")
    assert acceptance(4, ok, "; ".join(parts))


def test_05_field_shift(solved, acceptance):
    ok, worst_m, worst_w = True, 0.0, 0.0
    for name in ("bessel", "pollaczek"):
        s0 = solved[name].value
        for c in (1.0, -2.0, 5.0):
            sc = solve_equilibrium(s0.problem.with_field_shift(c))
            dm = max(np.max(np.abs(sc.lambda1.masses - s0.lambda1.masses)),
                     np.max(np.abs(sc.lambda2.masses - s0.lambda2.masses)))
            dw = abs(sc.w1 - s0.w1 - c)
            worst_m, worst_w = max(worst_m, dm), max(worst_w, dw)
    ok = worst_m <= 1e-8 and worst_w <= 1e-8
    assert acceptance(5, ok, f"max cell difference {worst_m:.1e}, max |dw1 - c| {worst_w:.1e}")


def test_06_mop_n1(pollaczek, acceptance):
    ctx = PrecisionContext(256)
    tight = mp.mpf(10) ** -25
    p = compute_Pn(pollaczek, 1, ctx)
    ce = max(abs(c - e) for c, e in zip(p.Pn.coefficients, (6, -11, 1)))
    with mp.workprec(256):
        me = max(abs(moment(pollaczek, j, nu, ctx) - e)
                 for j, exp in ((1, (2, 4, 32)), (2, (2, 2, 10))) for nu, e in enumerate(exp))
    ok = p.Pn.degree == 2 and ce <= tight and me <= tight
    assert acceptance(6, ok, f"coefficient error {mp.nstr(ce, 3)}, moment error {mp.nstr(me, 3)}")


def test_07_mop_invariants(pollaczek, mop_pairs, acceptance):
    bound = mp.mpf(10) ** (-MOP_BITS // 8)
    ok, worst = True, mp.mpf(0)
    for n, t in mop_pairs.items():
        p = t.value
        res = max([mp.mpf(p.residual)] + [mp.mpf(v) for v in p.residual_Pn2.values()])
        worst = max(worst, res)
        zs = sorted(p.zeros_Pn)
        simple = len(zs) == 2 * n and all(z > 0 for z in zs) and all(b > a for a, b in zip(zs, zs[1:]))
        dP = p.Pn.derivative()
        simple &= all(dP(z) != 0 for z in zs)
        in_gaps = len(p.zeros_Pn2) == n and all(z < 0 for z in p.zeros_Pn2) and len(set(p.gaps_Pn2)) == n
        in_gaps &= all(pollaczek.t(k + 1) < z < pollaczek.t(k) for z, k in zip(p.zeros_Pn2, p.gaps_Pn2))
        ok &= bool(res <= bound and simple and in_gaps)
    total = sum(t.seconds for t in mop_pairs.values())
    ok &= total <= 1800
    assert acceptance(7, ok, f"n = {sorted(mop_pairs)}, max residual {mp.nstr(worst, 3)}, {total:.0f} s")


def test_08_weak_star(pollaczek, mop_pairs, mop_reference, acceptance):
    pairs = [mop_pairs[n].value for n in (4, 16)]
    r4, r16 = zero_distribution_report(pollaczek, pairs, mop_reference.lambda1, mop_reference.lambda2, (-50.0, 0.0))
    ok = r16["d1"] < r4["d1"] and r16["d1"] <= 0.12 and r16["d2"] < r4["d2"] and r16["d2"] <= 0.15
    assert acceptance(8, ok, f"d1 {r4['d1']:.4f} -> {r16['d1']:.4f}, d2 {r4['d2']:.4f} -> {r16['d2']:.4f}")


def test_09_nth_root(mop_pairs, mop_norms, mop_reference, acceptance):
    w1, w2 = mop_reference.w1, mop_reference.w2
    r4, r16 = nth_root_report([mop_pairs[n].value for n in (4, 16)], [mop_norms[n] for n in (4, 16)], w1, w2)
    ok = (r16["gap1"] < r4["gap1"] and r16["gap1"] <= 0.2 * abs(w1)
          and r16["gap2"] < r4["gap2"] and r16["gap2"] <= 0.2 * abs(w1 + w2))
    assert acceptance(9, ok, f"N1 gap {r4['gap1']:.3f} -> {r16['gap1']:.3f}, "
                             f"N2 gap {r4['gap2']:.3f} -> {r16['gap2']:.3f} (w1 = {w1:.4f})")


def _random_measure(rng, n, mass):
    c, w = make_grid(0.0, 10.0, n, "power", power=rng.uniform(1, 3))
    m = rng.exponential(size=n) * (rng.random(n) < 0.7)
    if m.sum() == 0:
        m[0] = 1.0
    return GridMeasure(c, w, m * mass / m.sum())


def test_10_property_suites(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    checks = {}

    worst = math.inf
    for _ in range(200):
        mass = rng.uniform(0.1, 3)
        e = energy_forms(_random_measure(rng, int(rng.integers(4, 30)), mass),
                         _random_measure(rng, int(rng.integers(4, 30)), mass))
        worst = min(worst, e.difference_energy, e.M_mutual)
    checks["energy"] = worst >= -1e-10

    x, y = rng.standard_cauchy((2, 10_000)) * 10
    k = 0.5 * np.log1p(x * x) + 0.5 * np.log1p(y * y) - np.log(np.abs(x - y))
    checks["kernel"] = bool(np.all(k >= -1e-12))

    vieta = 0.0
    for kind, params in (("bessel", {}), ("pastur", {"a": 1.0}), ("quartic_source", {"a": 0.3, "b": -2.5}),
                         ("pollaczek_psi", {})):
        c = builtin_curve(kind, **params)
        z = (rng.uniform(-20, 20, 1000) + 1j * rng.uniform(0.05, 20, 1000)) * rng.choice([1, -1], 1000)
        h = branch_values_batch(c, z)
        p2, p1, p0 = (np.broadcast_to(v, z.shape) for v in c.coefficients(z))
        e2 = h[:, 0] * h[:, 1] + h[:, 0] * h[:, 2] + h[:, 1] * h[:, 2]
        sc = lambda v: np.maximum(1.0, np.abs(v))
        vieta = max(vieta, np.max(np.abs(h.sum(axis=1) + p2) / sc(p2)), np.max(np.abs(e2 - p1) / sc(p1)),
                    np.max(np.abs(h.prod(axis=1) + p0) / sc(p0)))
    checks["vieta"] = vieta <= 1e-10

    c = builtin_curve("pollaczek_psi")
    psi = rng.normal(size=1000) * 2 + 1j * rng.normal(size=1000) * 2
    psi = psi[(np.abs(psi - 1) > 1e-2) & (np.abs(psi * psi + 1) > 1e-2) & (np.abs(psi + 1) > 1e-2)]
    zeta = np.array([pollaczek_uniformization(p) for p in psi])
    p2, p1, p0 = c.coefficients(zeta)
    res = np.abs(((psi + p2) * psi + p1) * psi + p0)
    scale = 1 + np.abs(psi) ** 3 + np.abs(p2 * psi ** 2) + np.abs(p1 * psi) + np.abs(p0)
    checks["uniformization"] = bool(np.max(res / scale) <= 1e-10) and psi.size >= 990

    am2, aM2 = quartic_region_bounds(-2.0)
    am3, aM3 = quartic_region_bounds(-math.sqrt(3))
    q = 3 ** 0.25 / 3
    checks["quartic"] = (abs(am2) <= 1e-10 and abs(aM2 - 2 * math.sqrt(3) / 9) <= 1e-10
                         and abs(am3 - q) <= 1e-10 and abs(aM3 - q) <= 1e-10)

    dt = time.perf_counter() - t0
    ok = all(checks.values()) and dt < 120
    failed = [k for k, v in checks.items() if not v]
    assert acceptance(10, ok, f"{len(checks) - len(failed)}/{len(checks)} suites, Vieta {vieta:.1e}, "
                              f"{dt:.1f} s" + (f", failed {failed}" if failed else ""))


def test_11_assumptions(pollaczek, acceptance):
    rep = check_assumptions(pollaczek, n_list=(10, 50, 200))
    spacing = min(r["measured"] for r in rep.by_condition("i"))
    (v,) = rep.by_condition("v")
    v50 = v["measured"][list(v["n"]).index(50)]
    (iv,) = [r for r in rep.by_condition("iv") if not r["informational"]]
    g = iv["measured"]
    ok = spacing >= 4 / 3 and v50 <= 0.05 and v["compact"] == [0.5, 4.0] and g[0] > g[1] > g[2]
    assert acceptance(11, ok, f"(i) min ratio {spacing:.3f}, (v) gap at n=50 {v50:.4f}, "
                              f"(iv) gaps {[round(x, 4) for x in g]}")
