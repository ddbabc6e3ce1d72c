"""
Command-line front end.

Every command writes its artifacts and a ``manifest.json`` (configuration,
library versions, wall time, sha256 of every emitted file, per-check
results) into the run directory given by ``--out``.  The manifest is written
on failure paths too.

Exit codes: 0 all requested checks pass, 1 a check failed, 2 bad input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import gmpy2
import mpmath as mp
import numpy as np

from . import __version__
from .equilibrium import (
    NonConvergenceError,
    WindowError,
    builtin_problem,
    load_solution,
    problem_from_json,
    save_solution,
    solve_equilibrium,
    variational_report,
)
from .hp_numerics import DegenerateRootError, PrecisionContext, QuadratureError
from .measures import GridMeasure, discretize_density
from .nikishin_mop import (
    ConsistencyError,
    PrecisionError,
    SearchWindowError,
    TruncationError,
    check_assumptions,
    compute_Pn,
    compute_Pn2,
    default_context,
    norm_integrals,
    nth_root_report,
    pair_from_json,
    pair_to_json,
    zero_distribution_report,
    zeros_csv,
    _system_by_name,
)
from .spectral_curves import NearBranchPointError, branch_points, builtin_curve, curve_table_csv, halfline_density

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

NUMERIC_ERRORS = (NonConvergenceError, WindowError, PrecisionError, ConsistencyError, SearchWindowError,
                  TruncationError, QuadratureError, DegenerateRootError, NearBranchPointError)


class InputError(ValueError):
    """Malformed command-line input or configuration file."""


# ---------------------------------------------------------------------------
# run bookkeeping
# ---------------------------------------------------------------------------


class Run:
    """Per-run directory with a single writer and a manifest."""

    def __init__(self, out: str, argv: Sequence[str], config: dict):
        self.out = out
        self.argv = list(argv)
        self.config = config
        self.files: List[str] = []
        self.checks: Dict[str, bool] = {}
        self.details: Dict[str, object] = {}
        self.t0 = time.time()
        os.makedirs(out, exist_ok=True)

    def write(self, name: str, text: str) -> str:
        path = os.path.join(self.out, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        if name not in self.files:
            self.files.append(name)
        return path

    def write_json(self, name: str, obj) -> str:
        return self.write(name, json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")

    def check(self, name: str, ok: bool, detail=None) -> bool:
        self.checks[name] = bool(ok)
        if detail is not None:
            self.details[name] = detail
        return bool(ok)

    def manifest(self, status: int, error: Optional[str] = None) -> str:
        inv = []
        for name in self.files:
            with open(os.path.join(self.out, name), "rb") as fh:
                inv.append({"file": name, "sha256": hashlib.sha256(fh.read()).hexdigest()})
        obj = {
            "argv": self.argv,
            "config": self.config,
            "versions": {"nikishin": __version__, "python": platform.python_version(), "numpy": np.__version__,
                         "mpmath": mp.__version__, "gmpy2": gmpy2.version()},
            "wall_time_s": round(time.time() - self.t0, 3),
            "files": inv,
            "checks": self.checks,
            "check_details": self.details,
            "exit_status": status,
            "error": error,
        }
        path = os.path.join(self.out, "manifest.json")
        with open(path, "w") as fh:
            json.dump(obj, fh, indent=1, sort_keys=True, default=_json_default)
            fh.write("\n")
        return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, mp.mpf):
        return mp.nstr(o, 20)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------


def _parse_params(text: Optional[str]) -> Dict[str, float]:
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        if "=" not in item:
            raise InputError(f"--params: expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            raise InputError(f"--params: value of {k.strip()!r} is not a number: {v!r}") from None
    return out


def _parse_range(text: Optional[str], default: Tuple[float, float, int]) -> np.ndarray:
    lo, hi, n = default
    if text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise InputError(f"--range: expected lo:hi[:n], got {text!r}")
        try:
            lo, hi = float(parts[0]), float(parts[1])
            n = int(parts[2]) if len(parts) == 3 else n
        except ValueError:
            raise InputError(f"--range: malformed numbers in {text!r}") from None
    if not (hi > lo and n >= 2):
        raise InputError("--range: need lo < hi and at least 2 points")
    return np.linspace(lo, hi, n)


def _parse_n_list(text: str) -> List[int]:
    try:
        ns = sorted({int(v) for v in text.split(",") if v.strip()})
    except ValueError:
        raise InputError(f"--n-list: expected comma separated integers, got {text!r}") from None
    if not ns or ns[0] < 1:
        raise InputError("--n-list: values must be positive")
    return ns


def _check_tol(tol: Optional[float]) -> Optional[float]:
    if tol is not None and not (1e-12 <= tol <= 1e-2):
        raise InputError(f"--tol must lie in [1e-12, 1e-2], got {tol}")
    return tol


_CURVE_ALIASES = {"pollaczek": "pollaczek_psi"}
_CURVE_RANGES = {"bessel": (-20.0, 15.0, 351), "pollaczek_psi": (-3.0, 3.0, 301),
                 "pastur": (-4.0, 4.0, 401), "quartic_source": (-3.0, 3.0, 301)}


def _curve(kind: str, params: Dict[str, float]):
    kind = _CURVE_ALIASES.get(kind, kind)
    try:
        return builtin_curve(kind, **params)
    except (ValueError, TypeError) as exc:
        raise InputError(f"curve {kind}: {exc}") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _load_problem(spec: str, n_cells: Optional[int]):
    if spec.startswith("builtin:"):
        parts = spec.split(":")
        name = parts[1]
        norm = parts[2] if len(parts) > 2 else "curve"
        try:
            p = builtin_problem(name, n_cells or 500, normalization=norm)
        except (ValueError, KeyError) as exc:
            raise InputError(f"{spec}: {exc}") from None
        return p
    if not os.path.exists(spec):
        raise InputError(f"problem spec {spec!r} does not exist")
    try:
        with open(spec) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{spec}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        p = problem_from_json(obj)
    except ValueError as exc:
        raise InputError(f"{spec}: {exc}") from None
    if n_cells:
        p = p.with_grid(n_cells)
    return p


def _density_csv(l1: GridMeasure, l2: GridMeasure) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["measure", "left", "right", "center", "mass", "density"])
    for name, mu in (("lambda1", l1), ("lambda2", l2)):
        for a, b, c, m, d in zip(mu.left_edges, mu.right_edges, mu.nodes, mu.masses, mu.densities):
            w.writerow([name, repr(float(a)), repr(float(b)), repr(float(c)), repr(float(m)), repr(float(d))])
    return buf.getvalue()


def _oracle_kind(problem_json: dict) -> Optional[Tuple[str, str]]:
    fld, con = problem_json.get("field", {}), problem_json.get("constraint", {})
    kind = fld.get("kind")
    if kind in ("bessel", "pollaczek") and con.get("kind") == kind:
        norm = fld.get("normalization", "curve")
        if norm in ("curve", "mop"):
            return kind, norm
    return None


def _oracle_gap(kind: str, norm: str, l1: GridMeasure, l2: GridMeasure) -> Tuple[float, float]:
    """L1 distance between the solved cell masses and the curve densities."""
    f = lambda x: halfline_density(kind, x, normalization=norm)
    o1 = discretize_density(f, l1)
    o2 = discretize_density(f, l2, singular_point=0.0)
    return float(np.abs(o1.masses - l1.masses).sum()), float(np.abs(o2.masses - l2.masses).sum())


def cmd_equilibrium_solve(args, run: Run) -> int:
    p = _load_problem(args.spec, args.n_cells)
    sol = solve_equilibrium(p, tol=args.tol, kernel=args.kernel)
    for path in save_solution(sol, run.out):
        run.files.append(os.path.basename(path))
    run.write("densities.csv", _density_csv(sol.lambda1, sol.lambda2))
    rep = variational_report(p, sol.lam, directions=100, seed=args.seed)
    rep_out = {k: v for k, v in rep.items() if k != "directional_derivatives"}
    run.write_json("variational.json", rep_out)
    run.check("converged", sol.converged)
    run.check("variational_conditions", rep["accepted"], rep_out)
    print(f"{p.name}: w1 = {sol.w1:.10g}  w2 = {sol.w2:.6g}  supp(lambda1) = {sol.supp1}")
    print(f"saturation region: {sol.saturation_region}")
    print(f"max variational residual {sol.max_residual:.3e}; min directional derivative "
          f"{rep['directional_min']:.3e}")
    return EXIT_OK if all(run.checks.values()) else EXIT_CHECK


def cmd_curve_eval(args, run: Run) -> int:
    c = _curve(args.kind, _parse_params(args.params))
    xs = _parse_range(args.range, _CURVE_RANGES[c.kind])
    text = curve_table_csv(c, xs, eps=args.eps)
    run.write("curve.csv", text)
    name = _CURVE_ALIASES.get(args.kind, args.kind)
    if name in ("bessel", "pollaczek_psi"):
        half = "pollaczek" if name == "pollaczek_psi" else "bessel"
        hx = _parse_range(args.range, (-20.0, 15.0, 351))
        hx = hx[hx != 0]
        dens = halfline_density(half, hx, eps=args.eps)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "density"])
        for x, d in zip(hx, dens):
            w.writerow([repr(float(x)), repr(float(d))])
        run.write("halfline_density.csv", buf.getvalue())
    finite = all(math.isfinite(float(v)) for row in csv.reader(io.StringIO(text)) if row[0] != "x"
                 for v in row[:7])
    run.check("finite_boundary_values", finite)
    print(f"wrote {len(xs)} rows to {os.path.join(run.out, 'curve.csv')}")
    return EXIT_OK if finite else EXIT_CHECK


def _poly_str(coeffs) -> str:
    terms = []
    for k in range(len(coeffs) - 1, -1, -1):
        c = float(np.real(coeffs[k]))
        if c == 0:
            continue
        mag = abs(c)
        num = "" if (mag == 1 and k > 0) else f"{mag:g}"
        var = "" if k == 0 else ("z" if k == 1 else f"z^{k}")
        sep = "*" if num and var else ""
        terms.append(("- " if c < 0 else "+ ") + num + sep + var)
    s = " ".join(terms) or "0"
    return s[2:] if s.startswith("+ ") else "-" + s[2:]


def cmd_curve_branch_points(args, run: Run) -> int:
    c = _curve(args.kind, _parse_params(args.params))
    t = time.time()
    bp = branch_points(c)
    elapsed = time.time() - t
    res = [bp.residual(z) for z in bp.points]
    out = {"kind": c.kind, "params": c.params,
           "points": [[z.real, z.imag] for z in bp.points],
           "residuals": res,
           "discriminant": [float(np.real(v)) for v in bp.discriminant],
           "singular": [[z.real, z.imag] for z in bp.singular]}
    run.write_json("branch_points.json", out)
    for z, r in zip(bp.points, res):
        label = f"{z.real:+.9f}" if abs(z.imag) < 1e-14 else (
            f"{z.imag:+.9f}i" if abs(z.real) < 1e-14 else f"{z.real:+.9f}{z.imag:+.9f}i")
        print(f"{label}    discriminant residual {r:.1e}")
    print("discriminant:", _poly_str(bp.discriminant))
    run.check("discriminant_residual", max(res, default=0.0) <= 1e-10, {"max": max(res, default=0.0)})
    run.details["runtime_s"] = elapsed
    return EXIT_OK if all(run.checks.values()) else EXIT_CHECK


def _mop_job(system: str, n: int, bits: int) -> dict:
    sys_ = _system_by_name(system)
    ctx = PrecisionContext(bits)
    t = time.time()
    pair = compute_Pn2(sys_, compute_Pn(sys_, n, ctx), ctx)
    norms = norm_integrals(sys_, pair, ctx)
    obj = pair_to_json(pair, sys_.scaling(n), norms)
    return {"record": obj, "seconds": time.time() - t}


def _structural_checks(pair, bits: int) -> Dict[str, bool]:
    bound = mp.mpf(10) ** (-mp.mpf(bits) / 8)
    gaps = list(pair.gaps_Pn2)
    return {
        "residual": bool(pair.residual <= bound and all(v <= bound for v in pair.residual_Pn2.values())),
        "Pn_zeros_positive_simple": bool(pair.zeros_Pn[0] > 0 and all(
            b > a for a, b in zip(pair.zeros_Pn, pair.zeros_Pn[1:]))),
        "Pn2_zeros_negative_one_per_gap": bool(pair.zeros_Pn2[-1] < 0 and len(set(gaps)) == len(gaps)),
    }


def cmd_mop_run(args, run: Run) -> int:
    try:
        _system_by_name(args.system)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    ns = _parse_n_list(args.n_list)
    bits = args.bits or default_context().mantissa_bits
    workers = max(1, min(args.workers, len(ns)))
    if workers == 1:
        results = [_mop_job(args.system, n, bits) for n in ns]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_mop_job, [args.system] * len(ns), ns, [bits] * len(ns)))
    sys_ = _system_by_name(args.system)
    pairs = []
    for n, res in zip(ns, results):
        rec = res["record"]
        run.write_json(f"mop_n{n:03d}.json", rec)
        pair = pair_from_json(rec)
        pairs.append(pair)
        for name, ok in _structural_checks(pair, bits).items():
            run.check(f"n={n}:{name}", ok)
        run.details[f"n={n}:seconds"] = round(res["seconds"], 2)
        print(f"n = {n:3d}: residual {rec['residuals']['orthogonality']}, "
              f"sigma1 ratio {rec['residuals'].get('sigma1_ratio')}, "
              f"sigma2 varying {rec['residuals'].get('sigma2_varying')}, "
              f"largest rescaled zero {float(rec['rescaled_zeros_Pn'][-1]):.6f}")
        if n == 1:
            print("P_1 coefficients (lowest first):", ", ".join(mp.nstr(mp.mpf(c), 15)
                                                              for c in rec["coefficients_Pn"]))
    run.write("zeros.csv", zeros_csv(sys_, pairs))
    run.write_json("mop_run.json", {"system": args.system, "n_list": ns, "mantissa_bits": bits})
    return EXIT_OK if all(run.checks.values()) else EXIT_CHECK


def _load_mop_dir(path: str):
    if not os.path.isdir(path):
        raise InputError(f"{path!r} is not a directory")
    info_path = os.path.join(path, "mop_run.json")
    if not os.path.exists(info_path):
        raise InputError(f"{path!r} has no mop_run.json; run 'mop run' first")
    with open(info_path) as fh:
        info = json.load(fh)
    pairs, norms = [], []
    for n in info["n_list"]:
        with open(os.path.join(path, f"mop_n{n:03d}.json")) as fh:
            rec = json.load(fh)
        pairs.append(pair_from_json(rec))
        norms.append((mp.mpf(rec["N1"]), mp.mpf(rec["N2"])))
    return info, pairs, norms


def cmd_compare_zeros(args, run: Run) -> int:
    info, pairs, norms = _load_mop_dir(args.mop_dir)
    if not os.path.exists(os.path.join(args.eq_dir, "solution.json")):
        raise InputError(f"{args.eq_dir!r} has no solution.json; run 'equilibrium solve' first")
    header, l1, l2 = load_solution(args.eq_dir)
    sys_ = _system_by_name(info["system"])
    dist = zero_distribution_report(sys_, pairs, l1, l2, window2=(args.window_lo, 0.0))
    roots = nth_root_report(pairs, norms, header["w1"], header["w2"])
    rows = [dict(d, **{k: v for k, v in r.items() if k != "n"}) for d, r in zip(dist, roots)]
    run.write_json("compare.json", {"rows": rows, "w1": header["w1"], "w2": header["w2"],
                                    "window2": [args.window_lo, 0.0]})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["n", "d1", "d2", "rate1", "gap1", "rate2", "gap2"]
    w.writerow(cols)
    for r in rows:
        w.writerow([r["n"]] + [repr(float(r[c])) for c in cols[1:]])
    run.write("compare.csv", buf.getvalue())
    first, last = rows[0], rows[-1]
    run.check("weak_star_lambda1_trend", last["d1"] < first["d1"])
    run.check("weak_star_lambda2_trend", last["d2"] < first["d2"])
    run.check("nth_root_trend", last["gap1"] < first["gap1"] and last["gap2"] < first["gap2"])
    for r in rows:
        print(f"n = {r['n']:3d}: d1 {r['d1']:.4f}  d2 {r['d2']:.4f}  "
              f"-log(N1)/n {r['rate1']:.4f} (w1 {header['w1']:.4f})  -log(N2)/n {r['rate2']:.4f}")
    return EXIT_OK if all(run.checks.values()) else EXIT_CHECK


def cmd_assumptions_check(args, run: Run) -> int:
    try:
        sys_ = _system_by_name(args.system)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    ns = _parse_n_list(args.n_list)
    rep = check_assumptions(sys_, ns)
    run.write_json("assumptions.json", rep.to_json())
    for r in rep.records:
        if r.get("informational"):
            print(f"({r['condition']}) [{r.get('limit')}, informational] {r['measured']}")
            continue
        name = r["condition"] + (f"@n={r['n']}" if isinstance(r["n"], int) else "")
        run.check(name, r["passed"])
        print(f"({r['condition']}) n={r['n']} measured={r['measured']} "
              f"{'pass' if r['passed'] else 'FAIL'}")
    return EXIT_OK if all(run.checks.values()) else EXIT_CHECK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def svg_line_plot(series: Sequence[Tuple[str, Sequence[float], Sequence[float]]], title: str,
                  xlabel: str = "", ylabel: str = "", logy: bool = False,
                  width: int = 640, height: int = 400) -> str:
    """Minimal SVG line chart; one polyline per series."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    pts = []
    for _, xs, ys in series:
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        if logy:
            ok = ys > 0
            xs, ys = xs[ok], np.log10(ys[ok])
        ok = np.isfinite(xs) & np.isfinite(ys)
        pts.append((xs[ok], ys[ok]))
    allx = np.concatenate([p[0] for p in pts]) if pts else np.zeros(1)
    ally = np.concatenate([p[1] for p in pts]) if pts else np.zeros(1)
    if allx.size == 0:
        allx, ally = np.zeros(1), np.zeros(1)
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    ml, mr, mt, mb = 60, 20, 30, 45
    sx = lambda x: ml + (x - x0) / (x1 - x0) * (width - ml - mr)
    sy = lambda y: height - mb - (y - y0) / (y1 - y0) * (height - mt - mb)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.0f}" y="18" text-anchor="middle">{title}</text>',
           f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>']
    for i in range(5):
        xv = x0 + i * (x1 - x0) / 4
        yv = y0 + i * (y1 - y0) / 4
        ylab = f"1e{yv:.1f}" if logy else f"{yv:.3g}"
        out.append(f'<text x="{sx(xv):.1f}" y="{height - mb + 16}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{ml - 4}" y="{sy(yv) + 4:.1f}" text-anchor="end">{ylab}</text>')
    out.append(f'<text x="{width / 2:.0f}" y="{height - 8}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="14" y="{height / 2:.0f}" transform="rotate(-90 14 {height / 2:.0f})" '
               f'text-anchor="middle">{ylabel}</text>')
    for i, ((label, _, _), (xs, ys)) in enumerate(zip(series, pts)):
        col = colors[i % len(colors)]
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{path}"/>')
        out.append(f'<text x="{width - mr - 4}" y="{mt + 14 * (i + 1)}" text-anchor="end" fill="{col}">'
                   f'{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_report(args, run: Run) -> int:
    src = args.run_dir
    man_path = os.path.join(src, "manifest.json")
    if not os.path.exists(man_path):
        raise InputError(f"{src!r} has no manifest.json")
    with open(man_path) as fh:
        manifest = json.load(fh)
    lines = [f"# Run report: {src}", "", f"command: `{' '.join(manifest['argv'])}`", "",
             f"exit status: {manifest['exit_status']}", "", "| check | result |", "|---|---|"]
    for name, ok in sorted(manifest["checks"].items()):
        lines.append(f"| {name} | {'pass' if ok else 'FAIL'} |")
    lines.append("")
    if os.path.exists(os.path.join(src, "solution.json")):
        header, l1, l2 = load_solution(src)
        lines += ["## Equilibrium", "", f"w1 = {header['w1']:.10g}, w2 = {header['w2']:.6g}", "",
                  f"supp lambda1: {header['supports']['supp1']}", "",
                  f"saturation: {header['supports']['saturation']}", ""]
        hi = l1.right_edges[-1]
        lo = max(l2.left_edges[0], -10 * hi)
        m2 = l2.nodes >= lo
        series = [("lambda1 (solver)", l1.nodes, l1.densities),
                  ("lambda2 (solver)", l2.nodes[m2], l2.densities[m2])]
        ok = _oracle_kind(header["problem"])
        if ok:
            kind, norm = ok
            g1, g2 = _oracle_gap(kind, norm, l1, l2)
            lines += [f"L1 gap to curve densities: lambda1 {g1:.3e}, lambda2 {g2:.3e}, "
                      f"total {g1 + g2:.3e}", ""]
            run.check("oracle_L1_gap", g1 + g2 <= 5e-2, {"lambda1": g1, "lambda2": g2})
            xs = np.concatenate([l2.nodes[m2], l1.nodes])
            series.append(("curve", xs, halfline_density(kind, xs, normalization=norm)))
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["x", "solver_density", "curve_density"])
            for mu in (l2, l1):
                cur = halfline_density(kind, mu.nodes, normalization=norm)
                for x, d, c in zip(mu.nodes, mu.densities, cur):
                    w.writerow([repr(float(x)), repr(float(d)), repr(float(c))])
            run.write("density_comparison.csv", buf.getvalue())
        run.write("densities.svg", svg_line_plot(series, "equilibrium densities", "x", "density"))
        lines += ["![densities](densities.svg)", ""]
    cmp_path = os.path.join(src, "compare.json")
    if os.path.exists(cmp_path):
        with open(cmp_path) as fh:
            cmp_ = json.load(fh)
        rows = cmp_["rows"]
        lines += ["## Zero distributions", "", "| n | d1 | d2 | -log(N1)/n | -log(N2)/n |", "|---|---|---|---|---|"]
        for r in rows:
            lines.append(f"| {r['n']} | {r['d1']:.4f} | {r['d2']:.4f} | {r['rate1']:.4f} | {r['rate2']:.4f} |")
        lines += ["", f"w1 = {cmp_['w1']:.6f}, w2 = {cmp_['w2']:.3g}", ""]
        ns = [r["n"] for r in rows]
        run.write("cdf_distances.svg", svg_line_plot(
            [("nu(Q_n) vs lambda1/2", ns, [r["d1"] for r in rows]),
             ("nu(Q_n,2) vs lambda2", ns, [r["d2"] for r in rows])],
            "CDF distances", "n", "distance", logy=True))
        lines += ["![cdf distances](cdf_distances.svg)", ""]
    for name in sorted(os.listdir(src)):
        if name.startswith("mop_n") and name.endswith(".json") and not os.path.exists(cmp_path):
            with open(os.path.join(src, name)) as fh:
                rec = json.load(fh)
            lines.append(f"- n = {rec['n']}: residual {rec['residuals']['orthogonality']}, "
                         f"N1 = {rec['N1'][:12]}, N2 = {rec['N2'][:12]}")
    run.write("summary.md", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if all(run.checks.values()) else EXIT_CHECK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="run directory (default: ./runs/<command>)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="worker processes for independent jobs (default: logical CPUs)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomised checks")
    common.add_argument("--bits", type=int, default=None,
                        help="mantissa bits for high-precision work (default: $EQUILIB_BITS or 1024)")
    common.add_argument("--tol", type=float, default=None, help="solver tolerance override, in [1e-12, 1e-2]")

    ap = argparse.ArgumentParser(prog="nikishin", description=__doc__.split("\n\n")[0].strip())
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    eq = sub.add_parser("equilibrium", help="vector equilibrium problems").add_subparsers(dest="action", required=True)
    s = eq.add_parser("solve", parents=[common], help="solve a problem given as JSON (or builtin:NAME[:NORM])")
    s.add_argument("spec")
    s.add_argument("--n-cells", type=int, default=None)
    s.add_argument("--kernel", choices=("plain", "modified"), default="plain")
    s.set_defaults(func=cmd_equilibrium_solve)

    cu = sub.add_parser("curve", help="spectral curves").add_subparsers(dest="action", required=True)
    s = cu.add_parser("eval", parents=[common], help="boundary values and densities on a real grid")
    s.add_argument("kind")
    s.add_argument("--params", default=None, help="comma separated key=value")
    s.add_argument("--range", default=None, help="lo:hi[:n]")
    s.add_argument("--eps", type=float, default=1e-4, help="offset of the boundary-value extrapolation")
    s.set_defaults(func=cmd_curve_eval)
    s = cu.add_parser("branch-points", parents=[common], help="branch points and discriminant")
    s.add_argument("kind")
    s.add_argument("--params", default=None)
    s.set_defaults(func=cmd_curve_branch_points)

    mo = sub.add_parser("mop", help="multiple orthogonal polynomials").add_subparsers(dest="action", required=True)
    s = mo.add_parser("run", parents=[common], help="compute P_n, P_n,2 and norms for each n")
    s.add_argument("system")
    s.add_argument("--n-list", default="1,2,4,8,12,16")
    s.set_defaults(func=cmd_mop_run)

    co = sub.add_parser("compare", help="compare zeros with equilibrium measures").add_subparsers(
        dest="action", required=True)
    s = co.add_parser("zeros", parents=[common])
    s.add_argument("mop_dir")
    s.add_argument("eq_dir")
    s.add_argument("--window-lo", type=float, default=-50.0, help="left end of the lambda2 window")
    s.set_defaults(func=cmd_compare_zeros)

    asp = sub.add_parser("assumptions", help="validate the hypotheses of the limit theorem").add_subparsers(
        dest="action", required=True)
    s = asp.add_parser("check", parents=[common])
    s.add_argument("system")
    s.add_argument("--n-list", default="10,50,200")
    s.set_defaults(func=cmd_assumptions_check)

    s = sub.add_parser("report", parents=[common], help="markdown summary and SVG plots of a run directory")
    s.add_argument("run_dir")
    s.set_defaults(func=cmd_report)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cmd = args.command + (f"-{args.action}" if getattr(args, "action", None) else "")
    out = args.out or os.path.join("runs", cmd)
    if args.command == "report" and args.out is None:
        out = args.run_dir
    config = {k: v for k, v in vars(args).items() if k != "func"}
    run = Run(out, argv, config)
    status, error = EXIT_OK, None
    try:
        _check_tol(args.tol)
        if args.bits is not None and args.bits < 64:
            raise InputError("--bits must be at least 64")
        if args.workers < 1:
            raise InputError("--workers must be positive")
        status = args.func(args, run)
        if status == EXIT_CHECK:
            failed = [k for k, v in run.checks.items() if not v]
            error = "failed checks: " + ", ".join(failed)
            print(error, file=sys.stderr)
    except InputError as exc:
        status, error = EXIT_INPUT, f"input error: {exc}"
        print(error, file=sys.stderr)
    except NUMERIC_ERRORS as exc:
        status, error = EXIT_NUMERIC, f"numerical failure ({type(exc).__name__}): {exc}"
        print(error, file=sys.stderr)
    finally:
        run.manifest(status, error)
    return status


if __name__ == "__main__":
    sys.exit(main())
