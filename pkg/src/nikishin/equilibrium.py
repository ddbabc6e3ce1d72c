"""
Constrained two-measure equilibrium problems of Nikishin type.

The problem: minimise

    J(mu1, mu2) = 2 * ( I(mu1) - I(mu1, mu2) + I(mu2) + int phi dmu1 )

over positive measures with ``|mu1| = 2`` on ``[0, inf)`` and ``|mu2| = 1`` on
``(-inf, 0]`` subject to the upper constraint ``mu2 <= sigma``.  On a pair of
truncated grids this becomes a convex quadratic programme in the cell masses;
the gradient of ``J`` divided by two is exactly the vector of cell averages
of the effective fields

    W1 = 2 P(mu1) - P(mu2) + phi,     W2 = 2 P(mu2) - P(mu1),

so the discrete KKT conditions are the cell-averaged version of the
variational conditions:

* ``W1 = w1`` on supp mu1 and ``W1 >= w1`` elsewhere,
* ``W2 <= w2`` on supp mu2 and ``W2 >= w2`` on supp(sigma - mu2).

Built-in data
-------------
``bessel``, ``pollaczek`` and ``hermite_mapped`` are families of the form
``phi(x) = alpha*x + beta*sqrt(x)`` with ``sigma'(x) = c*|x|**q``.  Their
normalisations are chosen so that the solution coincides with the
densities read off the corresponding spectral curves (see
:mod:`nikishin.spectral_curves`); the alternative normalisations are
selectable by name.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .measures import (
    GridMeasure,
    _log1p_sq_cell_mean,
    cell_kernel_matrix,
    energy_forms,
    log_moment,
    log_potential,
    make_grid,
    measure_from_json,
    measure_to_json,
)

__all__ = [
    "ProfileSpec",
    "EquilibriumProblem",
    "VectorMeasure",
    "EquilibriumSolution",
    "InteractionSpec",
    "ConstraintViolationError",
    "WindowError",
    "NonConvergenceError",
    "builtin_problem",
    "evaluate_functional",
    "solve_equilibrium",
    "effective_fields",
    "variational_report",
    "convert_constants",
    "map_line_to_halfline",
    "problem_from_json",
    "problem_to_json",
    "save_solution",
    "load_solution",
    "SQRT2",
]

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------


class ConstraintViolationError(ValueError):
    """A vector measure is not admissible; ``cells`` lists offending indices."""

    def __init__(self, message: str, cells: Sequence[int] = ()):
        self.cells = list(cells)
        super().__init__(f"{message}; offending cells: {self.cells[:20]}"
                         + (" ..." if len(self.cells) > 20 else ""))


class WindowError(RuntimeError):
    """The first measure presses against the right end of its window."""


class NonConvergenceError(RuntimeError):
    """Iteration budget exhausted; ``best`` holds the best iterate found."""

    def __init__(self, message: str, best: "EquilibriumSolution"):
        self.best = best
        super().__init__(message)


# ---------------------------------------------------------------------------
# field and constraint profiles
# ---------------------------------------------------------------------------

_FIELD_PRESETS = {
    # (alpha, beta): phi(x) = alpha x + beta sqrt(x)
    ("bessel", "curve"): (1.0, -2.0 * SQRT2),
    ("bessel", "printed"): (0.5, -1.0),
    ("pollaczek", "curve"): (0.0, 2.0 * math.pi),
    ("pollaczek", "mop"): (0.0, math.pi),
    ("pollaczek", "printed"): (0.0, math.pi),
}

_CONSTRAINT_PRESETS = {
    # (c, q): sigma'(x) = c |x|**q on x < 0
    ("bessel", "curve"): (SQRT2 / math.pi, -0.5),
    ("bessel", "printed"): (1.0 / math.pi, 0.5),
    ("pollaczek", "curve"): (1.0, -0.5),
    ("pollaczek", "mop"): (0.5, -0.5),
    ("pollaczek", "printed"): (1.0, -0.5),
}

_KINDS = ("bessel", "pollaczek", "hermite_mapped", "power", "custom_table")
_PROFILE_KEYS = {"bessel": {"normalization"}, "pollaczek": {"normalization"}, "hermite_mapped": {"a"},
                 "power": {"terms"}, "custom_table": {"x", "y"}}


def _pl_primitive(xs: np.ndarray, ys: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Integral from ``xs[0]`` to ``q`` of the piecewise-linear interpolant."""
    seg = np.diff(xs) * 0.5 * (ys[1:] + ys[:-1])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    q = np.clip(q, xs[0], xs[-1])
    k = np.clip(np.searchsorted(xs, q, side="right") - 1, 0, len(xs) - 2)
    dx = q - xs[k]
    slope = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
    return cum[k] + dx * (ys[k] + 0.5 * slope * dx)


@dataclass(frozen=True)
class ProfileSpec:
    """A named external field (``role="field"``) or constraint density.

    Parameters live in ``params``:

    * ``bessel`` / ``pollaczek``: ``normalization`` in ``{"curve", "mop",
      "printed"}`` (``mop`` only for pollaczek);
    * ``hermite_mapped``: ``a > 0``;
    * ``power``: ``terms`` as a list of ``[coefficient, exponent]``; for a
      field this is ``sum c x**p``, for a constraint ``sum c |x|**p``;
    * ``custom_table``: ``x`` and ``y`` arrays, interpolated linearly;
    * any field accepts an additive ``shift``.
    """

    kind: str
    role: str = "field"
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown {self.role} kind {self.kind!r}; expected one of {_KINDS}")
        if self.role not in ("field", "constraint"):
            raise ValueError(f"unknown role {self.role!r}")
        extra = set(self.params) - _PROFILE_KEYS[self.kind] - {"shift"}
        if extra:
            raise ValueError(f"unknown parameters {sorted(extra)} for {self.kind}")
        self._terms()  # validates parameters early

    # -- internal representation as power terms --------------------------
    def _terms(self) -> Optional[List[Tuple[float, float]]]:
        p = self.params
        if self.kind in ("bessel", "pollaczek"):
            norm = p.get("normalization", "curve")
            table = _FIELD_PRESETS if self.role == "field" else _CONSTRAINT_PRESETS
            key = (self.kind, norm)
            if key not in table:
                raise ValueError(f"normalization {norm!r} not available for {self.kind}")
            a, b = table[key]
            if self.role == "field":
                return [(a, 1.0), (b, 0.5)]
            return [(a, b)]
        if self.kind == "hermite_mapped":
            a = float(p.get("a", SQRT2))
            if not a > 0:
                raise ValueError("hermite_mapped needs a > 0")
            if self.role == "field":
                return [(1.0, 1.0), (-2.0 * a, 0.5)]
            return [(a / math.pi, -0.5)]
        if self.kind == "power":
            terms = [(float(c), float(e)) for c, e in p.get("terms", [])]
            if not terms:
                raise ValueError("power profile needs a non-empty 'terms' list")
            for _, e in terms:
                if e <= -1.0:
                    raise ValueError("exponents must exceed -1 for integrability")
            return terms
        xs = np.asarray(p.get("x", []), float)
        ys = np.asarray(p.get("y", []), float)
        if xs.size < 2 or xs.shape != ys.shape or np.any(np.diff(xs) <= 0):
            raise ValueError("custom_table needs increasing 'x' and matching 'y' (length >= 2)")
        if not np.all(np.isfinite(ys)):
            raise ValueError("custom_table values must be finite")
        return None

    @property
    def shift(self) -> float:
        return float(self.params.get("shift", 0.0)) if self.role == "field" else 0.0

    def with_shift(self, c: float) -> "ProfileSpec":
        params = dict(self.params)
        params["shift"] = self.shift + float(c)
        return ProfileSpec(self.kind, self.role, params)

    def __call__(self, x) -> np.ndarray:
        """Field value ``phi(x)`` or constraint density ``sigma'(x)``."""
        x = np.asarray(x, float)
        terms = self._terms()
        if terms is None:
            xs = np.asarray(self.params["x"], float)
            ys = np.asarray(self.params["y"], float)
            return np.interp(x, xs, ys) + self.shift
        ax = np.abs(x)
        out = np.zeros_like(ax)
        with np.errstate(divide="ignore"):
            for c, e in terms:
                out = out + c * ax ** e
        return out + self.shift

    def primitive(self, x) -> np.ndarray:
        """``int_0^x`` of the profile in the variable ``|x|``.

        For a field this is ``int_0^x phi``; for a constraint it is the mass
        ``sigma([x, 0])`` as a function of ``x <= 0``.
        """
        x = np.asarray(x, float)
        terms = self._terms()
        if terms is None:
            xs = np.asarray(self.params["x"], float)
            ys = np.asarray(self.params["y"], float)
            if self.role == "field":
                return _pl_primitive(xs, ys, x) - _pl_primitive(xs, ys, np.zeros(1))[0] + self.shift * x
            # constraint tables are given on negative abscissae
            return _pl_primitive(xs, ys, np.zeros(1))[0] - _pl_primitive(xs, ys, x)
        ax = np.abs(x)
        out = np.zeros_like(ax)
        for c, e in terms:
            out = out + c * ax ** (e + 1.0) / (e + 1.0)
        return out + self.shift * ax

    def cell_means(self, lo: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Average of the field over cells ``[lo, lo + w]`` (``x >= 0``)."""
        return (self.primitive(lo + w) - self.primitive(lo)) / w

    def cell_masses(self, lo: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Constraint mass in cells ``[lo, lo + w]`` (``x <= 0``)."""
        return np.maximum(self.primitive(lo) - self.primitive(np.minimum(lo + w, 0.0)), 0.0)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        for k, v in self.params.items():
            out[k] = list(v) if isinstance(v, (tuple, np.ndarray)) else v
        return out

    @classmethod
    def from_json(cls, obj: dict, role: str) -> "ProfileSpec":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ValueError(f"{role} spec must be an object with a 'kind'")
        params = {k: v for k, v in obj.items() if k != "kind"}
        return cls(obj["kind"], role, params)


# ---------------------------------------------------------------------------
# problem and solution types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InteractionSpec:
    """Interaction matrix ``A`` and field shift of the modified formulation.

    ``J = sum_ij A_ij I*(mu_i, mu_j) + 2 int phi* dmu1`` with the modified
    kernel ``log(sqrt(1+x^2) sqrt(1+y^2)/|x-y|)`` and
    ``phi*(x) = phi(x) - (3/2) log(1 + x^2)``.
    """

    matrix_A: Tuple[Tuple[int, int], Tuple[int, int]] = ((2, -1), (-1, 2))

    def __post_init__(self):
        a = np.asarray(self.matrix_A, float)
        if a.shape != (2, 2) or not np.allclose(a, a.T) or np.any(np.linalg.eigvalsh(a) <= 0):
            raise ValueError("interaction matrix must be 2x2 symmetric positive definite")

    def shift_f(self, phi: Callable) -> Callable:
        """The modified field ``x -> phi(x) - 1.5 log(1 + x^2)``."""
        return lambda x: phi(x) - 1.5 * np.log1p(np.asarray(x, float) ** 2)

    def modified_energy(self, energies, field_integral_modified: float) -> float:
        a = self.matrix_A
        return (a[0][0] * energies.M_self_1 + 2 * a[0][1] * energies.M_mutual
                + a[1][1] * energies.M_self_2 + 2.0 * field_integral_modified)


@dataclass(frozen=True)
class EquilibriumProblem:
    """Field, constraint, windows and grids of one equilibrium problem.

    The plus window ``[0, x_max]`` carries ``mu1`` on a grid graded towards
    the origin (``power_plus``); the minus window ``[-t_max, 0]`` carries
    ``mu2`` on a grid that is geometric (``scale_minus`` is the length scale
    below which it is roughly uniform) or power graded towards 0.
    """

    field_phi: ProfileSpec
    constraint_sigma: ProfileSpec
    x_max: float = 20.0
    t_max: float = 50.0
    n_plus: int = 200
    n_minus: int = 200
    power_plus: float = 2.0
    grading_minus: str = "geometric"
    scale_minus: float = 1e-3
    power_minus: float = 3.0
    mass_1: float = 2.0
    mass_2: float = 1.0
    tol: float = 1e-9
    name: str = "custom"

    def __post_init__(self):
        if self.field_phi.role != "field" or self.constraint_sigma.role != "constraint":
            raise ValueError("field_phi must be a field profile and constraint_sigma a constraint")
        if not (self.x_max > 0 and self.t_max > 0):
            raise ValueError("windows must have positive length")
        if self.n_plus < 4 or self.n_minus < 4:
            raise ValueError("grids need at least 4 cells")
        if not (1e-15 <= self.tol <= 1e-2):
            raise ValueError("tol must lie in [1e-15, 1e-2]")
        if self.constraint_window_mass <= self.mass_2:
            raise ValueError(
                f"constraint mass in window {self.constraint_window_mass:.6g} does not exceed "
                f"|mu2| = {self.mass_2}")
        vals = self.field_phi(self.grid_plus[0])
        if not np.all(np.isfinite(vals)):
            raise ValueError("field is not finite on the plus window")

    # -- grids --------------------------------------------------------------
    @property
    def grid_plus(self) -> Tuple[np.ndarray, np.ndarray]:
        return make_grid(0.0, self.x_max, self.n_plus, "power", "left", power=self.power_plus)

    @property
    def grid_minus(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.grading_minus == "geometric":
            return make_grid(-self.t_max, 0.0, self.n_minus, "geometric", "right",
                             scale=self.scale_minus)
        return make_grid(-self.t_max, 0.0, self.n_minus, self.grading_minus, "right",
                         power=self.power_minus)

    @property
    def sigma_cells(self) -> np.ndarray:
        c, w = self.grid_minus
        return self.constraint_sigma.cell_masses(c - w / 2, w)

    @property
    def sigma_measure(self) -> GridMeasure:
        c, w = self.grid_minus
        return GridMeasure(c, w, self.sigma_cells, {"role": "sigma"})

    @property
    def constraint_window_mass(self) -> float:
        return float(self.constraint_sigma.primitive(np.array([-self.t_max]))[0])

    @property
    def growth_margin(self) -> float:
        """``phi(x_max) - 4 log x_max``; large positive values confine mu1."""
        return float(self.field_phi(np.array([self.x_max]))[0] - 4.0 * math.log(self.x_max))

    def field_cell_means(self, mu: Optional[GridMeasure] = None) -> np.ndarray:
        if mu is None:
            c, w = self.grid_plus
            return self.field_phi.cell_means(c - w / 2, w)
        return self.field_phi.cell_means(mu.left_edges, mu.cell_widths)

    def with_field_shift(self, c: float) -> "EquilibriumProblem":
        return replace(self, field_phi=self.field_phi.with_shift(c))

    def with_grid(self, n_plus: int, n_minus: Optional[int] = None) -> "EquilibriumProblem":
        return replace(self, n_plus=int(n_plus), n_minus=int(n_minus or n_plus))


@dataclass(frozen=True, eq=False)
class VectorMeasure:
    """The pair ``(mu1, mu2)``."""

    mu1: GridMeasure
    mu2: GridMeasure


@dataclass(frozen=True, eq=False)
class EquilibriumSolution:
    """Output of :func:`solve_equilibrium`.

    ``W1_cells`` and ``W2_cells`` are cell averages of the effective fields,
    ``residual_report`` holds the maximal violations of each variational
    condition (all computed from the cell averages, which are exact for the
    discrete problem) together with pointwise diagnostics.
    """

    problem: EquilibriumProblem
    lam: VectorMeasure
    w1: float
    w2: float
    gamma1: float
    gamma2: float
    supp1: Tuple[Tuple[float, float], ...]
    supp2: Tuple[Tuple[float, float], ...]
    saturation_region: Tuple[Tuple[float, float], ...]
    residual_report: Dict[str, float]
    iterations: int
    functional_value: float
    W1_cells: np.ndarray
    W2_cells: np.ndarray
    history: Tuple[float, ...] = ()
    converged: bool = True
    kernel: str = "plain"

    @property
    def lambda1(self) -> GridMeasure:
        return self.lam.mu1

    @property
    def lambda2(self) -> GridMeasure:
        return self.lam.mu2

    @property
    def max_residual(self) -> float:
        keys = ("W1_equality", "W1_lower", "W2_contact", "W2_upper_on_supp", "W2_lower_off_sat")
        return max(self.residual_report[k] for k in keys)


# ---------------------------------------------------------------------------
# built-in problems
# ---------------------------------------------------------------------------

_BUILTIN_WINDOWS = {
    # name -> (x_max, t_max, scale_minus); lambda2 tails decay like
    # |x|^(-3/2), so the mass left beyond t_max is O(t_max^(-1/2))
    ("bessel", "curve"): (20.0, 1e10, 1e-5),
    ("bessel", "printed"): (40.0, 1e10, 1e-5),
    ("pollaczek", "curve"): (4.0, 1e10, 1e-4),
    ("pollaczek", "mop"): (16.0, 4e10, 4e-4),
    ("pollaczek", "printed"): (16.0, 1e10, 4e-4),
}


def builtin_problem(name: str, n_plus: int = 200, n_minus: Optional[int] = None,
                    normalization: str = "curve", a: float = SQRT2, **overrides) -> EquilibriumProblem:
    """Ready-made problems: ``bessel``, ``pollaczek`` and ``hermite_mapped``.

    ``normalization`` selects between the spectral-curve normalisation
    (default), the normalisation in which the Pollaczek problem describes
    the rescaled zeros directly (``"mop"``, the curve data dilated by 4) and
    the literal printed data (``"printed"``).  ``hermite_mapped`` is the
    half-line image of the external-source problem with parameter ``a``.
    """
    n_minus = n_plus if n_minus is None else n_minus
    if name in ("bessel", "pollaczek"):
        fld = ProfileSpec(name, "field", {"normalization": normalization})
        con = ProfileSpec(name, "constraint", {"normalization": normalization})
        x_max, t_max, scale = _BUILTIN_WINDOWS[(name, normalization)]
        label = f"{name}" if normalization == "curve" else f"{name}-{normalization}"
    elif name == "hermite_mapped":
        fld = ProfileSpec(name, "field", {"a": a})
        con = ProfileSpec(name, "constraint", {"a": a})
        x_max, t_max, scale = max(20.0, 10.0 * a * a), 1e10, 1e-5
        label = f"hermite_mapped(a={a:g})"
    else:
        raise ValueError(f"unknown built-in problem {name!r}")
    kw = dict(x_max=x_max, t_max=t_max, scale_minus=scale, n_plus=n_plus, n_minus=n_minus,
              name=label)
    kw.update(overrides)
    return EquilibriumProblem(fld, con, **kw)


# ---------------------------------------------------------------------------
# admissibility and functional
# ---------------------------------------------------------------------------


def _check_admissible(p: EquilibriumProblem, v: VectorMeasure, mass_tol: float = 1e-10) -> None:
    m1, m2 = v.mu1, v.mu2
    if np.any(m1.masses < 0):
        raise ConstraintViolationError("mu1 has negative cells", np.flatnonzero(m1.masses < 0))
    if np.any(m2.masses < 0):
        raise ConstraintViolationError("mu2 has negative cells", np.flatnonzero(m2.masses < 0))
    if np.any(m1.left_edges < -1e-14) or np.any(m1.right_edges > p.x_max * (1 + 1e-12)):
        raise ConstraintViolationError("mu1 leaves the plus window",
                                       np.flatnonzero((m1.left_edges < 0) | (m1.right_edges > p.x_max)))
    if np.any(m2.right_edges > 1e-14) or np.any(m2.left_edges < -p.t_max * (1 + 1e-12)):
        raise ConstraintViolationError("mu2 leaves the minus window",
                                       np.flatnonzero((m2.right_edges > 0) | (m2.left_edges < -p.t_max)))
    if abs(m1.total_mass - p.mass_1) > mass_tol * p.mass_1:
        raise ConstraintViolationError(f"|mu1| = {m1.total_mass!r} differs from {p.mass_1}")
    if abs(m2.total_mass - p.mass_2) > mass_tol * p.mass_2:
        raise ConstraintViolationError(f"|mu2| = {m2.total_mass!r} differs from {p.mass_2}")
    cap = p.constraint_sigma.cell_masses(m2.left_edges, m2.cell_widths)
    bad = np.flatnonzero(m2.masses > cap * (1 + 1e-12) + 1e-300)
    if bad.size:
        raise ConstraintViolationError("mu2 exceeds sigma", bad)


def evaluate_functional(p: EquilibriumProblem, v: VectorMeasure, return_modified: bool = False,
                        rtol: float = 1e-8):
    """``J(v) = 2(I(mu1) - I(mu1,mu2) + I(mu2) + int phi dmu1)``.

    The modified form (kernel ``log(sqrt(1+x^2)sqrt(1+y^2)/|x-y|)`` and
    field ``phi - 1.5 log(1+x^2)``) is evaluated alongside and must agree to
    ``rtol``; with ``return_modified=True`` both values are returned.
    """
    _check_admissible(p, v)
    e = energy_forms(v.mu1, v.mu2)
    field_int = float(p.field_cell_means(v.mu1) @ v.mu1.masses)
    plain = 2.0 * (e.I_self_1 - e.I_mutual + e.I_self_2 + field_int)
    field_mod = field_int - 1.5 * e.log_moment_1
    modified = InteractionSpec().modified_energy(e, field_mod)
    scale = max(1.0, abs(plain), abs(e.M_self_1), abs(e.M_self_2))
    if abs(plain - modified) > rtol * scale:
        raise RuntimeError(f"plain and modified functionals disagree: {plain!r} vs {modified!r}")
    return (plain, modified) if return_modified else plain


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------


def _proj_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto ``{x >= 0, sum x = total}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    ind = np.arange(1, v.size + 1)
    k = np.flatnonzero(u - css / ind > 0)[-1]
    theta = css[k] / (k + 1)
    return np.maximum(v - theta, 0.0)


def _proj_capped(v: np.ndarray, cap: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto ``{0 <= x <= cap, sum x = total}``.

    ``f(theta) = sum clip(v - theta, 0, cap)`` is piecewise linear and
    non-increasing; it is evaluated at all breakpoints at once and the
    crossing with ``total`` is interpolated exactly.
    """
    low = v - cap  # cell i is saturated for theta <= low[i]
    bps = np.unique(np.concatenate([v, low]))
    # sums over {v > theta} and {v - cap >= theta}
    order_v = np.sort(v)
    cs_v = np.concatenate([[0.0], np.cumsum(order_v[::-1])])[::-1]  # cs_v[i] = sum order_v[i:]
    idx = np.argsort(low)
    low_s, cap_s, v_s = low[idx], cap[idx], v[idx]
    cs_cap = np.concatenate([[0.0], np.cumsum(cap_s[::-1])])[::-1]
    cs_vl = np.concatenate([[0.0], np.cumsum(v_s[::-1])])[::-1]

    def f(theta):
        ib = np.searchsorted(order_v, theta, side="right")   # v > theta
        ia = np.searchsorted(low_s, theta, side="left")      # v - cap >= theta
        nb, na = v.size - ib, v.size - ia
        return cs_cap[ia] + (cs_v[ib] - cs_vl[ia]) - theta * (nb - na)

    fb = f(bps)
    # f is non-increasing in theta; find consecutive breakpoints bracketing total
    k = np.searchsorted(-fb, -total, side="left")
    if k == 0:
        theta = bps[0] - (total - fb[0]) / max(1, np.count_nonzero(v > bps[0]))
    elif k >= bps.size:
        raise ValueError("capped projection infeasible: total exceeds sum of caps")
    else:
        t0, t1, f0, f1 = bps[k - 1], bps[k], fb[k - 1], fb[k]
        theta = t0 if f0 == f1 else t0 + (f0 - total) * (t1 - t0) / (f0 - f1)
    x = np.clip(v - theta, 0.0, cap)
    return x


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------


@dataclass
class _Discrete:
    H: np.ndarray
    g0: np.ndarray
    cap: np.ndarray
    n1: int
    n2: int
    mass1: float
    mass2: float

    def J(self, x, Hx):
        return 0.5 * float(x @ Hx) + float(self.g0 @ x)

    def project(self, z):
        return np.concatenate([_proj_simplex(z[:self.n1], self.mass1),
                               _proj_capped(z[self.n1:], self.cap, self.mass2)])


def _build_discrete(p: EquilibriumProblem, kernel: str):
    c1, wd1 = p.grid_plus
    c2, wd2 = p.grid_minus
    g1 = GridMeasure(c1, wd1, np.zeros_like(c1))
    g2 = GridMeasure(c2, wd2, np.zeros_like(c2))
    k11 = cell_kernel_matrix(g1, g1)
    k22 = cell_kernel_matrix(g2, g2)
    k12 = cell_kernel_matrix(g1, g2)
    phibar = p.field_cell_means()
    if kernel == "modified":
        l1 = _log1p_sq_cell_mean(c1 - wd1 / 2, wd1)
        l2 = _log1p_sq_cell_mean(c2 - wd2 / 2, wd2)
        k11 = k11 + 0.5 * (l1[:, None] + l1[None, :])
        k22 = k22 + 0.5 * (l2[:, None] + l2[None, :])
        k12 = k12 + 0.5 * (l1[:, None] + l2[None, :])
        phibar = phibar - 1.5 * l1
    elif kernel != "plain":
        raise ValueError(f"unknown kernel {kernel!r}")
    H = np.block([[4.0 * k11, -2.0 * k12], [-2.0 * k12.T, 4.0 * k22]])
    g0 = np.concatenate([2.0 * phibar, np.zeros(c2.size)])
    d = _Discrete(H, g0, p.sigma_cells, c1.size, c2.size, p.mass_1, p.mass_2)
    return d, (c1, wd1, c2, wd2)


def _lipschitz(d: _Discrete, iters: int = 100) -> float:
    """Largest eigenvalue of H on the mass-preserving subspace (power iteration)."""
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(d.n1 + d.n2)

    def proj(u):
        a = u[:d.n1] - u[:d.n1].mean()
        b = u[d.n1:] - u[d.n1:].mean()
        return np.concatenate([a, b])

    v = proj(v)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        u = proj(d.H @ v)
        nrm = np.linalg.norm(u)
        if nrm == 0:
            break
        new = float(v @ u)
        v = u / nrm
        if abs(new - lam) <= 1e-6 * abs(new):
            lam = new
            break
        lam = new
    return 1.05 * max(lam, 1e-12)


def _kkt(d: _Discrete, x: np.ndarray, g: np.ndarray, rel_thr: float = 1e-10) -> Dict[str, float]:
    """Constants and maximal violations of the discrete variational conditions."""
    m1, m2 = x[:d.n1], x[d.n1:]
    W1, W2 = 0.5 * g[:d.n1], 0.5 * g[d.n1:]
    s1 = m1 > rel_thr * d.mass1
    w1 = float((W1[s1] * m1[s1]).sum() / m1[s1].sum())
    sat = m2 >= d.cap * (1.0 - rel_thr)
    pos = m2 > rel_thr * d.mass2
    contact = pos & ~sat
    zero = ~pos
    if np.any(contact):
        w2 = float((W2[contact] * m2[contact]).sum() / m2[contact].sum())
    else:
        hi = W2[sat].max() if np.any(sat) else -np.inf
        lo = W2[zero].min() if np.any(zero) else np.inf
        w2 = float(0.5 * (hi + lo)) if np.isfinite(hi) and np.isfinite(lo) else float(
            hi if np.isfinite(hi) else lo)

    def mx(a):
        return float(np.max(a)) if a.size else 0.0

    return {
        "w1": w1,
        "w2": w2,
        "W1_equality": mx(np.abs(W1[s1] - w1)),
        "W1_lower": max(0.0, mx(w1 - W1)),
        "W2_contact": mx(np.abs(W2[contact] - w2)),
        "W2_upper_on_supp": max(0.0, mx(W2[pos] - w2)),
        "W2_lower_off_sat": max(0.0, mx(w2 - W2[~sat])),
    }


def _kkt_max(r: Dict[str, float]) -> float:
    return max(r["W1_equality"], r["W1_lower"], r["W2_contact"], r["W2_upper_on_supp"],
               r["W2_lower_off_sat"])


def _polish(d: _Discrete, x: np.ndarray) -> Optional[np.ndarray]:
    """Solve the equality-constrained QP on the active set of ``x`` exactly."""
    n1 = d.n1
    m1, m2 = x[:n1], x[n1:]
    S1 = np.flatnonzero(m1 > 0)
    sat = m2 >= d.cap
    F = np.flatnonzero((m2 > 0) & ~sat)
    U = np.flatnonzero(sat & (d.cap > 0))
    idx = np.concatenate([S1, n1 + F])
    if idx.size == 0:
        return None
    xU = np.zeros(d.n1 + d.n2)
    xU[n1 + U] = d.cap[U]
    rhs_x = -d.g0[idx] - d.H[np.ix_(idx, n1 + U)] @ d.cap[U]
    k = idx.size
    ncon = 1 + (1 if F.size else 0)
    A = np.zeros((k + ncon, k + ncon))
    A[:k, :k] = d.H[np.ix_(idx, idx)]
    e1 = np.zeros(k)
    e1[:S1.size] = 1.0
    A[:k, k] = -e1
    A[k, :k] = e1
    b = np.concatenate([rhs_x, [d.mass1]])
    if F.size:
        e2 = np.zeros(k)
        e2[S1.size:] = 1.0
        A[:k, k + 1] = -e2
        A[k + 1, :k] = e2
        b = np.concatenate([b, [d.mass2 - d.cap[U].sum()]])
    elif abs(d.cap[U].sum() - d.mass2) > 1e-12:
        return None
    try:
        sol = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return None
    out = xU.copy()
    out[idx] = sol[:k]
    if np.any(out[:n1] < 0) or np.any(out[n1:] < 0) or np.any(out[n1:] > d.cap):
        return None
    return out


def _intervals(lo: np.ndarray, hi: np.ndarray, mask: np.ndarray) -> Tuple[Tuple[float, float], ...]:
    out = []
    i, n = 0, mask.size
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            out.append((float(lo[i]), float(hi[j])))
            i = j + 1
        else:
            i += 1
    return tuple(out)


def _initial_point(p: EquilibriumProblem, geom) -> np.ndarray:
    c1, wd1, c2, wd2 = geom
    m1 = np.where(c1 < min(4.0, p.x_max), wd1, 0.0)
    if m1.sum() == 0:
        m1 = wd1.copy()
    m1 *= p.mass_1 / m1.sum()
    cap = p.sigma_cells
    m2 = _proj_capped(np.where(c2 > -4.0, wd2, 0.0), cap, p.mass_2)
    return np.concatenate([m1, m2])


def solve_equilibrium(p: EquilibriumProblem, tol: Optional[float] = None, max_iter: int = 50000,
                      kernel: str = "plain", check_every: int = 100,
                      x0: Optional[VectorMeasure] = None) -> EquilibriumSolution:
    """Minimise the discretised functional and certify the variational conditions.

    Monotone accelerated projected gradient (step ``1/L`` from a power
    iteration on the Hessian restricted to mass-preserving directions, with
    exact projections onto the simplex and the capped simplex) followed by an
    exact solve of the KKT system on the detected active set.  The polished
    point is accepted only if it is feasible and satisfies the discrete
    conditions within ``tol``; otherwise iteration resumes.

    ``kernel="modified"`` solves the same problem written with the modified
    kernel and field; the minimiser is the same and the returned constants
    are the modified ones converted back (``w = gamma - C``).
    """
    tol = p.tol if tol is None else float(tol)
    d, geom = _build_discrete(p, kernel)
    c1, wd1, c2, wd2 = geom
    L = _lipschitz(d)
    if x0 is None:
        x = _initial_point(p, geom)
    else:
        x = np.concatenate([x0.mu1.masses, x0.mu2.masses])
    Hx = d.H @ x
    Jx = d.J(x, Hx)
    y, Hy, t = x.copy(), Hx.copy(), 1.0
    history = [Jx]
    best = None
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        z = d.project(y - (Hy + d.g0) / L)
        Hz = d.H @ z
        Jz = d.J(z, Hz)
        tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if Jz <= Jx:
            xn, Hxn, Jn = z, Hz, Jz
        else:
            xn, Hxn, Jn = x, Hx, Jx
            tn = 1.0  # restart momentum after a non-descent step
        a, b = t / tn, (t - 1.0) / tn
        y = xn + a * (z - xn) + b * (xn - x)
        Hy = Hxn + a * (Hz - Hxn) + b * (Hxn - Hx)
        x, Hx, Jx, t = xn, Hxn, Jn, tn
        history.append(Jx)
        if it % check_every == 0 or it == max_iter:
            Hy = d.H @ y  # refresh to stop drift in the recursive update
            cand = _polish(d, x)
            if cand is not None:
                Hc = d.H @ cand
                rc = _kkt(d, cand, Hc + d.g0)
                if _kkt_max(rc) <= tol and d.J(cand, Hc) <= Jx + 1e-12 * max(1.0, abs(Jx)):
                    x, Hx, Jx = cand, Hc, d.J(cand, Hc)
                    history.append(Jx)
                    converged = True
                    break
            r = _kkt(d, x, Hx + d.g0)
            if _kkt_max(r) <= tol:
                converged = True
                break
    g = Hx + d.g0
    sol = _assemble(p, d, geom, x, g, it, Jx, history, converged, kernel, tol)
    if not converged:
        raise NonConvergenceError(
            f"no convergence after {it} iterations (max residual {sol.max_residual:.3e} > {tol:.1e})",
            sol)
    return sol


def _assemble(p, d, geom, x, g, it, Jx, history, converged, kernel, tol) -> EquilibriumSolution:
    c1, wd1, c2, wd2 = geom
    m1, m2 = x[:d.n1].copy(), x[d.n1:].copy()
    r = _kkt(d, x, g)
    W1, W2 = 0.5 * g[:d.n1], 0.5 * g[d.n1:]
    mu1 = GridMeasure(c1, wd1, m1, {"role": "lambda1", "problem": p.name})
    mu2 = GridMeasure(c2, wd2, m2, {"role": "lambda2", "problem": p.name})
    l1, l2 = log_moment(mu1), log_moment(mu2)
    C1, C2 = l1 - 0.5 * l2, l2 - 0.5 * l1
    if kernel == "modified":
        gamma1, gamma2 = r["w1"], r["w2"]
        w1, w2 = gamma1 - C1, gamma2 - C2
        W1, W2 = W1 - C1, W2 - C2
    else:
        w1, w2 = r["w1"], r["w2"]
        gamma1, gamma2 = w1 + C1, w2 + C2
    thr = 1e-10
    s1 = m1 > thr * p.mass_1
    # zero-mass neighbours of support edges join the support when they satisfy the equality
    near = np.abs(W1 - w1) < tol / 10
    grow = s1.copy()
    grow[1:] |= s1[:-1] & near[1:]
    grow[:-1] |= s1[1:] & near[:-1]
    sat = m2 >= d.cap * (1 - thr)
    s2 = m2 > thr * p.mass_2
    lo1, hi1 = c1 - wd1 / 2, c1 + wd1 / 2
    lo2, hi2 = c2 - wd2 / 2, c2 + wd2 / 2
    # window pressure: mu1 mass in the last cells of the plus window
    edge_mass = float(m1[-max(2, d.n1 // 50):].sum())
    report = dict(r)
    report.update({
        "edge_mass_plus": edge_mass,
        "tail_mass_minus": float(m2[: max(2, d.n2 // 20)].sum()),
        "growth_margin": p.growth_margin,
        # closed form of gamma2 for an unbounded contact set; truncation makes it approximate
        "gamma2_closed_form_gap": abs(float(gamma2) - (log_moment(mu2) - 0.5 * log_moment(mu1))),
    })
    sol = EquilibriumSolution(
        problem=p, lam=VectorMeasure(mu1, mu2), w1=float(w1), w2=float(w2),
        gamma1=float(gamma1), gamma2=float(gamma2),
        supp1=_intervals(lo1, hi1, grow), supp2=_intervals(lo2, hi2, s2),
        saturation_region=_intervals(lo2, hi2, sat & (d.cap > 0)),
        residual_report=report, iterations=it,
        functional_value=float(evaluate_functional(p, VectorMeasure(mu1, mu2))) if kernel == "plain"
        else float(Jx + 0.0),
        W1_cells=W1, W2_cells=W2, history=tuple(history), converged=converged, kernel=kernel,
    )
    if converged and edge_mass > 1e-8 * p.mass_1:
        raise WindowError(
            f"lambda1 carries mass {edge_mass:.3e} next to x_max = {p.x_max}; enlarge the plus window")
    return sol


# ---------------------------------------------------------------------------
# effective fields and certification
# ---------------------------------------------------------------------------


def effective_fields(s: EquilibriumSolution, x, side: str):
    """Pointwise ``W1`` (``side="plus"``) or ``W2`` (``side="minus"``)."""
    p = s.problem
    xa = np.atleast_1d(np.asarray(x, float))
    if side == "plus":
        if np.any(xa < 0) or np.any(xa > p.x_max):
            raise ValueError(f"x outside the plus window [0, {p.x_max}]")
        out = (2.0 * log_potential(s.lambda1, xa) - log_potential(s.lambda2, xa)
               + p.field_phi(xa))
    elif side == "minus":
        if np.any(xa > 0) or np.any(xa < -p.t_max):
            raise ValueError(f"x outside the minus window [{-p.t_max}, 0]")
        out = 2.0 * log_potential(s.lambda2, xa) - log_potential(s.lambda1, xa)
    else:
        raise ValueError("side must be 'plus' or 'minus'")
    return float(out[0]) if np.ndim(x) == 0 else out


def _random_admissible(p: EquilibriumProblem, rng: np.random.Generator, n1: int, cap: np.ndarray):
    # random positive weights with random sparsity pattern
    a = rng.exponential(size=n1) * (rng.random(n1) < rng.uniform(0.05, 1.0))
    if a.sum() == 0:
        a[rng.integers(n1)] = 1.0
    nu1 = a * (p.mass_1 / a.sum())
    b = rng.exponential(size=cap.size) * cap * (rng.random(cap.size) < rng.uniform(0.2, 1.0))
    nu2 = _proj_capped(b * (p.mass_2 / max(b.sum(), 1e-300)), cap, p.mass_2)
    return nu1, nu2


def variational_report(p: EquilibriumProblem, v: VectorMeasure, directions=100, seed: int = 0,
                       tol: float = 1e-3) -> Dict[str, object]:
    """Certify a candidate minimiser.

    Reports (a) the maximal violations of the cell-averaged conditions and
    (b) the minimum over random admissible ``nu`` of the first variation
    ``int W1 d(nu1 - mu1) + int W2 d(nu2 - mu2)``.  ``directions`` may be an
    integer (number of seeded random directions) or an explicit list of
    :class:`VectorMeasure` targets.  ``accepted`` is true iff every
    violation is at most ``tol`` and every variation is at least ``-tol``.
    """
    _check_admissible(p, v)
    c1, wd1 = p.grid_plus
    c2, wd2 = p.grid_minus
    if (v.mu1.nodes.shape != c1.shape or not np.allclose(v.mu1.nodes, c1)
            or v.mu2.nodes.shape != c2.shape or not np.allclose(v.mu2.nodes, c2)):
        raise ValueError("variational_report expects measures on the problem grids")
    d, _ = _build_discrete(p, "plain")
    x = np.concatenate([v.mu1.masses, v.mu2.masses])
    g = d.H @ x + d.g0
    r = _kkt(d, x, g)
    W = 0.5 * g
    rng = np.random.default_rng(seed)
    derivs = []
    if isinstance(directions, int):
        for _ in range(directions):
            nu1, nu2 = _random_admissible(p, rng, d.n1, d.cap)
            derivs.append(float(W @ (np.concatenate([nu1, nu2]) - x)))
    else:
        for nu in directions:
            _check_admissible(p, nu)
            derivs.append(float(W @ (np.concatenate([nu.mu1.masses, nu.mu2.masses]) - x)))
    out: Dict[str, object] = dict(r)
    out["directional_min"] = float(min(derivs)) if derivs else 0.0
    out["directional_derivatives"] = derivs
    out["accepted"] = bool(_kkt_max(r) <= tol and out["directional_min"] >= -tol)
    return out


def convert_constants(lam: VectorMeasure, gamma1: float, gamma2: float) -> Tuple[float, float]:
    """Modified-kernel constants to plain ones: ``w_j = gamma_j - C_j``.

    ``C1 = L1 - L2/2`` and ``C2 = L2 - L1/2`` with ``L_j = int log(1+y^2) dlambda_j``.
    """
    l1, l2 = log_moment(lam.mu1), log_moment(lam.mu2)
    return float(gamma1 - (l1 - 0.5 * l2)), float(gamma2 - (l2 - 0.5 * l1))


# ---------------------------------------------------------------------------
# line <-> half-line
# ---------------------------------------------------------------------------


def map_line_to_halfline(field_tilde: Callable, constraint_tilde_density: Callable,
                         check_points: Optional[Sequence[float]] = None, field_scale: float = 1.0):
    """Fold a symmetric problem on (R, iR) onto (R+, R-) by ``z -> z^2``.

    The field is ``field_scale * phi~(sqrt(y))`` and the constraint is the
    pushforward of ``c(s)|dz|``, with density ``c(sqrt|x|)/sqrt|x|`` (both
    imaginary half-axes fold onto R-).  The default ``field_scale=1`` is the
    literal substitution ``phi(y) = phi~(sqrt y)``.  For even measures
    ``P(mu~)(z) = P(mu)(z^2)/2``, so the half-line problem whose minimisers
    are the pushforwards of the line minimisers needs ``field_scale=2``; its
    constants then satisfy ``w = 2 w~``.

    Returns ``(field, constraint_density)`` as vectorised callables.
    """
    pts = np.linspace(0.05, 5.0, 37) if check_points is None else np.asarray(check_points, float)
    fa = np.asarray(field_tilde(pts), float)
    fb = np.asarray(field_tilde(-pts), float)
    if not np.allclose(fa, fb, rtol=1e-12, atol=1e-12):
        raise ValueError("field_tilde is not even")
    ca = np.asarray(constraint_tilde_density(pts), float)
    cb = np.asarray(constraint_tilde_density(-pts), float)
    if not np.allclose(ca, cb, rtol=1e-12, atol=1e-12):
        raise ValueError("constraint density is not symmetric under z -> -z")

    def fld(y):
        y = np.asarray(y, float)
        return field_scale * np.asarray(field_tilde(np.sqrt(y)), float)

    def dens(x):
        r = np.sqrt(np.abs(np.asarray(x, float)))
        with np.errstate(divide="ignore"):
            return np.asarray(constraint_tilde_density(r), float) / r

    return fld, dens


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

_PROBLEM_KEYS = {"field", "constraint", "windows", "grid", "tol", "name"}


def problem_to_json(p: EquilibriumProblem) -> dict:
    return {
        "name": p.name,
        "field": p.field_phi.to_json(),
        "constraint": p.constraint_sigma.to_json(),
        "windows": {"x_max": p.x_max, "t_max": p.t_max},
        "grid": {"n_plus": p.n_plus, "n_minus": p.n_minus, "power_plus": p.power_plus,
                 "grading_minus": p.grading_minus, "scale_minus": p.scale_minus,
                 "power_minus": p.power_minus},
        "tol": p.tol,
    }


def problem_from_json(obj) -> EquilibriumProblem:
    """Build a problem from its JSON description.

    Unknown keys and malformed sections raise ``ValueError`` with the
    offending location in the message.
    """
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    if not isinstance(obj, dict):
        raise ValueError("problem spec: top level must be an object")
    extra = set(obj) - _PROBLEM_KEYS
    if extra:
        raise ValueError(f"problem spec: unknown keys {sorted(extra)}")
    for key in ("field", "constraint"):
        if key not in obj:
            raise ValueError(f"problem spec: missing '{key}'")
    try:
        fld = ProfileSpec.from_json(obj["field"], "field")
    except ValueError as exc:
        raise ValueError(f"problem spec: field: {exc}") from None
    try:
        con = ProfileSpec.from_json(obj["constraint"], "constraint")
    except ValueError as exc:
        raise ValueError(f"problem spec: constraint: {exc}") from None
    kw = {}
    builtin = fld.kind in ("bessel", "pollaczek") and con.kind == fld.kind
    if builtin:
        norm = fld.params.get("normalization", "curve")
        x_max, t_max, scale = _BUILTIN_WINDOWS.get((fld.kind, norm), (20.0, 50.0, 1e-3))
        kw.update(x_max=x_max, t_max=t_max, scale_minus=scale)
    win = obj.get("windows", {})
    if not isinstance(win, dict) or set(win) - {"x_max", "t_max"}:
        raise ValueError("problem spec: windows: expected keys x_max, t_max")
    kw.update({k: float(v) for k, v in win.items()})
    grid = obj.get("grid", {})
    allowed = {"n_plus", "n_minus", "power_plus", "grading_minus", "scale_minus", "power_minus"}
    if not isinstance(grid, dict) or set(grid) - allowed:
        raise ValueError(f"problem spec: grid: allowed keys {sorted(allowed)}")
    for k, v in grid.items():
        kw[k] = int(v) if k.startswith("n_") else (v if k == "grading_minus" else float(v))
    if "tol" in obj:
        kw["tol"] = float(obj["tol"])
    if "name" in obj:
        kw["name"] = str(obj["name"])
    try:
        return EquilibriumProblem(fld, con, **kw)
    except ValueError as exc:
        raise ValueError(f"problem spec: {exc}") from None


def save_solution(s: EquilibriumSolution, directory: str) -> List[str]:
    """Write ``lambda1.json``, ``lambda2.json`` and ``solution.json``."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name, mu in (("lambda1.json", s.lambda1), ("lambda2.json", s.lambda2)):
        path = os.path.join(directory, name)
        with open(path, "w") as fh:
            json.dump(measure_to_json(mu), fh, indent=1)
        paths.append(path)
    header = {
        "w1": s.w1, "w2": s.w2, "gamma1": s.gamma1, "gamma2": s.gamma2,
        "supports": {"supp1": s.supp1, "supp2": s.supp2, "saturation": s.saturation_region},
        "residuals": {k: v for k, v in s.residual_report.items()},
        "iterations": s.iterations,
        "functional_value": s.functional_value,
        "converged": s.converged,
        "problem": problem_to_json(s.problem),
    }
    path = os.path.join(directory, "solution.json")
    with open(path, "w") as fh:
        json.dump(header, fh, indent=1)
    paths.append(path)
    return paths


def load_solution(directory: str) -> Tuple[dict, GridMeasure, GridMeasure]:
    """Read back the header and the two measures written by :func:`save_solution`."""
    with open(os.path.join(directory, "solution.json")) as fh:
        header = json.load(fh)
    with open(os.path.join(directory, "lambda1.json")) as fh:
        l1 = measure_from_json(json.load(fh))
    with open(os.path.join(directory, "lambda2.json")) as fh:
        l2 = measure_from_json(json.load(fh))
    return header, l1, l2
