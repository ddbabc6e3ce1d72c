"""
Spectral curves: cubic algebraic functions whose branches encode equilibrium densities.

Each built-in curve is a monic cubic ``H^3 + p2(z) H^2 + p1(z) H + p0(z) = 0``
with rational coefficients.  Branches are labelled at a far reference point
by their asymptotic expansions and carried to the target point by homotopy
continuation along the ray through it, with adaptive steps that keep the root
motion small compared to the root separation.  Boundary values on cuts are
obtained from points ``x + i*eps`` by Richardson extrapolation in ``eps``.

Built-ins:

``bessel``          ``H^3 - 2H^2 + H - 2/z``
``pastur``          ``H^3 - zH^2 + (2 - a^2)H + a^2 z``
``quartic_source``  ``H^3 - (z^3 + bz)H^2 + z^2 H + a^2 z^3``
``pollaczek_psi``   ``psi^3 + ((i - z)/z) psi^2 + ((i + z)/z) psi - 1``
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .hp_numerics import solve_cubic_batch

__all__ = [
    "AlgebraicCurve",
    "BranchTriple",
    "BranchPointSet",
    "RegionError",
    "NearBranchPointError",
    "builtin_curve",
    "quartic_region_bounds",
    "branch_values",
    "branch_values_batch",
    "boundary_values",
    "branch_points",
    "density_lambda1",
    "density_lambda2",
    "pollaczek_uniformization",
    "halfline_density",
    "curve_table_csv",
    "POLLACZEK_E1",
    "POLLACZEK_E2",
]

SQRT2 = math.sqrt(2.0)
SQRT5 = math.sqrt(5.0)
#: squared branch points of the Pollaczek psi-curve: zeta^2 = (11 +- 5 sqrt5)/8
POLLACZEK_E1 = math.sqrt((11.0 + 5.0 * SQRT5) / 8.0)
POLLACZEK_E2 = math.sqrt((5.0 * SQRT5 - 11.0) / 8.0)

REFERENCE_RADIUS = 1e3
_PERMS = np.array(list(itertools.permutations(range(3))))


class RegionError(ValueError):
    """Curve parameters outside the admissible region."""


class NearBranchPointError(ValueError):
    """Evaluation point too close to a branch point or singular point."""


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------


def quartic_region_bounds(b: float) -> Tuple[float, float]:
    """``(a_m(b), a_M(b))`` for the genus-one quartic external-source curve.

    ``a_m`` is only meaningful for ``b in (-2, -sqrt3]``; for ``b <= -2`` the
    lower boundary is the ``b``-axis and ``0`` is returned.
    """
    if b > -math.sqrt(3.0) + 1e-15:
        if abs(b + math.sqrt(3.0)) <= 1e-12:
            v = math.sqrt(6 * b ** 3 - 27 * b) / 9
            return v, v
        raise RegionError(f"b = {b} > -sqrt(3): outside the genus-one region")
    r = max(b * b - 3.0, 0.0) ** 1.5
    inner_m = 6 * b ** 3 - 27 * b - 6 * r
    inner_M = 6 * b ** 3 - 27 * b + 6 * r
    a_M = math.sqrt(max(inner_M, 0.0)) / 9
    a_m = math.sqrt(max(inner_m, 0.0)) / 9 if b > -2.0 else 0.0
    return a_m, a_M


@dataclass(frozen=True)
class AlgebraicCurve:
    """A monic cubic in ``H`` with coefficients rational in ``z``."""

    kind: str
    params: Dict[str, float] = field(default_factory=dict)

    @property
    def singular_points(self) -> Tuple[complex, ...]:
        return (0j,) if self.kind in ("bessel", "pollaczek_psi") else ()

    def coefficients(self, z) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(p2(z), p1(z), p0(z))`` as complex arrays."""
        z = np.asarray(z, dtype=complex)
        one = np.ones_like(z)
        if self.kind == "bessel":
            return -2.0 * one, 1.0 * one, -2.0 / z
        if self.kind == "pastur":
            a = self.params["a"]
            return -z, (2.0 - a * a) * one, a * a * z
        if self.kind == "quartic_source":
            a, b = self.params["a"], self.params["b"]
            return -(z ** 3 + b * z), z * z, a * a * z ** 3
        if self.kind == "pollaczek_psi":
            return (1j - z) / z, (1j + z) / z, -1.0 * one
        raise ValueError(f"unknown curve kind {self.kind!r}")

    def cleared(self) -> Tuple[np.ndarray, ...]:
        """Coefficient polynomials (in ``z``, lowest degree first) of the cubic
        ``a(z)H^3 + b(z)H^2 + c(z)H + d(z)`` obtained by clearing denominators."""
        if self.kind == "bessel":
            return (np.array([0, 1]), np.array([0, -2]), np.array([0, 1]), np.array([-2]))
        if self.kind == "pastur":
            a = self.params["a"]
            return (np.array([1]), np.array([0, -1]), np.array([2 - a * a]), np.array([0, a * a]))
        if self.kind == "quartic_source":
            a, b = self.params["a"], self.params["b"]
            return (np.array([1]), np.array([0, -b, 0, -1]), np.array([0, 0, 1]),
                    np.array([0, 0, 0, a * a]))
        if self.kind == "pollaczek_psi":
            return (np.array([0, 1], complex), np.array([1j, -1], complex),
                    np.array([1j, 1], complex), np.array([0, -1], complex))
        raise ValueError(f"unknown curve kind {self.kind!r}")

    def asymptotic_branches(self, z) -> np.ndarray:
        """Leading terms of ``H0, H1, H2`` at large ``|z|`` (shape ``(..., 3)``)."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "bessel":
            s = np.sqrt(z)
            return np.stack([2 / z, 1 - SQRT2 / s - 1 / z, 1 + SQRT2 / s - 1 / z], axis=-1)
        if self.kind in ("pastur", "quartic_source"):
            a = self.params["a"]
            sgn = np.where(z.real >= 0, 1.0, -1.0)
            if self.kind == "pastur":
                h0 = z - 2 / z
            else:
                h0 = z ** 3 + self.params["b"] * z
            return np.stack([h0, sgn * a + 1 / z, -sgn * a + 1 / z], axis=-1)
        if self.kind == "pollaczek_psi":
            return np.stack([1 - 1j / z, 1j - 1 / (2 * z), -1j + 1 / (2 * z)], axis=-1)
        raise ValueError(f"unknown curve kind {self.kind!r}")

    def roots(self, z) -> np.ndarray:
        p2, p1, p0 = self.coefficients(z)
        return solve_cubic_batch(p2, p1, p0)


class BranchTriple(NamedTuple):
    """Labelled roots ``(H0, H1, H2)`` of a curve at one point."""

    H0: complex
    H1: complex
    H2: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.H0, self.H1, self.H2], dtype=complex)


@dataclass(frozen=True)
class BranchPointSet:
    """Branch points with the cleared discriminant (coefficients, lowest first)."""

    points: Tuple[complex, ...]
    discriminant: np.ndarray
    singular: Tuple[complex, ...] = ()

    def residual(self, z: complex) -> float:
        """Discriminant value at ``z`` relative to its coefficient scale."""
        val = np.polyval(self.discriminant[::-1], z)
        return float(abs(val) / np.max(np.abs(self.discriminant)))


def builtin_curve(kind: str, **params) -> AlgebraicCurve:
    """Construct a built-in curve, validating parameters.

    ``pastur`` needs a real ``a``; ``quartic_source`` needs ``(a, b)`` in the
    genus-one region ``a_m(b) < a < a_M(b)`` (or on the boundary ``a = 0``).
    """
    if kind == "bessel" or kind == "pollaczek_psi":
        if params:
            raise ValueError(f"{kind} takes no parameters")
        return AlgebraicCurve(kind, {})
    if kind == "pastur":
        a = params.get("a")
        if a is None or not np.isreal(a) or not math.isfinite(float(a)):
            raise ValueError("pastur requires a real parameter a")
        return AlgebraicCurve(kind, {"a": float(a)})
    if kind == "quartic_source":
        if "a" not in params or "b" not in params:
            raise ValueError("quartic_source requires a and b")
        a, b = float(params["a"]), float(params["b"])
        if a != 0.0:
            a_m, a_M = quartic_region_bounds(b)
            if not a < a_M:
                raise RegionError(f"a = {a} violates the upper boundary a < a_M(b) = {a_M:.12g}")
            if not a > a_m:
                name = "a > a_m(b)" if b > -2.0 else "a > 0"
                raise RegionError(f"a = {a} violates the lower boundary {name} = {a_m:.12g}")
        return AlgebraicCurve(kind, {"a": a, "b": b})
    raise ValueError(f"unknown curve kind {kind!r}")


# ---------------------------------------------------------------------------
# continuation
# ---------------------------------------------------------------------------


def _match(prev: np.ndarray, new: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Permute ``new`` roots to follow ``prev``.

    Also returns, per point, the largest ratio of a root's displacement to
    its distance from the other roots (small ratios mean a safe step).
    """
    cand = new[:, _PERMS]  # (N, 6, 3)
    sep = np.maximum(_own_sep(prev), 1e-300)[:, None, :]
    cost = np.max(np.abs(cand - prev[:, None, :]) / sep, axis=-1)
    k = np.argmin(cost, axis=1)
    return cand[np.arange(new.shape[0]), k], cost[np.arange(new.shape[0]), k]


def _own_sep(r: np.ndarray) -> np.ndarray:
    """Distance from each root to the nearest other root."""
    d01 = np.abs(r[..., 0] - r[..., 1])
    d02 = np.abs(r[..., 0] - r[..., 2])
    d12 = np.abs(r[..., 1] - r[..., 2])
    return np.stack([np.minimum(d01, d02), np.minimum(d01, d12), np.minimum(d02, d12)], axis=-1)


def _min_sep(r: np.ndarray) -> np.ndarray:
    return np.minimum(np.minimum(np.abs(r[:, 0] - r[:, 1]), np.abs(r[:, 0] - r[:, 2])),
                      np.abs(r[:, 1] - r[:, 2]))


def _label_at_reference(c: AlgebraicCurve, z0: np.ndarray) -> np.ndarray:
    roots = c.roots(z0)
    guess = c.asymptotic_branches(z0)
    out, _ = _match(guess, roots)
    return out


def branch_values_batch(c: AlgebraicCurve, z, max_steps: int = 200000) -> np.ndarray:
    """Labelled roots at an array of points, shape ``(..., 3)``.

    Continuation runs along ``z(s) = z * (R/|z|)**(1-s)`` from the reference
    radius ``R = max(10^3, |z|)``.  Each step is accepted only if every root
    moves by less than a quarter of its distance to the other roots;
    otherwise the step is halved.
    """
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    zf = z.ravel()
    if zf.size == 0:
        return np.zeros(shape + (3,), complex)
    r = np.abs(zf)
    if np.any(r == 0):
        raise NearBranchPointError("z = 0 is a singular point")
    R = np.maximum(REFERENCE_RADIUS, r)
    logq = np.log(R / r)
    cur = _label_at_reference(c, zf * (R / r))
    s = np.zeros(zf.size)
    ds = np.where(logq > 0, np.minimum(1.0, 0.05 / np.maximum(logq, 1e-300)), 1.0)
    todo = s < 1.0
    todo &= logq > 0
    steps = 0
    while np.any(todo):
        steps += 1
        if steps > max_steps:
            raise NearBranchPointError("continuation did not finish; point too close to a branch point")
        idx = np.flatnonzero(todo)
        s_new = np.minimum(s[idx] + ds[idx], 1.0)
        zz = zf[idx] * np.exp(logq[idx] * (1.0 - s_new))
        roots = c.roots(zz)
        matched, ratio = _match(cur[idx], roots)
        ok = ratio < 0.25
        tiny = ds[idx] < 1e-14
        if np.any(tiny & ~ok):
            raise NearBranchPointError("continuation step underflow near a branch point")
        acc = idx[ok]
        cur[acc] = matched[ok]
        s[acc] = s_new[ok]
        ds[acc] = np.minimum(ds[acc] * 1.6, 0.25)
        rej = idx[~ok]
        ds[rej] *= 0.5
        todo = s < 1.0
        todo &= logq > 0
    return cur.reshape(shape + (3,))


def branch_values(c: AlgebraicCurve, z: complex, guard: float = 1e-6) -> BranchTriple:
    """Labelled roots ``(H0, H1, H2)`` at a single point ``z``."""
    z = complex(z)
    for p in c.singular_points:
        if abs(z - p) <= guard:
            raise NearBranchPointError(f"z = {z} is within {guard} of the singular point {p}")
    for p in branch_points(c).points:
        if abs(z - p) <= guard:
            raise NearBranchPointError(f"z = {z} is within {guard} of the branch point {p}")
    v = branch_values_batch(c, np.array([z]))[0]
    return BranchTriple(complex(v[0]), complex(v[1]), complex(v[2]))


def boundary_values(c: AlgebraicCurve, x, direction: complex = 1j, eps: float = 1e-4,
                    raw: bool = False):
    """Boundary values ``lim H(x + direction*eps)`` by Richardson extrapolation.

    ``eps`` is scaled by ``min(1, |x|)`` so that the offset stays small
    relative to the distance to the origin.  Values at ``eps, eps/2, eps/4``
    are combined to cancel the first two orders.  With ``raw=True`` the
    unextrapolated values at ``eps`` are returned instead.
    """
    x = np.asarray(x, dtype=complex)
    scale = np.minimum(1.0, np.maximum(np.abs(x), 1e-300))
    h = eps * scale
    v1 = branch_values_batch(c, x + direction * h)
    if raw:
        return v1
    # smaller offsets are obtained by following the labels a short distance
    v2, _ = _match(v1.reshape(-1, 3), c.roots((x + direction * h / 2).ravel()))
    v4, _ = _match(v2, c.roots((x + direction * h / 4).ravel()))
    v2 = v2.reshape(v1.shape)
    v4 = v4.reshape(v1.shape)
    r1 = 2 * v2 - v1
    r2 = 2 * v4 - v2
    return (4 * r2 - r1) / 3


# ---------------------------------------------------------------------------
# branch points
# ---------------------------------------------------------------------------


def _pmul(a, b):
    return np.convolve(a, b)


def _padd(*ps):
    n = max(len(p) for p in ps)
    out = np.zeros(n, dtype=complex)
    for p in ps:
        out[:len(p)] += p
    return out


def _discriminant(c: AlgebraicCurve) -> np.ndarray:
    a, b, cc, d = (np.asarray(p, dtype=complex) for p in c.cleared())
    m = _pmul
    terms = [
        18 * m(m(a, b), m(cc, d)),
        -4 * m(m(b, b), m(b, d)),
        m(m(b, b), m(cc, cc)),
        -4 * m(a, m(cc, m(cc, cc))),
        -27 * m(m(a, a), m(d, d)),
    ]
    disc = _padd(*terms)
    # trim trailing zeros (highest degree)
    nz = np.flatnonzero(np.abs(disc) > 1e-14 * np.max(np.abs(disc)))
    disc = disc[: nz[-1] + 1]
    if np.all(np.abs(disc.imag) <= 1e-14 * np.max(np.abs(disc))):
        disc = disc.real.astype(float)
    return disc


def branch_points(c: AlgebraicCurve, dedupe_tol: float = 1e-9) -> BranchPointSet:
    """Zeros of the cleared discriminant, deduplicated and verified.

    A zero is kept as a branch point if the cubic has a double root there
    (or if it is a declared singular point where the leading coefficient of
    the cleared cubic vanishes).
    """
    disc = _discriminant(c)
    # strip leading zero coefficients: roots at the origin
    k0 = 0
    while k0 < disc.size - 1 and abs(disc[k0]) <= 1e-14 * np.max(np.abs(disc)):
        k0 += 1
    raw = list(np.roots(disc[k0:][::-1])) if disc.size - k0 > 1 else []
    if k0:
        raw.append(0j)
    pts: List[complex] = []
    for r in raw:
        r = complex(r)
        if abs(r.real) < 1e-12 * max(1.0, abs(r)):
            r = complex(0.0, r.imag)
        if abs(r.imag) < 1e-12 * max(1.0, abs(r)):
            r = complex(r.real, 0.0)
        if all(abs(r - q) > dedupe_tol * max(1.0, abs(q)) for q in pts):
            pts.append(r)
    # polish each simple zero with Newton on the discriminant
    dd = np.polyder(disc[::-1])
    polished = []
    for r in pts:
        if r != 0:
            for _ in range(5):
                f = np.polyval(disc[::-1], r)
                g = np.polyval(dd, r)
                if g == 0:
                    break
                r = r - f / g
        polished.append(complex(r))
    a_poly = np.asarray(c.cleared()[0], dtype=complex)
    kept, singular = [], []
    for r in polished:
        lead = np.polyval(a_poly[::-1], r)
        if abs(lead) < 1e-12:
            singular.append(r)
            kept.append(r)
            continue
        roots = c.roots(np.array([r]))[0]
        sep = _min_sep(roots[None, :])[0]
        if sep <= 1e-4 * max(1.0, float(np.max(np.abs(roots)))):
            kept.append(r)
    kept.sort(key=lambda q: (round(q.real, 12), round(q.imag, 12)))
    return BranchPointSet(tuple(kept), disc, tuple(singular))


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


def _support_flag(c: AlgebraicCurve, x: np.ndarray) -> np.ndarray:
    if c.kind == "bessel":
        return (x > 0) & (x < 13.5)
    if c.kind == "pollaczek_psi":
        return np.abs(x) < POLLACZEK_E1
    return np.ones(x.shape, bool)


def density_lambda1(c: AlgebraicCurve, x, eps: float = 1e-4, with_flag: bool = False):
    """``lambda1'(x) = |Im H0(x + i0)| / pi`` on the real line.

    For ``pollaczek_psi`` the branch is ``H0 = (2/i) log psi0``, so that
    ``|Im H0| = 2 |log|psi0||``.  Points outside the support return 0; with
    ``with_flag=True`` a boolean array marking them is also returned.
    """
    xa = np.atleast_1d(np.asarray(x, float))
    out = np.zeros(xa.shape)
    inside = _support_flag(c, xa) & (xa != 0)
    if np.any(inside):
        v = boundary_values(c, xa[inside], 1j, eps)[..., 0]
        if c.kind == "pollaczek_psi":
            dens = 2.0 * np.abs(np.log(np.abs(v))) / math.pi
        else:
            dens = np.abs(v.imag) / math.pi
        out[inside] = dens
    res = float(out[0]) if np.ndim(x) == 0 else out
    if with_flag:
        flag = ~inside
        return res, (bool(flag[0]) if np.ndim(x) == 0 else flag)
    return res


_BESSEL_FAR = 1e3


def _bessel_far_branch(eps: np.ndarray):
    """Bessel ``H1(x + i0) = 1 + t w`` for large negative ``x``.

    With ``t = i eps``, ``eps = sqrt(2/|x|)``, the curve reduces to
    ``w = (1 + t w)^(-1/2)``; fixed-point iteration contracts by ``~eps/2``.
    """
    t = 1j * eps
    w = np.ones_like(t)
    for _ in range(60):
        w_new = 1.0 / np.sqrt(1.0 + t * w)
        done = np.max(np.abs(w_new - w)) <= 1e-17
        w = w_new
        if done:
            break
    return t, w


def density_lambda2(c: AlgebraicCurve, x, sigma_density: Optional[Callable] = None,
                    eps: float = 1e-4, with_report: bool = False):
    """Density of the second measure.

    ``bessel``: ``sigma'(x) - Im H1(x + i0)/pi`` for ``x < 0`` with
    ``sigma'`` defaulting to ``sqrt(2)/(pi sqrt|x|)``.
    ``pollaczek_psi``: ``x`` is the imaginary part of a point ``iy`` of the
    imaginary axis and the density is ``-1 + Re H1(iy - 0)/pi``, where
    ``Re H1 = 2 arg psi1``.  Values outside ``[0, sigma']`` by more than
    ``1e-8`` are clipped and reported.
    """
    xa = np.atleast_1d(np.asarray(x, float))
    if c.kind == "bessel":
        if np.any(xa >= 0):
            raise ValueError("bessel lambda2 lives on x < 0")
        sig = (lambda t: SQRT2 / (math.pi * np.sqrt(np.abs(t)))) if sigma_density is None else sigma_density
        s = np.asarray(sig(xa), float)
        dens = np.empty_like(xa)
        near = np.abs(xa) <= _BESSEL_FAR
        if np.any(near):
            v = boundary_values(c, xa[near], 1j, eps)[..., 1]
            dens[near] = s[near] - v.imag / math.pi
        far = ~near
        if np.any(far):
            # H1 = 1 + t w with t = i sqrt(2/|x|): sigma' - Im H1/pi cancels
            # to a relative |x|^-1 remainder, so form 1 - Re w directly
            eps_f = np.sqrt(2.0 / np.abs(xa[far]))
            t, w = _bessel_far_branch(eps_f)
            one_minus_w = t * w * w / (1.0 + 1.0 / w)
            if sigma_density is None:
                dens[far] = eps_f * one_minus_w.real / math.pi
            else:
                dens[far] = s[far] - eps_f * (1.0 - one_minus_w.real) / math.pi
    elif c.kind == "pollaczek_psi":
        s = np.ones_like(xa) if sigma_density is None else np.asarray(sigma_density(xa), float)
        z = 1j * xa
        v = boundary_values(c, z, -1.0, eps)[..., 1]
        # on the saturated part psi1 is real negative: keep arg near +pi, the
        # left-limit value, rather than letting the extrapolation flip it to -pi
        arg = np.angle(v)
        arg = np.where(arg < -0.5 * math.pi, arg + 2.0 * math.pi, arg)
        dens = -1.0 + 2.0 * arg / math.pi
    else:
        raise ValueError(f"density_lambda2 is not defined for {c.kind}")
    low = dens < -1e-8
    high = dens > s + 1e-8
    clipped = np.clip(dens, 0.0, s)
    res = float(clipped[0]) if np.ndim(x) == 0 else clipped
    if with_report:
        return res, {"below_zero": int(low.sum()), "above_sigma": int(high.sum()),
                     "max_excess": float(max(np.max(-dens, initial=0.0), np.max(dens - s, initial=0.0)))}
    return res


def pollaczek_uniformization(psi: complex) -> complex:
    """``zeta = -i psi (psi + 1) / ((psi^2 + 1)(psi - 1))``."""
    psi = complex(psi)
    den = (psi * psi + 1) * (psi - 1)
    if den == 0 or abs(psi - 1) < 1e-300 or abs(psi * psi + 1) < 1e-300:
        raise ValueError(f"psi = {psi} is a pole of the uniformization")
    return -1j * psi * (psi + 1) / den


# ---------------------------------------------------------------------------
# half-line coordinates
# ---------------------------------------------------------------------------


def halfline_density(kind: str, x, normalization: str = "curve", eps: float = 1e-4) -> np.ndarray:
    """Equilibrium densities in half-line coordinates.

    Positive ``x`` gives ``lambda1'``, negative ``x`` gives ``lambda2'``.

    * ``bessel``: densities of the Bessel curve directly.
    * ``pollaczek``: the line-form densities folded by ``x = zeta^2``:
      ``lambda(x) = lambda~'(sqrt|x|)/sqrt|x|``; ``normalization="mop"``
      dilates the result by 4 (``lambda(x) -> lambda(x/4)/4``).
    * ``pastur`` style curves are not supported here.
    """
    xa = np.atleast_1d(np.asarray(x, float))
    out = np.zeros(xa.shape)
    pos, neg = xa > 0, xa < 0
    if kind == "bessel":
        c = builtin_curve("bessel")
        if np.any(pos):
            out[pos] = density_lambda1(c, xa[pos], eps)
        if np.any(neg):
            out[neg] = density_lambda2(c, xa[neg], eps=eps)
    elif kind == "pollaczek":
        dil = {"curve": 1.0, "mop": 4.0}.get(normalization)
        if dil is None:
            raise ValueError(f"no curve density for pollaczek normalization {normalization!r}")
        c = builtin_curve("pollaczek_psi")
        u = np.abs(xa) / dil
        r = np.sqrt(u)
        if np.any(pos):
            out[pos] = density_lambda1(c, r[pos], eps) / r[pos] / dil
        if np.any(neg):
            out[neg] = density_lambda2(c, r[neg], eps=eps) / r[neg] / dil
    else:
        raise ValueError(f"unknown half-line density kind {kind!r}")
    return float(out[0]) if np.ndim(x) == 0 else out


def curve_table_csv(c: AlgebraicCurve, xs: Sequence[float], eps: float = 1e-4) -> str:
    """CSV with columns x, H0..H2 (re/im) boundary values and both densities.

    Boundary values are taken from above the real axis; the second density
    column is the ``lambda2`` density where defined (``x < 0`` for bessel,
    ``x`` read as an imaginary coordinate for pollaczek_psi) and empty
    otherwise.
    """
    xs = np.asarray(xs, float)
    bv = boundary_values(c, xs.astype(complex), 1j, eps)
    d1 = density_lambda1(c, xs, eps) if xs.size else np.zeros(0)
    d2 = np.full(xs.shape, np.nan)
    if c.kind == "bessel":
        m = xs < 0
        if np.any(m):
            d2[m] = density_lambda2(c, xs[m], eps=eps)
    elif c.kind == "pollaczek_psi":
        m = xs != 0
        if np.any(m):
            d2[m] = density_lambda2(c, xs[m], eps=eps)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "H0_re", "H0_im", "H1_re", "H1_im", "H2_re", "H2_im",
                "lambda1_density", "lambda2_density"])
    for i, x in enumerate(xs):
        row = [repr(float(x))]
        for j in range(3):
            row += [repr(float(bv[i, j].real)), repr(float(bv[i, j].imag))]
        row += [repr(float(np.atleast_1d(d1)[i])), "" if np.isnan(d2[i]) else repr(float(d2[i]))]
        w.writerow(row)
    return buf.getvalue()
