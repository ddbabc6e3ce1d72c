"""
Arbitrary-precision scalar helpers: double-exponential quadrature, certified
real-root isolation and monic cubic solving.

All routines are pure functions of their arguments.  High-precision work is
done with :mod:`mpmath` inside ``mp.workprec`` blocks so that callers never
see a modified global precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, NamedTuple, Sequence, Tuple

import mpmath as mp
import numpy as np

__all__ = [
    "PrecisionContext",
    "Polynomial",
    "QuadratureError",
    "DegenerateRootError",
    "integrate_adaptive",
    "exp_sinh_rule",
    "isolate_real_roots",
    "solve_cubic",
    "solve_cubic_batch",
    "CubicRoots",
]


class QuadratureError(RuntimeError):
    """Raised when the quadrature did not reach the requested tolerance.

    The last estimate and its error indicator are kept on the exception so
    that callers can decide whether the value is still usable.
    """

    def __init__(self, message, value=None, error_bound=None, level=None):
        super().__init__(message)
        self.value = value
        self.error_bound = error_bound
        self.level = level


class DegenerateRootError(ValueError):
    """A (numerically) multiple root was found during root isolation."""

    def __init__(self, message, roots=(), multiple=()):
        super().__init__(message)
        self.roots = list(roots)
        self.multiple = list(multiple)


@dataclass(frozen=True)
class PrecisionContext:
    """Working precision and tolerances for high-precision routines.

    Parameters
    ----------
    mantissa_bits : int
        Binary precision used by mpmath (at least 64).
    abs_tol, rel_tol : float or mpf, optional
        Tolerances.  Default to ``2**(-mantissa_bits/2)``.
    """

    mantissa_bits: int = 256
    abs_tol: object = None
    rel_tol: object = None

    def __post_init__(self):
        if int(self.mantissa_bits) != self.mantissa_bits or self.mantissa_bits < 64:
            raise ValueError("mantissa_bits must be an integer >= 64")
        default = mp.ldexp(mp.mpf(1), -(self.mantissa_bits // 2))
        for name in ("abs_tol", "rel_tol"):
            val = getattr(self, name)
            val = default if val is None else mp.mpf(val)
            if not val > 0:
                raise ValueError(f"{name} must be positive")
            # a tolerance below the unit roundoff cannot be met
            if val < mp.ldexp(mp.mpf(1), -self.mantissa_bits + 4):
                raise ValueError(f"{name} is not representable at {self.mantissa_bits} bits")
            object.__setattr__(self, name, val)

    @property
    def digits(self) -> int:
        return int(self.mantissa_bits * math.log10(2))

    def tolerance_for(self, value) -> mp.mpf:
        return max(self.abs_tol, self.rel_tol * abs(value))

    def with_bits(self, bits: int) -> "PrecisionContext":
        return PrecisionContext(bits, self.abs_tol, self.rel_tol)


# ---------------------------------------------------------------------------
# polynomials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Polynomial:
    """Dense polynomial, coefficients stored lowest degree first."""

    coefficients: Tuple = field()

    def __post_init__(self):
        coeffs = tuple(self.coefficients)
        if not coeffs:
            raise ValueError("a polynomial needs at least one coefficient")
        if len(coeffs) > 1 and coeffs[-1] == 0:
            raise ValueError("leading coefficient must be nonzero")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def from_roots(cls, roots: Sequence, leading=1) -> "Polynomial":
        coeffs = [leading]
        for r in roots:
            new = [0] * (len(coeffs) + 1)
            for i, c in enumerate(coeffs):
                new[i + 1] += c
                new[i] -= r * c
            coeffs = new
        return cls(tuple(coeffs))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def leading(self):
        return self.coefficients[-1]

    def __call__(self, x):
        acc = 0
        for c in reversed(self.coefficients):
            acc = acc * x + c
        return acc

    def value_and_derivative(self, x):
        p, dp = 0, 0
        for c in reversed(self.coefficients):
            dp = dp * x + p
            p = p * x + c
        return p, dp

    def derivative(self) -> "Polynomial":
        if self.degree == 0:
            return Polynomial((0,))
        return Polynomial(tuple(i * c for i, c in enumerate(self.coefficients) if i > 0))

    def monic(self) -> "Polynomial":
        lead = self.leading
        return Polynomial(tuple(c / lead for c in self.coefficients))

    def max_abs_coefficient(self):
        return max(abs(c) for c in self.coefficients)

    def divmod(self, other: "Polynomial"):
        """Long division, returns ``(quotient, remainder)``."""
        num = list(self.coefficients)
        den = other.coefficients
        if other.degree == 0:
            return Polynomial(tuple(c / den[0] for c in num)), Polynomial((0,))
        if self.degree < other.degree:
            return Polynomial((0,)), self
        q = [0] * (self.degree - other.degree + 1)
        for k in range(len(q) - 1, -1, -1):
            coef = num[k + other.degree] / den[-1]
            q[k] = coef
            for j, d in enumerate(den):
                num[k + j] -= coef * d
        rem = num[: other.degree] or [0]
        while len(rem) > 1 and rem[-1] == 0:
            rem.pop()
        return Polynomial(tuple(q)), Polynomial(tuple(rem))

    def __add__(self, other: "Polynomial") -> "Polynomial":
        a, b = self.coefficients, other.coefficients
        n = max(len(a), len(b))
        out = [(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)]
        while len(out) > 1 and out[-1] == 0:
            out.pop()
        return Polynomial(tuple(out))

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        a, b = self.coefficients, other.coefficients
        out = [0] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            for j, y in enumerate(b):
                out[i + j] += x * y
        return Polynomial(tuple(out))


# ---------------------------------------------------------------------------
# double-exponential quadrature
# ---------------------------------------------------------------------------

_MAX_T = 12


@lru_cache(maxsize=512)
def _de_nodes(kind: str, level: int, prec: int, t_max: int = _MAX_T):
    """Nodes of the level-``level`` refinement (odd multiples of h only).

    For ``kind == "ts"`` (tanh-sinh) each entry is ``(t, c, w)`` with ``c``
    the distance of the node to the nearer endpoint of [-1, 1] and ``w``
    the weight before multiplication by the step.  For ``kind == "es"``
    (exp-sinh) the entry is ``(t, x, w)`` for the map onto (0, inf).
    """
    with mp.workprec(prec):
        h = mp.ldexp(mp.mpf(1), -level)
        if level == 0:
            ks = range(0, t_max + 1)
        else:
            ks = range(1, t_max * 2 ** level, 2)
        out = []
        half_pi = mp.pi / 2
        for k in ks:
            t = k * h
            for s in ((1,) if k == 0 else (1, -1)):
                ts = s * t
                u = half_pi * mp.sinh(ts)
                if kind == "ts":
                    # distance to the endpoint approached as ts -> +inf
                    e = mp.exp(2 * abs(u))
                    c = 2 / (e + 1)
                    w = half_pi * mp.cosh(ts) / mp.cosh(u) ** 2
                    out.append((ts, c, w))
                else:
                    x = mp.exp(u)
                    w = half_pi * mp.cosh(ts) * x
                    out.append((ts, x, w))
        return tuple(out)


def _round_up(x: float) -> float:
    """Round a positive float upward to three significant digits."""
    if x <= 0 or not math.isfinite(x):
        return x
    e = math.floor(math.log10(x)) - 2
    return float(f"{math.ceil(x / 10.0 ** e)}e{e}")


def integrate_adaptive(
    f: Callable,
    a,
    b,
    ctx: PrecisionContext = PrecisionContext(),
    max_level: int = 10,
    min_level: int = 3,
):
    """Integrate ``f`` over ``[a, b]`` with a double-exponential rule.

    Finite intervals use the tanh-sinh map, half-lines the exp-sinh map and
    the whole line is split at zero.  Endpoints may carry integrable
    singularities; ``f`` is never evaluated exactly at an endpoint.

    Returns
    -------
    value : mpf
    error_bound : float
        Heuristic bound made of the level-to-level difference, the tail of
        the truncated node range and an accumulated rounding term.

    Raises
    ------
    ValueError
        If ``a >= b`` or the integrand produced NaN.
    QuadratureError
        If the bound is above ``max(abs_tol, rel_tol*|value|)`` at
        ``max_level``.
    """
    with mp.workprec(ctx.mantissa_bits + 16):
        a = mp.mpf(a) if not mp.isinf(a) else a
        b = mp.mpf(b) if not mp.isinf(b) else b
        if not a < b:
            raise ValueError("integration requires a < b")
        if mp.isinf(a) and mp.isinf(b):
            v1, e1 = integrate_adaptive(f, a, 0, ctx, max_level, min_level)
            v2, e2 = integrate_adaptive(f, 0, b, ctx, max_level, min_level)
            return v1 + v2, _round_up(e1 + e2)
        if mp.isinf(a):
            return integrate_adaptive(lambda y: f(-y), -b, mp.inf, ctx, max_level, min_level)
        if mp.isinf(b):
            return _integrate_levels(f, a, None, ctx, max_level, min_level)
        return _integrate_levels(f, a, b, ctx, max_level, min_level)


def _integrate_levels(f, a, b, ctx, max_level, min_level):
    prec = ctx.mantissa_bits + 16
    kind = "es" if b is None else "ts"
    if b is not None:
        half = (b - a) / 2
    negligible = ctx.abs_tol * mp.mpf("1e-3")
    total = mp.mpf(0)
    abs_total = mp.mpf(0)
    prev = None
    prev_err = math.inf
    tail = mp.mpf(0)
    t_lo, t_hi = -mp.inf, mp.inf
    for level in range(0, max_level + 1):
        h = mp.ldexp(mp.mpf(1), -level)
        new_sum = mp.mpf(0)
        t_max = _MAX_T if level == 0 else int(math.ceil(float(max(-t_lo, t_hi))))
        for t, c, w in _de_nodes(kind, level, prec, t_max):
            if not (t_lo < t < t_hi):
                continue
            if kind == "ts":
                x = b - half * c if t >= 0 else a + half * c
                if c == 0 or x <= a or x >= b:
                    continue
                term = f(x) * w * half
            else:
                x = a + c
                if x == a or mp.isinf(x):
                    continue
                term = f(x) * w
            if mp.isnan(term):
                raise ValueError(f"integrand returned NaN at x={mp.nstr(x, 15)}")
            if mp.isinf(term):
                raise ValueError(f"integrand is not finite at x={mp.nstr(x, 15)}")
            if level == 0 and abs(t) >= 2 and abs(term) < negligible:
                # past the peak DE terms decay double-exponentially: cut here
                if t > 0:
                    t_hi = t
                else:
                    t_lo = t
                tail += abs(term)
                continue
            new_sum += term
            abs_total += abs(term) * h
        total = total / 2 + new_sum * h if level > 0 else new_sum * h
        if prev is not None:
            diff = abs(total - prev)
            rounding = abs_total * mp.ldexp(mp.mpf(1), -ctx.mantissa_bits + 6)
            est = _round_up(float(diff + tail + rounding))
            est = min(est, prev_err) if level > min_level else est
            prev_err = est
            if level >= min_level and est <= float(ctx.tolerance_for(total)):
                return +total, est
        prev = total
    raise QuadratureError(
        "double-exponential quadrature did not converge",
        value=total, error_bound=prev_err, level=max_level,
    )


def exp_sinh_rule(level: int, bits: int, x_min, x_max):
    """Fixed exp-sinh rule for ``int_0^inf`` restricted to ``[x_min, x_max]``.

    Nodes ``x = exp(pi/2 sinh t)`` for ``t`` on the grid of step
    ``2**-level``; only nodes inside ``[x_min, x_max]`` are kept, so the
    caller is responsible for the integrand being negligible outside.

    Returns
    -------
    nodes, weights : lists of mpf at ``bits`` precision
    """
    with mp.workprec(bits + 16):
        x_min, x_max = mp.mpf(x_min), mp.mpf(x_max)
        if not (0 < x_min < x_max):
            raise ValueError("need 0 < x_min < x_max")
        h = mp.ldexp(mp.mpf(1), -level)
        half_pi = mp.pi / 2
        t_lo = mp.asinh(mp.log(x_min) / half_pi)
        t_hi = mp.asinh(mp.log(x_max) / half_pi)
        k_lo, k_hi = int(mp.ceil(t_lo / h)), int(mp.floor(t_hi / h))
        nodes, weights = [], []
        for k in range(k_lo, k_hi + 1):
            t = k * h
            u = half_pi * mp.sinh(t)
            x = mp.exp(u)
            nodes.append(x)
            weights.append(h * half_pi * mp.cosh(t) * x)
    with mp.workprec(bits):
        return [+x for x in nodes], [+w for w in weights]


# ---------------------------------------------------------------------------
# real root isolation
# ---------------------------------------------------------------------------


def _to_mpf_poly(p: Polynomial) -> List[mp.mpf]:
    return [mp.mpf(c) for c in p.coefficients]


def _sturm_chain(coeffs: List) -> List[List]:
    """Sturm sequence of a coefficient list (lowest degree first)."""

    def deriv(c):
        return [i * c[i] for i in range(1, len(c))]

    def rem(num, den):
        num = list(num)
        while len(num) >= len(den) and len(num) > 0:
            coef = num[-1] / den[-1]
            shift = len(num) - len(den)
            for j, d in enumerate(den):
                num[shift + j] -= coef * d
            num.pop()
        return num

    def trim(c, scale):
        c = list(c)
        while c and abs(c[-1]) <= scale:
            c.pop()
        return c

    chain = [coeffs, deriv(coeffs)]
    eps = mp.ldexp(mp.mpf(1), -mp.mp.prec + 8)
    while len(chain[-1]) > 1:
        r = rem(chain[-2], chain[-1])
        scale = eps * max([abs(x) for x in chain[-2]] + [mp.mpf(0)])
        r = trim([-x for x in r], scale)
        if not r:
            break
        chain.append(r)
    return chain


def _horner(c, x):
    acc = mp.mpf(0)
    for v in reversed(c):
        acc = acc * x + v
    return acc


def _sign_changes(chain, x) -> int:
    signs = []
    for c in chain:
        v = _horner(c, x)
        if v != 0:
            signs.append(v > 0)
    return sum(1 for s0, s1 in zip(signs, signs[1:]) if s0 != s1)


def isolate_real_roots(p: Polynomial, interval, ctx: PrecisionContext = PrecisionContext()):
    """Find every real root of ``p`` in ``[a, b]``.

    Roots are separated by Sturm-sequence counting, located by bisection and
    polished with Newton steps.

    Returns
    -------
    list of ``(root, residual)`` sorted ascending, ``residual = |p(root)|``.

    Raises
    ------
    DegenerateRootError
        When a root of multiplicity > 1 is detected; the exception carries the
        distinct roots found and the multiple ones.
    """
    a, b = interval
    with mp.workprec(2 * ctx.mantissa_bits):
        a, b = mp.mpf(a), mp.mpf(b)
        coeffs = _to_mpf_poly(p)
        if p.degree == 0:
            return []
        chain = _sturm_chain(coeffs)
        gcd = chain[-1]
        squarefree = coeffs
        if len(gcd) > 1:
            q, r = Polynomial(tuple(coeffs)).divmod(Polynomial(tuple(gcd)))
            squarefree = list(q.coefficients)
            chain = _sturm_chain(squarefree)
        width_tol = ctx.abs_tol * max(1, abs(a), abs(b))

        def count(lo, hi):
            return _sign_changes(chain, lo) - _sign_changes(chain, hi)

        # nudge endpoints that are exact roots so that counts are well defined
        found = []
        todo = [(a, b, count(a, b))]
        isolated = []
        while todo:
            lo, hi, n = todo.pop()
            if n <= 0:
                continue
            if n == 1:
                isolated.append((lo, hi))
                continue
            if hi - lo < width_tol:
                isolated.append((lo, hi))
                continue
            mid = (lo + hi) / 2
            if _horner(squarefree, mid) == 0:
                mid = mid + (hi - lo) / 7
            todo.append((lo, mid, count(lo, mid)))
            todo.append((mid, hi, count(mid, hi)))

        sf = Polynomial(tuple(squarefree))
        for lo, hi in isolated:
            found.append(_refine_root(sf, lo, hi, width_tol))
        found.sort()

        full = Polynomial(tuple(coeffs))
        dfull = full.derivative()
        scale = full.max_abs_coefficient()
        out, multiple = [], []
        for r in found:
            val = abs(full(r))
            d = abs(dfull(r))
            if len(gcd) > 1 and abs(_horner(gcd, r)) <= mp.sqrt(ctx.abs_tol) * max(
                mp.mpf(1), max(abs(g) for g in gcd)
            ) * max(mp.mpf(1), abs(r)) ** (len(gcd) - 1):
                multiple.append(r)
            elif d <= ctx.abs_tol * scale * max(mp.mpf(1), abs(r)) ** max(p.degree - 1, 0):
                multiple.append(r)
            out.append((r, val))
        if multiple:
            raise DegenerateRootError(
                f"{len(multiple)} multiple root(s) detected",
                roots=[r for r, _ in out], multiple=multiple,
            )
    with mp.workprec(ctx.mantissa_bits):
        return [(+r, +v) for r, v in out]


def _refine_root(p: Polynomial, lo, hi, width_tol):
    flo, fhi = p(lo), p(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        # single distinct root without a sign change: fall back to |p| minimum
        for _ in range(mp.mp.prec):
            m1 = lo + (hi - lo) / 3
            m2 = hi - (hi - lo) / 3
            if abs(p(m1)) < abs(p(m2)):
                hi = m2
            else:
                lo = m1
            if hi - lo < width_tol:
                break
        return (lo + hi) / 2
    x = (lo + hi) / 2
    for _ in range(4 * mp.mp.prec):
        fx, dfx = p.value_and_derivative(x)
        if fx == 0:
            return x
        if (fx > 0) == (flo > 0):
            lo, flo = x, fx
        else:
            hi = x
        step = fx / dfx if dfx != 0 else None
        xn = x - step if step is not None else None
        if xn is None or not (lo < xn < hi):
            xn = (lo + hi) / 2
        if abs(xn - x) <= abs(x) * mp.ldexp(mp.mpf(1), -mp.mp.prec + 4) or hi - lo < width_tol * mp.ldexp(mp.mpf(1), -mp.mp.prec // 2):
            return xn
        x = xn
    return x


# ---------------------------------------------------------------------------
# cubics
# ---------------------------------------------------------------------------


class CubicRoots(NamedTuple):
    roots: np.ndarray
    multiplicity: Tuple[int, int, int]


def solve_cubic_batch(c2, c1, c0, polish: int = 3) -> np.ndarray:
    """Roots of ``H^3 + c2 H^2 + c1 H + c0`` for arrays of coefficients.

    Returns an array of shape ``(..., 3)``.  Eigenvalues of the companion
    matrix are polished with a few Newton steps.
    """
    c2, c1, c0 = np.broadcast_arrays(
        np.asarray(c2, dtype=complex), np.asarray(c1, dtype=complex), np.asarray(c0, dtype=complex)
    )
    shape = c2.shape
    comp = np.zeros(shape + (3, 3), dtype=complex)
    comp[..., 0, 0] = -c2
    comp[..., 0, 1] = -c1
    comp[..., 0, 2] = -c0
    comp[..., 1, 0] = 1.0
    comp[..., 2, 1] = 1.0
    r = np.linalg.eigvals(comp)
    a2, a1, a0 = c2[..., None], c1[..., None], c0[..., None]
    for _ in range(polish):
        f = ((r + a2) * r + a1) * r + a0
        df = (3 * r + 2 * a2) * r + a1
        ok = np.abs(df) > 1e-8 * (1 + np.abs(r)) ** 2
        step = np.where(ok, f / np.where(ok, df, 1.0), 0.0)
        # only accept steps that reduce the residual
        rn = r - step
        fn = ((rn + a2) * rn + a1) * rn + a0
        r = np.where(np.abs(fn) < np.abs(f), rn, r)
    return r


def solve_cubic(c2, c1, c0, cluster_tol: float = 1e-6) -> CubicRoots:
    """Roots of the monic cubic ``H^3 + c2 H^2 + c1 H + c0``.

    Roots closer than ``cluster_tol*(1+|r|)`` are reported as one root of
    higher multiplicity and replaced by the cluster mean.
    """
    r = solve_cubic_batch(c2, c1, c0)
    r = np.array(r, dtype=complex).reshape(3)
    mult = [1, 1, 1]
    groups = []
    used = [False] * 3
    for i in range(3):
        if used[i]:
            continue
        g = [i]
        used[i] = True
        for j in range(i + 1, 3):
            if not used[j] and abs(r[i] - r[j]) <= cluster_tol * (1 + abs(r[i])):
                g.append(j)
                used[j] = True
        groups.append(g)
    for g in groups:
        if len(g) > 1:
            mean = r[g].mean()
            for i in g:
                r[i] = mean
                mult[i] = len(g)
    return CubicRoots(r, tuple(mult))
