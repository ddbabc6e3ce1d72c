"""
Nikishin systems on the half-line and their multiple orthogonal polynomials.

For a generating pair ``(sigma1, sigma2)``, with ``sigma1`` absolutely
continuous on ``(0, inf)`` and ``sigma2 = sum_k beta_k delta_{t_k}`` on the
negative axis, the Nikishin system is ``ds1 = dsigma1`` and
``ds2 = sigma2_hat dsigma1`` where ``sigma2_hat(x) = int dsigma2(t)/(x - t)``.
For the multi-index ``(n, n)`` the monic polynomial ``P_n`` of degree ``2n``
satisfies ``int x^nu P_n ds_j = 0`` for ``nu < n`` and ``j = 1, 2``.  The
second polynomial ``P_{n,2}`` (degree ``n``) vanishes at the zeros of the
function of the second kind ``R_{n,1}(z) = int P_n(x)/(z - x) dsigma1(x)``
on the negative axis.

Everything that involves ``P_n`` is computed with mpmath at the precision of
a :class:`~nikishin.hp_numerics.PrecisionContext` (1024 bits by default for
the moment systems, overridable through ``EQUILIB_BITS``).
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import gmpy2
import mpmath as mp
import numpy as np
from gmpy2 import mpfr

from .hp_numerics import (
    DegenerateRootError,
    PrecisionContext,
    Polynomial,
    QuadratureError,
    exp_sinh_rule,
    integrate_adaptive,
    isolate_real_roots,
)
from .measures import DiscreteMeasure, GridMeasure, cdf_distance, window_cdf_distance, zero_counting

__all__ = [
    "PrecisionError",
    "ConsistencyError",
    "SearchWindowError",
    "TruncationError",
    "NikishinSystem",
    "MopPair",
    "AssumptionReport",
    "pollaczek_system",
    "custom_system",
    "default_context",
    "moment",
    "compute_Pn",
    "second_kind_R",
    "compute_Pn2",
    "compute_pair",
    "rescale_pair",
    "norm_integrals",
    "check_assumptions",
    "reference_equilibrium",
    "zero_distribution_report",
    "nth_root_report",
    "pair_to_json",
    "pair_from_json",
    "zeros_csv",
]

DEFAULT_MOP_BITS = 1024
DEFAULT_N_LIST = (1, 2, 4, 8, 12, 16)


class PrecisionError(RuntimeError):
    """A residual exceeded its bound; retry with more mantissa bits."""

    def __init__(self, message: str, residual=None, bits: Optional[int] = None):
        super().__init__(message)
        self.residual = residual
        self.bits = bits


class ConsistencyError(RuntimeError):
    """A structural guarantee failed (non-real or misplaced zeros, singular system)."""


class SearchWindowError(RuntimeError):
    """Fewer sign changes of the second-kind function than expected."""

    def __init__(self, message: str, found: int = 0):
        super().__init__(message)
        self.found = found


class TruncationError(RuntimeError):
    """A truncated quadrature or sum left a tail above tolerance."""


def default_context(bits: Optional[int] = None) -> PrecisionContext:
    """Context for the moment systems: ``bits``, else ``$EQUILIB_BITS``, else 1024."""
    if bits is None:
        env = os.environ.get("EQUILIB_BITS")
        bits = int(env) if env else DEFAULT_MOP_BITS
    return PrecisionContext(int(bits))


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NikishinSystem:
    """Generating measures of a Nikishin system on ``(0, inf)``.

    Parameters
    ----------
    name : str
        ``"pollaczek"`` for the built-in system, anything else for custom data.
    sigma1_density : callable
        ``x -> sigma1'(x)`` accepting mpf arguments.
    atom : callable
        ``k -> (t_k, beta_k)`` for ``k = 0, 1, ...``; ``t_k`` strictly
        decreasing to ``-inf`` and ``beta_k > 0``.
    scaling : callable
        ``n -> d_n >= 1``.
    sigma2_hat : callable, optional
        Cauchy transform ``x -> int dsigma2(t)/(x - t)`` for ``x > 0``.  When
        omitted the atom series is summed with :func:`mpmath.nsum`.
    moment_oracle : callable, optional
        ``(j, nu) -> int x^nu ds_j`` evaluated at the current mpmath precision.
    log_sigma1_density : callable, optional
        Overflow-free ``log sigma1'(x)`` for large arguments.
    limits : dict
        Data for the assumption validators: ``rho``, ``A``, ``B`` (callables),
        ``sigma_mass`` (``x -> sigma([x, 0])``), ``phi`` and, when the source
        prints different values, ``printed_sigma_mass``.
    """

    name: str
    sigma1_density: Callable
    atom: Callable[[int], Tuple]
    scaling: Callable[[int], float]
    sigma2_hat: Optional[Callable] = None
    moment_oracle: Optional[Callable] = None
    log_sigma1_density: Optional[Callable] = None
    limits: Dict = field(default_factory=dict)
    inputs: Dict = field(default_factory=dict)

    def t(self, k: int):
        return self.atom(k)[0]

    def beta(self, k: int):
        return self.atom(k)[1]

    def xi(self, k: int, n: int) -> float:
        """Scaled atom ``xi_{k,n} = t_k / d_n``."""
        return float(self.t(k)) / float(self.scaling(n))

    def cauchy_sigma2(self, x):
        if self.sigma2_hat is not None:
            return self.sigma2_hat(x)
        return mp.nsum(lambda k: self.beta(int(k)) / (x - self.t(int(k))), [0, mp.inf])

    def log_sigma1(self, x):
        if self.log_sigma1_density is not None:
            return self.log_sigma1_density(x)
        return mp.log(self.sigma1_density(x))


def _pollaczek_moment(j: int, nu: int):
    """Closed-form moments of the Pollaczek-type system at the current precision."""
    if j == 1:
        s = 2 * nu + 2
        return 4 * (2 / mp.pi) ** s * mp.factorial(2 * nu + 1) * (1 - mp.mpf(2) ** (-s)) * mp.zeta(s)
    s = 2 * nu + 1
    return 4 * (2 / mp.pi) ** s * mp.factorial(2 * nu) * mp.dirichlet(s, [0, 1, 0, -1])


def _pollaczek_log_sigma1(x):
    # log(1/sinh y) = -y - log((1 - e^{-2y})/2), stable for large y
    y = mp.pi * mp.sqrt(x) / 2
    return -y - mp.log((1 - mp.exp(-2 * y)) / 2)


def pollaczek_system() -> NikishinSystem:
    """The system ``ds1 = dx/sinh(pi sqrt(x)/2)``, ``sigma2 = (4/pi) sum delta_{-(2k+1)^2}``.

    Scaling ``d_n = 4 n^2``.  The scaled atoms ``-((2k+1)/(2n))^2`` counted
    with weight ``1/n`` converge to ``dx/(2 sqrt|x|)``, and
    ``(1/n) log sigma1'(4 n^2 x) -> -pi sqrt(x)``; these limits feed the
    assumption validators.  The values quoted by the source
    (``dsigma = dx/sqrt|x|``) are kept in ``inputs`` for reference.
    """
    return NikishinSystem(
        name="pollaczek",
        sigma1_density=lambda x: 1 / mp.sinh(mp.pi * mp.sqrt(x) / 2),
        atom=lambda k: (-mp.mpf(2 * k + 1) ** 2, 4 / mp.pi),
        scaling=lambda n: 4.0 * n * n,
        sigma2_hat=lambda x: mp.tanh(mp.pi * mp.sqrt(x) / 2) / mp.sqrt(x),
        moment_oracle=_pollaczek_moment,
        log_sigma1_density=_pollaczek_log_sigma1,
        limits={
            "rho": lambda x: math.sqrt(abs(x)),
            "A": lambda x: math.sqrt(abs(x)),
            "B": lambda n: float(n),
            "sigma_mass": lambda x: math.sqrt(abs(x)),
            "printed_sigma_mass": lambda x: 2.0 * math.sqrt(abs(x)),
            "phi": lambda x: math.pi * math.sqrt(x),
        },
        inputs={
            "rho": "sqrt|x|", "A": "sqrt|x|", "B": "n",
            "sigma": "dx/sqrt|x| (as printed); dx/(2 sqrt|x|) is the limit of the scaled atoms",
            "phi": "pi sqrt(x)",
            "d_n": "4 n^2", "t_k": "-(2k+1)^2", "beta_k": "4/pi",
        },
    )


def custom_system(sigma1_density: Callable, atom: Callable[[int], Tuple], scaling: Callable[[int], float],
                  sigma2_hat: Optional[Callable] = None, name: str = "custom", **limits) -> NikishinSystem:
    """A user-specified system; moments are obtained by quadrature."""
    return NikishinSystem(name=name, sigma1_density=sigma1_density, atom=atom, scaling=scaling,
                          sigma2_hat=sigma2_hat, limits=dict(limits))


def _system_by_name(name: str) -> NikishinSystem:
    if name == "pollaczek":
        return pollaczek_system()
    raise ValueError(f"unknown built-in system {name!r}")


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


def moment(sys: NikishinSystem, j: int, nu: int, ctx: PrecisionContext = PrecisionContext(256),
           method: str = "auto"):
    """``int x^nu ds_j(x)``.

    ``method`` is ``"oracle"`` (closed form), ``"quadrature"`` or ``"auto"``
    (oracle when available).  Quadrature uses the double-exponential rule of
    :func:`~nikishin.hp_numerics.integrate_adaptive` on ``(0, inf)``.
    """
    if j not in (1, 2):
        raise ValueError("j must be 1 or 2")
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    use_oracle = method == "oracle" or (method == "auto" and sys.moment_oracle is not None)
    if use_oracle:
        if sys.moment_oracle is None:
            raise ValueError(f"system {sys.name!r} has no moment oracle")
        with mp.workprec(ctx.mantissa_bits + 32):
            val = sys.moment_oracle(j, nu)
        with mp.workprec(ctx.mantissa_bits):
            return +val
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if j == 1:
        f = lambda x: x ** nu * sys.sigma1_density(x)
    else:
        f = lambda x: x ** nu * sys.sigma1_density(x) * sys.cauchy_sigma2(x)
    val, _err = integrate_adaptive(f, 0, mp.inf, ctx)
    return val


# ---------------------------------------------------------------------------
# MOP pair
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MopPair:
    """``P_n`` (degree ``2n``) and, once completed, ``P_{n,2}`` (degree ``n``)."""

    n: int
    Pn: Polynomial
    zeros_Pn: Tuple
    precision_used: int
    residual: object
    Pn2: Optional[Polynomial] = None
    zeros_Pn2: Tuple = ()
    gaps_Pn2: Tuple[int, ...] = ()
    residual_Pn2: Dict = field(default_factory=dict)
    quadrature_level: Optional[int] = None
    _work: Dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def complete(self) -> bool:
        return self.Pn2 is not None


def _solve_refined(rows: List[List], rhs: List, bits: int) -> List:
    """Row-equilibrated LU solve with one step of iterative refinement."""
    with mp.workprec(bits + 64):
        scale = [max(abs(v) for v in r) for r in rows]
        A = mp.matrix([[v / s for v in r] for r, s in zip(rows, scale)])
        b = mp.matrix([v / s for v, s in zip(rhs, scale)])
        try:
            x = mp.lu_solve(A, b)
        except ZeroDivisionError as exc:
            raise ConsistencyError("moment system is rank deficient") from exc
    with mp.workprec(2 * bits + 64):
        r = b - A * x
    with mp.workprec(bits + 64):
        x = x + mp.lu_solve(A, r)
    with mp.workprec(bits):
        return [+v for v in x]


def _nikps_residual(coeffs: Sequence, moments: Dict[int, List], n: int, bits: int):
    """Scaled defects ``|int x^nu P ds_j| / sum |terms|`` from the moments."""
    worst = mp.mpf(0)
    with mp.workprec(2 * bits):
        for j in (1, 2):
            m = moments[j]
            for nu in range(n):
                terms = [c * m[nu + i] for i, c in enumerate(coeffs)]
                val = abs(mp.fsum(terms))
                size = mp.fsum(abs(t) for t in terms)
                worst = max(worst, val / size)
    with mp.workprec(bits):
        return +worst


def compute_Pn(sys: NikishinSystem, n: int, ctx: Optional[PrecisionContext] = None) -> MopPair:
    """Monic ``P_n`` of degree ``2n`` from the ``2n x 2n`` moment system.

    Raises
    ------
    PrecisionError
        If the scaled residual exceeds ``10^(-bits/8)`` or the computed
        zeros are not separated at this precision.
    ConsistencyError
        If the system is singular or the zeros are not ``2n`` simple
        positive reals.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    ctx = ctx or default_context()
    bits = ctx.mantissa_bits
    deg = 2 * n
    moments = {j: [moment(sys, j, nu, ctx) for nu in range(3 * n)] for j in (1, 2)}
    rows, rhs = [], []
    with mp.workprec(bits):
        for j in (1, 2):
            m = moments[j]
            for nu in range(n):
                rows.append([m[nu + i] for i in range(deg)])
                rhs.append(-m[nu + deg])
    sol = _solve_refined(rows, rhs, bits)
    with mp.workprec(bits):
        coeffs = tuple(sol) + (mp.mpf(1),)
    res = _nikps_residual(coeffs, moments, n, bits)
    bound = mp.mpf(10) ** (-mp.mpf(bits) / 8)
    if res > bound:
        raise PrecisionError(f"orthogonality residual {mp.nstr(res, 5)} exceeds {mp.nstr(bound, 3)} "
                             f"at {bits} bits; increase mantissa_bits", residual=res, bits=bits)
    P = Polynomial(coeffs)
    with mp.workprec(bits):
        cauchy = 1 + max(abs(c) for c in coeffs[:-1])
    try:
        roots = isolate_real_roots(P, (mp.mpf(0), cauchy), ctx)
    except DegenerateRootError as exc:
        # the zeros are simple in exact arithmetic; merged zeros mean lost digits
        raise PrecisionError(f"P_{n} shows {len(exc.multiple)} merged zero(s) at {bits} bits although "
                             f"the residual is {mp.nstr(res, 5)}; increase mantissa_bits",
                             residual=res, bits=bits) from exc
    zeros = tuple(r for r, _ in roots)
    if len(zeros) != deg or zeros[0] <= 0:
        raise ConsistencyError(f"P_{n} has {len(zeros)} positive real zeros, expected {deg}")
    return MopPair(n=n, Pn=P, zeros_Pn=zeros, precision_used=bits, residual=res)


# ---------------------------------------------------------------------------
# sigma1 quadrature rule
# ---------------------------------------------------------------------------
#
# The node loops run on gmpy2 mpfr numbers (the backend mpmath itself uses);
# mpmath's object layer costs roughly twenty times more per operation.  Values
# cross the boundary exactly through their mantissa and exponent.


_GUARD = 32


def _fctx(bits: int):
    return gmpy2.context(gmpy2.get_context(), precision=bits + _GUARD)


def _fr(v) -> "mpfr":
    """Exact mpmath -> gmpy2 conversion (needs an active wide enough context)."""
    if not isinstance(v, mp.mpf):
        return mpfr(v)
    sign, man, exp, _bc = v._mpf_
    if not man:
        if exp:
            raise ValueError("cannot convert a non-finite value")
        return mpfr(0)
    r = gmpy2.mul_2exp(mpfr(man), int(exp))
    return -r if sign else r


def _mp(r, bits: int):
    man, exp = r.as_mantissa_exp()
    with mp.workprec(bits):
        return mp.mpf((int(man), int(exp)))


def _prod_eval(roots: Sequence, x):
    acc = 1
    for r in roots:
        acc *= x - r
    return acc


@dataclass
class _Rule:
    x: List             # nodes (mpfr)
    w: List             # weights including sigma1' (mpfr)
    parity: List[bool]  # True for nodes of the next coarser level
    level: int
    bits: int
    s2: Optional[List] = None  # sigma2_hat at the nodes, filled on demand

    def sum(self, vals: Sequence, coarse: bool = False):
        if coarse:
            return 2 * sum((w * v for w, v, p in zip(self.w, vals, self.parity) if p), mpfr(0))
        return sum((w * v for w, v in zip(self.w, vals)), mpfr(0))

    def abs_sum(self, vals: Sequence):
        return sum((w * abs(v) for w, v in zip(self.w, vals)), mpfr(0))

    def sigma2_hat(self, sys: NikishinSystem) -> List:
        if self.s2 is None:
            with mp.workprec(self.bits + _GUARD), _fctx(self.bits):
                self.s2 = [_fr(sys.cauchy_sigma2(_mp(x, self.bits + _GUARD))) for x in self.x]
        return self.s2


def _rule_bounds(sys: NikishinSystem, degree: int, bits: int):
    """Window outside which ``x^degree sigma1'(x)`` is negligible at ``bits``."""
    with mp.workprec(bits + 32):
        drop = (bits + 40) * mp.log(2)
        x = mp.mpf(1)
        vals = []
        while True:
            v = degree * mp.log(x) + sys.log_sigma1(x)
            vals.append(v)
            peak = max(vals)
            if len(vals) > 3 and v < peak - drop and v < vals[-2]:
                break
            x *= 2
            if x > mp.mpf(10) ** 300:
                raise TruncationError("sigma1 density does not decay fast enough")
        x_min = mp.ldexp(mp.mpf(1), -2 * bits - 64)
        return x_min, x


@lru_cache(maxsize=32)
def _sigma1_rule(sys: NikishinSystem, degree: int, bits: int, level: int) -> _Rule:
    x_min, x_max = _rule_bounds(sys, degree, bits)
    prec = bits + _GUARD
    xs, ws = exp_sinh_rule(level, prec, x_min, x_max)
    with mp.workprec(prec):
        h = mp.ldexp(mp.mpf(1), -level)
        k0 = int(mp.nint(mp.asinh(mp.log(xs[0]) / (mp.pi / 2)) / h))
        wts = [w * sys.sigma1_density(x) for x, w in zip(xs, ws)]
    with _fctx(bits):
        fx, fw = [_fr(x) for x in xs], [_fr(w) for w in wts]
    parity = [((k0 + i) % 2 == 0) for i in range(len(xs))]
    return _Rule(fx, fw, parity, level, bits)


def _pair_rule(sys: NikishinSystem, pair: MopPair, bits: int, min_level: int = 5,
               max_level: int = 12) -> Tuple[_Rule, List]:
    """Smallest level at which the rule reproduces the orthogonality of ``P_n``.

    The checks are the exact zeros ``int x^nu P_n dsigma1 = 0`` for
    ``nu = 0, n-1`` and the level-to-level change of ``int P_n^2/(1+x) dsigma1``,
    all relative to the sum of absolute terms and against ``10^(-bits/8)/1000``.
    Returns the rule and ``P_n`` at its nodes.
    """
    n = pair.n
    degree = 4 * n + 2
    with _fctx(bits):
        target = mpfr(10) ** (-mpfr(bits) / 8) / 1000
        roots = [_fr(r) for r in pair.zeros_Pn]
        for level in range(min_level, max_level + 1):
            rule = _sigma1_rule(sys, degree, bits, level)
            pv = [_prod_eval(roots, x) for x in rule.x]
            worst = mpfr(0)
            for nu in sorted({0, n - 1}):
                vals = [x ** nu * p for x, p in zip(rule.x, pv)]
                worst = max(worst, abs(rule.sum(vals)) / rule.abs_sum(vals))
            sq = [p * p / (1 + x) for x, p in zip(rule.x, pv)]
            fine, coarse = rule.sum(sq), rule.sum(sq, coarse=True)
            worst = max(worst, abs(fine - coarse) / abs(fine))
            if worst <= target:
                return rule, pv
    raise TruncationError(f"sigma1 quadrature did not reach 1e-{bits / 8:.0f}/1000 by level {max_level}")


# ---------------------------------------------------------------------------
# second kind function and P_{n,2}
# ---------------------------------------------------------------------------


class _SecondKind:
    """``R(z) = z^-k int x^k P(x)/(z - x) dsigma1(x)`` on a fixed rule.

    The reduced form is exact when ``P`` is orthogonal to ``1, ..., x^(k-1)``
    with respect to ``sigma1`` and removes most of the cancellation.
    """

    def __init__(self, rule: _Rule, pvals: Sequence, k: int):
        self.k = k
        self.bits = rule.bits
        with _fctx(rule.bits):
            self.a = [w * x ** k * p for w, x, p in zip(rule.w, rule.x, pvals)]
        self.x = rule.x

    def __call__(self, z):
        with _fctx(self.bits):
            s = sum((a / (z - x) for a, x in zip(self.a, self.x)), mpfr(0))
            return s / z ** self.k


def second_kind_R(sys: NikishinSystem, Pn: Polynomial, z, ctx: Optional[PrecisionContext] = None,
                  orth_order: Optional[int] = None, level: int = 8):
    """``R_{n,1}(z) = int Pn(x)/(z - x) dsigma1(x)`` for real ``z < 0``.

    ``orth_order`` is the number of vanishing ``sigma1`` moments of ``Pn``
    (``deg/2`` for a multiple orthogonal polynomial, ``0`` for an arbitrary
    polynomial); it selects the algebraically equivalent reduced integrand.
    """
    ctx = ctx or default_context()
    if not z < 0:
        raise ValueError("the second-kind function is evaluated on the negative axis")
    k = Pn.degree // 2 if orth_order is None else orth_order
    bits = ctx.mantissa_bits
    rule = _sigma1_rule(sys, Pn.degree + k + 2, bits, level)
    with _fctx(bits):
        coeffs = [_fr(c) for c in Pn.coefficients]
        pv = []
        for x in rule.x:
            acc = mpfr(0)
            for c in reversed(coeffs):
                acc = acc * x + c
            pv.append(acc)
        val = _SecondKind(rule, pv, k)(_fr(z))
    return _mp(val, bits)


def _illinois(f, a, b, fa, fb, rel_tol, max_iter: int = 400):
    """Bracketed root by the Illinois variant of regula falsi."""
    side = 0
    for _ in range(max_iter):
        c = (a * fb - b * fa) / (fb - fa)
        if not (min(a, b) < c < max(a, b)):
            c = (a + b) / 2
        fc = f(c)
        if fc == 0:
            return c
        if (fc > 0) == (fb > 0):
            b, fb = c, fc
            if side == -1:
                fa /= 2
            side = -1
        else:
            a, fa = c, fc
            if side == 1:
                fb /= 2
            side = 1
        if abs(b - a) <= rel_tol * abs(c):
            return (a + b) / 2
    raise ConsistencyError("bracketed root refinement did not converge")


def compute_Pn2(sys: NikishinSystem, pair: MopPair, ctx: Optional[PrecisionContext] = None,
                k_max: Optional[int] = None) -> MopPair:
    """Complete ``pair`` with ``P_{n,2}`` and its varying-orthogonality residuals.

    The zeros of ``R_{n,1}`` are located by scanning the sign at the atoms
    ``t_0 > t_1 > ...`` (at most one zero per gap) and refined by a
    bracketed secant method to relative width ``2^(-bits/2)``.

    Raises
    ------
    SearchWindowError
        If fewer than ``n`` sign changes are found up to ``k_max``.
    PrecisionError
        If a varying-orthogonality residual exceeds ``10^(-bits/8)``.
    """
    ctx = ctx or default_context(pair.precision_used)
    bits = ctx.mantissa_bits
    n = pair.n
    if k_max is None:
        k_max = max(1000, 40 * n * n)
    rule, pv = _pair_rule(sys, pair, bits)
    R = _SecondKind(rule, pv, n)

    zeros, gaps = [], []
    with _fctx(bits):
        rel_tol = gmpy2.mul_2exp(mpfr(1), -(bits // 2))
        t_prev = _fr(sys.t(0))
        f_prev = R(t_prev)
        k = 0
        while len(zeros) < n:
            k += 1
            if k > k_max:
                raise SearchWindowError(f"found {len(zeros)} of {n} zeros of R_{{n,1}} up to atom {k_max}",
                                        found=len(zeros))
            t_k = _fr(sys.t(k))
            f_k = R(t_k)
            if (f_k > 0) != (f_prev > 0):
                zeros.append(_illinois(R, t_k, t_prev, f_k, f_prev, rel_tol))
                gaps.append(k - 1)
            t_prev, f_prev = t_k, f_k
        zeros.sort()
        parts = _partial_fraction_parts(sys, pair, zeros, rule, pv)
        residuals = {k: _mp(v, bits) for k, v in _varying_residuals(sys, pair, rule, pv, parts).items()}
    mzeros = tuple(_mp(z, bits) for z in zeros)
    with mp.workprec(bits):
        P2 = Polynomial.from_roots(mzeros, mp.mpf(1))
    bound = mp.mpf(10) ** (-mp.mpf(bits) / 8)
    worst = max(residuals.values())
    if worst > bound:
        raise PrecisionError(f"varying orthogonality residual {mp.nstr(worst, 5)} exceeds "
                             f"{mp.nstr(bound, 3)}", residual=worst, bits=bits)
    out = MopPair(n=n, Pn=pair.Pn, zeros_Pn=pair.zeros_Pn, precision_used=bits, residual=pair.residual,
                  Pn2=P2, zeros_Pn2=mzeros, gaps_Pn2=tuple(sorted(gaps, reverse=True)),
                  residual_Pn2=residuals, quadrature_level=rule.level)
    out._work.update(rule=rule, pv=pv, parts=parts)
    return out


@dataclass
class _Parts:
    p2v: List     # P2 at the nodes
    nodes: List   # per zero r_i of P: (r_i, P'(r_i), P2(r_i), sigma2_hat(r_i), J_i)


def _partial_fraction_parts(sys, pair, zeros_P2, rule, pv) -> _Parts:
    """``J_i = int P^2 / ((x - r_i) P2) dsigma1`` and the point values at
    the zeros ``r_i`` of ``P`` needed by the partial fraction formulas."""
    bits = rule.bits
    with _fctx(bits), mp.workprec(bits + _GUARD):
        roots = [_fr(r) for r in pair.zeros_Pn]
        p2v = [_prod_eval(zeros_P2, x) for x in rule.x]
        q = [p * p / d for p, d in zip(pv, p2v)]
        out = []
        for i, r in enumerate(roots):
            dP = _prod_eval(roots[:i] + roots[i + 1:], r)
            J = rule.sum([v / (x - r) for v, x in zip(q, rule.x)])
            sh = _fr(sys.cauchy_sigma2(pair.zeros_Pn[i]))
            out.append((r, dP, _prod_eval(zeros_P2, r), sh, J))
        return _Parts(p2v, out)


def _varying_residuals(sys, pair, rule, pv, parts: _Parts) -> Dict[str, object]:
    """Relative defects of the two varying orthogonality relations.

    The first is a direct quadrature.  For the second the sum over the atoms
    is resolved exactly by partial fractions in ``t``, which turns it into
    ``int x^nu P sigma2_hat dsigma1 - sum_i r_i^nu P2(r_i) sigma2_hat(r_i) J_i / P'(r_i)``.
    """
    n = pair.n
    s2 = rule.sigma2_hat(sys)
    with _fctx(rule.bits):
        res_s1 = mpfr(0)
        vals = [p / d for p, d in zip(pv, parts.p2v)]
        for nu in range(2 * n):
            res_s1 = max(res_s1, abs(rule.sum(vals)) / rule.abs_sum(vals))
            vals = [v * x for v, x in zip(vals, rule.x)]
        res_s2 = mpfr(0)
        direct = [p * s for p, s in zip(pv, s2)]
        base = [q2 * sh * J / dP for r, dP, q2, sh, J in parts.nodes]
        for nu in range(n):
            terms = [b * r ** nu for b, (r, *_rest) in zip(base, parts.nodes)]
            total = rule.sum(direct) - sum(terms, mpfr(0))
            size = rule.abs_sum(direct) + sum((abs(t) for t in terms), mpfr(0))
            res_s2 = max(res_s2, abs(total) / size)
            direct = [v * x for v, x in zip(direct, rule.x)]
        return {"sigma1_ratio": res_s1, "sigma2_varying": res_s2}


def compute_pair(sys: NikishinSystem, n: int, ctx: Optional[PrecisionContext] = None) -> MopPair:
    """``compute_Pn`` followed by ``compute_Pn2``."""
    ctx = ctx or default_context()
    return compute_Pn2(sys, compute_Pn(sys, n, ctx), ctx)


def rescale_pair(pair: MopPair, d_n: float):
    """``Q_n(x) = P_n(d x)/d^(2n)`` and ``Q_{n,2}(t) = P_{n,2}(d t)/d^n``.

    Returns ``(Qn, Qn2, zeros_Qn, zeros_Qn2)``; zeros are divided by ``d``.
    """
    if d_n < 1:
        raise ValueError("d_n must be >= 1")
    with mp.workprec(pair.precision_used):
        d = mp.mpf(d_n)

        def scale(P: Polynomial):
            deg = P.degree
            return Polynomial(tuple(c * d ** (i - deg) for i, c in enumerate(P.coefficients)))

        Qn = scale(pair.Pn)
        Qn2 = scale(pair.Pn2) if pair.Pn2 is not None else None
        zq = tuple(z / d for z in pair.zeros_Pn)
        zq2 = tuple(z / d for z in pair.zeros_Pn2)
    return Qn, Qn2, zq, zq2


def norm_integrals(sys: NikishinSystem, pair: MopPair, ctx: Optional[PrecisionContext] = None):
    """The rescaled integrals whose ``n``-th roots tend to ``e^{-w1}`` and ``e^{-(w1+w2)}``.

    ``N1 = int Q_n^2/Q_{n,2} sigma1'(d_n x) dx`` and
    ``N2 = int Q_{n,2}^2(t)/Q_n(t) int Q_n^2(x)/Q_{n,2}(x) sigma1'(d_n x) dx/(x-t) dsigma_{2,n}(t)``.
    In unscaled variables ``N1 = d^(-3n-1) int P^2/P2 dsigma1`` and the atom
    sum in ``N2`` is evaluated in closed form by partial fractions in ``t``,
    which leaves ``int P P2 sigma2_hat dsigma1 - sum_i P2(r_i)^2 sigma2_hat(r_i) J_i / P'(r_i)``.
    """
    if not pair.complete:
        raise ValueError("norm integrals need a completed pair")
    bits = (ctx or default_context(pair.precision_used)).mantissa_bits
    n = pair.n
    if pair._work and pair._work["rule"].bits == bits:
        rule, pv, parts = pair._work["rule"], pair._work["pv"], pair._work["parts"]
    else:
        rule, pv = _pair_rule(sys, pair, bits)
        with _fctx(bits):
            parts = _partial_fraction_parts(sys, pair, [_fr(z) for z in pair.zeros_Pn2], rule, pv)
    s2 = rule.sigma2_hat(sys)
    with _fctx(bits):
        I1 = rule.sum([p * p / d for p, d in zip(pv, parts.p2v)])
        first = rule.sum([p * d * s for p, d, s in zip(pv, parts.p2v, s2)])
        second = sum((q2 * q2 * sh * J / dP for r, dP, q2, sh, J in parts.nodes), mpfr(0))
        I2 = first - second
    with mp.workprec(bits):
        d = mp.mpf(sys.scaling(n))
        N1 = _mp(I1, bits) / d ** (3 * n + 1)
        N2 = _mp(I2, bits) / d ** (3 * n)
        if not (N1 > 0 and N2 > 0):
            raise ConsistencyError("norm integrals must be positive")
        return +N1, +N2


# ---------------------------------------------------------------------------
# assumptions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    """Per-condition measurements; ``records`` is a list of dicts."""

    system: str
    records: Tuple[Dict, ...]
    inputs: Dict = field(default_factory=dict)

    def by_condition(self, cond: str) -> List[Dict]:
        return [r for r in self.records if r["condition"] == cond]

    def passed(self, cond: Optional[str] = None) -> bool:
        recs = self.records if cond is None else self.by_condition(cond)
        return all(r["passed"] for r in recs)

    def to_json(self) -> dict:
        return {"system": self.system, "inputs": self.inputs, "records": list(self.records)}


def _count_in(sys: NikishinSystem, n: int, x: float) -> int:
    """``#{k : xi_{k,n} in [x, 0]}``."""
    k = 0
    while sys.xi(k, n) >= x:
        k += 1
    return k


def check_assumptions(sys: NikishinSystem, n_list: Sequence[int] = (10, 50, 200),
                      compacts: Sequence[Tuple[float, float]] = ((-4.0, 0.0), (0.5, 4.0)),
                      n_grid: int = 400) -> AssumptionReport:
    """Measure conditions (i)-(v) and the growth condition of the field.

    ``compacts`` lists intervals; the negative ones serve (i)-(iv) and the
    positive ones (v).  The report never raises; each record carries the
    measured quantity, the bound, the margin and a pass flag.  For (iii)-(v)
    the pass flag asks for a decrease over the requested ``n``.
    """
    lim = sys.limits
    neg = [c for c in compacts if c[1] <= 0]
    pos = [c for c in compacts if c[0] >= 0]
    recs: List[Dict] = []
    for a, _b in neg:
        for n in n_list:
            # (i): spacing of consecutive scaled atoms against rho/n
            ratios, k = [], 0
            while sys.xi(k, n) >= a:
                x0, x1 = sys.xi(k, n), sys.xi(k + 1, n)
                ratios.append(abs(x1 - x0) * n / lim["rho"](x0))
                k += 1
            r = min(ratios) if ratios else math.inf
            recs.append(dict(condition="i", n=n, compact=[a, _b], measured=r, bound=1.0,
                             margin=r - 1.0, passed=bool(r > 1.0), atoms=len(ratios)))
            # (ii): counting bound
            xs = np.linspace(a, 0.0, n_grid + 1)[:-1]
            worst = max(_count_in(sys, n, x) / (lim["A"](x) * lim["B"](n)) for x in xs)
            recs.append(dict(condition="ii", n=n, compact=[a, _b], grid=n_grid, measured=worst, bound=1.0,
                             margin=1.0 - worst, passed=bool(worst <= 1.0)))
        # (iii): n-th root of the smallest mass in [a, 0]
        vals = []
        for n in n_list:
            kk = max(_count_in(sys, n, a), 1)
            inf_beta = min(float(sys.beta(k)) for k in range(kk))
            vals.append(abs(inf_beta ** (1.0 / n) - 1.0))
        recs.append(dict(condition="iii", n=list(n_list), compact=[a, _b], measured=vals, bound=None,
                         margin=None, passed=bool(all(v1 <= v0 for v0, v1 in zip(vals, vals[1:])))))
        # (iv): counting measure of the scaled atoms vs the limit sigma
        for key in ("sigma_mass", "printed_sigma_mass"):
            if key not in lim:
                continue
            gaps = []
            xs = np.linspace(a, 0.0, n_grid + 1)
            for n in n_list:
                # the counting function jumps at the atoms: probe both sides
                pts = [sys.xi(k, n) for k in range(_count_in(sys, n, a))]
                probe = np.concatenate([xs, pts, np.nextafter(np.array(pts, float), 0.0)]) if pts else xs
                probe = probe[(probe >= a) & (probe <= 0)]
                g = max(abs(_count_in(sys, n, x) / n - lim[key](x)) for x in probe)
                gaps.append(g)
            recs.append(dict(condition="iv", n=list(n_list), compact=[a, _b], grid=n_grid, measured=gaps, bound=None,
                             margin=None, limit=key, informational=key != "sigma_mass",
                             passed=bool(all(g1 < g0 for g0, g1 in zip(gaps, gaps[1:])))))
    for a, b in pos:
        # (v): (1/n) log sigma1'(d_n x) -> -phi(x)
        gaps = []
        xs = np.linspace(a, b, n_grid + 1)
        for n in n_list:
            d = sys.scaling(n)
            with mp.workprec(128):
                g = max(abs(float(sys.log_sigma1(mp.mpf(d * x))) / n + lim["phi"](x)) for x in xs)
            gaps.append(g)
        recs.append(dict(condition="v", n=list(n_list), compact=[a, b], grid=n_grid, measured=gaps, bound=None,
                         margin=None, passed=bool(all(g1 < g0 for g0, g1 in zip(gaps, gaps[1:])))))
    # growth of the field against 4 log x
    grow = {str(X): lim["phi"](X) - 4 * math.log(X) for X in (10.0, 100.0, 1e4)}
    vals = list(grow.values())
    recs.append(dict(condition="growth", n=None, compact=None, measured=grow, bound=None, margin=vals[-1],
                     passed=bool(vals[-1] > vals[0] > 0)))
    return AssumptionReport(sys.name, tuple(recs), dict(sys.inputs))


# ---------------------------------------------------------------------------
# limits
# ---------------------------------------------------------------------------


def reference_equilibrium(sys: NikishinSystem, n_cells: int = 500):
    """Equilibrium solution of the problem attached to the rescaled zeros.

    For the built-in system this is the Pollaczek problem with
    ``phi = pi sqrt(x)`` and ``sigma = dx/(2 sqrt|x|)``.
    """
    from .equilibrium import builtin_problem, solve_equilibrium

    if sys.name != "pollaczek":
        raise ValueError("a reference equilibrium is only wired up for the built-in system")
    return solve_equilibrium(builtin_problem("pollaczek", n_cells, normalization="mop"))


def zero_distribution_report(sys: NikishinSystem, pairs: Sequence[MopPair], lambda1: GridMeasure,
                             lambda2: GridMeasure, window2: Tuple[float, float] = (-50.0, 0.0)) -> List[Dict]:
    """Distances of the rescaled zero counting measures to ``lambda1/2`` and ``lambda2``.

    ``d1 = cdf_distance(nu_{Q_n}, lambda1/2)`` and
    ``d2 = sup_{x in window} |nu_{Q_{n,2}}([x, 0]) - lambda2([x, 0])|``.
    """
    out = []
    half = lambda1.scaled(1.0 / lambda1.total_mass)
    for p in pairs:
        _, _, zq, zq2 = rescale_pair(p, sys.scaling(p.n))
        nu1 = zero_counting([float(z) for z in zq], len(zq))
        row = {"n": p.n, "d1": cdf_distance(nu1, half)}
        if zq2:
            nu2 = zero_counting([float(z) for z in zq2], len(zq2))
            row["d2"] = window_cdf_distance(nu2, lambda2, window2, anchor="right")
        out.append(row)
    return out


def nth_root_report(pairs: Sequence[MopPair], norms: Sequence[Tuple], w1: float, w2: float) -> List[Dict]:
    """``-(1/n) log N1`` against ``w1`` and ``-(1/n) log N2`` against ``w1 + w2``."""
    out = []
    for p, (N1, N2) in zip(pairs, norms):
        e1 = -float(mp.log(N1)) / p.n
        e2 = -float(mp.log(N2)) / p.n
        out.append({"n": p.n, "rate1": e1, "gap1": abs(e1 - w1), "rate2": e2, "gap2": abs(e2 - (w1 + w2))})
    return out


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _s(x, digits: int) -> str:
    return mp.nstr(x, digits)


def pair_to_json(pair: MopPair, d_n: Optional[float] = None, norms: Optional[Tuple] = None) -> dict:
    """JSON-ready record; all high-precision values are decimal strings."""
    bits = pair.precision_used
    digits = int(bits * math.log10(2)) - 3
    with mp.workprec(bits):
        obj = {
            "n": pair.n,
            "coefficients_Pn": [_s(c, digits) for c in pair.Pn.coefficients],
            "zeros_Pn": [_s(z, digits) for z in pair.zeros_Pn],
            "residuals": {"orthogonality": mp.nstr(pair.residual, 5)},
            "precision": {"mantissa_bits": bits, "quadrature_level": pair.quadrature_level},
        }
        if pair.Pn2 is not None:
            obj["coefficients_Pn2"] = [_s(c, digits) for c in pair.Pn2.coefficients]
            obj["zeros_Pn2"] = [_s(z, digits) for z in pair.zeros_Pn2]
            obj["gaps_Pn2"] = list(pair.gaps_Pn2)
            obj["residuals"].update({k: mp.nstr(v, 5) for k, v in pair.residual_Pn2.items()})
        if d_n is not None:
            _, _, zq, zq2 = rescale_pair(pair, d_n)
            obj["d_n"] = d_n
            obj["rescaled_zeros_Pn"] = [_s(z, 30) for z in zq]
            obj["rescaled_zeros_Pn2"] = [_s(z, 30) for z in zq2]
        if norms is not None:
            obj["N1"], obj["N2"] = (mp.nstr(v, 30) for v in norms)
    return obj


def pair_from_json(obj: dict) -> MopPair:
    bits = int(obj["precision"]["mantissa_bits"])
    with mp.workprec(bits):
        P = Polynomial(tuple(mp.mpf(c) for c in obj["coefficients_Pn"]))
        zeros = tuple(mp.mpf(z) for z in obj["zeros_Pn"])
        P2 = zeros2 = None
        if "coefficients_Pn2" in obj:
            P2 = Polynomial(tuple(mp.mpf(c) for c in obj["coefficients_Pn2"]))
            zeros2 = tuple(mp.mpf(z) for z in obj["zeros_Pn2"])
        res = {k: mp.mpf(v) for k, v in obj["residuals"].items() if k != "orthogonality"}
        return MopPair(n=int(obj["n"]), Pn=P, zeros_Pn=zeros, precision_used=bits,
                       residual=mp.mpf(obj["residuals"]["orthogonality"]), Pn2=P2,
                       zeros_Pn2=zeros2 or (), gaps_Pn2=tuple(obj.get("gaps_Pn2", ())), residual_Pn2=res,
                       quadrature_level=obj["precision"].get("quadrature_level"))


def zeros_csv(sys: NikishinSystem, pairs: Sequence[MopPair]) -> str:
    """CSV with columns ``n, kind, index, zero, rescaled_zero``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "kind", "index", "zero", "rescaled_zero"])
    for p in pairs:
        d = sys.scaling(p.n)
        for kind, zs in (("Pn", p.zeros_Pn), ("Pn2", p.zeros_Pn2)):
            for i, z in enumerate(zs):
                w.writerow([p.n, kind, i, mp.nstr(z, 25), repr(float(z) / d)])
    return buf.getvalue()
