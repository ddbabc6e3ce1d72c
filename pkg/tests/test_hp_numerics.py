import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nikishin.hp_numerics import (
    DegenerateRootError,
    Polynomial,
    PrecisionContext,
    QuadratureError,
    exp_sinh_rule,
    integrate_adaptive,
    isolate_real_roots,
    solve_cubic,
    solve_cubic_batch,
)
from nikishin.spectral_curves import builtin_curve


CTX = PrecisionContext(128)


class TestPrecisionContext:
    def test_defaults_follow_bits(self):
        c = PrecisionContext(256)
        assert c.abs_tol == mp.ldexp(1, -128)
        assert c.digits == 77

    @pytest.mark.parametrize("bits", [32, 63, 100.5])
    def test_rejects_low_or_fractional_bits(self, bits):
        with pytest.raises(ValueError):
            PrecisionContext(bits)

    def test_rejects_unrepresentable_tolerance(self):
        with pytest.raises(ValueError):
            PrecisionContext(64, abs_tol=mp.ldexp(1, -80))
        with pytest.raises(ValueError):
            PrecisionContext(64, rel_tol=0)


class TestPolynomial:
    def test_from_roots_and_eval(self):
        p = Polynomial.from_roots([1, 2, 3])
        assert p.coefficients == (-6, 11, -6, 1)
        assert p.degree == 3 and p(4) == 6

    def test_leading_zero_rejected(self):
        with pytest.raises(ValueError):
            Polynomial((1, 0))

    def test_divmod_and_derivative(self):
        p = Polynomial.from_roots([1, 2, 3])
        q, r = p.divmod(Polynomial((-1, 1)))
        assert q.coefficients == (6, -5, 1) and r.coefficients == (0,)
        assert p.derivative().coefficients == (11, -12, 3)
        assert (q * Polynomial((-1, 1)) + r).coefficients == p.coefficients


class TestIntegrateAdaptive:
    def test_exponential_half_line(self):
        v, err = integrate_adaptive(lambda t: mp.exp(-t), 0, mp.inf, CTX)
        assert abs(v - 1) <= err <= CTX.tolerance_for(v)

    def test_log_endpoint_singularity(self):
        v, err = integrate_adaptive(lambda y: -mp.log(y), 0, 1, CTX)
        assert abs(v - 1) <= err

    def test_sinh_moment_oracle(self):
        v, err = integrate_adaptive(lambda x: 1 / mp.sinh(mp.pi * mp.sqrt(x) / 2), 0, mp.inf, CTX)
        assert abs(v - 2) <= max(err, CTX.abs_tol)

    def test_negative_half_line_and_whole_line(self):
        v, _ = integrate_adaptive(lambda t: mp.exp(t), -mp.inf, 0, CTX)
        assert abs(v - 1) < mp.mpf(10) ** -30
        v, _ = integrate_adaptive(lambda t: mp.exp(-t * t), -mp.inf, mp.inf, CTX)
        with mp.workprec(128):
            assert abs(v - mp.sqrt(mp.pi)) < mp.mpf(10) ** -30

    def test_doubling_bits_never_increases_bound(self):
        f = lambda t: mp.exp(-t) * mp.cos(t)
        _, e1 = integrate_adaptive(f, 0, mp.inf, PrecisionContext(128))
        _, e2 = integrate_adaptive(f, 0, mp.inf, PrecisionContext(256))
        assert e2 <= e1

    def test_refinement_monotone(self):
        # a tolerance that is never met: the reported bound per depth must not grow
        ctx = PrecisionContext(128, abs_tol=mp.ldexp(1, -124), rel_tol=mp.ldexp(1, -124))
        f = lambda y: mp.sqrt(y) * mp.log(y) ** 2
        bounds = []
        for depth in range(4, 8):
            with pytest.raises(QuadratureError) as info:
                integrate_adaptive(f, 0, 1, ctx, max_level=depth, min_level=3)
            assert info.value.value is not None
            bounds.append(info.value.error_bound)
        assert all(b1 <= b0 for b0, b1 in zip(bounds, bounds[1:]))

    def test_nan_integrand_is_input_error(self):
        with pytest.raises(ValueError, match="NaN"):
            integrate_adaptive(lambda x: mp.nan, 0, 1, CTX)

    def test_reversed_interval(self):
        with pytest.raises(ValueError):
            integrate_adaptive(lambda x: x, 1, 0, CTX)


def test_exp_sinh_rule_integrates_exponential():
    x, w = exp_sinh_rule(6, 128, mp.mpf(10) ** -40, 200)
    with mp.workprec(128):
        total = mp.fsum(wi * mp.exp(-xi) for xi, wi in zip(x, w))
    assert abs(total - 1) < mp.mpf(10) ** -30


class TestIsolateRealRoots:
    def test_quadratic(self):
        roots = isolate_real_roots(Polynomial((6, -11, 1)), (0, 20), CTX)
        with mp.workprec(128):
            exact = [(11 - mp.sqrt(97)) / 2, (11 + mp.sqrt(97)) / 2]
        assert len(roots) == 2
        for (r, res), e in zip(roots, exact):
            assert abs(r - e) < mp.mpf(10) ** -30
            assert res <= CTX.abs_tol * 11
        assert mp.nstr(roots[0][0], 7) == "0.5755711"

    def test_multiple_root_flagged(self):
        with pytest.raises(DegenerateRootError) as info:
            isolate_real_roots(Polynomial((0, 1, -2, 1)), (-1, 2), CTX)
        assert [float(r) for r in info.value.multiple] == pytest.approx([1.0])
        assert [float(r) for r in info.value.roots] == pytest.approx([0.0, 1.0], abs=1e-20)

    def test_root_outside_interval(self):
        assert isolate_real_roots(Polynomial((-5, 1)), (0, 1), CTX) == []

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(-30, 30), min_size=1, max_size=12, unique=True))
    def test_planted_integer_roots(self, roots):
        p = Polynomial.from_roots(roots)
        found = isolate_real_roots(p, (-31, 31), CTX)
        assert len(found) == len(roots)
        for (r, _), e in zip(found, sorted(roots)):
            assert abs(r - e) <= 10 * CTX.abs_tol * 31


class TestSolveCubic:
    def test_bessel_at_infinity(self):
        r = solve_cubic(-2, 1, 0)
        vals = sorted(r.roots, key=lambda v: v.real)
        assert np.allclose(vals, [0, 1, 1], atol=1e-7)
        assert sorted(r.multiplicity) == [1, 2, 2]

    def test_pastur_at_origin(self):
        r = solve_cubic(0, 1, 0).roots
        assert np.allclose(sorted(r, key=lambda v: v.imag), [-1j, 0, 1j], atol=1e-14)

    def test_pollaczek_psi_cubic(self):
        c2, c1, c0 = builtin_curve("pollaczek_psi").coefficients(-6j / 5)
        r = solve_cubic(complex(c2), complex(c1), complex(c0)).roots
        assert np.min(np.abs(r - 2)) < 1e-12

    def test_residual_bound(self):
        rng = np.random.default_rng(3)
        c = rng.normal(size=(3, 200)) + 1j * rng.normal(size=(3, 200))
        r = solve_cubic_batch(*c)
        res = np.abs(((r + c[0, :, None]) * r + c[1, :, None]) * r + c[2, :, None])
        assert np.all(res <= 1e-12 * (1 + np.abs(r)) ** 3)

    def test_vieta_random(self):
        rng = np.random.default_rng(7)
        c = rng.uniform(-5, 5, size=(3, 1000)) + 1j * rng.uniform(-5, 5, size=(3, 1000))
        r = solve_cubic_batch(*c)
        s = r.sum(axis=1)
        prod = r.prod(axis=1)
        assert np.all(np.abs(s + c[0]) <= 1e-12 * np.maximum(1, np.abs(c[0])))
        assert np.all(np.abs(prod + c[2]) <= 1e-12 * np.maximum(1, np.abs(c[2])))
