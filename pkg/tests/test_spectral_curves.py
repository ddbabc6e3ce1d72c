import math

import numpy as np
import pytest

from nikishin.spectral_curves import (
    POLLACZEK_E1,
    POLLACZEK_E2,
    NearBranchPointError,
    RegionError,
    boundary_values,
    branch_points,
    branch_values,
    branch_values_batch,
    builtin_curve,
    curve_table_csv,
    density_lambda1,
    density_lambda2,
    halfline_density,
    pollaczek_uniformization,
    quartic_region_bounds,
)

E1 = math.sqrt((11 + 5 * math.sqrt(5)) / 8)
E2 = math.sqrt((5 * math.sqrt(5) - 11) / 8)


def graded_mass(f, a, b, n=400, p=3):
    """Gauss-Legendre after a polynomial endpoint-clustering map."""
    u, wu = np.polynomial.legendre.leggauss(n)
    u, wu = (u + 1) / 2, wu / 2
    g = u ** p / (u ** p + (1 - u) ** p)
    dg = p * u ** (p - 1) * (1 - u) ** (p - 1) / (u ** p + (1 - u) ** p) ** 2
    return float(np.sum(f(a + (b - a) * g) * dg * wu) * (b - a))


def off_cut_points(kind, rng, n):
    """Random points away from cuts, singular points and branch points."""
    z = (rng.uniform(-20, 20, n) + 1j * rng.uniform(0.05, 20, n)) * rng.choice([1, -1], n)
    if kind == "pollaczek_psi":
        z = z[np.abs(z.real) > 0.05]
    return z


CURVES = {
    "bessel": {},
    "pastur": {"a": 1.0},
    "quartic_source": {"a": 0.3, "b": -2.5},
    "pollaczek_psi": {},
}


class TestConstruction:
    def test_bessel_coefficients(self):
        p2, p1, p0 = builtin_curve("bessel").coefficients(4.0)
        assert (complex(p2), complex(p1), complex(p0)) == (-2, 1, -0.5)

    def test_quartic_region_values(self):
        am, aM = quartic_region_bounds(-2.0)
        assert am == 0.0 and aM == pytest.approx(2 * math.sqrt(3) / 9, abs=1e-10)
        am, aM = quartic_region_bounds(-math.sqrt(3))
        assert am == pytest.approx(3 ** 0.25 / 3, abs=1e-10) and aM == pytest.approx(3 ** 0.25 / 3, abs=1e-10)
        assert round(2 * math.sqrt(3) / 9, 5) == 0.3849 and round(3 ** 0.25 / 3, 5) == 0.43869

    def test_quartic_region_errors(self):
        with pytest.raises(RegionError, match="a_M"):
            builtin_curve("quartic_source", a=0.5, b=-2.0)
        with pytest.raises(RegionError, match="a_m"):
            builtin_curve("quartic_source", a=0.39, b=-1.8)
        builtin_curve("quartic_source", a=0.0, b=-1.0)  # the a = 0 boundary is admissible

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            builtin_curve("pastur")
        with pytest.raises(ValueError):
            builtin_curve("bessel", a=1)
        with pytest.raises(ValueError):
            builtin_curve("nope")


class TestBranchValues:
    def test_bessel_far(self):
        z = 1e3
        assert abs(branch_values(builtin_curve("bessel"), z).H0 - 2 / z) <= 1e-4

    def test_pastur_far(self):
        z = 1e3
        h = branch_values(builtin_curve("pastur", a=1.0), z)
        assert abs(h.H0 - (z - 2 / z)) <= 1e-4
        assert abs(h.H1 - 1) <= 1e-2

    def test_pollaczek_uniformization_point(self):
        h = branch_values(builtin_curve("pollaczek_psi"), -6j / 5)
        assert min(abs(v - 2) for v in h.as_array()) <= 1e-10

    def test_near_branch_point(self):
        with pytest.raises(NearBranchPointError):
            branch_values(builtin_curve("bessel"), 13.5 + 1e-8)
        with pytest.raises(NearBranchPointError):
            branch_values(builtin_curve("bessel"), 1e-9)

    @pytest.mark.parametrize("kind", list(CURVES))
    def test_vieta(self, kind):
        c = builtin_curve(kind, **CURVES[kind])
        z = off_cut_points(kind, np.random.default_rng(list(CURVES).index(kind) + 100), 1000)
        h = branch_values_batch(c, z)
        p2, p1, p0 = (np.broadcast_to(v, z.shape) for v in c.coefficients(z))
        s = h.sum(axis=1)
        e2 = h[:, 0] * h[:, 1] + h[:, 0] * h[:, 2] + h[:, 1] * h[:, 2]
        prod = h.prod(axis=1)
        scale = lambda v: np.maximum(1.0, np.abs(v))
        assert np.max(np.abs(s + p2) / scale(p2)) <= 1e-10
        assert np.max(np.abs(e2 - p1) / scale(p1)) <= 1e-10
        assert np.max(np.abs(prod + p0) / scale(p0)) <= 1e-10
        if kind == "bessel":
            assert np.allclose(s, 2, atol=1e-10) and np.allclose(prod, 2 / z, rtol=1e-10)

    def test_labels_path_independent(self):
        c = builtin_curve("bessel")
        z = np.array([3 + 2j, -4 + 1j, 0.5 - 3j])
        assert np.allclose(branch_values_batch(c, z), branch_values_batch(c, z[::-1])[::-1], atol=1e-12)

    def test_boundary_value_stability(self):
        c = builtin_curve("bessel")
        for x in (1.0, 5.0, -3.0):
            raw = [boundary_values(c, np.array([x + 0j]), 1j, e, raw=True)[0] for e in (1e-4, 1e-5, 1e-6)]
            d1, d2 = np.max(np.abs(raw[0] - raw[1])), np.max(np.abs(raw[1] - raw[2]))
            assert d2 <= 0.2 * d1
            ext = [boundary_values(c, np.array([x + 0j]), 1j, e)[0] for e in (1e-4, 1e-5, 1e-6)]
            assert np.max(np.abs(ext[0] - ext[2])) <= 1e-12


class TestBranchPoints:
    def test_pollaczek(self):
        bp = branch_points(builtin_curve("pollaczek_psi"))
        pts = sorted(bp.points, key=lambda z: (z.real, z.imag))
        expected = sorted([E1, -E1, 1j * E2, -1j * E2], key=lambda z: (complex(z).real, complex(z).imag))
        assert np.allclose(pts, expected, atol=1e-12)
        assert all(bp.residual(z) <= 1e-10 for z in bp.points)
        assert (round(E1, 6), round(E2, 6)) == (1.665095, 0.150142)

    def test_pollaczek_discriminant_proportional(self):
        d = np.real_if_close(branch_points(builtin_curve("pollaczek_psi")).discriminant)
        d = np.trim_zeros(np.asarray(d, float), "b")
        ref = np.array([-1.0, 0.0, -44.0, 0.0, 16.0])
        assert d.size == 5
        assert np.allclose(d / d[-1], ref / ref[-1], atol=1e-10)

    def test_bessel(self):
        bp = branch_points(builtin_curve("bessel"))
        assert sorted(z.real for z in bp.points) == pytest.approx([0.0, 13.5], abs=1e-12)

    def test_pastur_symmetric(self):
        for a in (1.0, 1.5):
            pts = branch_points(builtin_curve("pastur", a=a)).points
            assert len(pts) == 4
            assert np.allclose(sorted(np.array(pts) * -1, key=lambda z: (z.real, z.imag)),
                               sorted(pts, key=lambda z: (z.real, z.imag)), atol=1e-12)
        real = [z.real for z in branch_points(builtin_curve("pastur", a=1.5)).points]
        assert np.allclose(np.imag(branch_points(builtin_curve("pastur", a=1.5)).points), 0)
        # density of the first measure vanishes beyond the outer real branch point
        c = builtin_curve("pastur", a=1.5)
        e = max(real)
        assert density_lambda1(c, e + 0.05) == pytest.approx(0.0, abs=1e-6)
        assert density_lambda1(c, e - 0.05) > 1e-3

    def test_pastur_a1_has_imaginary_pair(self):
        pts = branch_points(builtin_curve("pastur", a=1.0)).points
        assert sum(abs(z.imag) < 1e-12 for z in pts) == 2


class TestDensities:
    def test_bessel_beyond_branch_point(self):
        val, flag = density_lambda1(builtin_curve("bessel"), 13.6, with_flag=True)
        assert val == 0.0 and flag

    def test_bessel_lambda1_mass(self):
        c = builtin_curve("bessel")
        assert graded_mass(lambda x: density_lambda1(c, x), 0.0, 13.5) == pytest.approx(2.0, abs=1e-3)

    def test_pollaczek_lambda1_mass(self):
        c = builtin_curve("pollaczek_psi")
        m = 2 * graded_mass(lambda x: density_lambda1(c, x), 0.0, POLLACZEK_E1)
        assert m == pytest.approx(2.0, abs=1e-3)

    def test_pollaczek_saturation(self):
        c = builtin_curve("pollaczek_psi")
        y = np.linspace(-POLLACZEK_E2, POLLACZEK_E2, 41)[1:-1]
        y = y[y != 0]
        assert np.max(np.abs(density_lambda2(c, y) - 1)) <= 1e-6

    def test_pollaczek_lambda2_far_in_unit_interval(self):
        d = density_lambda2(builtin_curve("pollaczek_psi"), np.array([0.5, 5.0, 50.0, -50.0]))
        assert np.all((d > 0) & (d < 1))

    def test_bessel_lambda2_mass(self):
        c = builtin_curve("bessel")
        f = lambda t: density_lambda2(c, -t)
        m3 = graded_mass(f, 1e-14, 1e3, 800, 4)
        m5 = graded_mass(f, 1e-14, 1e5, 1600, 6)
        assert m3 < m5 < 1.0
        assert 1 - m5 < 0.2 * (1 - m3)  # tail shrinks like T^(-1/2)
        assert m5 == pytest.approx(1.0, abs=1e-2)

    def test_positivity_and_symmetry(self):
        c = builtin_curve("pollaczek_psi")
        x = np.linspace(0.01, POLLACZEK_E1 - 0.01, 60)
        d = density_lambda1(c, x)
        assert np.all(d >= -1e-10)
        assert np.allclose(d, density_lambda1(c, -x), atol=1e-10)
        cp = builtin_curve("pastur", a=1.0)
        xp = np.linspace(0.1, 3.2, 30)
        assert np.allclose(density_lambda1(cp, xp), density_lambda1(cp, -xp), atol=1e-10)
        b = builtin_curve("bessel")
        t = -np.geomspace(1e-3, 1e4, 50)
        d2, rep = density_lambda2(b, t, with_report=True)
        assert rep["below_zero"] == 0 and rep["above_sigma"] == 0

    def test_halfline_normalisations(self):
        x = np.array([0.3, 1.7, -0.01, -2.0])
        base = halfline_density("pollaczek", x)
        mop = halfline_density("pollaczek", 4 * x, normalization="mop")
        assert mop == pytest.approx(base / 4, rel=1e-12)

    def test_csv_columns(self):
        text = curve_table_csv(builtin_curve("bessel"), [-1.0, 2.0])
        header = text.splitlines()[0].split(",")
        assert header == ["x", "H0_re", "H0_im", "H1_re", "H1_im", "H2_re", "H2_im",
                          "lambda1_density", "lambda2_density"]
        assert len(text.splitlines()) == 3


class TestUniformization:
    def test_examples(self):
        assert pollaczek_uniformization(2) == pytest.approx(-6j / 5)
        assert pollaczek_uniformization(-1) == 0
        assert abs(pollaczek_uniformization(1e6)) <= 2e-6

    @pytest.mark.parametrize("psi", [1, 1j, -1j])
    def test_poles(self, psi):
        with pytest.raises(ValueError):
            pollaczek_uniformization(psi)

    def test_round_trip(self):
        rng = np.random.default_rng(17)
        c = builtin_curve("pollaczek_psi")
        psi = rng.normal(size=1000) * 2 + 1j * rng.normal(size=1000) * 2
        keep = (np.abs(psi - 1) > 1e-2) & (np.abs(psi * psi + 1) > 1e-2) & (np.abs(psi + 1) > 1e-2)
        psi = psi[keep]
        zeta = np.array([pollaczek_uniformization(p) for p in psi])
        p2, p1, p0 = c.coefficients(zeta)
        res = np.abs(((psi + p2) * psi + p1) * psi + p0)
        scale = 1 + np.abs(psi) ** 3 + np.abs(p2 * psi ** 2) + np.abs(p1 * psi) + np.abs(p0)
        assert np.max(res / scale) <= 1e-10
