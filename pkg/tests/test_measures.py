import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nikishin.measures import (
    DiscreteMeasure,
    GridMeasure,
    cauchy_transform,
    cdf_distance,
    discretize_density,
    energy_forms,
    log_moment,
    log_potential,
    make_grid,
    measure_from_json,
    measure_to_json,
    modified_potential,
    window_cdf_distance,
    zero_counting,
)

LOG_MOMENT_01 = math.log(2) - 2 + math.pi / 2  # int_0^1 log(1+y^2) dy


def uniform(a, b, mass=1.0, n=1):
    c, w = make_grid(a, b, n)
    return GridMeasure(c, w, np.full(n, mass / n))


def empty():
    return GridMeasure(np.zeros(0), np.zeros(0), np.zeros(0))


def random_measure(rng, a, b, n, mass):
    c, w = make_grid(a, b, n, "power", power=rng.uniform(1, 3))
    m = rng.exponential(size=n) * (rng.random(n) < 0.7)
    if m.sum() == 0:
        m[0] = 1.0
    return GridMeasure(c, w, m * mass / m.sum())


class TestGridMeasure:
    def test_invariants(self):
        with pytest.raises(ValueError):
            GridMeasure([0, 1], [1, 1], [1, -1])
        with pytest.raises(ValueError):
            GridMeasure([1, 0], [1, 1], [1, 1])
        with pytest.raises(ValueError):
            GridMeasure([0, 1], [0, 1], [1, 1])

    def test_total_mass_and_cdf(self):
        mu = uniform(0, 2, 3.0, 4)
        assert mu.total_mass == pytest.approx(3.0, rel=1e-14)
        assert mu.cdf([0.0, 1.0, 2.0, 5.0]) == pytest.approx([0, 1.5, 3, 3])
        assert mu.densities == pytest.approx([1.5] * 4)

    @pytest.mark.parametrize("grading", ["uniform", "power", "geometric"])
    def test_make_grid_covers_window(self, grading):
        c, w = make_grid(-50.0, 0.0, 40, grading, "right", scale=1e-3)
        assert w.sum() == pytest.approx(50.0)
        assert np.all(np.diff(c) > 0) and np.all(w > 0)
        assert c[-1] + w[-1] / 2 == pytest.approx(0.0, abs=1e-12)


class TestLogPotential:
    def test_point_mass_limit(self):
        mu = uniform(-1e-6, 1e-6)
        assert log_potential(mu, 2.0) == pytest.approx(-math.log(2), abs=1e-11)

    def test_uniform_symmetric(self):
        assert log_potential(uniform(-1, 1), 0.0) == pytest.approx(1.0, abs=1e-14)
        # exact per cell, whatever the grid
        assert log_potential(uniform(-1, 1, n=7), 0.0) == pytest.approx(1.0, abs=1e-13)

    def test_empty(self):
        assert log_potential(empty(), 3.7) == 0.0

    def test_vectorised(self):
        mu = uniform(0, 1, n=5)
        xs = np.array([-1.0, 0.3, 2.0])
        assert log_potential(mu, xs) == pytest.approx([log_potential(mu, x) for x in xs])


class TestModifiedPotential:
    def test_point_mass(self):
        mu = uniform(-1e-6, 1e-6)
        assert modified_potential(mu, 3.0) == pytest.approx(-math.log(3), abs=1e-11)

    def test_kernel_value(self):
        # log(sqrt(1+x^2) sqrt(1+y^2)/|x-y|) at x=0, y=1
        assert math.log(math.sqrt(2) / 1.0) == pytest.approx(0.5 * math.log(2))
        assert 0.5 * math.log(2) > 0

    def test_uniform_unit_interval(self):
        mu = uniform(0, 1, n=3)
        assert modified_potential(mu, 0.0) == pytest.approx(1 + 0.5 * LOG_MOMENT_01, rel=1e-12)

    def test_difference_is_constant(self):
        rng = np.random.default_rng(11)
        mu = random_measure(rng, -3, 5, 30, 1.7)
        xs = rng.uniform(-10, 10, 100)
        diff = np.asarray(modified_potential(mu, xs)) - np.asarray(log_potential(mu, xs))
        assert np.ptp(diff) <= 1e-12 * max(1, abs(diff[0]))
        assert diff[0] == pytest.approx(0.5 * log_moment(mu), rel=1e-12)


def test_modified_kernel_nonnegative_sample():
    rng = np.random.default_rng(5)
    x = rng.standard_cauchy(10_000) * 10
    y = rng.standard_cauchy(10_000) * 10
    k = 0.5 * np.log1p(x * x) + 0.5 * np.log1p(y * y) - np.log(np.abs(x - y))
    assert np.all(k >= -1e-12)


class TestEnergy:
    def test_unit_interval_self_energy(self):
        e = energy_forms(uniform(0, 1), uniform(0, 1))
        assert e.I_self_1 == pytest.approx(1.5, abs=1e-13)
        e = energy_forms(uniform(0, 1, n=9), uniform(0, 1, n=9))
        assert e.I_self_1 == pytest.approx(1.5, abs=1e-12)

    def test_log_moments(self):
        e = energy_forms(uniform(0, 1, n=3), uniform(-1, 0, n=2))
        assert e.log_moment_1 == pytest.approx(LOG_MOMENT_01, rel=1e-13)
        assert e.log_moment_2 == pytest.approx(LOG_MOMENT_01, rel=1e-13)

    def test_difference_energy_and_modified_mutual_random(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            mass = rng.uniform(0.1, 3)
            a = random_measure(rng, 0, 10, int(rng.integers(4, 30)), mass)
            b = random_measure(rng, 0, 10, int(rng.integers(4, 30)), mass)
            e = energy_forms(a, b)
            assert e.difference_energy >= -1e-10
            assert e.M_mutual >= 0


class TestCauchyTransform:
    def test_delta(self):
        mu = DiscreteMeasure(((0.0, 1.0),))
        assert cauchy_transform(mu, 2j) == pytest.approx(-0.5j)

    def test_pollaczek_sigma2_truncated(self):
        k = np.arange(10 ** 6 + 1)
        atoms = tuple(zip(-(2.0 * k + 1) ** 2, np.full(k.size, 4 / math.pi)))
        v = cauchy_transform(DiscreteMeasure(atoms), 1.0)
        assert abs(v - math.tanh(math.pi / 2)) <= 1e-6
        assert round(v.real, 6) == 0.917152

    def test_far_field_unit_mass(self):
        mu = uniform(-2, 3, n=17)
        z = 1e6 * np.exp(0.3j)
        assert abs(cauchy_transform(mu, z) * z - 1) <= 1e-6

    def test_far_field_ratio_decreasing(self):
        mu = uniform(0, 4, 2.5, n=11)
        gaps = [abs(z * cauchy_transform(mu, z) - 2.5) for z in (1e3 + 1e3j, 1e4 + 1e4j, 1e5 + 1e5j)]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_inside_support_is_domain_error(self):
        with pytest.raises(ValueError):
            cauchy_transform(uniform(0, 1, n=4), 0.5)
        with pytest.raises(ValueError):
            cauchy_transform(DiscreteMeasure(((1.0, 1.0),)), 1.0)

    def test_grid_matches_quadrature(self):
        mu = uniform(0, 1, n=2)
        z = 2.0 + 0.5j
        exact = np.log(z / (z - 1))
        assert cauchy_transform(mu, z) == pytest.approx(exact, rel=1e-13)


class TestZeroCounting:
    def test_simple(self):
        nu = zero_counting([3.0, 1.0], 2)
        assert nu.atoms == ((1.0, 0.5), (3.0, 0.5))

    def test_constant_rejected(self):
        with pytest.raises(ValueError):
            zero_counting([], 0)

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            zero_counting([1.0, 1.0], 2)

    def test_quadratic_roots(self):
        r = [(11 - math.sqrt(97)) / 2, (11 + math.sqrt(97)) / 2]
        nu = zero_counting(r, 2)
        assert nu.locations == pytest.approx([0.575571, 10.424428], abs=1e-6)
        assert nu.weights == pytest.approx([0.5, 0.5])

    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60, unique=True))
    def test_total_mass_one(self, roots):
        assert zero_counting(roots, len(roots)).total_mass == pytest.approx(1.0, abs=1e-14)


class TestCdfDistance:
    def test_identical(self):
        mu = uniform(0, 1, n=5)
        assert cdf_distance(mu, mu) == 0.0

    def test_two_deltas(self):
        a = DiscreteMeasure(((0.0, 1.0),))
        b = DiscreteMeasure(((1.0, 1.0),))
        assert cdf_distance(a, b) == pytest.approx(1.0)

    def test_uniform_vs_midpoint(self):
        assert cdf_distance(uniform(0, 1), DiscreteMeasure(((0.5, 1.0),))) == pytest.approx(0.5, abs=1e-9)

    def test_unequal_masses(self):
        with pytest.raises(ValueError):
            cdf_distance(uniform(0, 1), DiscreteMeasure(((0.5, 2.0),)))

    def test_window_distance(self):
        a = uniform(-10, 0, 1.0, 10)
        b = DiscreteMeasure(((-0.5, 0.6),))
        # on [-2, 0] the mass of [x, 0] is 0.1|x| for a and 0.6 for x <= -0.5 for b
        assert window_cdf_distance(b, a, (-2.0, 0.0)) == pytest.approx(0.55, abs=1e-9)


def test_discretize_density_singular_edge():
    c, w = make_grid(-4, 0, 8, anchor="right")
    tmpl = GridMeasure(c, w, np.zeros(8))
    mu = discretize_density(lambda x: 1 / np.sqrt(np.abs(x)), tmpl, singular_point=0.0)
    assert mu.total_mass == pytest.approx(4.0, rel=1e-12)  # int_{-4}^0 |x|^(-1/2) dx


class TestJson:
    def test_grid_round_trip(self):
        rng = np.random.default_rng(1)
        mu = random_measure(rng, 0, 3, 12, 2.0)
        obj = json.loads(json.dumps(measure_to_json(mu)))
        assert all(isinstance(v, str) for v in obj["masses"])
        back = measure_from_json(obj)
        assert np.array_equal(back.masses, mu.masses) and np.array_equal(back.nodes, mu.nodes)

    def test_discrete_round_trip(self):
        nu = zero_counting([0.1, 0.7, 2.0], 3)
        back = measure_from_json(json.dumps(measure_to_json(nu)))
        assert back == nu
