import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from rmtwalks import karlin_mcgregor as km
from rmtwalks.errors import InvalidArgumentError
from rmtwalks.numerics import PrecisionContext, det_dense
from rmtwalks.stieltjes_wigert import coulomb_log_density


def heat_matrix_logdet_mp(t, k):
    """``log det p_t(x_i, x_j)`` on the grid with entries and LU in 256 bits."""
    ctx = PrecisionContext(256)
    with ctx.workprec():
        x = [mpmath.mpf(2 * i - k) / k for i in range(k + 1)]
        t = mpmath.mpf(t)
        m = mpmath.matrix([[mpmath.exp(-(a - b) ** 2 / (2 * t)) / mpmath.sqrt(2 * mpmath.pi * t) for b in x] for a in x])
        return float(mpmath.log(det_dense(m, ctx)))


class TestGrid:
    @pytest.mark.parametrize("k", [1, 2, 7, 50])
    def test_points(self, k):
        x = km.Grid(k).points
        assert x[0] == -1.0 and x[-1] == 1.0
        assert len(x) == k + 1
        np.testing.assert_allclose(np.diff(x), 2.0 / k, rtol=1e-13)

    def test_rejects_zero(self):
        with pytest.raises(InvalidArgumentError):
            km.Grid(0)


class TestHeatKernel:
    def test_values(self):
        assert km.heat_kernel(1.0, 0.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
        assert km.heat_kernel(2.0, 0.0, 0.0) == pytest.approx(0.2820948, abs=1e-7)

    @given(st.floats(0.01, 10), st.floats(-5, 5), st.floats(-5, 5))
    def test_symmetry(self, t, a, b):
        assert km.heat_kernel(t, a, b) == km.heat_kernel(t, b, a)

    def test_rejects_nonpositive_time(self):
        with pytest.raises(InvalidArgumentError):
            km.heat_kernel(0.0, 0.0, 0.0)


class TestKMDensity:
    def test_single_walker(self):
        assert km.km_density(0.7, [0.2], [-0.4]) == pytest.approx(km.heat_kernel(0.7, 0.2, -0.4), rel=1e-14)

    def test_swap_flips_sign(self):
        starts = [-1.0, 0.0, 1.0]
        v = km.km_density(1.0, starts, [-0.5, 0.3, 1.2])
        w = km.km_density(1.0, starts, [0.3, -0.5, 1.2])
        assert v > 0 and w == pytest.approx(-v, rel=1e-13)

    def test_equals_closed_form_k3(self):
        x = km.Grid(3).points
        assert km.km_density(2.0, x, x) == pytest.approx(km.lemma2_value(2.0, 3).value, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            km.km_density(1.0, [0.0, 1.0], [0.0])

    def test_chapman_kolmogorov_k1(self):
        x, y = np.array([-1.0, 1.0]), np.array([-0.3, 0.8])
        s, t = 0.6, 0.9

        def integrand(z1, z0):
            return km.km_density(s, x, [z0, z1]) * km.km_density(t, [z0, z1], y)

        val, _ = integrate.dblquad(integrand, -10, 10, lambda z0: z0, lambda z0: 10, epsabs=1e-12, epsrel=1e-10)
        assert val == pytest.approx(km.km_density(s + t, x, y), abs=1e-8)


class TestClosedForm:
    def test_k1_t2(self):
        x = km.Grid(1).points
        m = km.heat_kernel(2.0, x[:, None], x[None, :])
        assert km.lemma2_value(2.0, 1).value == pytest.approx(det_dense(m), rel=1e-12)

    @pytest.mark.parametrize("k", range(1, 11))
    @pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
    def test_against_extended_dense_determinant(self, k, t):
        assert km.lemma2_value(t, k).log_value == pytest.approx(heat_matrix_logdet_mp(t, k), abs=1e-10)

    @pytest.mark.parametrize(
        "k",
        [pytest.param(4, marks=pytest.mark.xfail(strict=True, reason="bound holds only from k = 5"))]
        + list(range(5, 13)),
    )
    def test_lower_bound(self, k):
        r = km.lemma2_value(2.0, k)
        assert r.log_value >= r.log_lower_bound
        assert r.log_lower_bound == pytest.approx(-k * k * math.log(k))

    def test_decreasing_in_k(self):
        vals = [km.lemma2_value(2.0, k).log_value for k in range(2, 9)]
        assert np.all(np.diff(vals) < 0)

    def test_log_space_survives_underflow(self):
        r = km.lemma2_value(2.0, 200)
        assert math.isfinite(r.log_value) and r.value == 0.0

    @pytest.mark.parametrize("k", [0, 201, 2.5])
    def test_range(self, k):
        with pytest.raises(InvalidArgumentError):
            km.lemma2_value(1.0, k)


def bridge_log_density_mp(k, y):
    with mpmath.workprec(256):
        x = [mpmath.mpf(2 * i - k) / k for i in range(k + 1)]
        y = [mpmath.mpf(v) for v in y]
        p = lambda t, a, b: mpmath.exp(-(a - b) ** 2 / (2 * t)) / mpmath.sqrt(2 * mpmath.pi * t)
        a = mpmath.matrix([[p(1, s, v) for v in y] for s in x])
        q = mpmath.matrix([[p(2, s, v) for v in x] for s in x])
        return float(mpmath.log(mpmath.det(a) ** 2 / mpmath.det(q)))


class TestBridgeDensity:
    @pytest.mark.parametrize("k", [1, 3, 6])
    def test_against_extended_dense_determinants(self, k):
        rng = np.random.default_rng(10 + k)
        for _ in range(10):
            y = np.sort(rng.normal(scale=1.5, size=k + 1))
            v = km.bridge_midtime_log_density(km.Grid(k), y)
            assert v == pytest.approx(bridge_log_density_mp(k, y), abs=1e-12)

    def test_heat_log_det_matches_dense(self):
        g = km.Grid(3)
        y = np.array([-1.1, -0.2, 0.5, 1.7])
        m = km.heat_kernel(1.0, g.points[:, None], y[None, :])
        assert km.grid_heat_log_det(g, y) == pytest.approx(math.log(det_dense(m)), abs=1e-12)

    def test_single_walker_analogue(self):
        for y in (-1.3, 0.0, 0.4, 2.1):
            v = km.heat_kernel(1.0, 0.0, y) ** 2 / km.heat_kernel(2.0, 0.0, 0.0)
            assert v == pytest.approx(math.exp(-y * y) / math.sqrt(math.pi), rel=1e-14)

    def test_k1_normalized(self):
        g = km.Grid(1)
        val, _ = integrate.dblquad(lambda y1, y0: km.bridge_midtime_density(g, [y0, y1 + 1e-300]),
                                   -12, 12, lambda y0: y0, lambda y0: 12, epsabs=1e-10)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_k1_proportional_to_coulomb_gas(self):
        g = km.Grid(1)
        rng = np.random.default_rng(5)
        ratios = []
        for _ in range(100):
            y = np.sort(rng.normal(scale=1.5, size=2))
            ratios.append(km.bridge_midtime_log_density(g, y) - coulomb_log_density(1, y))
        assert np.ptp(ratios) <= 1e-10 * max(1.0, abs(np.mean(ratios)))

    @pytest.mark.parametrize("k", [2, 3, 5])
    def test_reflection_invariance(self, k):
        g = km.Grid(k)
        rng = np.random.default_rng(k)
        for _ in range(10):
            y = np.sort(rng.normal(scale=1.5, size=k + 1))
            a = km.bridge_midtime_log_density(g, y)
            b = km.bridge_midtime_log_density(g, -y[::-1])
            assert b == pytest.approx(a, rel=1e-12, abs=1e-12)

    def test_requires_ordered(self):
        with pytest.raises(InvalidArgumentError):
            km.bridge_midtime_density(km.Grid(1), [0.5, 0.1])


class TestTopCdf:
    @pytest.mark.parametrize("s", [-0.5, 0.7, 2.0])
    def test_k1_against_quadrature(self, s):
        g = km.Grid(1)
        val, _ = integrate.dblquad(lambda y0, y1: km.bridge_midtime_density(g, [y0, y1]),
                                   -12, s, lambda y1: -12, lambda y1: y1 - 1e-12, epsabs=1e-12)
        assert km.bridge_top_cdf(g, s) == pytest.approx(val, abs=1e-9)

    @pytest.mark.parametrize("k", [1, 2, 4])
    def test_is_a_distribution(self, k):
        s = np.linspace(-6, 8, 200)
        f = km.bridge_top_cdf(km.Grid(k), s)
        assert f[0] < 1e-6 and abs(f[-1] - 1) < 1e-12
        assert np.all(np.diff(f) >= -1e-15)


class TestGUE:
    def test_n1(self):
        assert km.gue_density(1, [0.7]) == pytest.approx(math.exp(-0.49) / math.sqrt(math.pi), rel=1e-14)

    def test_n2_normalized(self):
        val, _ = integrate.dblquad(lambda b1, b0: km.gue_density(2, [b0, b1 + 1e-300]),
                                   -8, 8, lambda b0: b0, lambda b0: 8, epsabs=1e-10)
        assert val == pytest.approx(1.0, abs=1e-6)

    @given(st.lists(st.floats(-3, 3), min_size=3, max_size=3, unique=True))
    @settings(max_examples=50)
    def test_reflection(self, b):
        b = np.sort(b)
        if np.any(np.diff(b) < 1e-6):
            return
        assert km.gue_density(3, -b[::-1]) == pytest.approx(km.gue_density(3, b), rel=1e-12)


class TestNormalization:
    def test_k1_unit_mass_over_full_space(self):
        c = km.normalization_constant(1)
        f = lambda y1, y0: math.exp(coulomb_log_density(1, [y0, y1])) if y0 != y1 else 0.0
        full, _ = integrate.dblquad(f, -12, 10, lambda y0: -12, lambda y0: 10, epsabs=1e-13)
        assert c.value * full == pytest.approx(1.0, abs=1e-6)
        # the ordered chamber carries 1/(k+1)! of it and matches the bridge density
        y = [-0.2, 0.9]
        assert 2 * c.value * math.exp(coulomb_log_density(1, y)) == pytest.approx(
            km.bridge_midtime_density(km.Grid(1), y), rel=1e-12)

    def test_finite(self):
        vals = [km.normalization_constant(k).log_value for k in range(1, 21)]
        assert all(math.isfinite(v) for v in vals)

    @pytest.mark.xfail(strict=True, reason="1/det p_2 grows like k^{k^2}, so log C'_k increases with k")
    def test_decreasing(self):
        vals = [km.normalization_constant(k).log_value for k in range(1, 21)]
        assert np.all(np.diff(vals) < 0)

    @pytest.mark.parametrize("k", [1, 2, 17, 200])
    def test_sign_and_exponent_flag(self, k):
        c = km.normalization_constant(k)
        assert c.sign == 1
        assert c.matches_reference_exponent
