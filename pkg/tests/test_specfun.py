"""
Tests for the special functions against mpmath and scipy references
"""

import math

import mpmath
import numpy as np
import pytest
from scipy import special

from hts_capacity import (
    ConvergenceError,
    MeijerParams1441,
    MeijerParams2002,
    ParameterError,
    bessel_j,
    expint_ei,
    expn_scaled,
    hyp1f1,
    meijer_g_0221,
    meijer_g_1441,
    meijer_g_2002,
    mellin_barnes,
    phi_node,
)

mpmath.mp.dps = 30


class TestElementary:
    """Bessel, confluent hypergeometric and exponential integrals"""

    @pytest.mark.parametrize("order", [0, 1, 3])
    @pytest.mark.parametrize("x", [0.1, 2.5, 17.0])
    def test_bessel_j_matches_mpmath(self, order, x):
        assert bessel_j(order, x) == pytest.approx(float(mpmath.besselj(order, x)), rel=1e-10, abs=1e-14)

    def test_bessel_j_rejects_fractional_order(self):
        with pytest.raises(ParameterError):
            bessel_j(1.5, 1.0)

    def test_bessel_j_vectorized(self):
        x = np.array([0.5, 1.0, 2.0])
        np.testing.assert_allclose(bessel_j(1, x), special.jv(1, x))

    @pytest.mark.parametrize("m", [1, 2, 5, 19])
    def test_hyp1f1_integer_branch(self, m):
        for x in (0.3, 4.0, 25.0):
            expected = float(mpmath.hyp1f1(m, 1, x))
            assert hyp1f1(m, 1.0, x) == pytest.approx(expected, rel=1e-10)

    def test_hyp1f1_scaled(self):
        x = 600.0
        scaled = hyp1f1(5, 1.0, x, scaled=True)
        assert math.isfinite(scaled)
        expected = float(mpmath.hyp1f1(5, 1, x) * mpmath.exp(-x))
        assert scaled == pytest.approx(expected, rel=1e-10)

    def test_hyp1f1_unscaled_overflow_is_silent(self):
        # RuntimeWarnings are errors in the suite
        assert hyp1f1(3, 1.0, 1000.0) == math.inf

    def test_hyp1f1_general_parameters(self):
        assert hyp1f1(0.5, 1.5, 2.0) == pytest.approx(float(mpmath.hyp1f1(0.5, 1.5, 2.0)), rel=1e-10)

    @pytest.mark.parametrize("b", [0.0, -1.0, -3.0])
    def test_hyp1f1_rejects_nonpositive_integer_b(self, b):
        with pytest.raises(ParameterError):
            hyp1f1(1.0, b, 1.0)

    @pytest.mark.parametrize("x", [1e-4, 0.5, 3.0, 40.0])
    def test_expint_ei(self, x):
        assert expint_ei(-x) == pytest.approx(float(mpmath.ei(-x)), rel=1e-12)

    def test_expint_ei_domain(self):
        with pytest.raises(ParameterError):
            expint_ei(0.0)
        with pytest.raises(ParameterError):
            expint_ei(np.array([-1.0, 2.0]))

    @pytest.mark.parametrize("n", [0, 1, 2, 4, 7])
    @pytest.mark.parametrize("x", [0.2, 1.0, 1.5, 10.0, 300.0])
    def test_expn_scaled(self, n, x):
        expected = float(mpmath.exp(x) * mpmath.expint(n, x))
        assert expn_scaled(n, x) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_expn_scaled_no_overflow(self):
        # e^x overflows a double here, the product does not
        value = expn_scaled(3, 1000.0)
        assert value == pytest.approx(1.0 / 1003.0, rel=1e-4)

    def test_expn_scaled_domain(self):
        with pytest.raises(ParameterError):
            expn_scaled(1, 0.0)
        with pytest.raises(ParameterError):
            expn_scaled(-1, 1.0)


class TestMeijerG:
    """Meijer G evaluations"""

    @pytest.mark.parametrize("a,b", [(2.296, 1.0), (4.2, 3.0), (11.6, 10.0), (1.0, 1.0)])
    @pytest.mark.parametrize("x", [0.05, 1.0, 12.0])
    def test_meijer_g_2002_matches_mpmath(self, a, b, x):
        expected = float(mpmath.meijerg([[], []], [[a, b], []], x))
        assert meijer_g_2002(x, MeijerParams2002(a, b)) == pytest.approx(expected, rel=1e-9)

    def test_meijer_g_2002_bessel_form(self):
        a, b, x = 3.5, 1.0, 2.0
        expected = 2.0 * x ** ((a + b) / 2) * special.kv(a - b, 2.0 * math.sqrt(x))
        assert meijer_g_2002(x, MeijerParams2002(a, b)) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_meijer_g_2002_tiny_argument_is_finite(self):
        value = meijer_g_2002(1e-250, MeijerParams2002(30.0, 1.0))
        assert math.isfinite(value)
        assert value > 0

    def test_meijer_g_2002_domain(self):
        with pytest.raises(ParameterError):
            meijer_g_2002(0.0, MeijerParams2002(1.0, 2.0))

    @pytest.mark.parametrize("alpha,j,lower", [(2.296, 1, 0.0), (2.296, 2, 1.0), (4.2, 3, 0.0)])
    @pytest.mark.parametrize("x", [0.3, 2.0, 40.0])
    def test_meijer_g_1441_matches_mpmath(self, alpha, j, lower, x):
        p = MeijerParams1441.for_malaga(alpha, j, lower)
        expected = float(mpmath.meijerg([list(p.upper), []], [[p.lower], []], x))
        assert meijer_g_1441(x, p) == pytest.approx(expected, rel=1e-7)

    @pytest.mark.parametrize("alpha,j", [(3.0, 1), (2.0, 2), (4.0, 2)])
    @pytest.mark.parametrize("x", [0.3, 5.0])
    def test_meijer_g_1441_continuous_at_integer_alpha(self, alpha, j, x):
        # coincident left poles; neighbours must agree with the exact integer case
        exact = meijer_g_1441(x, MeijerParams1441.for_malaga(alpha, j))
        for shifted in (alpha - 1e-6, alpha + 1e-6):
            near = meijer_g_1441(x, MeijerParams1441.for_malaga(shifted, j))
            assert exact == pytest.approx(near, rel=1e-4)

    def test_meijer_params_1441_needs_four_upper(self):
        with pytest.raises(ParameterError):
            MeijerParams1441(upper=(0.0, 0.5, 1.0), lower=0.0)  # type: ignore[arg-type]

    @pytest.mark.parametrize("s", [0.05, 0.5, 1.0, 3.0])
    def test_meijer_g_0221_is_e1(self, s):
        assert meijer_g_0221(1.0 / s) == pytest.approx(float(special.exp1(s)), rel=1e-8)

    def test_mellin_barnes_exponential(self):
        # G^{1,0}_{0,1}[x | -; 0] = exp(-x)
        for x in (0.1, 1.0, 5.0):
            assert mellin_barnes(x, bm=(0.0,)) == pytest.approx(math.exp(-x), rel=1e-9)

    def test_mellin_barnes_overlapping_poles(self):
        with pytest.raises(ParameterError):
            mellin_barnes(1.0, an=(2.0,), bm=(0.5,))

    def test_mellin_barnes_rejects_nonpositive_argument(self):
        with pytest.raises(ParameterError):
            mellin_barnes(0.0, bm=(0.0,))

    def test_mellin_barnes_non_decaying_integrand(self):
        # the reciprocal Gammas outgrow the numerator along the contour
        with pytest.raises((ConvergenceError, ParameterError)):
            mellin_barnes(1.0, an=(1.0,), ap=(0.0, 0.0, 0.0))


class TestPhiNode:
    """Capacity quadrature kernel"""

    @pytest.mark.parametrize("s", [1e-3, 0.1, 1.0, 7.5])
    def test_phi_node_is_ei(self, s):
        assert phi_node(s) == pytest.approx(-float(special.exp1(s)), rel=1e-12)

    def test_phi_node_agrees_with_contour(self):
        for s in (0.2, 1.0, 4.0):
            assert phi_node(s) == pytest.approx(-meijer_g_0221(1.0 / s), rel=1e-8)

    def test_phi_node_domain(self):
        with pytest.raises(ParameterError):
            phi_node(0.0)


GRID_POINTS = 100


class TestRandomGrid:
    """Seeded random parameter grids against mpmath"""

    def test_bessel_j(self):
        gen = np.random.default_rng(101)
        orders = gen.integers(0, 6, GRID_POINTS)
        for n, x in zip(orders, gen.uniform(-40.0, 40.0, GRID_POINTS)):
            expected = float(mpmath.besselj(int(n), x))
            assert abs(bessel_j(int(n), x) - expected) <= 1e-10 * abs(expected) + 1e-14, (n, x)

    def test_hyp1f1(self):
        gen = np.random.default_rng(102)
        for m, x in zip(gen.integers(1, 21, GRID_POINTS), gen.uniform(0.0, 40.0, GRID_POINTS)):
            expected = mpmath.hyp1f1(int(m), 1, x)
            assert hyp1f1(int(m), 1.0, x) == pytest.approx(float(expected), rel=1e-10)
            scaled = float(expected * mpmath.exp(-x))
            assert hyp1f1(int(m), 1.0, x, scaled=True) == pytest.approx(scaled, rel=1e-10)

    def test_expint_ei(self):
        gen = np.random.default_rng(103)
        for x in -(10.0 ** gen.uniform(-4.0, 2.5, GRID_POINTS)):
            assert expint_ei(x) == pytest.approx(float(mpmath.ei(x)), rel=1e-12), x

    def test_phi_node(self):
        gen = np.random.default_rng(104)
        for s in 10.0 ** gen.uniform(-3.0, 1.5, GRID_POINTS):
            assert phi_node(s) == pytest.approx(-float(mpmath.e1(s)), rel=1e-12), s

    def test_meijer_g_2002(self):
        gen = np.random.default_rng(105)
        a_values = gen.uniform(0.5, 12.0, GRID_POINTS)
        b_values = gen.integers(1, 11, GRID_POINTS)
        for a, b, x in zip(a_values, b_values, 10.0 ** gen.uniform(-2.0, 1.5, GRID_POINTS)):
            expected = float(mpmath.meijerg([[], []], [[a, int(b)], []], x))
            assert meijer_g_2002(x, MeijerParams2002(a, float(b))) == pytest.approx(
                expected, rel=1e-8
            ), (a, b, x)

    @pytest.mark.slow
    def test_meijer_g_1441(self):
        gen = np.random.default_rng(106)
        alphas = gen.uniform(1.5, 12.0, GRID_POINTS)
        orders = gen.integers(1, 11, GRID_POINTS)
        lowers = gen.integers(0, 2, GRID_POINTS)
        for alpha, j, lower, x in zip(alphas, orders, lowers, 10.0 ** gen.uniform(-1.0, 1.5, GRID_POINTS)):
            p = MeijerParams1441.for_malaga(alpha, int(j), float(lower))
            expected = float(mpmath.meijerg([list(p.upper), []], [[p.lower], []], x))
            assert meijer_g_1441(x, p) == pytest.approx(expected, rel=1e-6), (alpha, j, lower, x)


class TestIdentities:
    """Symmetries, closed forms and asymptotics"""

    def test_meijer_g_2002_symmetric_in_lower_row(self):
        gen = np.random.default_rng(107)
        for a, b, x in zip(
            gen.uniform(0.1, 12.0, 50), gen.uniform(0.1, 12.0, 50), 10.0 ** gen.uniform(-3.0, 2.0, 50)
        ):
            assert meijer_g_2002(x, MeijerParams2002(a, b)) == meijer_g_2002(x, MeijerParams2002(b, a))

    @pytest.mark.parametrize("x", [1e-3, 0.1, 1.0, 7.0, 100.0])
    def test_meijer_g_2002_half_order(self, x):
        # 2 x^(1/4) K_(1/2)(2 sqrt(x)) collapses to sqrt(pi) exp(-2 sqrt(x))
        expected = math.sqrt(math.pi) * math.exp(-2.0 * math.sqrt(x))
        assert meijer_g_2002(x, MeijerParams2002(0.5, 0.0)) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("x", [-20.0, -50.0, -200.0, -600.0])
    def test_expint_ei_large_negative_argument(self, x):
        # Ei(x) x e^(-x) = 1 + 1/x + 2/x^2 + ...
        value = expint_ei(x) * x * math.exp(-x)
        assert abs(value - (1.0 + 1.0 / x)) <= 3.0 / x**2

    def test_expint_ei_asymptote_approached_monotonically(self):
        gaps = [abs(expint_ei(x) * x * math.exp(-x) - 1.0) for x in (-10.0, -40.0, -160.0, -640.0)]
        assert gaps == sorted(gaps, reverse=True)
        assert gaps[-1] < 2e-3
