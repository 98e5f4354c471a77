"""
Tests for channel models, samplers and beam geometry
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from helpers import integrate_positive
from hts_capacity import (
    MalagaParams,
    ParameterError,
    RngStream,
    ShadowedRicianParams,
    beam_gain,
    build_channels,
    hexagonal_geometry,
    malaga_cdf,
    malaga_constants,
    malaga_pdf,
    malaga_sample,
    sr_cdf,
    sr_pdf,
    sr_sample,
    steering_matrix,
)
from hts_capacity.channels import (
    BEAM_3DB_U,
    channel_sampler,
    scaled_sr_cdf,
    sr_sample_complex,
)

N_DRAWS = 200_000


def within_stderr(values, expected, k=5.0):
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(values.size))
    return abs(mean - expected) <= k * se


def chi_square_pvalue(draws, pilot, cdf, bins=20):
    """Chi-square p-value on bins that are equiprobable under an independent pilot sample"""
    edges = np.quantile(pilot, np.linspace(0.0, 1.0, bins + 1)[1:-1])
    probs = np.diff(np.concatenate([[0.0], cdf(edges), [1.0]]))
    observed = np.bincount(np.searchsorted(edges, draws), minlength=bins)
    return stats.chisquare(observed, probs / probs.sum() * draws.size).pvalue


class TestRngStream:
    """Reproducible streams"""

    def test_same_stream_same_draws(self, stream):
        a = stream.generator().standard_normal(5)
        b = stream.generator().standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_children_are_distinct(self, stream):
        a = stream.child(1).generator().standard_normal(5)
        b = stream.child(2).generator().standard_normal(5)
        c = stream.child(1, 0).generator().standard_normal(5)
        assert not np.allclose(a, b)
        assert not np.allclose(a, c)

    def test_child_path_is_appended(self, stream):
        assert stream.child(3).child(4) == stream.child(3, 4)


class TestMalaga:
    """Malaga turbulence density and sampler"""

    def test_parameter_validation(self):
        with pytest.raises(ParameterError):
            MalagaParams(alpha=2.0, beta=0, b0=0.1, rho0=0.5, Omega0=1.0)
        with pytest.raises(ParameterError):
            MalagaParams(alpha=2.0, beta=1.5, b0=0.1, rho0=0.5, Omega0=1.0)
        with pytest.raises(ParameterError):
            MalagaParams(alpha=-1.0, beta=2, b0=0.1, rho0=0.5, Omega0=1.0)
        with pytest.raises(ParameterError):
            MalagaParams(alpha=2.0, beta=2, b0=0.1, rho0=1.5, Omega0=1.0)

    def test_pure_los_is_degenerate(self):
        p = MalagaParams(alpha=2.0, beta=2, b0=0.1, rho0=1.0, Omega0=1.0)
        with pytest.raises(ParameterError):
            malaga_constants(p)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_pdf_normalized(self, malaga):
        total = integrate_positive(lambda x: malaga_pdf(x, malaga), malaga.mean())
        assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_pdf_mean(self, malaga):
        mean = integrate_positive(lambda x: x * malaga_pdf(x, malaga), malaga.mean())
        assert mean == pytest.approx(malaga.mean(), rel=1e-6)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_pdf_second_moment(self, malaga):
        second = integrate_positive(lambda x: x * x * malaga_pdf(x, malaga), malaga.mean())
        assert second == pytest.approx(malaga.second_moment(), rel=1e-6)

    def test_pdf_domain(self, strong_turbulence):
        with pytest.raises(ParameterError):
            malaga_pdf(0.0, strong_turbulence)

    def test_pdf_vectorized(self, strong_turbulence):
        x = np.array([0.2, 1.0, 3.0])
        values = malaga_pdf(x, strong_turbulence)
        for xi, vi in zip(x, values):
            assert vi == pytest.approx(malaga_pdf(float(xi), strong_turbulence), rel=1e-14)

    def test_cdf_limits(self, malaga):
        assert malaga_cdf(0.0, malaga) == 0.0
        assert malaga_cdf(30.0 * malaga.mean(), malaga) > 0.999
        values = [malaga_cdf(x, malaga) for x in (0.2, 0.5, 1.0, 2.0)]
        assert values == sorted(values)

    def test_sampler_moments(self, malaga, stream):
        draws = malaga_sample(stream, malaga, N_DRAWS)
        assert draws.shape == (N_DRAWS,)
        assert np.all(draws >= 0)
        assert within_stderr(draws, malaga.mean())
        assert within_stderr(draws**2, malaga.second_moment())

    def test_sampler_cdf(self, strong_turbulence, stream):
        draws = malaga_sample(stream, strong_turbulence, N_DRAWS)
        for x in (0.3, 1.0, 2.5):
            p = malaga_cdf(x, strong_turbulence)
            se = math.sqrt(p * (1 - p) / N_DRAWS)
            assert abs(np.mean(draws <= x) - p) <= 5 * se

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_sampler_goodness_of_fit(self, malaga, stream):
        draws = malaga_sample(stream.child(1), malaga, 50_000)
        pilot = malaga_sample(stream.child(2), malaga, 50_000)
        cdf = lambda edges: np.array([malaga_cdf(float(e), malaga) for e in edges])
        assert chi_square_pvalue(draws, pilot, cdf) > 1e-4

    def test_sampler_rejects_empty(self, strong_turbulence, stream):
        with pytest.raises(ParameterError):
            malaga_sample(stream, strong_turbulence, 0)


class TestShadowedRician:
    """Shadowed-Rician density, CDF and sampler"""

    def test_parameter_validation(self):
        with pytest.raises(ParameterError):
            ShadowedRicianParams(m=0, b=0.1, Omega=1.0)
        with pytest.raises(ParameterError):
            ShadowedRicianParams(m=2, b=-0.1, Omega=1.0)

    def test_pdf_far_tail_is_zero(self):
        p = ShadowedRicianParams(m=10, b=0.126, Omega=0.835)
        assert sr_pdf(np.array([1e20]), p)[0] == 0.0

    @pytest.mark.parametrize("m", range(1, 11))
    def test_power_weights_sum_to_one(self, m, average_shadowing):
        p = ShadowedRicianParams(m=m, b=average_shadowing.b, Omega=average_shadowing.Omega)
        assert p.checked_a3() > 0
        assert float(np.sum(p.power_weights())) == pytest.approx(1.0, abs=1e-12)
        assert sr_cdf(0.0, p) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_pdf_normalized(self, shadowing):
        scale = math.sqrt(shadowing.mean_power())
        total = integrate_positive(lambda x: sr_pdf(x, shadowing), scale)
        assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_pdf_mean_power(self, shadowing):
        scale = math.sqrt(shadowing.mean_power())
        power = integrate_positive(lambda x: x * x * sr_pdf(x, shadowing), scale)
        assert power == pytest.approx(shadowing.mean_power(), rel=1e-6)

    def test_cdf_matches_pdf(self, shadowing):
        scale = math.sqrt(shadowing.mean_power())
        for x in (0.3 * scale, scale, 2.0 * scale):
            value = integrate.quad(lambda t: sr_pdf(t, shadowing), 0.0, x, epsabs=1e-13)[0]
            assert sr_cdf(x, shadowing) == pytest.approx(value, rel=1e-8, abs=1e-12)

    def test_scaled_cdf(self, average_shadowing):
        phi = 7.5
        for x in (0.5, 2.0, 9.0):
            expected = sr_cdf(math.sqrt(x / phi), average_shadowing)
            assert scaled_sr_cdf(x, average_shadowing, phi) == pytest.approx(expected, rel=1e-13)

    def test_scaled_cdf_needs_positive_scale(self, average_shadowing):
        with pytest.raises(ParameterError):
            scaled_sr_cdf(1.0, average_shadowing, 0.0)

    def test_sampler_power(self, shadowing, stream):
        draws = sr_sample(stream, shadowing, N_DRAWS)
        assert within_stderr(draws**2, shadowing.mean_power())

    def test_sampler_cdf(self, average_shadowing, stream):
        draws = sr_sample(stream, average_shadowing, N_DRAWS)
        for x in (0.2, 0.5, 1.0):
            p = sr_cdf(x, average_shadowing)
            se = math.sqrt(p * (1 - p) / N_DRAWS)
            assert abs(np.mean(draws <= x) - p) <= 5 * se

    def test_sampler_goodness_of_fit(self, shadowing, stream):
        draws = sr_sample(stream.child(1), shadowing, 50_000)
        pilot = sr_sample(stream.child(2), shadowing, 50_000)
        cdf = lambda edges: np.array([sr_cdf(float(e), shadowing) for e in edges])
        assert chi_square_pvalue(draws, pilot, cdf) > 1e-4

    def test_complex_phase_is_uniform(self, average_shadowing, stream):
        rho = sr_sample_complex(stream, average_shadowing, N_DRAWS)
        assert abs(np.mean(rho)) < 0.01


class TestBeamGeometry:
    """Beam pattern, layout and steering vectors"""

    def test_boresight_gain(self):
        gmax = 10 ** 5.2
        assert beam_gain(0.0, math.radians(0.4), gmax) == pytest.approx(gmax, rel=1e-12)

    def test_half_power_at_beamwidth(self):
        phi3dB = math.radians(0.4)
        assert beam_gain(phi3dB, phi3dB, 1.0) == pytest.approx(0.5, rel=1e-2)

    def test_series_branch_is_continuous(self):
        phi3dB = math.radians(0.4)
        edge = math.asin(1e-4 * math.sin(phi3dB) / BEAM_3DB_U)
        below = beam_gain(edge * (1 - 1e-6), phi3dB, 1.0)
        above = beam_gain(edge * (1 + 1e-6), phi3dB, 1.0)
        assert below == pytest.approx(above, rel=1e-9)

    def test_gain_decreases_off_axis(self):
        phi3dB = math.radians(0.4)
        gains = beam_gain(np.linspace(0.0, phi3dB, 20), phi3dB, 1.0)
        assert np.all(np.diff(gains) < 0)

    def test_negative_angle_rejected(self):
        with pytest.raises(ParameterError):
            beam_gain(-0.1, 0.01, 1.0)

    def test_hexagonal_layout(self, scenario, stream):
        ul = scenario.userlink
        geom = ul.geometry(stream)
        assert geom.phi.shape == (ul.n_users, ul.n_beams)
        assert geom.beam_centers.shape == (ul.n_beams, 2)
        for k in range(geom.K):
            assert geom.phi[k, k % geom.N] <= ul.user_spread * ul.phi3dB * (1 + 1e-3)

    def test_layout_is_reproducible(self, scenario, stream):
        ul = scenario.userlink
        np.testing.assert_array_equal(ul.geometry(stream).phi, ul.geometry(stream).phi)

    def test_layout_needs_users(self, stream):
        with pytest.raises(ParameterError):
            hexagonal_geometry(stream, 7, 0, 0.01, 1.0, 2e10, 1.0, 3.6e7)

    def test_steering_matrix(self, scenario, stream):
        geom = scenario.userlink.geometry(stream)
        A = steering_matrix(geom)
        assert A.shape == (geom.N, geom.K)
        phased = steering_matrix(geom, phased=True)
        np.testing.assert_allclose(np.abs(phased), np.abs(A), rtol=1e-12)
        expected = (
            math.sqrt(geom.GR) * geom.path_amplitude()[0] * np.sqrt(geom.gains()[0])
        )
        np.testing.assert_allclose(A[:, 0].real, expected, rtol=1e-12)

    def test_build_channels(self, scenario, stream, average_shadowing):
        geom = scenario.userlink.geometry(stream)
        H = build_channels(stream.child(5), geom, average_shadowing, 8)
        assert H.shape == (8, geom.N, geom.K)

    def test_channel_sampler_rounds(self, scenario, stream, average_shadowing):
        geom = scenario.userlink.geometry(stream)
        draw = channel_sampler(stream.child(9), geom, average_shadowing)
        np.testing.assert_array_equal(draw(0), draw(0))
        assert not np.allclose(draw(0), draw(1))

    def test_stream_reuse_in_sampler(self, average_shadowing):
        a = sr_sample(RngStream(5, 1), average_shadowing, 10)
        b = sr_sample(RngStream(5, 1), average_shadowing, 10)
        np.testing.assert_array_equal(a, b)
