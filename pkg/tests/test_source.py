import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tpcomb import (CombModelParams, CombSpec, degenerate_linewidth, g2_analytic, mode_count,
                    round_trip_time, span_from_wavelength)
from tpcomb.source import (FOUR_LN2, comb, comb_bruteforce, default_n_teeth, tooth_weights,
                           wavelength_from_span)


def params(**kw):
    base = dict(c=1.0, f_fwhm_mhz=0.95, t_fsr_ns=8.6, tooth_fwhm_ns=0.3, n_teeth=60, noise_floor=0.0)
    base.update(kw)
    return CombModelParams(**base)


class TestG2Analytic:
    def test_peak_normalization(self):
        p = params(tooth_fwhm_ns=1.0)
        neighbor = math.exp(-FOUR_LN2 * (p.t_fsr_ns / p.tooth_fwhm_ns) ** 2)
        assert abs(g2_analytic(0.0, p) - 1.0) < 2 * neighbor + 1e-15

    def test_envelope_at_one_fsr(self):
        p = params(t_fsr_ns=8.6)
        assert g2_analytic(8.6, p) == pytest.approx(math.exp(-2 * math.pi * 0.95e6 * 8.6e-9), rel=1e-12)
        assert g2_analytic(8.6, p) == pytest.approx(0.9500, abs=1e-4)

    def test_far_tail_is_noise_floor(self):
        p = params(noise_floor=3.5)
        assert g2_analytic(1e6, p) == pytest.approx(3.5, abs=1e-12)
        assert g2_analytic(-1e6, p) == pytest.approx(3.5, abs=1e-12)

    def test_vectorized_and_scalar_agree(self):
        p = params()
        tau = np.linspace(-30, 30, 101)
        vec = g2_analytic(tau, p)
        assert vec.shape == tau.shape
        assert vec[17] == g2_analytic(tau[17], p)

    def test_fast_comb_matches_bruteforce(self, rng):
        for _ in range(20):
            t = rng.uniform(1, 10)
            w = rng.uniform(0.01, 0.9) * t
            n = int(rng.integers(1, 40))
            tau = rng.uniform(-1.2 * n * t, 1.2 * n * t, 400)
            np.testing.assert_allclose(comb(tau, t, w, n), comb_bruteforce(tau, t, w, n), atol=1e-12)

    @given(st.floats(-200, 200), st.floats(0.05, 5.0), st.floats(0.0, 10.0))
    def test_even_in_tau(self, tau, f, floor):
        p = params(f_fwhm_mhz=f, noise_floor=floor)
        assert abs(g2_analytic(tau, p) - g2_analytic(-tau, p)) <= 1e-12

    @given(st.floats(0.1, 5.0), st.floats(1.0, 10.0))
    def test_envelope_strictly_decreasing(self, f, t):
        p = params(f_fwhm_mhz=f, t_fsr_ns=t, tooth_fwhm_ns=0.05 * t, n_teeth=30, noise_floor=1.0)
        peaks = np.array([g2_analytic(n * t, p) for n in range(30)]) - p.noise_floor
        assert np.all(np.diff(peaks) < 0)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            params(tooth_fwhm_ns=9.0)
        with pytest.raises(ValueError):
            params(n_teeth=0)
        with pytest.raises(ValueError):
            params(c=-1)
        with pytest.raises(ValueError):
            params(t_fsr_ns=0.0)

    def test_tooth_weights_normalized(self):
        n, w = tooth_weights(params(n_teeth=10))
        assert len(n) == 19 and w.sum() == pytest.approx(1.0)
        assert w[9] == w.max()


class TestGeometry:
    def test_round_trip_time(self):
        assert round_trip_time(116) == pytest.approx(8.62, abs=0.005)
        assert abs(round_trip_time(116) - 8.6) <= 0.1
        assert round_trip_time(1000) == 1.0
        assert round_trip_time(120) == pytest.approx(8.333, abs=1e-3)

    def test_degenerate_linewidth(self):
        assert degenerate_linewidth(0.95) == pytest.approx(0.608)
        assert degenerate_linewidth(1.35) == pytest.approx(0.864)
        with pytest.raises(ValueError):
            degenerate_linewidth(0)

    def test_span_from_wavelength(self):
        oracle = 2.998e8 * 13e-9 / (1514e-9) ** 2 / 1e12
        assert span_from_wavelength(13, 1514) == pytest.approx(oracle, rel=1e-3)
        assert 1.0 <= span_from_wavelength(13, 1514) <= 2.0
        assert span_from_wavelength(0.03, 1514) * 1e3 == pytest.approx(3.9, abs=0.05)
        assert span_from_wavelength(0, 1514) == 0.0

    def test_wavelength_inverse(self):
        assert wavelength_from_span(span_from_wavelength(13, 1514), 1514) == pytest.approx(13, rel=1e-12)

    def test_mode_count(self):
        assert mode_count(CombSpec(116, 0.95, 1.7, 1514)) == 14655
        assert mode_count(CombSpec(116, 0.95, 116e-6, 1514)) == 1
        assert mode_count(CombSpec(100, 0.95, 1.0, 1514)) == 10000

    def test_spec_needs_one_mode(self):
        with pytest.raises(ValueError):
            CombSpec(116, 0.95, 1e-6, 1514)


class TestDefaultTeeth:
    def test_envelope_below_threshold_at_edge(self):
        for f, t in [(0.95, 8.62), (1.35, 8.62), (5.0, 1.0)]:
            n = default_n_teeth(f, t)
            assert math.exp(-2 * math.pi * f * 1e-3 * t * n) <= 1e-6
            assert math.exp(-2 * math.pi * f * 1e-3 * t * (n - 1)) > 1e-6

    def test_paper_default(self):
        assert default_n_teeth(0.95, 1e3 / 116) == 269

    def test_model_params_from_spec(self):
        p = CombSpec(116, 0.95, 1.7, 1514).model_params()
        assert p.t_fsr_ns == pytest.approx(8.6207, abs=1e-4)
        assert p.tooth_fwhm_ns < 1e-3
