import numpy as np
import pytest

from cosmopert.errors import DomainError
from cosmopert.gowdy import (
    CircleGeometry,
    GowdySampledEvolution,
    circle_forward,
    circle_inverse,
    fit_gowdy_data,
    gowdy_evaluate,
    gowdy_evolve_and_prescribe,
    gowdy_series,
)

from oracles import GowdyModeOracle

GEOM = CircleGeometry()  # N = 33


class TestSeries:
    def test_recursion_values(self):
        # k = cos x, omega = sin x: second derivatives flip sign
        x = GEOM.grid_axis()
        k_hat = circle_forward(GEOM, np.cos(x))
        w_hat = circle_forward(GEOM, np.sin(x))
        coeffs = gowdy_series(GEOM, k_hat, w_hat, j_max=4)
        # j=2: P21 = dxx k / 4 = -cos x / 4; P20 = (dxx w - 4 P21)/4
        p21 = circle_inverse(GEOM, coeffs[(2, 1)])
        assert np.max(np.abs(p21 + np.cos(x) / 4.0)) < 1e-12
        p20 = circle_inverse(GEOM, coeffs[(2, 0)])
        assert np.max(np.abs(p20 - (-np.sin(x) + np.cos(x)) / 4.0)) < 1e-12

    def test_constant_data_truncates(self):
        k_hat = circle_forward(GEOM, np.full(GEOM.n, 0.7))
        w_hat = circle_forward(GEOM, np.full(GEOM.n, -0.2))
        coeffs = gowdy_series(GEOM, k_hat, w_hat, j_max=6)
        for (j, _l), c in coeffs.items():
            if j > 0:
                assert np.max(np.abs(c)) < 1e-13  # FFT roundoff of a constant


class TestEvolution:
    def test_constant_data_exact_log_solution(self):
        k0, w0 = 0.7, -0.2
        t0 = 1e-3
        p0 = np.zeros(GEOM.n, dtype=complex)
        dp0 = np.zeros(GEOM.n, dtype=complex)
        p0[0] = k0 * np.log(t0) + w0
        dp0[0] = k0 / t0
        ts = np.geomspace(t0, 1.0, 20)
        run = GowdySampledEvolution(GEOM, t0, p0, dp0, ts, tol=1e-12)
        expected = k0 * np.log(ts) + w0
        got = run.p[:, 0].real
        assert np.max(np.abs(got - expected)) < 1e-10

    def test_single_mode_vs_bessel_oracle(self):
        n_mode = 5
        t0, u0, du0 = 1e-2, 0.8, -0.3
        oracle = GowdyModeOracle(float(n_mode**2), t0, u0, du0)
        p0 = np.zeros(GEOM.n, dtype=complex)
        dp0 = np.zeros(GEOM.n, dtype=complex)
        p0[n_mode] = u0
        dp0[n_mode] = du0
        ts = np.geomspace(t0, 2.0, 30)
        run = GowdySampledEvolution(GEOM, t0, p0, dp0, ts, tol=1e-12)
        got = run.p[:, n_mode].real
        assert np.max(np.abs(got - oracle(ts))) < 1e-9 * max(1.0, np.max(np.abs(got)))


class TestRoundtrip:
    def test_sign_indefinite_recovery(self):
        rng = np.random.default_rng(33)
        x = GEOM.grid_axis()
        kfun = 0.5 * np.sin(x) - 0.3 * np.cos(3 * x)  # changes sign
        omega = 0.2 + 0.4 * np.cos(2 * x) + 0.05 * rng.standard_normal()
        assert kfun.min() < 0 < kfun.max()
        result = gowdy_evolve_and_prescribe(kfun, omega, 1e-3, 1.0)
        assert result.k_error <= 1e-4
        assert result.omega_error <= 1e-4

    def test_random_band_limited_recovery(self):
        rng = np.random.default_rng(34)
        coeffs = np.zeros(GEOM.n, dtype=complex)
        for n in range(1, 6):
            c = (rng.standard_normal() + 1j * rng.standard_normal()) / 2
            coeffs[n] = c
            coeffs[-n] = np.conj(c)
        kfun = circle_inverse(GEOM, coeffs) + 0.1
        omega = np.roll(circle_inverse(GEOM, coeffs), 7)
        result = gowdy_evolve_and_prescribe(kfun, omega, 1e-3, 1.0)
        assert result.k_error <= 1e-4
        assert result.omega_error <= 1e-4

    def test_constant_data_exact(self):
        kfun = np.full(GEOM.n, -0.4)  # negative k is fine in this setting
        omega = np.full(GEOM.n, 1.1)
        result = gowdy_evolve_and_prescribe(kfun, omega, 1e-3, 1.0, tol=1e-13)
        assert result.k_error <= 1e-10
        assert result.omega_error <= 1e-10
        # the endpoint matches k log t + omega exactly
        assert result.p_end == pytest.approx(np.full(GEOM.n, 1.1), abs=1e-10)

    def test_bad_t_start(self):
        with pytest.raises(DomainError):
            gowdy_evolve_and_prescribe(np.ones(GEOM.n), np.ones(GEOM.n), 1.5, 2.0)


class TestFit:
    def test_fit_recovers_manufactured_series(self):
        x = GEOM.grid_axis()
        k_hat = circle_forward(GEOM, np.sin(2 * x))
        w_hat = circle_forward(GEOM, np.cos(x))
        coeffs = gowdy_series(GEOM, k_hat, w_hat, j_max=4)
        ts = np.geomspace(1e-3, 1e-2, 32)
        samples = np.stack([gowdy_evaluate(coeffs, t)[0] for t in ts])
        k_fit, w_fit, _ = fit_gowdy_data(GEOM, ts, samples)
        assert np.max(np.abs(k_fit - k_hat)) < 1e-10
        assert np.max(np.abs(w_fit - w_hat)) < 1e-10
