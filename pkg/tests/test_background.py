import numpy as np
import pytest

from cosmopert.background import (
    LinearBackground,
    background_closed_form_linear,
    fit_tau_inf,
    solve_background,
    solve_background_singularity_aligned,
    tau_time,
)
from cosmopert.eos import LinearEos, PolytropicEos, PowerLawEos
from cosmopert.errors import (
    DomainError,
    SingularityReachedError,
    UndefinedTimeError,
)

from oracles import loglog_slope

TOL = 1e-12


def solve_linear(w, eta_range=(0.01, 100.0), tol=TOL, eta0=1.0, a0=1.0):
    # anchor on the closed form so the solved branch has its singularity at 0
    eps0 = (2.0 / ((1.0 + 3.0 * w) * eta0)) ** 2 / a0**2
    return solve_background(LinearEos(w), eta0, a0, eps0, eta_range, tol=tol)


class TestClosedForm:
    def test_dust_doubling(self):
        s = background_closed_form_linear(0.0, 1.0, 1.0, 2.0)
        assert s.a == pytest.approx(4.0)

    def test_radiation_hubble(self):
        s = background_closed_form_linear(1.0 / 3.0, 2.0, 1.0, 2.0)
        assert s.H == pytest.approx(1.0 / 2.0)

    def test_identity_at_anchor(self):
        s = background_closed_form_linear(0.7, 3.0, 1.4, 3.0)
        assert s.a == pytest.approx(1.4)

    def test_constraint_honoured(self):
        s = background_closed_form_linear(0.4, 1.0, 2.0, 5.0)
        assert s.H**2 == pytest.approx(s.a**2 * s.eps, rel=1e-14)


class TestSolveBackground:
    @pytest.mark.parametrize("w", [0.0, 1.0 / 9.0, 1.0 / 3.0, 1.0])
    def test_matches_closed_form(self, w):
        traj = solve_linear(w)
        for eta in (0.01, 0.1, 1.0, 10.0, 100.0):
            ref = background_closed_form_linear(w, 1.0, 1.0, eta)
            assert traj.a(eta) == pytest.approx(ref.a, rel=100 * TOL)
            assert traj.H(eta) == pytest.approx(ref.H, rel=100 * TOL)
            assert traj.eps(eta) == pytest.approx(ref.eps, rel=100 * TOL)

    def test_scale_factor_doubling(self):
        traj = solve_linear(1.0 / 3.0)
        assert traj.a(2.0) / traj.a(1.0) == pytest.approx(2.0, rel=1e-10)

    def test_density_slope(self):
        w = 1.0 / 9.0
        traj = solve_linear(w)
        etas = np.geomspace(0.1, 10.0, 40)
        slope = loglog_slope(etas, traj.eps(etas))
        assert slope == pytest.approx(-6.0 * (1 + w) / (1 + 3 * w), abs=1e-8)

    def test_constraint_residual(self):
        traj = solve_linear(1.0 / 3.0)
        assert traj.constraint_residual().max() <= 10 * TOL

    @pytest.mark.parametrize(
        "eos",
        [
            LinearEos(0.25),
            PowerLawEos(w=0.0, terms=((0.3, 1.5),)),  # sound speed < 1 needs eps < ~5
            PolytropicEos(K=0.1, n=2.0),
        ],
    )
    def test_m_a_cubed_constant(self, eos):
        traj = solve_background(eos, 1.0, 1.0, 0.5, (1.0, 50.0), tol=TOL, n_samples=65)
        product = traj.m_samples * traj.a_samples**3
        spread = product.max() / product.min() - 1.0
        assert spread <= 100 * TOL + 1e-9

    def test_ordering_invariants(self):
        traj = solve_linear(0.2, eta_range=(0.1, 10.0))
        assert np.all(np.diff(traj.etas) > 0)
        assert np.all(np.diff(traj.a_samples) > 0)
        assert np.all(np.diff(traj.eps_samples) < 0)

    def test_bad_range_rejected(self):
        with pytest.raises(DomainError):
            solve_background(LinearEos(0.3), 1.0, 1.0, 1.0, (-1.0, 2.0))
        with pytest.raises(DomainError):
            solve_background(LinearEos(0.3), 5.0, 1.0, 1.0, (0.1, 2.0))

    def test_singularity_reported(self):
        # stiff fluid from eps0 = 1 at eta0 = 1: eps ~ eta^-3 exceeds the
        # representable range long before eta = 1e-120
        with pytest.raises(SingularityReachedError) as err:
            solve_background(LinearEos(1.0), 1.0, 1.0, 1.0, (1e-120, 2.0))
        assert err.value.last_eta is not None


class TestTau:
    def test_linear_tau_closed_form(self):
        w = 0.25
        traj = solve_linear(w, eta_range=(0.5, 20.0))
        res = tau_time(traj)
        expected = np.sqrt(w) * (traj.etas - 1.0)
        assert np.max(np.abs(res.taus - expected)) < 1e-9

    def test_tau_monotone(self):
        traj = solve_background(
            PowerLawEos(w=0.0, terms=((0.3, 1.5),)), 1.0, 1.0, 1.0, (1.0, 1e3), tol=TOL
        )
        res = tau_time(traj)
        assert np.all(np.diff(res.taus) > 0)

    def test_dust_undefined(self):
        traj = solve_linear(0.0, eta_range=(0.5, 5.0))
        with pytest.raises(UndefinedTimeError):
            tau_time(traj)

    def test_overdamped_exponent_and_stability(self):
        sigma = 0.5
        eos = PowerLawEos(w=0.0, terms=((0.5, sigma + 1.0),))
        traj = solve_background(eos, 1.0, 1.0, 1.0, (1.0, 1e4), tol=TOL, n_samples=513)
        res = tau_time(traj)
        assert res.tau_inf is not None
        # tau_inf - tau follows eta^(1-3sigma)
        cut = traj.etas >= 1e3
        slope = loglog_slope(traj.etas[cut], res.tau_inf - res.taus[cut])
        assert slope == pytest.approx(1.0 - 3.0 * sigma, abs=0.01)
        # doubling the fit window moves tau_inf by less than 1%
        tau2, _ = fit_tau_inf(traj.etas, res.taus, sigma, window_decades=2.0)
        assert abs(tau2 - res.tau_inf) <= 0.01 * abs(res.tau_inf)

    def test_critical_log_growth(self):
        # the sqrt(f') ~ 1/eta form is reached once eps^(1/3) is small, so fit late
        eos = PowerLawEos(w=0.0, terms=((0.5, 4.0 / 3.0),))
        traj = solve_background(eos, 1.0, 1.0, 1.0, (1.0, 1e5), tol=TOL, n_samples=513)
        res = tau_time(traj)
        cut = traj.etas >= 1e3
        coef = np.polyfit(np.log(traj.etas[cut]), res.taus[cut], 1)
        fitted = np.polyval(coef, np.log(traj.etas[cut]))
        resid = np.max(np.abs(fitted - res.taus[cut])) / np.max(np.abs(res.taus[cut]))
        assert resid < 1e-3  # tau grows like log(eta)


class TestSingularityAligned:
    def test_linear_matches_closed_form(self):
        traj = solve_background_singularity_aligned(LinearEos(1.0 / 3.0), (1e-4, 1.0), tol=TOL)
        a0 = traj.a(1e-4)
        for eta in (1e-3, 1e-2, 0.5):
            assert traj.a(eta) / a0 == pytest.approx((eta / 1e-4) ** 1.0, rel=1e-8)

    def test_polytropic_leading_hubble(self):
        # near the singularity the polytrope behaves like w = 1/n
        eos = PolytropicEos(K=0.1, n=3.0)
        traj = solve_background_singularity_aligned(eos, (1e-5, 0.5), tol=1e-11)
        w = 1.0 / 3.0
        etas = np.geomspace(1e-5, 1e-4, 10)
        expected = 2.0 / ((1 + 3 * w) * etas)
        assert np.max(np.abs(traj.H(etas) / expected - 1.0)) < 1e-3


class TestLinearBackground:
    def test_matches_solver(self):
        bg = LinearBackground(0.3)
        traj = solve_linear(0.3)
        for eta in (0.1, 1.0, 7.0):
            assert bg.a(eta) == pytest.approx(traj.a(eta), rel=1e-9)
            assert bg.H(eta) == pytest.approx(traj.H(eta), rel=1e-9)
            assert bg.eps(eta) == pytest.approx(traj.eps(eta), rel=1e-9)
