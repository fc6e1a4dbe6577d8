"""Late-time asymptotics: wave profiles, homogeneous constants, regimes.

For a linear EoS with w > 0, every zero-mean solution satisfies
phi ~ eta^(-nu-1/2) * W(eta, x) with W a free solution of the flat wave
equation W'' = w*Lap(W); together with the homogeneous part A + B*eta^(-2nu)
this parametrises all solutions by late-time data.  Per mode the rescaled
variable psi = eta^(nu+1/2)*phi settles onto

    psi_k(eta) ~ Wbar_k * cos(sqrt(w)|k|*(eta - etabar_k)) + O(1/eta),

which is read off through polar coordinates of (psi, psi'/(sqrt(w)|k|)):
the radius drifts like 1 + O(1/eta) and the unwrapped phase has slope
-sqrt(w)|k|.

For a complex Fourier coefficient the phasor z = psi + i*psi'/(sqrt(w)|k|)
isolates one travelling wave: z ~ V * exp(-i sqrt(w)|k| eta) with constant
V in C; the Hermitian partner carries the other one, and
psi_k = (z_k + conj(z_-k))/2 reassembles the real field.  The stored profile
per mode is (Wbar, etabar) with V = Wbar * exp(i sqrt(w)|k| etabar).  The
amplitude fit runs on the complex phasor, which is linear in the solution, so
profile extraction is exactly additive; the real polar fits for radius drift
and phase slope are kept as diagnostics.

For a general EoS at low density the same picture holds in the sound-adapted
time tau (unit wave speed) after removing the damping factor Omega with
Omega_tau/Omega = -(3/2)*Z*Htilde, provided the dynamics is underdamped
(w > 0 or sigma < 1/3).  Overdamped dynamics (w = 0, sigma > 1/3) freezes:
tau -> tau_inf finite and phi(s) = phi0 + O(s^2) with s = tau_inf - tau.  At
the critical point sigma = 1/3 only tau ~ log(eta) growth and the finite
limit of Htilde are asserted.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .background import fit_tau_inf
from .eos import classify_regime, tau_coefficients
from .errors import (
    DomainError,
    InconclusiveError,
    NumericError,
    PreconditionError,
    UnsupportedRegimeError,
    WindowTooEarlyError,
)
from .evolver import (
    PerturbationState,
    _psi_pair,
    _require_zero_mean,
    evolve_sampled,
    nu_index,
)
from .spectral import SpectralField

DEFAULT_R_RESIDUAL_THRESHOLD = 0.1


# -- psi transform ---------------------------------------------------------------


@dataclass(frozen=True)
class PsiState:
    """Rescaled pair (psi, psi') with psi = eta^(nu+1/2) * phi."""

    eta: float
    psi: SpectralField
    dpsi: SpectralField


def psi_transform(state, w):
    """PsiState from a zero-mean PerturbationState (invertible)."""
    _require_zero_mean(state)
    psi, dpsi = _psi_pair(state.eta, state.phi.coeffs, state.dphi.coeffs, w)
    geom = state.geometry
    return PsiState(eta=state.eta, psi=SpectralField(geom, psi),
                    dpsi=SpectralField(geom, dpsi))


def psi_inverse(psi_state, w):
    """Invert psi_transform."""
    p = nu_index(w) + 0.5
    eta = psi_state.eta
    phi = eta**-p * psi_state.psi.coeffs
    dphi = eta**-p * psi_state.dpsi.coeffs - p * eta ** (-p - 1.0) * psi_state.psi.coeffs
    geom = psi_state.psi.geometry
    return PerturbationState(eta=eta, phi=SpectralField(geom, phi),
                             dphi=SpectralField(geom, dphi))


# -- polar coordinates per mode -----------------------------------------------------


def mode_polar(psi_hat, dpsi_hat, k_norm, w):
    """(r, theta) with r^2 = psi^2 + (psi'/(sqrt(w)|k|))^2, theta = atan2.

    For real input this is the textbook polar pair; applied to the real and
    imaginary parts of a complex coefficient separately it stays exact.
    """
    if w <= 0.0:
        raise UnsupportedRegimeError("polar modes require w > 0")
    if k_norm == 0.0:
        raise DomainError("polar modes are defined for k != 0 only")
    speed = math.sqrt(w) * k_norm
    r = np.hypot(psi_hat, dpsi_hat / speed)
    theta = np.arctan2(dpsi_hat / speed, psi_hat)
    return r, theta


@dataclass(frozen=True)
class ModePolarTrack:
    """(r, unwrapped theta) samples of one mode's phasor over a window."""

    k: tuple
    times: np.ndarray
    r: np.ndarray
    theta: np.ndarray


def polar_track(k, times, psi_track, dpsi_track, k_norm, w):
    """Polar track of a complex coefficient via z = psi + i psi'/(sqrt(w)|k|)."""
    if w <= 0.0:
        raise UnsupportedRegimeError("polar tracks require w > 0")
    speed = math.sqrt(w) * k_norm
    z = psi_track + 1j * dpsi_track / speed
    steps = np.abs(np.diff(np.angle(z)))
    theta = np.unwrap(np.angle(z))
    if np.any(np.minimum(steps, 2 * np.pi - steps) >= np.pi):
        raise DomainError(
            "phase steps reach pi; sample at cadence <= pi/(2 sqrt(w)|k|)"
        )
    return ModePolarTrack(k=tuple(k), times=np.asarray(times, float),
                          r=np.abs(z), theta=theta)


# -- wave profiles ------------------------------------------------------------------


@dataclass(frozen=True)
class ModeWave:
    Wbar: float
    phase_ref: float  # etabar (or taubar), canonical in [0, 2*pi/speed)
    residual: float  # rms phasor misfit relative to the amplitude
    slope_rel_err: float  # |theta slope / (-speed) - 1|
    drift_coeff: float  # C in r/Wbar - 1 ~ C/t


@dataclass
class WaveProfile:
    """Per-mode late-time amplitudes and phases plus homogeneous constants.

    modes maps integer k-triples (all supported k != 0, both signs) to
    ModeWave; Hermitian pairing V(-k) = conj(V(k)) of the complex amplitudes
    V = Wbar*exp(i*speed*phase_ref) makes the reassembled profile real.
    """

    geometry: object
    time_variable: str  # "eta" | "tau"
    wave_speed_sq: float  # w for eta-time, 1 for tau-time
    modes: dict
    A: float
    B: float
    nu: float

    def speed(self, k):
        k_norm = 2.0 * np.pi / self.geometry.length * math.sqrt(sum(c * c for c in k))
        return math.sqrt(self.wave_speed_sq) * k_norm

    def complex_amplitude(self, k):
        """V = Wbar * exp(i * speed * phase_ref); linear in the solution."""
        mode = self.modes[k]
        return mode.Wbar * np.exp(1j * self.speed(k) * mode.phase_ref)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kx", "ky", "kz", "Wbar", "etabar", "residual"])
            for k in sorted(self.modes):
                m = self.modes[k]
                writer.writerow([k[0], k[1], k[2], repr(m.Wbar),
                                 repr(m.phase_ref), repr(m.residual)])


def profile_distance(p1, p2):
    """Max relative distance of the complex amplitudes (plus A, B)."""
    keys = set(p1.modes) | set(p2.modes)
    scale = max(
        max((m.Wbar for m in p1.modes.values()), default=0.0),
        max((m.Wbar for m in p2.modes.values()), default=0.0),
        abs(p1.A), abs(p2.A), 1e-300,
    )
    worst = max(abs(p1.A - p2.A), abs(p1.B - p2.B)) / scale
    for k in keys:
        v1 = p1.complex_amplitude(k) if k in p1.modes else 0.0
        v2 = p2.complex_amplitude(k) if k in p2.modes else 0.0
        worst = max(worst, abs(v1 - v2) / scale)
    return worst


def fit_homogeneous(times, mean_track, w):
    """(A, B, degenerate) from least squares of the mean against {1, t^-2nu}.

    When the window is so late that t^-2nu underflows relative to machine
    precision the fit is degenerate; B = 0 is returned with the flag set.
    """
    times = np.asarray(times, dtype=float)
    two_nu = 2.0 * nu_index(w)
    decay = times**-two_nu
    if decay.max() < 1e3 * np.finfo(float).eps:
        a_fit = float(np.mean(mean_track))
        return a_fit, 0.0, True
    X = np.stack([np.ones_like(times), decay], axis=1)
    scales = np.linalg.norm(X, axis=0)
    coef, *_ = np.linalg.lstsq(X / scales, np.asarray(mean_track, float), rcond=None)
    coef = coef / scales
    return float(coef[0]), float(coef[1]), False


def _phasor_fit(times, z, speed):
    """Complex LSQ of z*e^(i*speed*t) against {1, 1/t} -> (V, c, rel rms)."""
    y = z * np.exp(1j * speed * times)[:, None]
    X = np.stack([np.ones_like(times), 1.0 / times], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ coef
    rms = np.sqrt(np.mean(np.abs(y - fitted) ** 2, axis=0))
    amp = np.abs(coef[0])
    rel = np.where(amp > 0, rms / np.maximum(amp, 1e-300), np.inf)
    return coef[0], coef[1], rel


def _polar_diagnostics(times, z, speed):
    """Radius-drift and phase-slope fits of the polar representation."""
    r = np.abs(z)
    theta = np.unwrap(np.angle(z), axis=0)
    X_r = np.stack([np.ones_like(times), 1.0 / times], axis=1)
    coef_r, *_ = np.linalg.lstsq(X_r, r, rcond=None)
    X_t = np.stack([np.ones_like(times), times, 1.0 / times], axis=1)
    coef_t, *_ = np.linalg.lstsq(X_t, theta, rcond=None)
    with np.errstate(invalid="ignore", divide="ignore"):
        drift = np.abs(coef_r[1] / np.maximum(np.abs(coef_r[0]), 1e-300))
        slope_err = np.abs(coef_t[1] / (-speed) - 1.0)
    return drift, slope_err


def _extract_modes(times, tracks_iter, geometry, speed_of, threshold):
    """Shared mode-extraction loop; tracks_iter yields (idx, psi, dpsi)."""
    kvec = geometry.wavenumbers
    n = geometry.n
    modes = {}
    residuals = []
    for k2_int, idx, psi, dpsi in tracks_iter:
        speed = speed_of(k2_int)
        z = psi + 1j * dpsi / speed
        V, _c, rel = _phasor_fit(times, z, speed)
        drift, slope_err = _polar_diagnostics(times, z, speed)
        for pos, j in enumerate(idx):
            i1, i2, i3 = np.unravel_index(j, (n, n, n))
            k = (int(kvec[i1]), int(kvec[i2]), int(kvec[i3]))
            wbar = float(np.abs(V[pos]))
            period = 2.0 * np.pi / speed
            phase = float(np.angle(V[pos]) / speed) % period
            modes[k] = ModeWave(
                Wbar=wbar,
                phase_ref=phase,
                residual=float(rel[pos]),
                slope_rel_err=float(slope_err[pos]),
                drift_coeff=float(drift[pos]),
            )
            residuals.append(float(rel[pos]))
    if residuals and float(np.median(residuals)) > threshold:
        raise WindowTooEarlyError(
            f"median phasor residual {np.median(residuals):.3g} above "
            f"{threshold}; start the window later"
        )
    return modes


def extract_wave_profile(evolution, w, threshold=DEFAULT_R_RESIDUAL_THRESHOLD):
    """Fit per-mode (Wbar, etabar) and homogeneous (A, B) from a sampled run.

    The run must be sampled finely enough that no mode advances its phase by
    pi between samples (cadence <= pi/(2*sqrt(w)*|k|_max)); the window should
    start late (eta1 >= 50/(sqrt(w)*k_min) is a good rule) or the 1/eta
    corrections degrade the fit and a WindowTooEarlyError is raised.
    """
    if w <= 0.0:
        raise UnsupportedRegimeError("wave profiles require w > 0")
    etas = evolution.etas
    if etas[0] >= etas[-1]:
        raise DomainError("extraction window must be sampled in increasing time")
    geom = evolution.geometry
    scale = 2.0 * np.pi / geom.length
    eigs = [k2 for k2 in evolution.eigenvalues() if k2 > 0]
    if eigs:
        smax = math.sqrt(w) * scale * math.sqrt(max(eigs))
        if np.max(np.diff(etas)) > np.pi / (2.0 * smax) + 1e-12:
            raise DomainError(
                "sampling cadence exceeds pi/(2*sqrt(w)|k|max); refine t_eval"
            )

    nu = nu_index(w)

    def tracks_iter():
        for k2_int in eigs:
            idx, phi, dphi = evolution.tracks(k2_int)
            psi, dpsi = _psi_pair(etas[:, None], phi, dphi, w)
            yield k2_int, idx, psi, dpsi

    def speed_of(k2_int):
        return math.sqrt(w) * scale * math.sqrt(k2_int)

    modes = _extract_modes(etas, tracks_iter(), geom, speed_of, threshold)

    A = B = 0.0
    if 0 in evolution.eigenvalues():
        _idx, phi0, _dphi0 = evolution.tracks(0)
        A, B, _deg = fit_homogeneous(etas, np.real(phi0[:, 0]), w)
    return WaveProfile(geometry=geom, time_variable="eta", wave_speed_sq=w,
                       modes=modes, A=A, B=B, nu=nu)


def wave_profile_state(profile, eta):
    """Exact (phi, phi') of A + eta^(-nu-1/2) W + B eta^(-2nu) at eta."""
    geom = profile.geometry
    n = geom.n
    w_coeffs = np.zeros((n, n, n), dtype=complex)
    dw_coeffs = np.zeros((n, n, n), dtype=complex)
    for k, _mode in profile.modes.items():
        V = profile.complex_amplitude(k)
        s = profile.speed(k)
        idx = geom.mode_index(k)
        phase = np.exp(-1j * s * eta)
        w_coeffs[idx] += 0.5 * V * phase
        dw_coeffs[idx] += -0.5j * s * V * phase
        idx_c = geom.mode_index(tuple(-c for c in k))
        w_coeffs[idx_c] += 0.5 * np.conj(V * phase)
        dw_coeffs[idx_c] += np.conj(-0.5j * s * V * phase)
    p = profile.nu + 0.5
    two_nu = 2.0 * profile.nu
    phi = eta**-p * w_coeffs
    dphi = eta**-p * dw_coeffs - p * eta ** (-p - 1.0) * w_coeffs
    phi[0, 0, 0] = profile.A + profile.B * eta**-two_nu
    dphi[0, 0, 0] = -two_nu * profile.B * eta ** (-two_nu - 1.0)
    return PerturbationState(
        eta=eta,
        phi=SpectralField(geom, phi),
        dphi=SpectralField(geom, dphi),
    )


def reconstruct_from_wave_profile(profile, w, eta_far, eta_target, tol=1e-10):
    """Seed the Theorem-4 form at eta_far and evolve backward to eta_target."""
    run = reconstruct_wave_sampled(profile, w, eta_far, [eta_target], tol=tol)
    return run.final_state()


def reconstruct_wave_sampled(profile, w, eta_far, etas, tol=1e-10):
    if eta_far < np.max(etas):
        raise DomainError("eta_far must bound the requested samples from above")
    state = wave_profile_state(profile, eta_far)
    return evolve_sampled(state, w, etas, tol=tol)


# -- damping factor and general equation of state -----------------------------------


@dataclass
class OmegaTrack:
    """Damping factor Omega(tau) with Omega(tau0) = 1 along a trajectory."""

    etas: np.ndarray
    taus: np.ndarray
    omega: np.ndarray


def omega_damping(eos, traj, n_grid=4097):
    """Solve Omega_tau/Omega = -(3/2) Z Htilde by quadrature along eta.

    Htilde dtau = H deta, so log Omega = -(3/2) int Z(eps) H deta.  Only
    meaningful while tau -> infinity, i.e. underdamped or critical dynamics.
    """
    regime = classify_regime(eos)
    if regime.is_overdamped:
        raise UnsupportedRegimeError(
            "Omega is not used in the overdamped regime (frozen profile path)"
        )
    lo, hi = traj.eta_range
    us = np.linspace(math.log(lo), math.log(hi), n_grid)
    etas = np.exp(us)
    eps = traj.eps(etas)
    H = traj.H(etas)
    _y, z = tau_coefficients(eos, eps)
    integrand = -1.5 * z * H * etas  # d(log Omega)/d(log eta)
    from scipy.integrate import cumulative_trapezoid

    log_omega = np.concatenate([[0.0], cumulative_trapezoid(integrand, us)])
    taus = traj.tau(etas)
    return OmegaTrack(etas=etas, taus=taus, omega=np.exp(log_omega))


def damped_potential_coefficient(eos, traj, etas):
    """A(eps) in Psi_tautau = A Htilde^2 Psi + Lap Psi, evaluated pointwise.

    Uses the conjugation identity A = (3/2)(Z_tau Htilde + Z Htilde_tau)/Htilde^2
    + (9/4) Z^2 - 3 Y, with the tau-derivative taken numerically along the
    trajectory; verified against a numerically conjugated solution in the
    test suite before being relied on.
    """
    etas = np.asarray(etas, dtype=float)
    eps = traj.eps(etas)
    y, z = tau_coefficients(eos, eps)
    fp = eos.sound_speed_sq(eps)
    H = traj.H(etas)
    htilde = H / np.sqrt(fp)
    zh = z * htilde
    taus = traj.tau(etas)
    from scipy.interpolate import CubicSpline

    dzh_dtau = CubicSpline(taus, zh).derivative()(taus)
    return 1.5 * dzh_dtau / htilde**2 + 2.25 * z**2 - 3.0 * y


@dataclass
class FrozenProfile:
    """Overdamped limit: phi = phi0 + Q*s^2 + O(s^4), s = tau_inf - tau."""

    phi0: SpectralField
    quad_coeff_field: SpectralField
    tau_inf: float
    sigma: float
    quad_rel_err: float  # L2 distance of Q from ((sigma-1/3)/(4-2sigma)) Lap phi0
    quad_scale: float  # L2 projection of Q onto Lap phi0


@dataclass
class CriticalReport:
    """sigma = 1/3: tau grows like log eta and Htilde approaches a constant.

    Nothing beyond these two facts is asserted in this regime.
    """

    c1: float  # tau ~ c1 * log eta + const
    tau_log_residual: float
    htilde_drift: float  # max/min - 1 over the final decade
    htilde_limit: float


def _richardson_limit(s_values, cubes):
    """Limit s -> 0 assuming phi = phi0 + c2 s^2 + c4 s^4 through 3 points."""
    s2 = np.asarray(s_values) ** 2
    V = np.vander(s2, 3, increasing=True)  # columns 1, s^2, s^4
    weights = np.linalg.solve(V.T, np.array([1.0, 0.0, 0.0]))
    return np.tensordot(weights, cubes, axes=(0, 0))


def extract_frozen_profile(eos, evolution, traj, window_fraction=10.0):
    """Fit the frozen limit field and its s^2 coefficient.

    phi0 comes from Richardson extrapolation in s^2 of the last three
    snapshots; the quadratic coefficient from least squares of phi - phi0
    against s^2 over the late window [eta_max/window_fraction, eta_max].
    """
    regime = classify_regime(eos)
    if not regime.is_overdamped:
        raise UnsupportedRegimeError("frozen profiles exist only when overdamped")
    sigma = regime.sigma
    etas = evolution.etas
    taus = traj.tau(etas)
    tau_inf, _c1 = fit_tau_inf(traj.etas, traj.tau_samples, sigma)
    s = tau_inf - taus
    if np.any(s <= 0.0):
        raise InconclusiveError("window reaches past the fitted tau_inf",
                                diagnostics={"tau_inf": tau_inf})
    late = etas >= etas[-1] / window_fraction
    if np.count_nonzero(late) < 8:
        raise InconclusiveError("too few samples in the late window")
    cubes = evolution.phi_cubes()[late]
    s_late = s[late]
    geom = evolution.geometry

    phi0_cube = _richardson_limit(s_late[-3:], cubes[-3:])
    X = (s_late**2)[:, None]
    rhs = (cubes - phi0_cube).reshape(len(s_late), -1)
    coef, *_ = np.linalg.lstsq(X, rhs, rcond=None)
    n = geom.n
    quad = SpectralField(geom, coef.reshape(n, n, n).copy())
    phi0 = SpectralField(geom, phi0_cube.copy())

    lap = phi0.laplacian()
    reference = ((sigma - 1.0 / 3.0) / (4.0 - 2.0 * sigma)) * lap
    lap_norm = lap.l2_norm()
    err = (quad - reference).l2_norm() / max(reference.l2_norm(), 1e-300)
    projection = float(
        geom.volume * np.real(np.sum(quad.coeffs * np.conj(lap.coeffs)))
        / max(lap_norm**2, 1e-300)
    )
    return FrozenProfile(
        phi0=phi0,
        quad_coeff_field=quad,
        tau_inf=float(tau_inf),
        sigma=float(sigma),
        quad_rel_err=float(err),
        quad_scale=projection,
    )


def extract_tau_profile(eos, evolution, traj, threshold=DEFAULT_R_RESIDUAL_THRESHOLD):
    """Underdamped general-EoS profile in tau time with unit wave speed."""
    etas = evolution.etas
    taus = traj.tau(etas)
    eps = traj.eps(etas)
    _y, z = tau_coefficients(eos, eps)
    fp = eos.sound_speed_sq(eps)
    H = traj.H(etas)
    track = omega_damping(eos, traj)
    from scipy.interpolate import CubicSpline

    omega = np.exp(CubicSpline(np.log(track.etas), np.log(track.omega))(np.log(etas)))
    geom = evolution.geometry
    scale = 2.0 * np.pi / geom.length

    def tracks_iter():
        for k2_int in evolution.eigenvalues():
            if k2_int == 0:
                continue
            idx, phi, dphi = evolution.tracks(k2_int)
            col = lambda v: v[:, None]  # noqa: E731
            psi = phi / col(omega)
            dpsi = (dphi + col(1.5 * z * H) * phi) / col(np.sqrt(fp) * omega)
            yield k2_int, idx, psi, dpsi

    def speed_of(k2_int):
        return scale * math.sqrt(k2_int)  # unit wave speed in tau

    modes = _extract_modes(taus, tracks_iter(), geom, speed_of, threshold)
    w_lim = getattr(eos, "w", 0.0)
    return WaveProfile(geometry=geom, time_variable="tau", wave_speed_sq=1.0,
                       modes=modes, A=0.0, B=0.0, nu=nu_index(w_lim))


def critical_report(eos, traj):
    """tau ~ c1 log eta and the finite Htilde limit, nothing more."""
    regime = classify_regime(eos)
    if not regime.is_critical:
        raise UnsupportedRegimeError("critical report requires sigma = 1/3, w = 0")
    etas = traj.etas
    taus = traj.tau_samples
    cut = etas >= etas[-1] / 100.0
    coef = np.polyfit(np.log(etas[cut]), taus[cut], 1)
    fitted = np.polyval(coef, np.log(etas[cut]))
    resid = float(np.max(np.abs(fitted - taus[cut])) / np.max(np.abs(taus[cut])))
    late = etas >= etas[-1] / 10.0
    eps = traj.eps(etas[late])
    htilde = traj.H(etas[late]) / np.sqrt(eos.sound_speed_sq(eps))
    drift = float(htilde.max() / htilde.min() - 1.0)
    return CriticalReport(
        c1=float(coef[0]),
        tau_log_residual=resid,
        htilde_drift=drift,
        htilde_limit=float(htilde[-1]),
    )


def general_latetime_extract(eos, evolution, traj):
    """Dispatch on the late-time regime.

    Underdamped -> WaveProfile in tau time; overdamped -> FrozenProfile;
    critical -> CriticalReport (tau growth and Htilde limit only).
    """
    regime = classify_regime(eos)
    if regime.is_underdamped:
        return extract_tau_profile(eos, evolution, traj)
    if regime.is_overdamped:
        return extract_frozen_profile(eos, evolution, traj)
    return critical_report(eos, traj)
