"""Mode-by-mode time evolution of the perturbation potential.

For a linear equation of state each Fourier coefficient u_k obeys

    u'' + (2*nu+1)/eta * u' + w*|k|^2 * u = 0,
    nu = (5+3w) / (2*(1+3w)),  2*nu+1 = 6*(1+w)/(1+3w),

and for a general one

    u'' + 3*(1+f') * H * u' + 3*(f' - f/eps) * H^2 * u + f' * |k|^2 * u = 0

with background quantities evaluated along a solved trajectory.  |k|^2 here
is the (positive) Laplacian eigenvalue magnitude, (2*pi/L)^2 * k.k.

Implementation notes:

* integration runs in u = log(eta) with state (v, dv/du), which keeps
  accuracy uniform across decades and tames the 1/eta coefficient;
* the equations are linear and depend on k only through |k|^2, so we
  integrate one fundamental 2x2 transfer matrix per distinct eigenvalue and
  apply it to every coefficient sharing that eigenvalue.  The matrices are
  real, so Hermitian symmetry of the coefficient cube is preserved exactly;
* eigenvalues are batched into octave bands (ratio <= 4 within a band) so
  each adaptive step sequence is set by modes of comparable frequency, and
  slow modes never inherit the fastest mode's step size;
* dust (w = 0) needs no integration at all: every mode follows the
  homogeneous closed form A + B*eta^(-5).

Energies are evaluated via Parseval with a fixed summation order, so results
are independent of any threading of the band solves.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .eos import LinearEos
from .errors import (
    DataError,
    DomainError,
    PreconditionError,
    StiffnessError,
)
from .spectral import SpectralField

DEFAULT_TOL = 1e-10


def nu_index(w):
    """nu = (1/2)(5+3w)/(1+3w); lies in [1, 5/2] for w in [0, 1]."""
    if not 0.0 <= w <= 1.0:
        raise DomainError(f"w must lie in [0, 1], got {w}")
    return 0.5 * (5.0 + 3.0 * w) / (1.0 + 3.0 * w)


@dataclass(frozen=True)
class PerturbationState:
    """Potential and its eta-derivative at one time, as spectral fields."""

    eta: float
    phi: SpectralField
    dphi: SpectralField

    def __post_init__(self):
        if self.eta <= 0.0:
            raise DomainError(f"eta must be positive, got {self.eta}")
        if self.phi.geometry != self.dphi.geometry:
            raise DataError("phi and dphi live on different geometries")

    @property
    def geometry(self):
        return self.phi.geometry


# -- right-hand sides (public, eta form) ---------------------------------------


def mode_rhs_linear(w, k2, eta, u, du):
    """(u', u'') for one mode under the linear-EoS equation.

    The friction coefficient is 6*(1+w)/(1+3w) = 2*nu + 1.
    """
    if eta <= 0.0:
        raise DomainError(f"eta must be positive, got {eta}")
    fric = 6.0 * (1.0 + w) / (1.0 + 3.0 * w)
    return du, -fric * du / eta - w * k2 * u


def mode_rhs_general(eos, background, k2, eta, u, du):
    """(u', u'') for one mode on a general background.

    Reduces to mode_rhs_linear exactly when the EoS is linear, because then
    f/eps = f' = w kills the undifferentiated term.
    """
    eps = background.eps(eta)
    H = background.H(eta)
    f = eos.pressure(eps)
    fp = eos.sound_speed_sq(eps)
    d2u = -3.0 * (1.0 + fp) * H * du - 3.0 * (fp - f / eps) * H**2 * u - fp * k2 * u
    return du, d2u


# -- evolution models ----------------------------------------------------------


class _LinearModel:
    """Log-time coefficients for p = w*eps; no background needed."""

    def __init__(self, w):
        self.w = float(w)
        self.nu = nu_index(w)
        self.is_dust = w == 0.0

    def log_rhs(self, k2_arr):
        two_nu = 2.0 * self.nu
        w = self.w

        def rhs(u, y):
            yv = y.reshape(2, 2, -1)
            out = np.empty_like(yv)
            out[0] = yv[1]
            out[1] = -two_nu * yv[1] - (w * k2_arr * math.exp(2.0 * u)) * yv[0]
            return out.ravel()

        return rhs


class PeeledLinear:
    """Linear-EoS model for the rescaled unknown eta^(-p) * phi.

    For p on the indicial lattice, p in {0, -2nu}, the rescaled variable
    satisfies another damped-wave equation with friction (2nu+1+2p)/eta and
    no 1/eta^2 potential.  Propagating the decaying family (p = -2nu) in
    these variables keeps every intermediate O(1): evolving the raw seed,
    whose components are eta^(-2nu) apart, would cancel catastrophically and
    wipe out the subdominant data in double precision.
    """

    def __init__(self, w, p):
        self.w = float(w)
        self.nu = nu_index(w)
        two_nu = 2.0 * self.nu
        if not (abs(p) < 1e-12 or abs(p + two_nu) < 1e-12):
            raise DomainError(f"peel exponent must be 0 or -2nu, got {p}")
        self.p = float(p)
        self.is_dust = False  # integrate even for w = 0: the friction differs

    def log_rhs(self, k2_arr):
        fric = 2.0 * self.nu + 1.0 + 2.0 * self.p
        w = self.w

        def rhs(u, y):
            yv = y.reshape(2, 2, -1)
            out = np.empty_like(yv)
            out[0] = yv[1]
            out[1] = (1.0 - fric) * yv[1] - (w * k2_arr * math.exp(2.0 * u)) * yv[0]
            return out.ravel()

        return rhs


class _GeneralModel:
    """Log-time coefficients tabulated from a background trajectory.

    fric(u) = 3*(1+f')*eta*H, mass(u) = 3*(f'-f/eps)*(eta*H)^2,
    lapc(u) = f'*eta^2; all sampled on a fine log grid and splined, so ODE
    right-hand sides are deterministic and cheap.
    """

    GRID_POINTS = 4096

    def __init__(self, eos, background):
        self.eos = eos
        self.background = background
        self.is_dust = False
        lo, hi = background.eta_range
        us = np.linspace(math.log(lo), math.log(hi), self.GRID_POINTS)
        etas = np.exp(us)
        eps = background.eps(etas)
        h = background.H(etas) * etas
        f = eos.pressure(eps)
        fp = eos.sound_speed_sq(eps)
        self._fric = CubicSpline(us, 3.0 * (1.0 + fp) * h)
        self._mass = CubicSpline(us, 3.0 * (fp - f / eps) * h**2)
        self._lapc = CubicSpline(us, fp * etas**2)

    def log_rhs(self, k2_arr):
        fric, mass, lapc = self._fric, self._mass, self._lapc

        def rhs(u, y):
            yv = y.reshape(2, 2, -1)
            out = np.empty_like(yv)
            out[0] = yv[1]
            out[1] = yv[1] * (1.0 - fric(u)) - (mass(u) + lapc(u) * k2_arr) * yv[0]
            return out.ravel()

        return rhs


def _as_model(eos_or_w, background):
    if isinstance(eos_or_w, PeeledLinear):
        return eos_or_w
    if isinstance(eos_or_w, (int, float)):
        return _LinearModel(float(eos_or_w))
    if isinstance(eos_or_w, LinearEos):
        return _LinearModel(eos_or_w.w)
    if background is None:
        raise DomainError("a background trajectory is required for a general EoS")
    return _GeneralModel(eos_or_w, background)


# -- transfer-matrix engine ----------------------------------------------------


def _support_groups(state):
    """Distinct integer |k|^2 -> flat indices of supported modes."""
    geom = state.geometry
    mask = (state.phi.coeffs != 0) | (state.dphi.coeffs != 0)
    k2 = geom.k2_int.ravel()
    flat = np.nonzero(mask.ravel())[0]
    groups = {}
    for idx in flat:
        groups.setdefault(int(k2[idx]), []).append(idx)
    return {k: np.array(v) for k, v in sorted(groups.items())}


def _bands(k2_values):
    """Split sorted eigenvalues into octave bands (ratio <= 4 per band)."""
    k2_values = sorted(k2_values)
    bands = []
    current = [k2_values[0]]
    for k2 in k2_values[1:]:
        base = max(current[0], 1)
        if k2 <= 4 * base:
            current.append(k2)
        else:
            bands.append(current)
            current = [k2]
    bands.append(current)
    return bands


def _dust_transfer(u0, u_targets):
    """Closed-form transfer (same for every mode): u = A + B*eta^(-5)."""
    du = np.asarray(u_targets) - u0
    decay = np.exp(-5.0 * du)
    mats = np.zeros((len(du), 2, 2))
    mats[:, 0, 0] = 1.0
    mats[:, 0, 1] = (1.0 - decay) / 5.0
    mats[:, 1, 1] = decay
    return mats


def _solve_band(model, band_k2_phys, u0, u_targets, tol):
    n = len(band_k2_phys)
    rhs = model.log_rhs(np.asarray(band_k2_phys))
    y0 = np.zeros((2, 2, n))
    y0[0, 0] = 1.0  # columns of the identity: (v, dv/du) = (1, 0) and (0, 1)
    y0[1, 1] = 1.0
    sol = solve_ivp(
        rhs, (u0, u_targets[-1]), y0.ravel(), method="DOP853",
        t_eval=u_targets, rtol=tol, atol=1e-14, dense_output=False,
    )
    if not sol.success:
        raise StiffnessError(
            f"mode integration failed ({sol.message})", k2=tuple(band_k2_phys)
        )
    return sol.y.reshape(2, 2, n, len(u_targets))


def _transfer_matrices(model, k2_ints, scale, u0, u_targets, tol, threads=1):
    """dict integer |k|^2 -> (n_t, 2, 2) transfer matrices from u0 to each target."""
    if model.is_dust:
        mats = _dust_transfer(u0, u_targets)
        return {k2: mats for k2 in k2_ints}

    bands = _bands(k2_ints)

    def run(band):
        packed = _solve_band(model, [k2 * scale for k2 in band], u0, u_targets, tol)
        return {
            k2: np.transpose(packed[:, :, i, :], (2, 0, 1))
            for i, k2 in enumerate(band)
        }

    out = {}
    if threads and threads > 1 and len(bands) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for result in pool.map(run, bands):
                out.update(result)
    else:
        for band in bands:
            out.update(run(band))
    return {k2: out[k2] for k2 in sorted(out)}


class SampledEvolution:
    """Evolution of a state recorded at a list of times.

    Holds one real 2x2 transfer matrix per distinct Laplacian eigenvalue and
    per output time; states and per-mode coefficient tracks are assembled on
    demand.  All sampled times must lie on one side of the initial time.
    """

    def __init__(self, state, etas, groups, transfer, scale):
        self.state0 = state
        self.etas = np.asarray(etas, dtype=float)
        self._groups = groups  # int |k|^2 -> flat indices
        self._transfer = transfer  # int |k|^2 -> (n_t, 2, 2)
        self._scale = scale  # (2*pi/L)^2, maps integer |k|^2 to physical

    @property
    def geometry(self):
        return self.state0.geometry

    def _seed(self, flat_idx):
        phi0 = self.state0.phi.coeffs.ravel()[flat_idx]
        dv0 = self.state0.dphi.coeffs.ravel()[flat_idx] * self.state0.eta
        return phi0, dv0

    def tracks(self, k2_int):
        """(mode flat indices, phi track (n_t, m), dphi track (n_t, m))."""
        idx = self._groups[k2_int]
        mats = self._transfer[k2_int]
        phi0, dv0 = self._seed(idx)
        phi = mats[:, 0, 0, None] * phi0 + mats[:, 0, 1, None] * dv0
        dv = mats[:, 1, 0, None] * phi0 + mats[:, 1, 1, None] * dv0
        dphi = dv / self.etas[:, None]
        return idx, phi, dphi

    def eigenvalues(self):
        return sorted(self._groups)

    def state_at(self, i):
        geom = self.geometry
        n = geom.n
        phi = np.zeros(n**3, dtype=complex)
        dphi = np.zeros(n**3, dtype=complex)
        for k2_int in self._groups:
            idx, ph, dph = self.tracks(k2_int)
            phi[idx] = ph[i]
            dphi[idx] = dph[i]
        return PerturbationState(
            eta=float(self.etas[i]),
            phi=SpectralField(geom, phi.reshape(n, n, n)),
            dphi=SpectralField(geom, dphi.reshape(n, n, n)),
        )

    def final_state(self):
        return self.state_at(len(self.etas) - 1)

    def phi_cubes(self):
        """All sampled phi coefficient cubes, shape (n_t, n, n, n)."""
        geom = self.geometry
        n = geom.n
        out = np.zeros((len(self.etas), n**3), dtype=complex)
        for k2_int in self._groups:
            idx, ph, _ = self.tracks(k2_int)
            out[:, idx] = ph
        return out.reshape(len(self.etas), n, n, n)


def evolve_sampled(state, eos_or_w, etas, tol=DEFAULT_TOL, background=None, threads=1):
    """Evolve `state` and record it at each eta in `etas` (monotone, one-sided)."""
    etas = np.asarray(etas, dtype=float)
    if etas.ndim != 1 or etas.size == 0 or np.any(etas <= 0.0):
        raise DomainError("sample times must be a non-empty positive 1-d array")
    diffs = np.diff(etas)
    if not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise DomainError("sample times must be strictly monotone")
    side = np.sign(etas[-1] - state.eta)
    if np.any(np.sign(etas - state.eta) == -side):
        raise DomainError("sample times must lie on one side of the initial time")

    model = _as_model(eos_or_w, background)
    groups = _support_groups(state)
    scale = (2.0 * np.pi / state.geometry.length) ** 2
    u0 = math.log(state.eta)
    u_targets = np.log(etas)
    if groups:
        transfer = _transfer_matrices(model, list(groups), scale, u0, u_targets,
                                      tol, threads)
    else:
        transfer = {}  # identically zero state
    return SampledEvolution(state, etas, groups, transfer, scale)


def evolve(state, eos_or_w, eta_target, tol=DEFAULT_TOL, background=None, threads=1):
    """Evolve a state to eta_target (forward or backward) and return it."""
    if eta_target == state.eta:
        return state
    run = evolve_sampled(state, eos_or_w, [eta_target], tol, background, threads)
    return run.final_state()


# -- energies and density perturbations -----------------------------------------


def _quadratic_sums(geometry, phi_coeffs, dphi_coeffs):
    k2_phys = geometry.k2_int * (2.0 * np.pi / geometry.length) ** 2
    kin = np.sum(np.abs(dphi_coeffs) ** 2)
    grad = np.sum(k2_phys * np.abs(phi_coeffs) ** 2)
    return kin, grad


def energy_e1(state, w):
    """E1 = (1/2) int |phi'|^2 + w |grad phi|^2 and the monitor eta^(2(2nu+1))*E1.

    The monitor is non-decreasing in eta along any solution; its derivative is
    (2nu+1)*eta^(4nu+1) * int w |grad phi|^2 >= 0.
    """
    kin, grad = _quadratic_sums(state.geometry, state.phi.coeffs, state.dphi.coeffs)
    e1 = 0.5 * state.geometry.volume * (kin + w * grad)
    weight = state.eta ** (2.0 * (2.0 * nu_index(w) + 1.0))
    return float(e1), float(weight * e1)


def _psi_pair(eta, phi_coeffs, dphi_coeffs, w):
    """(psi, psi') coefficients with psi = eta^(nu+1/2) * phi."""
    p = nu_index(w) + 0.5
    psi = eta**p * phi_coeffs
    dpsi = eta**p * dphi_coeffs + p * eta ** (p - 1.0) * phi_coeffs
    return psi, dpsi


def _require_zero_mean(state, rtol=1e-12):
    scale = max(state.phi.max_abs_coeff(), state.dphi.max_abs_coeff(), 1e-300)
    mean = max(abs(state.phi.coeffs[0, 0, 0]), abs(state.dphi.coeffs[0, 0, 0]))
    if mean > rtol * scale:
        raise PreconditionError(
            f"state has nonzero spatial mean (|c0| = {mean:.3e})"
        )


def psi_energy_e3(state, w):
    """E3 = (1/2) int |psi'|^2 + w |grad psi|^2 for a zero-mean state."""
    _require_zero_mean(state)
    psi, dpsi = _psi_pair(state.eta, state.phi.coeffs, state.dphi.coeffs, w)
    kin, grad = _quadratic_sums(state.geometry, psi, dpsi)
    return float(0.5 * state.geometry.volume * (kin + w * grad))


def energy_series(evolution, w):
    """(E1, weighted E1, E3, mean phi) at every sampled time.

    E3 is evaluated on the zero-mean part; the k = 0 track is reported as
    mean_phi.  Mode sums run in fixed eigenvalue order for determinism.
    """
    etas = evolution.etas
    geom = evolution.geometry
    scale = (2.0 * np.pi / geom.length) ** 2
    nu = nu_index(w)
    kin = np.zeros(len(etas))
    grad = np.zeros(len(etas))
    kin3 = np.zeros(len(etas))
    grad3 = np.zeros(len(etas))
    mean_phi = np.zeros(len(etas))
    for k2_int in evolution.eigenvalues():
        _idx, phi, dphi = evolution.tracks(k2_int)
        if k2_int == 0:
            mean_phi = np.real(np.sum(phi, axis=1))
            kin += np.sum(np.abs(dphi) ** 2, axis=1)
            continue  # zero-mean energy E3 excludes the mean mode
        k2p = k2_int * scale
        kin += np.sum(np.abs(dphi) ** 2, axis=1)
        grad += k2p * np.sum(np.abs(phi) ** 2, axis=1)
        psi, dpsi = _psi_pair(etas[:, None], phi, dphi, w)
        kin3 += np.sum(np.abs(dpsi) ** 2, axis=1)
        grad3 += k2p * np.sum(np.abs(psi) ** 2, axis=1)
    vol = geom.volume
    e1 = 0.5 * vol * (kin + w * grad)
    weighted = etas ** (2.0 * (2.0 * nu + 1.0)) * e1
    e3 = 0.5 * vol * (kin3 + w * grad3)
    return e1, weighted, e3, mean_phi


def density_contrast(state, background):
    """delta eps / eps = -2 phi - 2 phi'/H + (2/3) Lap(phi)/H^2 as a field."""
    H = background.H(state.eta)
    coeffs = (
        -2.0 * state.phi.coeffs
        - (2.0 / H) * state.dphi.coeffs
        + (2.0 / (3.0 * H**2)) * state.phi.laplacian().coeffs
    )
    return SpectralField(state.geometry, coeffs)


def delta_epsilon(state, background):
    """delta eps = (-3 H phi' - 3 H^2 phi + Lap phi) / (4 pi G a^2).

    With kappa = 8 pi G / 3 the prefactor is 2 / (3 kappa a^2); dividing by
    eps from the constraint reproduces density_contrast identically.
    """
    H = background.H(state.eta)
    a = background.a(state.eta)
    kappa = background.kappa
    coeffs = (
        -3.0 * H * state.dphi.coeffs
        - 3.0 * H**2 * state.phi.coeffs
        + state.phi.laplacian().coeffs
    ) * (2.0 / (3.0 * kappa * a**2))
    return SpectralField(state.geometry, coeffs)
