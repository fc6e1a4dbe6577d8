"""One-dimensional analogue on the circle: P_tt + P_t/t = P_xx.

Near t = 0 solutions behave like P = k(x)*log t + omega(x) + o(1) with both
profiles freely prescribable and k allowed to change sign.  The expansion
mirrors the 3-d series with the indicial roots collapsing to a double zero,
so the log term is free data rather than forced:

    P ~ sum_{j even >= 0} (P_{j,0} + P_{j,1} log t) t^j
    j^2 * P_{j,1} = dxx P_{j-2,1}
    j^2 * P_{j,0} = dxx P_{j-2,0} - 2j * P_{j,1}

with P_{0,1} = k and P_{0,0} = omega.  Modes decouple under Fourier
transform; u_n'' + u_n'/t + kappa_n^2 u_n = 0 is integrated in log t per
distinct |n| with one real transfer matrix applied to both conjugate modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DataError, DomainError, StiffnessError

DEFAULT_CIRCLE_MODES = 33
DEFAULT_LENGTH = 2.0 * np.pi


@dataclass(frozen=True)
class CircleGeometry:
    n: int = DEFAULT_CIRCLE_MODES
    length: float = DEFAULT_LENGTH

    def __post_init__(self):
        if self.n < 3 or self.n % 2 == 0:
            raise DomainError(f"mode count must be odd and >= 3, got {self.n}")

    def grid_axis(self):
        return np.arange(self.n) * (self.length / self.n)

    def wavenumbers(self):
        return np.rint(np.fft.fftfreq(self.n) * self.n).astype(int)

    def kappa2(self):
        return (2.0 * np.pi / self.length) ** 2 * self.wavenumbers() ** 2


def circle_forward(geometry, values):
    values = np.asarray(values, dtype=float)
    if values.shape != (geometry.n,):
        raise DataError(f"grid shape {values.shape} != ({geometry.n},)")
    if not np.all(np.isfinite(values)):
        raise DataError("grid samples must be finite")
    return np.fft.fft(values) / geometry.n


def circle_inverse(geometry, coeffs):
    return np.real(np.fft.ifft(coeffs) * geometry.n)


def gowdy_series(geometry, k_coeffs, omega_coeffs, j_max=6):
    """Expansion coefficients {(j, log power) -> Fourier array} up to t^j_max."""
    lap = -geometry.kappa2()
    coeffs = {(0, 1): np.array(k_coeffs), (0, 0): np.array(omega_coeffs)}
    for j in range(2, j_max + 1, 2):
        c_log = lap * coeffs[(j - 2, 1)] / j**2
        c_pow = (lap * coeffs[(j - 2, 0)] - 2.0 * j * c_log) / j**2
        coeffs[(j, 1)] = c_log
        coeffs[(j, 0)] = c_pow
    return coeffs


def gowdy_evaluate(coeffs, t):
    """(P, P_t) Fourier coefficients of the truncated series at t."""
    log_t = math.log(t)
    shape = coeffs[(0, 0)].shape
    p = np.zeros(shape, dtype=complex)
    dp = np.zeros(shape, dtype=complex)
    for (j, l), c in coeffs.items():
        if l == 0:
            p += c * t**j
            dp += c * j * t ** (j - 1) if j > 0 else 0.0
        else:
            p += c * t**j * log_t
            dp += c * t ** (j - 1) * (j * log_t + 1.0)
    return p, dp


def _gowdy_transfer(kappa2_values, t0, t_targets, tol):
    """Transfer matrices of u'' + u'/t + kappa2 u = 0 in log t, per eigenvalue."""
    k2 = np.asarray(sorted(kappa2_values), dtype=float)
    n = k2.size

    def rhs(lt, y):
        yv = y.reshape(2, 2, n)
        out = np.empty_like(yv)
        out[0] = yv[1]
        out[1] = -(k2 * math.exp(2.0 * lt)) * yv[0]
        return out.ravel()

    y0 = np.zeros((2, 2, n))
    y0[0, 0] = 1.0
    y0[1, 1] = 1.0
    lts = np.log(np.asarray(t_targets, dtype=float))
    sol = solve_ivp(rhs, (math.log(t0), lts[-1]), y0.ravel(), method="DOP853",
                    t_eval=lts, rtol=tol, atol=1e-14)
    if not sol.success:
        raise StiffnessError(f"circle mode integration failed ({sol.message})")
    packed = sol.y.reshape(2, 2, n, len(lts))
    return {
        key: np.transpose(packed[:, :, i, :], (2, 0, 1))
        for i, key in enumerate(k2)
    }


class GowdySampledEvolution:
    """Sampled evolution of (P, P_t) Fourier coefficients on the circle."""

    def __init__(self, geometry, t0, p0, dp0, ts, tol=1e-12):
        self.geometry = geometry
        self.ts = np.asarray(ts, dtype=float)
        kappa2 = geometry.kappa2()
        transfer = _gowdy_transfer(set(kappa2.tolist()), t0, self.ts, tol)
        v0 = np.array(p0)
        dv0 = np.array(dp0) * t0  # d/dlog t
        n_t = len(self.ts)
        self.p = np.empty((n_t, geometry.n), dtype=complex)
        self.dp = np.empty((n_t, geometry.n), dtype=complex)
        for i, k2 in enumerate(kappa2):
            mats = transfer[k2]
            self.p[:, i] = mats[:, 0, 0] * v0[i] + mats[:, 0, 1] * dv0[i]
            self.dp[:, i] = (mats[:, 1, 0] * v0[i] + mats[:, 1, 1] * dv0[i]) / self.ts

    def at(self, i):
        return self.ts[i], self.p[i], self.dp[i]


def fit_gowdy_data(geometry, ts, p_samples, j_fit=4):
    """Recover (k, omega) Fourier coefficients by least squares near t = 0.

    Basis {t^j, t^j log t : j = 0, 2, ..., j_fit}; returns the (0, log) and
    (0, 1) coefficients together with the whole fitted table.
    """
    ts = np.asarray(ts, dtype=float)
    logs = np.log(ts)
    basis = []
    cols = []
    for j in range(0, j_fit + 1, 2):
        basis.append((j, 0))
        cols.append(ts**j)
        basis.append((j, 1))
        cols.append(ts**j * logs)
    X = np.stack(cols, axis=1)
    scales = np.linalg.norm(X, axis=0)
    sol, *_ = np.linalg.lstsq(X / scales, p_samples, rcond=None)
    sol = sol / scales[:, None]
    table = {pair: sol[i] for i, pair in enumerate(basis)}
    return table[(0, 1)], table[(0, 0)], table


@dataclass
class GowdyRoundtrip:
    geometry: CircleGeometry
    t_start: float
    t_end: float
    k_error: float
    omega_error: float
    k_fitted: np.ndarray  # grid values
    omega_fitted: np.ndarray
    p_end: np.ndarray  # grid values at t_end
    dp_end: np.ndarray


def gowdy_evolve_and_prescribe(kfun, omega, t_start, t_end, geometry=None,
                               j_max=6, tol=1e-12, n_fit=32):
    """Seed P = k log t + omega (+ higher corrections) at t_start, evolve to
    t_end, and refit (k, omega) from a window near the seed.

    k may change sign freely.  Errors are max-norm on the grid relative to
    the larger of the two input amplitudes.
    """
    kfun = np.asarray(kfun, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if geometry is None:
        geometry = CircleGeometry(n=len(kfun))
    if not 0.0 < t_start < 1.0:
        raise DomainError(f"t_start must lie in (0, 1), got {t_start}")
    if t_end <= t_start:
        raise DomainError("t_end must exceed t_start")

    k_hat = circle_forward(geometry, kfun)
    w_hat = circle_forward(geometry, omega)
    series = gowdy_series(geometry, k_hat, w_hat, j_max=j_max)
    p0, dp0 = gowdy_evaluate(series, t_start)

    window_hi = min(10.0 * t_start, t_end)
    ts = np.geomspace(t_start, window_hi, n_fit)
    ts = np.append(ts, t_end) if t_end > window_hi else ts
    run = GowdySampledEvolution(geometry, t_start, p0, dp0, ts, tol=tol)

    fit_slice = slice(0, n_fit)
    k_fit_hat, w_fit_hat, _ = fit_gowdy_data(geometry, run.ts[fit_slice],
                                             run.p[fit_slice])
    k_fit = circle_inverse(geometry, k_fit_hat)
    w_fit = circle_inverse(geometry, w_fit_hat)
    scale = max(np.max(np.abs(kfun)), np.max(np.abs(omega)), 1e-300)
    return GowdyRoundtrip(
        geometry=geometry,
        t_start=t_start,
        t_end=t_end,
        k_error=float(np.max(np.abs(k_fit - kfun)) / scale),
        omega_error=float(np.max(np.abs(w_fit - omega)) / scale),
        k_fitted=k_fit,
        omega_fitted=w_fit,
        p_end=circle_inverse(geometry, run.p[-1]),
        dp_end=circle_inverse(geometry, run.dp[-1]),
    )
