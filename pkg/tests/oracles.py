"""Independent oracles used by the test suite.

These are deliberately written from closed forms and definitions, not by
calling into the package's own numerical paths, so that agreement between the
two is meaningful:

* the linear-EoS mode equation u'' + (2nu+1)/eta u' + w k^2 u = 0 has the
  exact solution u = eta^-nu (c1 J_nu(sqrt(w) k eta) + c2 Y_nu(sqrt(w) k eta))
  (substituting u = eta^-nu v(sqrt(w) k eta) turns it into Bessel's equation);
* the circle analogue u'' + u'/t + n^2 u = 0 is Bessel of order zero;
* discrete Fourier transforms evaluated from the definition via explicit
  phase matrices applied one axis at a time;
* field energies evaluated by quadrature on the grid (the uniform Riemann sum
  is spectrally accurate for trigonometric polynomials).
"""

from __future__ import annotations

import numpy as np
from scipy.special import jv, jvp, yv, yvp


def nu_of(w):
    return 0.5 * (5.0 + 3.0 * w) / (1.0 + 3.0 * w)


class LinearModeOracle:
    """Exact solution of u'' + (2nu+1)/eta u' + w*k2*u = 0 through (u0, du0).

    Falls back to the power-law pair {1, eta^(-2nu)} when w*k2 = 0.
    """

    def __init__(self, w, k2, eta0, u0, du0):
        self.w = w
        self.nu = nu_of(w)
        self.lam = np.sqrt(w * k2)
        if self.lam == 0.0:
            two_nu = 2.0 * self.nu
            B = -du0 * eta0 ** (two_nu + 1.0) / two_nu
            A = u0 - B * eta0 ** (-two_nu)
            self._powers = (A, B)
        else:
            self._powers = None
            M = np.array(
                [
                    [self._j(eta0), self._y(eta0)],
                    [self._dj(eta0), self._dy(eta0)],
                ]
            )
            self.c = np.linalg.solve(M, [u0, du0])

    def _j(self, eta):
        return eta**-self.nu * jv(self.nu, self.lam * eta)

    def _y(self, eta):
        return eta**-self.nu * yv(self.nu, self.lam * eta)

    def _dj(self, eta):
        return (-self.nu * eta ** (-self.nu - 1.0) * jv(self.nu, self.lam * eta)
                + eta**-self.nu * self.lam * jvp(self.nu, self.lam * eta))

    def _dy(self, eta):
        return (-self.nu * eta ** (-self.nu - 1.0) * yv(self.nu, self.lam * eta)
                + eta**-self.nu * self.lam * yvp(self.nu, self.lam * eta))

    def __call__(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self._powers is not None:
            A, B = self._powers
            return A + B * eta ** (-2.0 * self.nu)
        return self.c[0] * self._j(eta) + self.c[1] * self._y(eta)

    def derivative(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self._powers is not None:
            _A, B = self._powers
            two_nu = 2.0 * self.nu
            return -two_nu * B * eta ** (-two_nu - 1.0)
        return self.c[0] * self._dj(eta) + self.c[1] * self._dy(eta)

    def envelope(self, eta):
        """Amplitude scale of the oscillatory solution, for relative errors."""
        eta = np.asarray(eta, dtype=float)
        if self._powers is not None:
            A, B = self._powers
            return abs(A) + abs(B) * eta ** (-2.0 * self.nu)
        amp = np.hypot(self.c[0], self.c[1])
        return amp * eta**-self.nu * np.sqrt(2.0 / (np.pi * self.lam * eta))


class GowdyModeOracle:
    """Exact solution of u'' + u'/t + n2*u = 0 through (u0, du0) at t0.

    Order-zero Bessel pair for n2 > 0; {1, log t} for n2 = 0.
    """

    def __init__(self, n2, t0, u0, du0):
        self.lam = np.sqrt(n2)
        if self.lam == 0.0:
            B = du0 * t0
            A = u0 - B * np.log(t0)
            self._logs = (A, B)
        else:
            self._logs = None
            M = np.array(
                [
                    [jv(0, self.lam * t0), yv(0, self.lam * t0)],
                    [self.lam * jvp(0, self.lam * t0), self.lam * yvp(0, self.lam * t0)],
                ]
            )
            self.c = np.linalg.solve(M, [u0, du0])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self._logs is not None:
            A, B = self._logs
            return A + B * np.log(t)
        return self.c[0] * jv(0, self.lam * t) + self.c[1] * yv(0, self.lam * t)


def dft3_reference(values):
    """3-d DFT from the definition, normalised so the k=0 entry is the mean.

    Applies the explicit phase matrix W[k, j] = exp(-2 pi i k j / N) along
    each axis in turn; independent of numpy's FFT implementation.
    """
    values = np.asarray(values, dtype=complex)
    n = values.shape[0]
    j = np.arange(n)
    W = np.exp(-2j * np.pi * np.outer(j, j) / n)
    out = values
    for axis in range(3):
        out = np.moveaxis(np.tensordot(W, np.moveaxis(out, axis, 0), axes=(1, 0)), 0, axis)
    return out / n**3


def grid_quadrature_energy(phi_grid, dphi_grid, w, length):
    """E1 by the uniform Riemann sum of (1/2)(|phi'|^2 + w |grad phi|^2).

    The gradient is taken by one-axis spectral differentiation of the grid
    data (exact for band-limited fields).
    """
    n = phi_grid.shape[0]
    h3 = (length / n) ** 3
    kin = 0.5 * np.sum(dphi_grid**2) * h3
    grad = 0.0
    k = np.fft.fftfreq(n) * n * (2.0 * np.pi / length)
    for axis in range(3):
        shape = [1, 1, 1]
        shape[axis] = n
        ik = (1j * k).reshape(shape)
        d = np.real(np.fft.ifftn(np.fft.fftn(phi_grid) * ik))
        grad += 0.5 * w * np.sum(d**2) * h3
    return kin + grad


def loglog_slope(x, y):
    """Least-squares slope of log|y| against log x."""
    return np.polyfit(np.log(x), np.log(np.abs(y)), 1)[0]
