"""Real scalar fields on the flat 3-torus, stored as truncated Fourier cubes.

Conventions:

* grid points x_j = j*L/N per axis, j = 0..N-1, N odd (no unpaired Nyquist
  mode, so Hermitian symmetry c(-k) = conj(c(k)) is exact for real fields);
* f(x) = sum_k c_k exp(i * 2*pi/L * k.x) with integer k in [-(N-1)/2, (N-1)/2]^3
  stored in FFT order, so c_0 is the spatial mean;
* the Laplacian multiplies c_k by -(2*pi/L)^2 * |k|^2; with the default
  L = 2*pi the eigenvalue is exactly -|k|^2;
* Parseval: int |f|^2 dx = L^3 * sum_k |c_k|^2.

All evolutions in this package are linear, so no dealiasing is needed
anywhere; transforms are used only to move between grid and coefficients.

Field files are a JSON header {"N", "L", "layout": "row-major",
"kind": "grid"|"spectral", "data": <sidecar>} next to a raw little-endian
binary: float64 for grids, interleaved real/imag float64 pairs for spectra.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DataError, DomainError

DEFAULT_MODES = 17
DEFAULT_LENGTH = 2.0 * np.pi


@dataclass(frozen=True)
class TorusGeometry:
    """Cubic torus of side `length` sampled with `n` points per dimension."""

    n: int = DEFAULT_MODES
    length: float = DEFAULT_LENGTH

    def __post_init__(self):
        if self.n < 3 or self.n % 2 == 0:
            raise DomainError(f"mode count must be odd and >= 3, got {self.n}")
        if not self.length > 0.0:
            raise DomainError(f"torus side must be positive, got {self.length}")

    @property
    def k_max(self):
        return (self.n - 1) // 2

    @property
    def volume(self):
        return self.length**3

    @cached_property
    def wavenumbers(self):
        """Integer wavenumbers along one axis, FFT order."""
        return np.rint(np.fft.fftfreq(self.n) * self.n).astype(int)

    @cached_property
    def k2_int(self):
        """|k|^2 (integer) on the full cube, FFT order."""
        k = self.wavenumbers
        return (k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2)

    @cached_property
    def laplacian_eigenvalues(self):
        return -((2.0 * np.pi / self.length) ** 2) * self.k2_int

    def grid_axis(self):
        return np.arange(self.n) * (self.length / self.n)

    def mode_index(self, k):
        """Array index of integer mode k = (k1, k2, k3)."""
        if any(abs(int(c)) > self.k_max for c in k):
            raise DomainError(f"mode {k} outside the truncated cube")
        return tuple(int(c) % self.n for c in k)


@dataclass(frozen=True)
class SpectralField:
    """A real field represented by its complex Fourier coefficients."""

    geometry: TorusGeometry
    coeffs: np.ndarray  # complex128, shape (n, n, n), FFT order

    def __post_init__(self):
        n = self.geometry.n
        if self.coeffs.shape != (n, n, n):
            raise DataError(
                f"coefficient cube shape {self.coeffs.shape} != {(n, n, n)}"
            )

    # -- constructors ------------------------------------------------------

    @classmethod
    def zeros(cls, geometry):
        n = geometry.n
        return cls(geometry, np.zeros((n, n, n), dtype=complex))

    @classmethod
    def constant(cls, geometry, value):
        f = cls.zeros(geometry)
        f.coeffs[0, 0, 0] = value
        return f

    @classmethod
    def from_grid(cls, geometry, values):
        """Forward transform of N^3 real samples; c_0 is the spatial mean."""
        values = np.asarray(values, dtype=float)
        n = geometry.n
        if values.shape != (n, n, n):
            raise DataError(f"grid shape {values.shape} != {(n, n, n)}")
        if not np.all(np.isfinite(values)):
            raise DataError("grid samples must be finite")
        return cls(geometry, np.fft.fftn(values) / n**3)

    @classmethod
    def from_modes(cls, geometry, modes):
        """Build a real field from {k: amplitude}; the -k partner is implied.

        The k = 0 entry must be real.  With N odd no other mode is its own
        conjugate partner.
        """
        f = cls.zeros(geometry)
        for k, amp in modes.items():
            idx = geometry.mode_index(k)
            if idx == (0, 0, 0):
                if abs(complex(amp).imag) > 0.0:
                    raise DataError("k = 0 amplitude must be real")
                f.coeffs[idx] += complex(amp).real
                continue
            f.coeffs[idx] += amp
            f.coeffs[geometry.mode_index(tuple(-c for c in k))] += np.conj(amp)
        return f

    # -- transforms and calculus -------------------------------------------

    def to_grid(self):
        """Inverse transform back to N^3 real samples."""
        n = self.geometry.n
        grid = np.fft.ifftn(self.coeffs) * n**3
        return np.real(grid)

    def laplacian(self):
        return SpectralField(self.geometry, self.coeffs * self.geometry.laplacian_eigenvalues)

    def mean(self):
        return float(np.real(self.coeffs[0, 0, 0]))

    def zero_mean_split(self):
        """Return (mean, residual); mean + residual reconstructs the field."""
        residual = self.coeffs.copy()
        mean = residual[0, 0, 0]
        residual[0, 0, 0] = 0.0
        return float(np.real(mean)), SpectralField(self.geometry, residual)

    # -- algebra -------------------------------------------------------------

    def __add__(self, other):
        self._check_compatible(other)
        return SpectralField(self.geometry, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_compatible(other)
        return SpectralField(self.geometry, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.geometry, self.coeffs * scalar)

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if self.geometry != other.geometry:
            raise DataError("fields live on different geometries")

    # -- diagnostics ---------------------------------------------------------

    def l2_norm(self):
        """sqrt(int |f|^2 dx) via Parseval."""
        return float(np.sqrt(self.geometry.volume * np.sum(np.abs(self.coeffs) ** 2)))

    def max_abs_coeff(self):
        return float(np.max(np.abs(self.coeffs)))

    def hermitian_defect(self):
        """max |c(-k) - conj(c(k))|; zero for a real field."""
        flipped = self.coeffs[
            np.ix_(*(np.concatenate(([0], np.arange(self.geometry.n - 1, 0, -1))),) * 3)
        ]
        return float(np.max(np.abs(flipped - np.conj(self.coeffs))))

    def get_mode(self, k):
        return complex(self.coeffs[self.geometry.mode_index(k)])


def random_band_limited(geometry, rng, k_max=4, zero_mean=False, amplitude=1.0):
    """Seeded random real field supported on |k_i| <= k_max.

    Draws one complex normal per mode in a fixed iteration order, then
    mirrors the conjugate half, so the result is fully determined by the
    generator state.
    """
    if k_max > geometry.k_max:
        raise DomainError(f"k_max={k_max} exceeds the geometry cutoff {geometry.k_max}")
    f = SpectralField.zeros(geometry)
    for k1 in range(-k_max, k_max + 1):
        for k2 in range(-k_max, k_max + 1):
            for k3 in range(-k_max, k_max + 1):
                k = (k1, k2, k3)
                if k < (0, 0, 0) or k == (0, 0, 0):
                    continue  # fill only the lexicographic upper half
                re, im = rng.standard_normal(2)
                c = amplitude * (re + 1j * im) / np.sqrt(2.0)
                f.coeffs[geometry.mode_index(k)] = c
                f.coeffs[geometry.mode_index((-k1, -k2, -k3))] = np.conj(c)
    if not zero_mean:
        f.coeffs[0, 0, 0] = amplitude * rng.standard_normal()
    return f


# -- field files --------------------------------------------------------------


def write_field(path, field, kind="spectral"):
    """Write a field as JSON header + raw little-endian sidecar binary."""
    base, _ = os.path.splitext(path)
    bin_name = os.path.basename(base) + ".bin"
    bin_path = os.path.join(os.path.dirname(path), bin_name)
    if kind == "spectral":
        payload = np.ascontiguousarray(field.coeffs).astype("<c16").tobytes()
    elif kind == "grid":
        payload = np.ascontiguousarray(field.to_grid()).astype("<f8").tobytes()
    else:
        raise DataError(f"unknown field kind {kind!r}")
    header = {
        "N": field.geometry.n,
        "L": field.geometry.length,
        "layout": "row-major",
        "kind": kind,
        "data": bin_name,
    }
    with open(bin_path, "wb") as fh:
        fh.write(payload)
    with open(path, "w") as fh:
        json.dump(header, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_field(path):
    """Read a field written by write_field."""
    with open(path) as fh:
        header = json.load(fh)
    for key in ("N", "L", "layout", "kind", "data"):
        if key not in header:
            raise DataError(f"field header missing {key!r}")
    if header["layout"] != "row-major":
        raise DataError(f"unsupported layout {header['layout']!r}")
    geometry = TorusGeometry(n=int(header["N"]), length=float(header["L"]))
    n = geometry.n
    bin_path = os.path.join(os.path.dirname(path), header["data"])
    with open(bin_path, "rb") as fh:
        raw = fh.read()
    if header["kind"] == "spectral":
        coeffs = np.frombuffer(raw, dtype="<c16").reshape(n, n, n).astype(complex)
        return SpectralField(geometry, coeffs)
    if header["kind"] == "grid":
        grid = np.frombuffer(raw, dtype="<f8").reshape(n, n, n).astype(float)
        return SpectralField.from_grid(geometry, grid)
    raise DataError(f"unknown field kind {header['kind']!r}")
