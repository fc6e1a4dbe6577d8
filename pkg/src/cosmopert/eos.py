"""Barotropic equations of state p = f(eps) and their derived quantities.

Three families are supported:

* linear         f(eps) = w * eps, w in [0, 1]; w = 0 is dust
* power law      f(eps) = w * eps + sum_j f_j * eps**a_j, an asymptotic form
                 valid either at high density (all a_j < 1, decreasing) or at
                 low density (all a_j > 1, increasing); the constructor infers
                 which side from the exponents
* polytropic     eps = m + K*n*m**((n+1)/n),  p = K*m**((n+1)/n), parametric
                 in m > 0 with 0 < K < 1, n > 1

f'(eps) is the squared sound speed and must lie in [0, 1]; it vanishes only
for dust.  The mass density m(eps) = exp(int_1^eps dxi/(xi+f(xi))) scales as
a**-3 along any background trajectory, which the solvers use as a cross-check.

The low-density behaviour of a non-linear equation of state is summarised by
sigma = a_1 - 1; together with w it decides the late-time regime:
underdamped (w > 0 or sigma < 1/3), critical (w = 0, sigma = 1/3) or
overdamped (w = 0, sigma > 1/3).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import (
    DomainError,
    NumericError,
    PhysicalityError,
    UnclassifiableEosError,
)

_POLYTROPIC_RTOL = 1e-12  # relative tolerance of the eps -> m inversion


@dataclass(frozen=True)
class LinearEos:
    """p = w * eps with constant w in [0, 1]."""

    w: float

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise DomainError(f"linear EoS requires w in [0, 1], got {self.w}")

    @property
    def is_dust(self):
        return self.w == 0.0

    def pressure(self, eps):
        eps = _check_eps(eps, allow_zero=True)
        return self.w * eps

    def sound_speed_sq(self, eps):
        eps = _check_eps(eps)
        return self.w * np.ones_like(eps) if np.ndim(eps) else self.w

    def second_derivative(self, eps):
        return np.zeros_like(np.asarray(eps, dtype=float)) if np.ndim(eps) else 0.0


@dataclass(frozen=True)
class PowerLawEos:
    """f(eps) = w*eps + sum f_j eps**a_j, valid on one side of the density axis.

    side == "high_density": all a_j < 1, strictly decreasing (eps -> inf form).
    side == "low_density":  all a_j > 1, strictly increasing (eps -> 0 form).
    """

    w: float
    terms: tuple  # ((f_1, a_1), (f_2, a_2), ...)
    side: str = field(init=False)

    def __post_init__(self):
        if self.w < 0.0:
            raise DomainError(f"power-law EoS requires w >= 0, got {self.w}")
        terms = tuple((float(f), float(a)) for f, a in self.terms)
        if not terms:
            raise DomainError("power-law EoS needs at least one correction term")
        object.__setattr__(self, "terms", terms)
        exps = [a for _, a in terms]
        if all(a < 1.0 for a in exps) and all(x > y for x, y in zip(exps, exps[1:])):
            object.__setattr__(self, "side", "high_density")
        elif all(a > 1.0 for a in exps) and all(x < y for x, y in zip(exps, exps[1:])):
            object.__setattr__(self, "side", "low_density")
        else:
            raise DomainError(
                "power-law exponents must be all < 1 strictly decreasing "
                "(high-density form) or all > 1 strictly increasing "
                "(low-density form)"
            )
        if self.w == 0.0 and terms[0][0] <= 0.0:
            raise DomainError("power-law EoS with w = 0 requires f_1 > 0")

    @property
    def is_dust(self):
        return False

    @property
    def sigma(self):
        """sigma = a_1 - 1 for the low-density form."""
        if self.side != "low_density":
            raise DomainError("sigma is defined for the low-density form only")
        return self.terms[0][1] - 1.0

    def pressure(self, eps):
        eps = _check_eps(eps, allow_zero=True)
        p = self.w * eps
        for f_j, a_j in self.terms:
            p = p + f_j * np.power(eps, a_j)
        return p

    def sound_speed_sq(self, eps):
        eps = _check_eps(eps)
        fp = self.w + np.zeros_like(np.asarray(eps, dtype=float))
        for f_j, a_j in self.terms:
            fp = fp + f_j * a_j * np.power(eps, a_j - 1.0)
        fp = fp if np.ndim(eps) else float(fp)
        _check_sound_speed(fp)
        return fp

    def second_derivative(self, eps):
        eps = _check_eps(eps)
        fpp = np.zeros_like(np.asarray(eps, dtype=float))
        for f_j, a_j in self.terms:
            fpp = fpp + f_j * a_j * (a_j - 1.0) * np.power(eps, a_j - 2.0)
        return fpp if np.ndim(eps) else float(fpp)


@dataclass(frozen=True)
class PolytropicEos:
    """eps = m + K*n*m**((n+1)/n), p = K*m**((n+1)/n) with 0 < K < 1, n > 1.

    The high-density slope is 1/n; the low-density expansion has f_1 = K and
    a_1 = (n+1)/n, hence sigma = 1/n.
    """

    K: float
    n: float

    def __post_init__(self):
        if not 0.0 < self.K < 1.0:
            raise DomainError(f"polytropic EoS requires 0 < K < 1, got {self.K}")
        if not self.n > 1.0:
            raise DomainError(f"polytropic EoS requires n > 1, got {self.n}")

    @property
    def is_dust(self):
        return False

    @property
    def sigma(self):
        return 1.0 / self.n

    def eps_of_parameter(self, m):
        return m + self.K * self.n * np.power(m, (self.n + 1.0) / self.n)

    def pressure_of_parameter(self, m):
        return self.K * np.power(m, (self.n + 1.0) / self.n)

    def parameter_of_eps(self, eps):
        """Invert eps(m) by bracketed root finding (eps(m) is increasing)."""
        eps = _check_eps(eps, allow_zero=True)
        if np.ndim(eps):
            return np.array([self.parameter_of_eps(float(e)) for e in eps])
        if eps == 0.0:
            return 0.0
        lo = eps / (1.0 + self.K * self.n * eps ** (1.0 / self.n))  # eps(m) >= m
        hi = float(eps)
        try:
            return brentq(
                lambda m: self.eps_of_parameter(m) - eps,
                0.5 * lo,
                hi,
                rtol=_POLYTROPIC_RTOL,
                maxiter=200,
            )
        except (ValueError, RuntimeError) as exc:
            raise NumericError(f"polytropic inversion failed at eps={eps}") from exc

    def pressure(self, eps):
        return self.pressure_of_parameter(self.parameter_of_eps(eps))

    def sound_speed_sq(self, eps):
        eps = _check_eps(eps)
        m = self.parameter_of_eps(eps)
        fp = self._dp_dm(m) / self._deps_dm(m)
        _check_sound_speed(fp)
        return fp

    def second_derivative(self, eps):
        eps = _check_eps(eps)
        m = self.parameter_of_eps(eps)
        dp, de = self._dp_dm(m), self._deps_dm(m)
        dpp = self.K * (self.n + 1.0) / self.n**2 * np.power(m, 1.0 / self.n - 1.0)
        dee = self.n * dpp
        # d(f')/deps = (d/dm)(dp/de) / (de/dm)
        return (dpp * de - dp * dee) / de**3

    def _dp_dm(self, m):
        return self.K * (self.n + 1.0) / self.n * np.power(m, 1.0 / self.n)

    def _deps_dm(self, m):
        return 1.0 + self.K * (self.n + 1.0) * np.power(m, 1.0 / self.n)


EquationOfState = LinearEos | PowerLawEos | PolytropicEos


def _check_eps(eps, allow_zero=False):
    arr = np.asarray(eps, dtype=float)
    if np.any(arr < 0.0) or (not allow_zero and np.any(arr == 0.0)):
        bound = ">= 0" if allow_zero else "> 0"
        raise DomainError(f"energy density must be {bound}")
    return eps


def _check_sound_speed(fp):
    bad = np.any(np.asarray(fp) < 0.0) or np.any(np.asarray(fp) > 1.0 + 1e-14)
    if bad:
        raise PhysicalityError(
            f"squared sound speed f'(eps) = {fp} outside [0, 1]"
        )


def eos_pressure(eos, eps):
    """p = f(eps)."""
    return eos.pressure(eps)


def eos_sound_speed_sq(eos, eps):
    """f'(eps), the squared sound speed; in [0, 1], zero only for dust."""
    return eos.sound_speed_sq(eps)


def high_density_slope(eos):
    """lim f(eps)/eps for eps -> inf (the effective linear w near a = 0)."""
    if isinstance(eos, LinearEos):
        return eos.w
    if isinstance(eos, PowerLawEos):
        if eos.side != "high_density":
            raise DomainError("EoS is not valid in the high-density limit")
        return eos.w
    if isinstance(eos, PolytropicEos):
        return 1.0 / eos.n
    raise DomainError(f"unknown EoS {eos!r}")


def mass_density(eos, eps):
    """m(eps) = exp(int_1^eps (xi + f(xi))**-1 dxi) by adaptive quadrature.

    Normalised so m(1) = 1; only ratios matter since m * a**3 is conserved.
    The integral is evaluated in v = log(xi), where the integrand
    1/(1 + f(e^v)/e^v) is bounded and smooth.
    """
    eps = _check_eps(eps)
    if np.ndim(eps):
        return np.array([mass_density(eos, float(e)) for e in eps])

    def integrand(v):
        xi = np.exp(v)
        return 1.0 / (1.0 + eos.pressure(xi) / xi)

    value, err = quad(integrand, 0.0, np.log(eps), epsabs=1e-13, epsrel=1e-12, limit=400)
    if not np.isfinite(value) or err > 1e-8 * max(1.0, abs(value)):
        raise NumericError(f"mass-density quadrature did not converge at eps={eps}")
    return float(np.exp(value))


RegimeKind = Literal["underdamped", "critical", "overdamped"]


@dataclass(frozen=True)
class RegimeClass:
    """Late-time dynamical regime together with sigma = a_1 - 1 when defined."""

    kind: RegimeKind
    sigma: float | None = None

    @property
    def is_underdamped(self):
        return self.kind == "underdamped"

    @property
    def is_critical(self):
        return self.kind == "critical"

    @property
    def is_overdamped(self):
        return self.kind == "overdamped"


_SIGMA_CRITICAL_TOL = 1e-12


def classify_regime(eos):
    """Classify the late-time regime of an equation of state.

    Underdamped iff w > 0 or sigma < 1/3, critical iff w = 0 and sigma = 1/3,
    overdamped iff w = 0 and sigma > 1/3.  Pure dust is excluded because
    sigma is undefined there.
    """
    if isinstance(eos, LinearEos):
        if eos.w == 0.0:
            raise UnclassifiableEosError("pure dust has no defined sigma")
        return RegimeClass("underdamped", sigma=None)
    if isinstance(eos, PowerLawEos):
        if eos.side != "low_density":
            raise DomainError("regime classification needs the low-density form")
        sigma = eos.sigma
        w = eos.w
    elif isinstance(eos, PolytropicEos):
        sigma = eos.sigma
        w = 0.0
    else:
        raise DomainError(f"unknown EoS {eos!r}")
    if w > 0.0 or sigma < 1.0 / 3.0 - _SIGMA_CRITICAL_TOL:
        return RegimeClass("underdamped", sigma=sigma)
    if abs(sigma - 1.0 / 3.0) <= _SIGMA_CRITICAL_TOL:
        return RegimeClass("critical", sigma=sigma)
    return RegimeClass("overdamped", sigma=sigma)


def tau_coefficients(eos, eps):
    """Coefficients (Y, Z) of the wave equation in sound-adapted time.

    Y = f'(eps) - f(eps)/eps
    Z = 1 + f'(eps) - (eps + f(eps)) * f''(eps) / (2 f'(eps))

    For a linear EoS this gives (0, 1 + w); for f = f1*eps^(sigma+1) with
    w = 0, Z -> 1 - sigma/2 as eps -> 0.
    """
    eps_arr = np.asarray(eps, dtype=float)
    if np.any(eps_arr <= 0.0):
        raise DomainError("tau coefficients require eps > 0")
    f = eos.pressure(eps)
    fp = eos.sound_speed_sq(eps)
    if np.any(np.asarray(fp) == 0.0):
        raise DomainError("tau coefficients require f'(eps) > 0")
    fpp = eos.second_derivative(eps)
    y = fp - f / eps_arr
    z = 1.0 + fp - 0.5 * (eps_arr + f) * fpp / fp
    if np.ndim(eps):
        return y, z
    return float(y), float(z)
