"""FLRW background solutions a(eta), eps(eta) for a chosen equation of state.

The system integrated (in units with kappa := 8*pi*G/3, default 1) is

    a''   = (kappa/2) * (eps - 3 f(eps)) * a^3
    eps'  = -3 H (eps + f(eps)),       H = a'/a

subject to the Hamiltonian constraint H^2 = kappa * a^2 * eps, which fixes
H(eta0) from (a0, eps0) on the expanding branch and is preserved exactly by
the flow; its sampled residual is a solver-quality check, not an input.

Integration is done in u = log(eta) with state (log a, h, c, tau), where
h = eta*H and c = log(kappa*a^2*eps*eta^2/h^2) is the log-constraint itself;
eps is reconstructed from c.  This removes the 1/eta stiffness near the
singularity, makes the linear-EoS solution exactly affine in u, and keeps
the constraint residual at the integrator's absolute error level instead of
amplifying it by the (potentially huge) dynamic range of log(eps):
dc/du = h*(1 - 3f/eps)*(1 - e^c) vanishes identically on the constraint
surface, so c measures pure solver drift.  tau is the sound-adapted time,
d tau/d eta = sqrt(f'(eps)), zeroed at eta0 (NaN for dust).

For a linear EoS the closed form a = a0*(eta/eta0)^(2/(1+3w)),
H = 2/((1+3w)*eta) is available separately and serves as an oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .eos import (
    LinearEos,
    classify_regime,
    high_density_slope,
    mass_density,
)
from .errors import (
    DomainError,
    InterpolationError,
    NumericError,
    SingularityReachedError,
    UndefinedTimeError,
)

DEFAULT_KAPPA = 1.0  # 8*pi*G/3
DEFAULT_TOL = 1e-10
_LN_EPS_LIMIT = 650.0  # |log eps| beyond which we declare the singularity reached
_ROUNDOFF_FLOOR = 2e-12  # accumulated double-precision floor of the constraint check


@dataclass(frozen=True)
class BackgroundState:
    """One sampled point of a background trajectory."""

    eta: float
    a: float
    H: float
    eps: float
    m: float
    tau: float  # NaN when the sound speed vanishes (dust)


def background_closed_form_linear(w, eta0, a0, eta, kappa=DEFAULT_KAPPA):
    """Exact linear-EoS background state at eta.

    a = a0*(eta/eta0)^(2/(1+3w)), H = 2/((1+3w)*eta), eps from the constraint,
    m = eps^(1/(1+w)), tau = sqrt(w)*(eta - eta0).
    """
    if not 0.0 <= w <= 1.0:
        raise DomainError(f"w must lie in [0, 1], got {w}")
    if eta <= 0.0 or eta0 <= 0.0:
        raise DomainError("conformal time must be positive")
    q = 2.0 / (1.0 + 3.0 * w)
    a = a0 * (eta / eta0) ** q
    H = q / eta
    eps = H**2 / (kappa * a**2)
    m = eps ** (1.0 / (1.0 + w))
    tau = math.sqrt(w) * (eta - eta0) if w > 0.0 else math.nan
    return BackgroundState(eta=eta, a=a, H=H, eps=eps, m=m, tau=tau)


class LinearBackground:
    """Closed-form background for p = w*eps; valid on all of (0, inf)."""

    def __init__(self, w, eta0=1.0, a0=1.0, kappa=DEFAULT_KAPPA):
        self.eos = LinearEos(w)
        self.w = float(w)
        self.eta0 = float(eta0)
        self.a0 = float(a0)
        self.kappa = float(kappa)
        self.eta_range = (0.0, math.inf)

    def a(self, eta):
        q = 2.0 / (1.0 + 3.0 * self.w)
        return self.a0 * (np.asarray(eta, float) / self.eta0) ** q

    def H(self, eta):
        return 2.0 / ((1.0 + 3.0 * self.w) * np.asarray(eta, float))

    def eps(self, eta):
        return self.H(eta) ** 2 / (self.kappa * self.a(eta) ** 2)

    def tau(self, eta):
        if self.w == 0.0:
            raise UndefinedTimeError("tau undefined for dust")
        return math.sqrt(self.w) * (np.asarray(eta, float) - self.eta0)

    def sound_speed_sq(self, eta):
        return self.w + 0.0 * np.asarray(eta, float)


class BackgroundTrajectory:
    """Solved background with dense interpolation and tabulated samples.

    Attributes `etas`, `a_samples`, `H_samples`, `eps_samples`, `m_samples`,
    `tau_samples` hold the sampled rows (time-ordered); `a(eta)` etc. evaluate
    the dense 7th-order interpolant of the integrator anywhere in range.
    """

    interpolation_order = 7  # dense output of the 8(5,3) pair

    def __init__(self, eos, kappa, etas, sols, u0, tau_valid):
        self.eos = eos
        self.kappa = float(kappa)
        self.etas = etas
        self._sols = sols  # (sol_below, sol_above), either may be None
        self._u0 = u0
        self.tau_valid = tau_valid
        self.eta_range = (float(etas[0]), float(etas[-1]))
        ys = self._eval_u(np.log(etas))
        self.a_samples = np.exp(ys[0])
        self.H_samples = ys[1] / etas
        self.eps_samples = _eps_from_state(ys, np.log(etas), self.kappa)
        self.tau_samples = ys[3] if tau_valid else np.full_like(etas, np.nan)
        self.m_samples = mass_density(eos, self.eps_samples)

    # -- dense evaluation ----------------------------------------------------

    def _eval_u(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        lo, hi = np.log(self.eta_range[0]), np.log(self.eta_range[1])
        if np.any(u < lo - 1e-12) or np.any(u > hi + 1e-12):
            raise InterpolationError(
                f"eta outside tabulated range [{self.eta_range[0]}, {self.eta_range[1]}]"
            )
        out = np.empty((4, u.size))
        below = u <= self._u0
        sol_lo, sol_hi = self._sols
        if np.any(below):
            out[:, below] = (sol_lo or sol_hi).sol(u[below])
        if np.any(~below):
            out[:, ~below] = (sol_hi or sol_lo).sol(u[~below])
        return out

    def a(self, eta):
        return _scalarize(np.exp(self._eval_u(np.log(eta))[0]), eta)

    def H(self, eta):
        return _scalarize(self._eval_u(np.log(eta))[1] / np.asarray(eta, float), eta)

    def eps(self, eta):
        u = np.log(eta)
        ys = self._eval_u(u)
        return _scalarize(_eps_from_state(ys, np.atleast_1d(u), self.kappa), eta)

    def tau(self, eta):
        if not self.tau_valid:
            raise UndefinedTimeError("tau undefined: sound speed vanishes (dust)")
        return _scalarize(self._eval_u(np.log(eta))[3], eta)

    def sound_speed_sq(self, eta):
        return self.eos.sound_speed_sq(self.eps(eta))

    # -- diagnostics -----------------------------------------------------------

    def constraint_residual(self):
        """Relative residual |H^2 - kappa a^2 eps| / H^2 at the samples."""
        h2 = self.H_samples**2
        return np.abs(h2 - self.kappa * self.a_samples**2 * self.eps_samples) / h2

    def states(self):
        return [
            BackgroundState(eta=e, a=a, H=h, eps=x, m=m, tau=t)
            for e, a, h, x, m, t in zip(
                self.etas, self.a_samples, self.H_samples,
                self.eps_samples, self.m_samples, self.tau_samples,
            )
        ]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["eta", "a", "H", "eps", "m", "tau"])
            for s in self.states():
                writer.writerow([repr(s.eta), repr(s.a), repr(s.H),
                                 repr(s.eps), repr(s.m), repr(s.tau)])


def _scalarize(values, template):
    return float(values[0]) if np.ndim(template) == 0 else values


def _ln_eps(y, u, kappa):
    """log eps from the state (log a, h, c, tau) at log-time u."""
    return 2.0 * np.log(y[1]) + y[2] - np.log(kappa) - 2.0 * (y[0] + u)


def _eps_from_state(ys, u, kappa):
    return np.exp(_ln_eps(ys, u, kappa))


def _background_rhs(eos, kappa):
    def rhs(u, y):
        _lna, h, c, _tau = y
        # clamp: trial steps may probe past the termination events
        lne = min(max(_ln_eps(y, u, kappa), -700.0), 700.0)
        eps = math.exp(lne)
        f_over_eps = eos.pressure(eps) / eps
        fp = eos.sound_speed_sq(eps)
        dh = h + 0.5 * h * h * math.exp(c) * (1.0 - 3.0 * f_over_eps) - h * h
        dc = h * (1.0 - 3.0 * f_over_eps) * (1.0 - math.exp(c))
        dtau = math.exp(u) * math.sqrt(fp)
        return (h, dh, dc, dtau)

    return rhs


def _eps_events(kappa):
    def high(u, y):
        return _ln_eps(y, u, kappa) - _LN_EPS_LIMIT

    def low(u, y):
        return _ln_eps(y, u, kappa) + _LN_EPS_LIMIT

    high.terminal = low.terminal = True
    return [high, low]


def solve_background(eos, eta0, a0, eps0, eta_range, tol=DEFAULT_TOL,
                     n_samples=257, kappa=DEFAULT_KAPPA):
    """Integrate the background over eta_range through (eta0, a0, eps0).

    H(eta0) is always taken as the positive root of the constraint.  Returns a
    BackgroundTrajectory sampled on a geometric grid (eta0 inserted); raises
    SingularityReachedError if eps leaves the representable range inside the
    requested window, PhysicalityError if the sound speed leaves [0, 1].
    """
    lo, hi = float(eta_range[0]), float(eta_range[1])
    if not (0.0 < lo < hi):
        raise DomainError(f"eta_range must satisfy 0 < lo < hi, got {eta_range}")
    if not (lo <= eta0 <= hi):
        raise DomainError(f"eta0={eta0} outside eta_range={eta_range}")
    if eps0 <= 0.0 or a0 <= 0.0:
        raise DomainError("a0 and eps0 must be positive")
    eos.sound_speed_sq(eps0)  # physicality check at the anchor

    h0 = eta0 * a0 * math.sqrt(kappa * eps0)  # expanding branch
    y0 = (math.log(a0), h0, 0.0, 0.0)  # c = 0: constraint holds at the anchor
    rhs = _background_rhs(eos, kappa)
    u0, ulo, uhi = math.log(eta0), math.log(lo), math.log(hi)

    def run(u_end):
        sol = solve_ivp(
            rhs, (u0, u_end), y0, method="DOP853", rtol=tol, atol=1e-14,
            dense_output=True, events=_eps_events(kappa),
        )
        if sol.status == 1:  # terminal event: singularity side reached
            raise SingularityReachedError(
                "energy density left the representable range",
                last_eta=math.exp(sol.t[-1]),
            )
        if not sol.success:
            # step collapse here means a -> 0 at finite eta (a pole of h),
            # which the log-eps event cannot reach first
            if "step size" in sol.message.lower():
                raise SingularityReachedError(
                    f"integration stalled approaching a singularity: {sol.message}",
                    last_eta=math.exp(sol.t[-1]),
                )
            raise NumericError(f"background integration failed: {sol.message}")
        return sol

    sol_lo = run(ulo) if ulo < u0 else None
    sol_hi = run(uhi) if uhi > u0 else None

    etas = np.geomspace(lo, hi, n_samples)
    etas = np.unique(np.concatenate([etas, [eta0]]))
    tau_valid = not (isinstance(eos, LinearEos) and eos.is_dust)
    traj = BackgroundTrajectory(eos, kappa, etas, (sol_lo, sol_hi), u0, tau_valid)

    res = traj.constraint_residual().max()
    bound = 10.0 * max(tol, _ROUNDOFF_FLOOR)
    if res > bound:
        raise NumericError(
            f"constraint residual {res:.3e} exceeds {bound:.3e}"
        )
    return traj


def solve_background_singularity_aligned(eos, eta_range, tol=DEFAULT_TOL,
                                         n_samples=257, kappa=DEFAULT_KAPPA):
    """Background whose curvature singularity sits at eta = 0.

    The Friedmann/continuity system is autonomous in eta, so the singularity
    location is set by the data.  Anchoring at the small end of the range with
    the leading high-density closed form (effective slope w = lim f/eps)
    places the singularity at eta = 0 up to a relative offset of the order of
    the first EoS correction there, which is negligible for the small anchors
    used here.
    """
    w_inf = high_density_slope(eos)
    eta_anchor = float(eta_range[0])
    # normalise a(1) = 1 for the limiting linear solution, so eps at the
    # anchor is deep in the high-density regime when eta_anchor is small
    ref = background_closed_form_linear(w_inf, 1.0, 1.0, eta_anchor, kappa)
    return solve_background(
        eos, eta_anchor, ref.a, ref.eps, eta_range,
        tol=tol, n_samples=n_samples, kappa=kappa,
    )


@dataclass(frozen=True)
class TauTimeResult:
    """tau along a trajectory plus, when the regime is overdamped, the
    extrapolated finite limit tau_inf from tau ~ tau_inf + C1*eta^(1-3sigma)."""

    etas: np.ndarray
    taus: np.ndarray
    tau_inf: float | None
    c1: float | None


def tau_time(traj, window_decades=1.0):
    """Return tau samples (tau(eta0) = 0) and an overdamped tau_inf estimate.

    The extrapolation fits tau against eta^(1-3*sigma) with an intercept over
    the final `window_decades` of samples.
    """
    if not traj.tau_valid:
        raise UndefinedTimeError("tau undefined for dust")
    etas, taus = traj.etas, traj.tau_samples
    if np.any(~np.isfinite(taus)):
        raise NumericError("tau samples are not finite")
    tau_inf = c1 = None
    try:
        regime = classify_regime(traj.eos)
    except DomainError:
        regime = None
    if regime is not None and regime.is_overdamped:
        tau_inf, c1 = fit_tau_inf(etas, taus, regime.sigma, window_decades)
    return TauTimeResult(etas=etas, taus=taus, tau_inf=tau_inf, c1=c1)


def fit_tau_inf(etas, taus, sigma, window_decades=1.0):
    """Least squares of tau against {1, eta^(1-3sigma)} over the last decade(s)."""
    cut = etas >= etas[-1] / 10.0**window_decades
    x = etas[cut] ** (1.0 - 3.0 * sigma)
    design = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(design, taus[cut], rcond=None)
    return float(coef[0]), float(coef[1])
