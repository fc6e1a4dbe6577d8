"""Series expansions of the potential at the eta -> 0 singularity.

Any solution of the linear-EoS evolution admits an asymptotic expansion

    phi(eta) ~ sum_k (C_{k,0} + C_{k,1} * log eta) * eta^k

with exponents on the lattice {-2nu + 2i} U {2i}, i >= 0, and smooth
coefficient fields on the torus.  The two free data are psi1 = C_{-2nu,0}
and psi2 = C_{0,0}; everything else follows from the recursions

    k*(k+2nu) * C_{k,0} = w * Lap(C_{k-2,0}) - (2k+2nu) * C_{k,1}
    k*(k+2nu) * C_{k,1} = w * Lap(C_{k-2,1})

Log terms appear only when nu is an integer (w = 1 or w = 1/9 on [0, 1]):
the two exponent lattices then collide at k = 0, where the recursion forces
C_{0,1} = (w/2nu) * Lap(C_{-2,0}) while C_{0,0} stays free.  No log term
ever carries a negative exponent.  For dust (w = 0) every sourced term
vanishes and the series is exactly psi2 + psi1 * eta^(-5).

The module also provides the converse direction: fitting (psi1, psi2) and
low-lying coefficients out of sampled solutions by weighted least squares on
a small-eta window, and the reconstruction seed -> evolve roundtrip that
realises the data-prescription theorem operationally.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .eos import LinearEos, high_density_slope
from .errors import DomainError, IllConditionedFitError
from .evolver import PerturbationState, evolve_sampled, nu_index
from .spectral import SpectralField

RESONANCE_ATOL = 1e-9
NEAR_RESONANCE_ATOL = 1e-6
DEFAULT_K_MAX = 8
DEFAULT_K_FIT = 4
DEFAULT_WINDOW = (1e-3, 5e-2)
DEFAULT_WINDOW_SAMPLES = 40
_KEY_DECIMALS = 9


def is_resonant(w):
    """True when nu(w) is an integer, so the expansion carries log terms.

    Exact for w given as 1 or 1/9; otherwise decided within 1e-9 on nu, with
    a warning for near-resonant w where the recursion denominators become
    small and the series ill-conditioned.
    """
    if w == 1.0 or w == 1.0 / 9.0:
        return True
    nu = nu_index(w)
    dist = abs(nu - round(nu))
    if dist < RESONANCE_ATOL:
        return True
    if dist < NEAR_RESONANCE_ATOL:
        warnings.warn(
            f"w={w} is near-resonant (|nu - round(nu)| = {dist:.2e}); "
            "series coefficients may be ill-conditioned",
            stacklevel=2,
        )
    return False


def exponent_lattice(w, k_max):
    """Sorted exponents {-2nu+2i} U {2i} up to k_max (merged when resonant)."""
    two_nu = 2.0 * nu_index(w)
    exps = set()
    k = -two_nu
    while k <= k_max + 1e-12:
        exps.add(_key(k))
        k += 2.0
    k = 0.0
    while k <= k_max + 1e-12:
        exps.add(_key(k))
        k += 2.0
    return sorted(exps)


def _key(k):
    return round(float(k), _KEY_DECIMALS)


@dataclass(frozen=True)
class SingularityData:
    """Free data of the expansion: psi1 at exponent -2nu, psi2 at exponent 0."""

    psi1: SpectralField
    psi2: SpectralField

    def __post_init__(self):
        if self.psi1.geometry != self.psi2.geometry:
            raise DomainError("psi1 and psi2 live on different geometries")

    @property
    def geometry(self):
        return self.psi1.geometry


@dataclass(frozen=True)
class SeriesTerm:
    k: float
    log_power: int  # 0 or 1
    coeff: SpectralField


@dataclass(frozen=True)
class SeriesExpansion:
    w: float
    nu: float
    k_max: float
    entries: tuple  # SeriesTerm, sorted by (k, log_power)

    def coefficient(self, k, log_power=0):
        for term in self.entries:
            if _key(term.k) == _key(k) and term.log_power == log_power:
                return term.coeff
        return None

    def exponents(self):
        return sorted({_key(t.k) for t in self.entries})


def build_series(w, data, k_max=DEFAULT_K_MAX):
    """Construct the expansion coefficients from (psi1, psi2) up to k_max."""
    if k_max < 0:
        raise DomainError(f"k_max must be non-negative, got {k_max}")
    nu = nu_index(w)
    two_nu = 2.0 * nu
    resonant = is_resonant(w)
    geom = data.geometry

    coeffs = {}  # (exponent key, log power) -> SpectralField
    coeffs[(_key(-two_nu), 0)] = data.psi1
    coeffs[(_key(0.0), 0)] = data.psi2

    def source(k, log_power):
        prev = coeffs.get((_key(k - 2.0), log_power))
        if prev is None or w == 0.0:
            return None
        return w * prev.laplacian()

    for k in exponent_lattice(w, k_max):
        if k == _key(-two_nu):
            continue
        if abs(k) < 1e-12:
            # k = 0: psi2 is free; on resonance the collision of the two
            # lattices forces the log coefficient instead
            if resonant:
                src = source(0.0, 0)
                if src is not None:
                    coeffs[(_key(0.0), 1)] = (1.0 / two_nu) * src
            continue
        indicial = k * (k + two_nu)
        if abs(indicial) < 1e-12:
            raise DomainError(
                f"vanishing indicial factor at non-resonant exponent k={k}"
            )
        src_log = source(k, 1)
        if src_log is not None and k > 0:
            coeffs[(_key(k), 1)] = (1.0 / indicial) * src_log
        src = source(k, 0)
        log_here = coeffs.get((_key(k), 1))
        if src is not None or log_here is not None:
            total = src if src is not None else SpectralField.zeros(geom)
            if log_here is not None:
                total = total - (2.0 * k + two_nu) * log_here
            coeffs[(_key(k), 0)] = (1.0 / indicial) * total

    entries = tuple(
        SeriesTerm(k=k, log_power=l, coeff=c)
        for (k, l), c in sorted(coeffs.items())
        if c.max_abs_coeff() > 0.0 or (l == 0 and (_key(k) == _key(-two_nu) or k == 0.0))
    )
    return SeriesExpansion(w=w, nu=nu, k_max=float(k_max), entries=entries)


def evaluate_series(series, eta):
    """(phi, dphi) of the truncated expansion at eta.

    Valid as an asymptotic approximation for small eta; evaluating at
    eta >= 1 only triggers a warning since the series is formal there.
    """
    if eta <= 0.0:
        raise DomainError(f"eta must be positive, got {eta}")
    if eta >= 1.0:
        warnings.warn(f"series evaluated at eta={eta} >= 1, outside its "
                      "asymptotic regime", stacklevel=2)
    geom = series.entries[0].coeff.geometry
    log_eta = math.log(eta)
    phi = SpectralField.zeros(geom)
    dphi = SpectralField.zeros(geom)
    for term in series.entries:
        k, c = term.k, term.coeff
        if term.log_power == 0:
            phi = phi + (eta**k) * c
            dphi = dphi + (k * eta ** (k - 1.0)) * c
        else:
            phi = phi + (eta**k * log_eta) * c
            dphi = dphi + (eta ** (k - 1.0) * (k * log_eta + 1.0)) * c
    return phi, dphi


def picard_first_correction(w, data):
    """First sourced coefficients from one iteration of the integral form.

    Integrating d/d eta (eta^(2nu+1) phi') = w eta^(2nu+1) Lap(phi) once from
    the two-term leading ansatz gives closed forms for the coefficients at
    exponents -2nu+2 and 2; an independent cross-check of the recursion.
    Requires nu != 1 (otherwise -2nu+2 resonates at zero).
    """
    nu = nu_index(w)
    if abs(nu - 1.0) < 1e-9:
        raise DomainError("Picard cross-check needs nu != 1")
    low = (w / (2.0 * (2.0 - 2.0 * nu))) * data.psi1.laplacian()
    high = (w / (2.0 * (2.0 * nu + 2.0))) * data.psi2.laplacian()
    return {_key(-2.0 * nu + 2.0): low, _key(2.0): high}


def reconstruct_from_singularity_data(w, data, eta_start, eta_end,
                                      k_max=DEFAULT_K_MAX, tol=1e-10):
    """Seed the evolution from the series near the singularity.

    Evaluates the truncated series at eta_start and evolves to eta_end; the
    seed's neglected tail is O(eta_start^(next omitted exponent)).
    """
    run = reconstruct_sampled(w, data, eta_start, [eta_end], k_max=k_max, tol=tol)
    return run.final_state()


def evaluate_series_peeled(series, eta, peel):
    """(v, dv/deta) of the rescaled series eta^(-peel) * phi at eta.

    With peel = -2nu every exponent of the decaying family shifts to >= 0,
    so the evaluation stays O(1) near the singularity.
    """
    geom = series.entries[0].coeff.geometry
    log_eta = math.log(eta)
    v = SpectralField.zeros(geom)
    dv = SpectralField.zeros(geom)
    for term in series.entries:
        q, c = term.k - peel, term.coeff
        if term.log_power == 0:
            v = v + (eta**q) * c
            dv = dv + (q * eta ** (q - 1.0)) * c
        else:
            v = v + (eta**q * log_eta) * c
            dv = dv + (eta ** (q - 1.0) * (q * log_eta + 1.0)) * c
    return v, dv


class _PeeledRun:
    """Sampled evolution of the rescaled variable, mapped back to phi."""

    def __init__(self, run, peel):
        self._run = run
        self._peel = peel
        self.etas = run.etas
        self.geometry = run.geometry

    def phi_cubes(self):
        scale = self.etas ** self._peel
        return self._run.phi_cubes() * scale[:, None, None, None]

    def state_at(self, i):
        s = self._run.state_at(i)
        eta = s.eta
        scale = eta**self._peel
        phi = scale * s.phi
        dphi = scale * s.dphi + (self._peel * scale / eta) * s.phi
        return PerturbationState(eta=eta, phi=phi, dphi=dphi)


class _SplitSamples:
    """Sum of independently evolved sample sets sharing one time grid.

    Near the singularity the two data components differ by eta^(-2nu), up to
    1e15 at the default seed time; adding them at the seed would erase the
    subdominant component's floating-point content, and even a split seed of
    the decaying family cancels catastrophically under raw propagation.  So
    the psi1 family is evolved in peeled variables and the psi2 family
    directly, and the superposition happens at the sample times where the
    summands are comparably sized.
    """

    def __init__(self, runs):
        self._runs = runs
        self.etas = runs[0].etas
        self.geometry = runs[0].geometry

    def phi_cubes(self):
        total = self._runs[0].phi_cubes()
        for run in self._runs[1:]:
            total = total + run.phi_cubes()
        return total

    def state_at(self, i):
        states = [run.state_at(i) for run in self._runs]
        phi = states[0].phi
        dphi = states[0].dphi
        for s in states[1:]:
            phi = phi + s.phi
            dphi = dphi + s.dphi
        return PerturbationState(eta=float(self.etas[i]), phi=phi, dphi=dphi)

    def final_state(self):
        return self.state_at(len(self.etas) - 1)


def reconstruct_sampled(w, data, eta_start, etas, k_max=DEFAULT_K_MAX, tol=1e-10):
    from .evolver import PeeledLinear

    zero = SpectralField.zeros(data.geometry)
    peel = -2.0 * nu_index(w)

    series1 = build_series(w, SingularityData(psi1=data.psi1, psi2=zero), k_max=k_max)
    v0, dv0 = evaluate_series_peeled(series1, eta_start, peel)
    state1 = PerturbationState(eta=eta_start, phi=v0, dphi=dv0)
    run1 = _PeeledRun(evolve_sampled(state1, PeeledLinear(w, peel), etas, tol=tol), peel)

    series2 = build_series(w, SingularityData(psi1=zero, psi2=data.psi2), k_max=k_max)
    phi0, dphi0 = evaluate_series(series2, eta_start)
    state2 = PerturbationState(eta=eta_start, phi=phi0, dphi=dphi0)
    run2 = evolve_sampled(state2, w, etas, tol=tol)

    return _SplitSamples([run1, run2])


# -- fitting -------------------------------------------------------------------


@dataclass
class SingularityFitReport:
    """Fitted coefficient table and fit diagnostics."""

    coefficients: dict  # (exponent key, log power) -> SpectralField
    condition_number: float
    per_mode_residual: np.ndarray  # relative residual cube (real)
    log_to_leading: float  # max log-coefficient magnitude over leading scale
    window: tuple
    basis: tuple  # ((exponent, log power), ...)


_TRIM_FLOOR = 1e-9  # drop basis columns whose weighted norm is unresolvably small


def _fit_design(etas, w, k_fit):
    """Weighted design matrix over the exponent/log basis, plus column scales.

    Off resonance the log basis is restricted to the single site
    eta^0 * log eta, which is where a free log coefficient could live; the
    fitted amplitude there measures the absence of logs robustly.  Including
    log columns at higher exponents would let truncation error masquerade as
    log amplitude through near-collinearity over the short window.  On
    resonance the slaved higher log terms are genuinely present, so their
    columns are kept.

    Columns whose weighted norm falls below _TRIM_FLOOR relative to the
    largest are also dropped: their coefficients could only be recovered with
    an amplification factor beyond double precision, and keeping them poisons
    the conditioning of the resolvable ones.
    """
    nu = nu_index(w)
    if w == 0.0:
        # every sourced coefficient vanishes for dust; only the data survive
        exps = [_key(-2.0 * nu), 0.0]
    else:
        exps = list(exponent_lattice(w, k_fit))
    basis = [(k, 0) for k in exps]
    if is_resonant(w):
        basis += [(k, 1) for k in exps
                  if k >= 0.0 and abs(k - round(k)) < 1e-12 and round(k) % 2 == 0]
    else:
        basis += [(0.0, 1)]
    weights = etas**(2.0 * nu)
    log_etas = np.log(etas)
    cols = []
    for k, l in basis:
        col = etas**k * (log_etas if l else 1.0)
        cols.append(weights * col)
    X = np.stack(cols, axis=1)
    scales = np.linalg.norm(X, axis=0)
    keep = scales >= _TRIM_FLOOR * scales.max()
    basis = [pair for pair, ok in zip(basis, keep) if ok]
    X = X[:, keep]
    scales = scales[keep]
    return basis, X / scales, scales, weights


def fit_asymptotic_data(samples, w, k_fit=DEFAULT_K_FIT, max_condition=1e12):
    """Per-mode weighted least squares of sampled phi against the exponent basis.

    `samples` provides .etas, .geometry and .phi_cubes() (a SampledEvolution
    qualifies).  Samples are weighted by eta^(2nu) so the dominant eta^(-2nu)
    column is balanced; the log columns are always included so their fitted
    amplitude can be checked against zero when nu is not an integer.

    Returns (SingularityData, SingularityFitReport).
    """
    etas = np.asarray(samples.etas, dtype=float)
    if etas.max() > 0.1:
        raise DomainError("fit window must satisfy eta_max <= 0.1")
    geom = samples.geometry
    basis, X, scales, weights = _fit_design(etas, w, k_fit)
    cond = np.linalg.cond(X)
    if cond > max_condition:
        raise IllConditionedFitError(
            f"fit basis condition number {cond:.2e} > {max_condition:.0e}; "
            "use a smaller window"
        )
    cubes = samples.phi_cubes()
    n_t = len(etas)
    rhs = (weights[:, None] * cubes.reshape(n_t, -1))
    sol, _res, _rank, _sv = np.linalg.lstsq(X, rhs, rcond=None)
    sol = sol / scales[:, None]

    n = geom.n
    coefficients = {}
    for j, (k, l) in enumerate(basis):
        coefficients[(_key(k), l)] = SpectralField(geom, sol[j].reshape(n, n, n).copy())

    fitted = X @ (sol * scales[:, None])
    resid = np.linalg.norm(fitted - rhs, axis=0)
    scale = np.linalg.norm(rhs, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, resid / scale, 0.0)

    two_nu = 2.0 * nu_index(w)
    psi1 = coefficients[(_key(-two_nu), 0)]
    psi2 = coefficients[(_key(0.0), 0)]
    leading = max(psi1.max_abs_coeff(), psi2.max_abs_coeff(), 1e-300)
    log_amp = max(
        (c.max_abs_coeff() for (k, l), c in coefficients.items() if l == 1),
        default=0.0,
    )
    report = SingularityFitReport(
        coefficients=coefficients,
        condition_number=float(cond),
        per_mode_residual=rel.reshape(n, n, n),
        log_to_leading=float(log_amp / leading),
        window=(float(etas.min()), float(etas.max())),
        basis=tuple(basis),
    )
    return SingularityData(psi1=psi1, psi2=psi2), report


def relative_field_error(fitted, reference):
    """max_k |fitted - reference| / max_k |reference|."""
    scale = reference.max_abs_coeff()
    if scale == 0.0:
        return fitted.max_abs_coeff()
    return float(np.max(np.abs(fitted.coeffs - reference.coeffs)) / scale)


@dataclass
class RoundtripReport:
    w: float
    psi1_error: float
    psi2_error: float
    log_to_leading: float
    log_coefficient_error: float | None  # vs (w/2nu) Lap(psi1), resonant only
    condition_number: float

    @property
    def max_error(self):
        return max(self.psi1_error, self.psi2_error)


def singularity_roundtrip(w, data, eta_start=1e-3, k_max=DEFAULT_K_MAX,
                          window=DEFAULT_WINDOW, n_window=DEFAULT_WINDOW_SAMPLES,
                          k_fit=DEFAULT_K_FIT, tol=1e-12):
    """build -> evolve -> fit, reporting recovery errors of (psi1, psi2).

    Exercises the data-prescription result end to end: the fitted expansion
    coefficients of the evolved solution must reproduce the prescribed data.
    """
    lo = max(window[0], eta_start)
    etas = np.geomspace(lo, window[1], n_window)
    run = reconstruct_sampled(w, data, eta_start, etas, k_max=k_max, tol=tol)
    fitted, report = fit_asymptotic_data(run, w, k_fit=k_fit)

    log_err = None
    if is_resonant(w):
        # the recursion-forced value (w/2nu) * Lap of the exponent -2 power
        # coefficient; for nu = 1 this is (w/2nu) * Lap(psi1) itself
        expected = build_series(w, data, k_max=0).coefficient(0.0, 1)
        got = report.coefficients.get((_key(0.0), 1))
        if got is not None and expected is not None:
            log_err = relative_field_error(got, expected)
    return RoundtripReport(
        w=w,
        psi1_error=relative_field_error(fitted.psi1, data.psi1),
        psi2_error=relative_field_error(fitted.psi2, data.psi2),
        log_to_leading=report.log_to_leading,
        log_coefficient_error=log_err,
        condition_number=report.condition_number,
    )


# -- general equation of state ---------------------------------------------------


@dataclass
class GeneralSingularityFit:
    psi1: SpectralField
    psi2: SpectralField
    measured_exponent: float
    expected_exponent: float
    per_mode_exponent: dict  # (kx,ky,kz) -> slope
    correction_step: float


def _correction_step(eos):
    """Exponent step alpha contributed by the first EoS correction term.

    For f ~ w*eps + f1*eps^a1 at high density the background corrections feed
    the expansion with steps of alpha = 2 - 6*(1+w)*(1-a1)/(1+3w) < 2.
    """
    w = high_density_slope(eos)
    if isinstance(eos, LinearEos):
        return 2.0
    from .eos import PolytropicEos

    a1 = eos.n / (eos.n + 1.0) if isinstance(eos, PolytropicEos) else eos.terms[0][1]
    return 2.0 - 6.0 * (1.0 + w) * (1.0 - a1) / (1.0 + 3.0 * w)


def fit_singularity_general(eos, samples, amplitude_floor=1e-8):
    """Leading singularity data and measured exponent for a general EoS.

    The leading term matches the linear case with w = lim f(eps)/eps at high
    density: exponent -2nu(w).  The per-mode exponent is the log-log slope of
    |phi_k| over the window; the leading/constant coefficients come from a
    least-squares fit on the lattice {-2nu + i*alpha + 2j} up to 0, where
    alpha is the background-correction step.

    For a linear EoS this reduces to fit_asymptotic_data.
    """
    if isinstance(eos, LinearEos):
        data, report = fit_asymptotic_data(samples, eos.w)
        two_nu = 2.0 * nu_index(eos.w)
        return GeneralSingularityFit(
            psi1=data.psi1, psi2=data.psi2,
            measured_exponent=-two_nu, expected_exponent=-two_nu,
            per_mode_exponent={}, correction_step=2.0,
        )

    w = high_density_slope(eos)
    two_nu = 2.0 * nu_index(w)
    alpha = _correction_step(eos)
    etas = np.asarray(samples.etas, dtype=float)
    geom = samples.geometry
    cubes = samples.phi_cubes()

    # measured exponent: per-mode log-log slope, amplitude-weighted summary
    flat = cubes.reshape(len(etas), -1)
    amps = np.abs(flat)
    peak = amps.max()
    keep = np.nonzero(amps.min(axis=0) > amplitude_floor * peak)[0]
    log_eta = np.log(etas)
    design = np.stack([np.ones_like(log_eta), log_eta], axis=1)
    slopes, *_ = np.linalg.lstsq(design, np.log(amps[:, keep]), rcond=None)
    per_mode = {}
    kvec = geom.wavenumbers
    for pos, j in enumerate(keep):
        i1, i2, i3 = np.unravel_index(j, (geom.n,) * 3)
        per_mode[(int(kvec[i1]), int(kvec[i2]), int(kvec[i3]))] = float(slopes[1, pos])
    weights = amps[:, keep].max(axis=0)
    measured = float(np.sum(slopes[1] * weights) / np.sum(weights))

    # leading data from the generalised lattice up to exponent 0
    exps = sorted({
        _key(-two_nu + i * alpha + 2.0 * j)
        for i in range(0, 8) for j in range(0, 4)
        if -two_nu + i * alpha + 2.0 * j <= 1e-12
    } | {0.0})
    nu = nu_index(w)
    weights_fit = etas**(2.0 * nu)
    X = np.stack([weights_fit * etas**k for k in exps], axis=1)
    scales = np.linalg.norm(X, axis=0)
    sol, *_ = np.linalg.lstsq(X / scales, weights_fit[:, None] * flat, rcond=None)
    sol = sol / scales[:, None]
    n = geom.n
    psi1 = SpectralField(geom, sol[exps.index(_key(-two_nu))].reshape(n, n, n).copy())
    psi2 = SpectralField(geom, sol[exps.index(0.0)].reshape(n, n, n).copy())

    return GeneralSingularityFit(
        psi1=psi1, psi2=psi2,
        measured_exponent=measured, expected_exponent=-two_nu,
        per_mode_exponent=per_mode, correction_step=alpha,
    )
