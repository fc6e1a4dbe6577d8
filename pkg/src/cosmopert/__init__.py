"""Spectral simulation toolkit for FLRW backgrounds and their linear scalar
perturbations on the flat 3-torus: background solving and regime
classification, mode-by-mode evolution, singularity-side series expansions,
and late-time wave-profile extraction."""

from .background import (
    BackgroundState,
    BackgroundTrajectory,
    LinearBackground,
    background_closed_form_linear,
    solve_background,
    solve_background_singularity_aligned,
    tau_time,
)
from .eos import (
    LinearEos,
    PolytropicEos,
    PowerLawEos,
    RegimeClass,
    classify_regime,
    eos_pressure,
    eos_sound_speed_sq,
    mass_density,
    tau_coefficients,
)
from .evolver import (
    PerturbationState,
    delta_epsilon,
    density_contrast,
    energy_e1,
    evolve,
    evolve_sampled,
    mode_rhs_general,
    mode_rhs_linear,
    nu_index,
    psi_energy_e3,
)
from .spectral import SpectralField, TorusGeometry, random_band_limited

__version__ = "0.1.0"

__all__ = [
    "BackgroundState",
    "BackgroundTrajectory",
    "LinearBackground",
    "LinearEos",
    "PerturbationState",
    "PolytropicEos",
    "PowerLawEos",
    "RegimeClass",
    "SpectralField",
    "TorusGeometry",
    "background_closed_form_linear",
    "classify_regime",
    "delta_epsilon",
    "density_contrast",
    "energy_e1",
    "eos_pressure",
    "eos_sound_speed_sq",
    "evolve",
    "evolve_sampled",
    "mass_density",
    "mode_rhs_general",
    "mode_rhs_linear",
    "nu_index",
    "psi_energy_e3",
    "random_band_limited",
    "solve_background",
    "solve_background_singularity_aligned",
    "tau_coefficients",
    "tau_time",
]
