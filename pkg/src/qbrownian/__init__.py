"""qbrownian: dissipative quantum transport on disordered lattices.

Evolves one-particle density matrices under hopping, a static random
potential and a momentum-randomizing bath; certifies the structural
properties of the bath kernel; and estimates the diffusion constant by
ensemble MSD fits, exponentially weighted time averages and fiber-space
resolvent formulas.
"""

__version__ = "0.1.0"

from .disorder import DisorderField, sample, shift
from .evolution import (GeneratorParams, Trajectory, apply_generator, evolve,
                        evolve_expm, generator_matrix, group_velocity_check)
from .fiber import build_fiber_space, closed_form_ballistic, resolvent_diffusion
from .kernels import (GainKernel, MeasureSpec, ValidationReport, build_kernel,
                      boson_kernel_beta0, jump_rate_bound, normalize,
                      preset_spec, spectral_gap, validate)
from .lattice import (Boundary, DensityState, LatticeBox, new_point_state,
                      position_moment, trace, weighted_norm, wigner)
from .diffusion import (abel_diffusion, fit_diffusion, localization_length,
                        msd_ensemble, small_g_slope)
from .results import (DiffusionEstimate, LocalizationEstimate, MsdSeries,
                      SlopeEstimate)

__all__ = [
    "Boundary", "DensityState", "DiffusionEstimate", "DisorderField",
    "GainKernel", "GeneratorParams", "LatticeBox", "LocalizationEstimate",
    "MeasureSpec", "MsdSeries", "SlopeEstimate", "Trajectory",
    "ValidationReport", "abel_diffusion", "apply_generator",
    "boson_kernel_beta0", "build_fiber_space", "build_kernel",
    "closed_form_ballistic", "evolve", "evolve_expm", "fit_diffusion",
    "generator_matrix", "group_velocity_check", "jump_rate_bound",
    "localization_length", "msd_ensemble", "new_point_state", "normalize",
    "position_moment", "preset_spec", "resolvent_diffusion", "sample",
    "shift", "small_g_slope", "spectral_gap", "trace", "validate",
    "weighted_norm", "wigner",
]
