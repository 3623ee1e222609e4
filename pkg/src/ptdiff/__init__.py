"""Hidden-structure image generation by spectral phase transfer.

A reference image is deterministically inverted into diffusion noise;
a guided sampling run then inherits the reference's phase spectrum
step by step while keeping its own magnitudes, so the reference
structure emerges inside freshly generated content.
"""

from .codec import clamp_fraction, decode, encode
from .denoiser import (AnalyticDenoiser, ConditionHandle, GaussianMixture,
                       RemoteDenoiser, analytic_eps, make_image_mixture)
from .engine import (IllusionResult, SamplerConfig, TrajectoryRecord, aptm,
                     cfg_eps, invert_step, pre_estimate, predict_x0,
                     recon_step, run_illusion, run_inversion,
                     run_reconstruction, sample_step)
from .errors import (BackendError, ConditionError, DataError, ParameterError,
                     PtdiffError, TrajectoryError)
from .metrics import PhaseCorrelationReport, phase_correlation
from .schedule import (NoiseSchedule, TimestepMap, build_schedule, sd_schedule,
                       subsample_timesteps, toy_schedule)
from .spectral import (BlendParams, Spectrum, blend_coefficient, blend_phase,
                       fft2, ifft2, ptm)

__version__ = "0.1.0"

__all__ = [
    "AnalyticDenoiser", "BackendError", "BlendParams", "ConditionError",
    "ConditionHandle", "DataError", "GaussianMixture", "IllusionResult",
    "NoiseSchedule", "ParameterError", "PhaseCorrelationReport", "PtdiffError",
    "RemoteDenoiser", "SamplerConfig", "Spectrum", "TimestepMap",
    "TrajectoryError", "TrajectoryRecord", "analytic_eps", "aptm",
    "blend_coefficient", "blend_phase", "build_schedule", "cfg_eps",
    "clamp_fraction", "decode", "encode", "fft2", "ifft2", "invert_step",
    "make_image_mixture", "phase_correlation", "pre_estimate", "predict_x0",
    "ptm", "recon_step", "run_illusion", "run_inversion",
    "run_reconstruction", "sample_step", "sd_schedule", "subsample_timesteps",
    "toy_schedule",
]
