"""Fourier-domain machinery: per-channel 2D FFT magnitude/phase split,
phase blending, recombination, and the decayed blend schedule.

Conventions: the forward transform is unnormalized and the inverse
carries the 1/(H*W) factor (numpy's default pair), so the DC bin of the
forward transform equals the spatial sum. Phase is the four-quadrant
angle in (-pi, pi]; zero-magnitude bins get phase 0.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError


@dataclass(frozen=True)
class Spectrum:
    """Per-channel 2D spectrum split into magnitude and phase arrays.

    Real/imaginary parts are derived on demand as M*cos(P) and M*sin(P).
    """

    magnitude: np.ndarray  # (C, H, W), >= 0
    phase: np.ndarray  # (C, H, W), in (-pi, pi]

    def to_complex(self):
        return self.magnitude * (np.cos(self.phase) + 1j * np.sin(self.phase))


@dataclass(frozen=True)
class BlendParams:
    """Blend schedule knobs: refining-stage proportion and decay onset."""

    lam: float = 0.4
    tau: float = 0.6

    def __post_init__(self):
        if not 0.0 <= self.lam <= self.tau <= 1.0:
            raise ParameterError(
                f"blend params must satisfy 0 <= lambda <= tau <= 1, got lambda={self.lam}, tau={self.tau}"
            )


def _check_latent(z, name="z"):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 3:
        raise ParameterError(f"{name} must have shape (C, H, W), got ndim={z.ndim}")
    if not np.all(np.isfinite(z)):
        raise DataError(f"{name} contains non-finite values")
    return z


def fft2(z):
    """Per-channel 2D DFT of a (C, H, W) latent, as a Spectrum."""
    z = _check_latent(z)
    f = np.fft.fft2(z, axes=(-2, -1))
    return Spectrum(magnitude=np.abs(f), phase=np.angle(f))


def ifft2(s):
    """Recombine magnitude and phase and invert; returns the real part.

    After phase blending the spectrum is generally not Hermitian, so a
    real projection is taken; use :func:`ifft2_residual` to inspect the
    discarded imaginary component.
    """
    return np.fft.ifft2(s.to_complex(), axes=(-2, -1)).real


def ifft2_residual(s):
    """Max-abs of the imaginary part discarded by :func:`ifft2`."""
    return float(np.max(np.abs(np.fft.ifft2(s.to_complex(), axes=(-2, -1)).imag)))


def blend_phase(p_guidance, p_sample, b):
    """Linear blend b*P_guidance + (1-b)*P_sample on principal values.

    No wrap-aware interpolation and no re-wrapping of the output: the
    cos/sin recombination is periodic, so values outside (-pi, pi] are
    harmless. This function is the seam to swap in a circular blend.
    """
    p_guidance = np.asarray(p_guidance, dtype=np.float64)
    p_sample = np.asarray(p_sample, dtype=np.float64)
    if p_guidance.shape != p_sample.shape:
        raise ParameterError(
            f"phase shapes differ: {p_guidance.shape} vs {p_sample.shape}"
        )
    if not 0.0 <= b <= 1.0:
        raise ParameterError(f"b={b} must lie in [0, 1]")
    return b * p_guidance + (1.0 - b) * p_sample


def ptm(guidance, sample, b):
    """Phase transfer: sample magnitude recombined with blended phase.

    The sample's magnitude spectrum is kept untouched by construction;
    only the phase moves toward the guidance feature's phase.
    """
    guidance = _check_latent(guidance, "guidance")
    sample = _check_latent(sample, "sample")
    if guidance.shape != sample.shape:
        raise ParameterError(
            f"guidance shape {guidance.shape} != sample shape {sample.shape}"
        )
    sg = fft2(guidance)
    ss = fft2(sample)
    fused = blend_phase(sg.phase, ss.phase, b)
    return ifft2(Spectrum(magnitude=ss.magnitude, phase=fused))


def blend_coefficient(t, t_grid, params):
    """Decayed blending coefficient at training-grid timestep ``t``.

    Full phase replacement (b=1) for tau*T <= t <= T, square-root decay
    down to 0 at t = lambda*T. Callers never request t below lambda*T:
    the phase transfer stage ends there.
    """
    if not 0 <= t <= t_grid:
        raise ParameterError(f"t={t} outside [0, {t_grid}]")
    lam_t = params.lam * t_grid
    tau_t = params.tau * t_grid
    if t < lam_t:
        raise ParameterError(
            f"t={t} is below the transfer stage boundary lambda*T={lam_t}"
        )
    if t >= tau_t:
        return 1.0
    # lam_t <= t < tau_t implies tau_t > lam_t, so the ratio is well defined
    return float(1.0 - np.sqrt((tau_t - t) / (tau_t - lam_t)))
