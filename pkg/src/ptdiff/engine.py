"""Deterministic trajectory mathematics.

Inversion walks a latent up the noise scale, reconstruction walks the
inverted code back down under the null condition, and sampling walks a
fresh Gaussian down under classifier-free guidance. During the phase
transfer stage the sampling latent's phase spectrum is overwritten from
a pre-estimated point of the reconstruction trajectory; afterwards the
sampler runs free so fine detail can settle.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BackendError, ParameterError, TrajectoryError
from .schedule import subsample_timesteps
from .spectral import BlendParams, blend_coefficient, ptm

GUIDANCE_SOURCES = ("ddim_inversion", "forward_diffusion")
TRAJECTORY_TAGS = ("inversion", "reconstruction", "sampling")

# Nudge applied before floor() when splitting T into stage counts, so a
# product like 0.29*100 = 28.999999999999996 still counts as integer.
_STAGE_EPS = 1e-9


@dataclass(frozen=True)
class SamplerConfig:
    """Run parameters; field names mirror the CLI flags."""

    steps: int = 100
    invert_steps: int = 1000
    omega: float = 7.5
    blend: BlendParams = field(default_factory=BlendParams)
    d: int = 0
    seed: int = 0
    guidance_source: str = "ddim_inversion"

    def __post_init__(self):
        if self.steps < 1:
            raise ParameterError(f"steps={self.steps} must be >= 1")
        if self.invert_steps < 1:
            raise ParameterError(f"invert_steps={self.invert_steps} must be >= 1")
        if not math.isfinite(self.omega):
            raise ParameterError(f"omega={self.omega} must be finite")
        if not isinstance(self.blend, BlendParams):
            raise ParameterError("blend must be a BlendParams")
        if abs(self.d) > (1.0 - self.blend.lam) * self.steps + _STAGE_EPS:
            raise ParameterError(
                f"|d|={abs(self.d)} exceeds the transfer stage length "
                f"(1-lambda)*T={(1.0 - self.blend.lam) * self.steps}"
            )
        if self.seed < 0:
            raise ParameterError(f"seed={self.seed} must be >= 0")
        if self.guidance_source not in GUIDANCE_SOURCES:
            raise ParameterError(
                f"guidance_source={self.guidance_source!r} not one of {GUIDANCE_SOURCES}"
            )

    def stage_counts(self):
        """(transfer, refine) step counts; they always sum to ``steps``."""
        n_refine = int(math.floor(self.blend.lam * self.steps + _STAGE_EPS))
        return self.steps - n_refine, n_refine


@dataclass(frozen=True)
class TrajectoryRecord:
    """Latents of one trajectory, keyed by training-grid timestep."""

    tag: str
    latents: dict

    def __post_init__(self):
        if self.tag not in TRAJECTORY_TAGS:
            raise ParameterError(f"tag={self.tag!r} not one of {TRAJECTORY_TAGS}")
        ts = list(self.latents)
        diffs = np.diff(ts)
        if self.tag == "inversion":
            ok = np.all(diffs > 0)
        else:
            ok = np.all(diffs < 0)
        if not ok:
            raise ParameterError(f"{self.tag} walk is not monotone: {ts[:5]}...")

    @property
    def timesteps(self):
        return tuple(self.latents)

    @property
    def final(self):
        return self.latents[next(reversed(self.latents))]


@dataclass
class ClampDiagnostics:
    """Counts pre-estimation targets that fell off the coarse grid."""

    events: int = 0


@dataclass(frozen=True)
class IllusionResult:
    latent: np.ndarray
    sampling: TrajectoryRecord
    reconstruction: TrajectoryRecord
    transfer_steps: int
    refine_steps: int
    clamp_events: int


def _rng_streams(seed):
    """One generator per randomness consumer, split from a single seed."""
    init, forward = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init), np.random.default_rng(forward)


def predict_x0(z, t, eps, sched):
    """Denoised estimate (z - sqrt(1-ab_t)*eps)/sqrt(ab_t); needs t >= 1."""
    if t < 1:
        raise ParameterError("t must be >= 1: at t=0 the latent is its own estimate")
    a = sched.ab(t)
    return (z - math.sqrt(1.0 - a) * eps) / math.sqrt(a)


def _f_theta(z, t, eps, sched):
    # at t=0 alpha_bar is 1 and the estimate degenerates to z itself
    if t == 0:
        return z
    return predict_x0(z, t, eps, sched)


def invert_step(z_t, t, denoiser, cond_null, sched, t_next):
    """One noising step of deterministic inversion (t -> t_next, t_next > t)."""
    if t_next <= t:
        raise ParameterError(f"t_next={t_next} must exceed t={t}")
    eps = denoiser.eps(z_t, t, cond_null)
    f = _f_theta(z_t, t, eps, sched)
    a_next = sched.ab(t_next)
    return math.sqrt(a_next) * f + math.sqrt(1.0 - a_next) * eps


def recon_step(z_hat_t, t, denoiser, cond_null, sched, t_prev):
    """One denoising step of the guidance walk (t -> t_prev, t_prev < t)."""
    if t_prev >= t:
        raise ParameterError(f"t_prev={t_prev} must be below t={t}")
    eps = denoiser.eps(z_hat_t, t, cond_null)
    f = predict_x0(z_hat_t, t, eps, sched)
    a_prev = sched.ab(t_prev)
    return math.sqrt(a_prev) * f + math.sqrt(1.0 - a_prev) * eps


def cfg_eps(z, t, v, v_null, omega, denoiser):
    """Classifier-free guided noise: omega*eps_cond + (1-omega)*eps_null."""
    eps_c = denoiser.eps(z, t, v)
    eps_u = denoiser.eps(z, t, v_null)
    if omega == 1.0:
        return eps_c
    if omega == 0.0:
        return eps_u
    return omega * eps_c + (1.0 - omega) * eps_u


def sample_step(z_tilde_t, t, v, v_null, omega, denoiser, sched, t_prev):
    """One guided denoising step of the sampling walk."""
    if t_prev >= t:
        raise ParameterError(f"t_prev={t_prev} must be below t={t}")
    eps = cfg_eps(z_tilde_t, t, v, v_null, omega, denoiser)
    f = predict_x0(z_tilde_t, t, eps, sched)
    a_prev = sched.ab(t_prev)
    return math.sqrt(a_prev) * f + math.sqrt(1.0 - a_prev) * eps


def pre_estimate(z_hat_t, t, d_steps, denoiser, cond_null, sched, tmap, diag=None):
    """Jump the guidance latent d_steps along the coarse grid in one move.

    Positive d_steps looks ahead (less noise), negative looks back; the
    target index is clamped to the grid ends and clamping is counted in
    ``diag`` when given. d_steps=0 reproduces the input up to rounding.
    """
    i = tmap.index_of(t)
    j = i + int(d_steps)
    clamped = min(max(j, 0), tmap.n_steps)
    if clamped != j and diag is not None:
        diag.events += 1
    t_target = int(tmap.steps[clamped])
    eps = denoiser.eps(z_hat_t, t, cond_null)
    f = _f_theta(z_hat_t, t, eps, sched)
    a_target = sched.ab(t_target)
    return math.sqrt(a_target) * f + math.sqrt(1.0 - a_target) * eps


def aptm(z_hat_t, z_tilde_t, t, b_t, d_steps, denoiser, cond_null, sched, tmap,
         diag=None):
    """Phase transfer from a pre-estimated guidance feature into the sample.

    Both latents must sit at the same coarse-grid timestep t; the
    guidance feature is first slid d_steps along its trajectory so the
    transferred phase can come from a sharper (or noisier) moment.
    """
    z_hat_t = np.asarray(z_hat_t, dtype=np.float64)
    z_tilde_t = np.asarray(z_tilde_t, dtype=np.float64)
    if z_hat_t.shape != z_tilde_t.shape:
        raise ParameterError(
            f"latent shapes differ: {z_hat_t.shape} vs {z_tilde_t.shape}"
        )
    guidance = pre_estimate(z_hat_t, t, d_steps, denoiser, cond_null, sched, tmap, diag)
    return ptm(guidance, z_tilde_t, b_t)


def run_inversion(z0, cond_null, denoiser, sched, config):
    """Ascending walk 0 -> t_train over the inversion grid.

    With guidance_source="forward_diffusion" each recorded latent is an
    independent noising of z0 (fresh Gaussian per step) instead of the
    deterministic inversion recursion.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    tmap = subsample_timesteps(sched.t_train, config.invert_steps)
    walk = [int(t) for t in tmap.steps[::-1]]
    latents = {walk[0]: z0.copy()}

    if config.guidance_source == "forward_diffusion":
        _, rng = _rng_streams(config.seed)
        for t in walk[1:]:
            a = sched.ab(t)
            noise = rng.standard_normal(z0.shape)
            latents[t] = math.sqrt(a) * z0 + math.sqrt(1.0 - a) * noise
        return TrajectoryRecord(tag="inversion", latents=latents)

    z = z0
    for i in range(len(walk) - 1):
        t, t_next = walk[i], walk[i + 1]
        try:
            z = invert_step(z, t, denoiser, cond_null, sched, t_next)
        except BackendError as exc:
            raise TrajectoryError(
                f"inversion failed at t={t}: {exc}", timestep=t, completed_steps=i,
                partial=(TrajectoryRecord(tag="inversion", latents=latents),),
            ) from exc
        latents[t_next] = z
    return TrajectoryRecord(tag="inversion", latents=latents)


def run_reconstruction(z_code, cond_null, denoiser, sched, steps):
    """Full descending guidance walk t_train -> 0 from an inverted code."""
    z = np.asarray(z_code, dtype=np.float64).copy()
    tmap = subsample_timesteps(sched.t_train, steps)
    walk = [int(t) for t in tmap.steps]
    latents = {walk[0]: z.copy()}
    for i in range(len(walk) - 1):
        t, t_prev = walk[i], walk[i + 1]
        try:
            z = recon_step(z, t, denoiser, cond_null, sched, t_prev)
        except BackendError as exc:
            raise TrajectoryError(
                f"reconstruction failed at t={t}: {exc}", timestep=t,
                completed_steps=i,
                partial=(TrajectoryRecord(tag="reconstruction", latents=latents),),
            ) from exc
        latents[t_prev] = z
    return TrajectoryRecord(tag="reconstruction", latents=latents)


def run_illusion(z_inv_code, v, config, denoiser, sched, z_ref=None, z_start=None,
                 use_aptm=True, use_decay=True):
    """Parallel guidance + sampling walk with phase transfer, then refinement.

    z_inv_code seeds the guidance trajectory; the sampling trajectory
    starts from z_start when given, else from a seeded standard normal.
    z_ref (the clean reference latent) is required when
    guidance_source="forward_diffusion". use_aptm/use_decay exist for
    the ablation modes: no transfer at all, or transfer pinned at b=1.
    """
    z_hat = np.asarray(z_inv_code, dtype=np.float64).copy()
    tmap = subsample_timesteps(sched.t_train, config.steps)
    walk = [int(t) for t in tmap.steps]
    t_grid = walk[0]
    n_transfer, n_refine = config.stage_counts()
    lam_t = config.blend.lam * t_grid

    rng_init, rng_forward = _rng_streams(config.seed)
    if z_start is not None:
        z_tilde = np.asarray(z_start, dtype=np.float64).copy()
    else:
        z_tilde = rng_init.standard_normal(z_hat.shape)
    if z_tilde.shape != z_hat.shape:
        raise ParameterError(
            f"start latent shape {z_tilde.shape} != code shape {z_hat.shape}"
        )
    if config.guidance_source == "forward_diffusion":
        if z_ref is None:
            raise ParameterError(
                "guidance_source=forward_diffusion needs the reference latent z_ref"
            )
        z_ref = np.asarray(z_ref, dtype=np.float64)

    v_null = denoiser.null_condition()
    diag = ClampDiagnostics()
    recon_latents = {t_grid: z_hat.copy()}
    samp_latents = {t_grid: z_tilde.copy()}

    def _partials():
        return (
            TrajectoryRecord(tag="reconstruction", latents=recon_latents),
            TrajectoryRecord(tag="sampling", latents=samp_latents),
        )

    for i in range(config.steps):
        t, t_prev = walk[i], walk[i + 1]
        try:
            if i < n_transfer:
                if config.guidance_source == "forward_diffusion":
                    a_prev = sched.ab(t_prev)
                    noise = rng_forward.standard_normal(z_hat.shape)
                    z_hat = math.sqrt(a_prev) * z_ref + math.sqrt(1.0 - a_prev) * noise
                else:
                    z_hat = recon_step(z_hat, t, denoiser, v_null, sched, t_prev)
                z_tilde = sample_step(
                    z_tilde, t, v, v_null, config.omega, denoiser, sched, t_prev
                )
                if use_aptm:
                    if not use_decay:
                        b = 1.0
                    elif t_prev < lam_t:
                        # only the last transfer step can land here, and only
                        # when lambda*T is not a grid point; the stage is over
                        b = 0.0
                    else:
                        b = blend_coefficient(t_prev, t_grid, config.blend)
                    z_tilde = aptm(
                        z_hat, z_tilde, t_prev, b, config.d, denoiser, v_null,
                        sched, tmap, diag,
                    )
                recon_latents[t_prev] = z_hat.copy()
            else:
                z_tilde = sample_step(
                    z_tilde, t, v, v_null, config.omega, denoiser, sched, t_prev
                )
        except BackendError as exc:
            raise TrajectoryError(
                f"illusion run failed at t={t}: {exc}", timestep=t,
                completed_steps=i, partial=_partials(),
            ) from exc
        samp_latents[t_prev] = z_tilde.copy()

    return IllusionResult(
        latent=z_tilde,
        sampling=TrajectoryRecord(tag="sampling", latents=samp_latents),
        reconstruction=TrajectoryRecord(tag="reconstruction", latents=recon_latents),
        transfer_steps=n_transfer,
        refine_steps=n_refine,
        clamp_events=diag.events,
    )
