"""DDPM variance schedule and the coarse/fine timestep mapping.

The cumulative products alpha_bar are stored with a leading boundary
entry (``alpha_bar[0] == 1``) so that update rules indexed at ``t - 1``
need no special case at the final denoising step.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

SCHEDULE_KINDS = ("linear", "scaled_linear")

# Classic DDPM range: numerically gentle, used by the analytic toy backend.
TOY_BETA_START, TOY_BETA_END = 1e-4, 0.02
# Stable-Diffusion-style range, matched by the remote backend default.
SD_BETA_START, SD_BETA_END = 0.00085, 0.012
DEFAULT_T_TRAIN = 1000


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances ``beta`` and cumulative products ``alpha_bar``.

    ``beta`` has one entry per training step (index ``s - 1`` holds step
    ``s``); ``alpha_bar`` has ``t_train + 1`` entries with the t=0
    boundary value 1 at index 0.
    """

    kind: str
    t_train: int
    beta: np.ndarray
    alpha_bar: np.ndarray

    def ab(self, t):
        """alpha_bar at training timestep ``t`` (0 <= t <= t_train)."""
        if not 0 <= t <= self.t_train:
            raise ParameterError(f"t={t} outside training grid [0, {self.t_train}]")
        return float(self.alpha_bar[t])


@dataclass(frozen=True)
class TimestepMap:
    """Descending walk over the training grid used by a T-step trajectory."""

    steps: np.ndarray  # length T+1, strictly decreasing, ends at 0

    @property
    def n_steps(self):
        return len(self.steps) - 1

    def index_of(self, t):
        """Coarse-grid index of training timestep ``t``."""
        hits = np.nonzero(self.steps == t)[0]
        if len(hits) == 0:
            raise ParameterError(f"t={t} is not on this timestep map")
        return int(hits[0])


def build_schedule(kind, t_train, beta_start, beta_end):
    """Construct a NoiseSchedule.

    ``linear`` spaces beta uniformly between the endpoints;
    ``scaled_linear`` spaces sqrt(beta) uniformly and squares.
    """
    if kind not in SCHEDULE_KINDS:
        raise ParameterError(f"kind={kind!r} not one of {SCHEDULE_KINDS}")
    if t_train < 1:
        raise ParameterError(f"t_train={t_train} must be >= 1")
    if not 0.0 < beta_start <= beta_end:
        raise ParameterError(f"beta_start={beta_start} must satisfy 0 < beta_start <= beta_end")
    if beta_end >= 1.0:
        raise ParameterError(f"beta_end={beta_end} must be < 1")

    if kind == "linear":
        beta = np.linspace(beta_start, beta_end, t_train, dtype=np.float64)
    else:
        beta = np.linspace(beta_start**0.5, beta_end**0.5, t_train, dtype=np.float64) ** 2

    alpha_bar = np.empty(t_train + 1, dtype=np.float64)
    alpha_bar[0] = 1.0
    alpha_bar[1:] = np.cumprod(1.0 - beta)
    return NoiseSchedule(kind=kind, t_train=t_train, beta=beta, alpha_bar=alpha_bar)


def toy_schedule(t_train=DEFAULT_T_TRAIN):
    return build_schedule("linear", t_train, TOY_BETA_START, TOY_BETA_END)


def sd_schedule(t_train=DEFAULT_T_TRAIN):
    return build_schedule("scaled_linear", t_train, SD_BETA_START, SD_BETA_END)


def subsample_timesteps(t_train, t):
    """Uniform leading-spaced coarse grid: T_train, T_train - stride, ..., 0.

    ``t`` must divide ``t_train``; divisibility is enforced rather than
    silently rounded.
    """
    if not 1 <= t <= t_train:
        raise ParameterError(f"t={t} must satisfy 1 <= t <= t_train={t_train}")
    if t_train % t != 0:
        raise ParameterError(f"t={t} must divide t_train={t_train}")
    stride = t_train // t
    steps = np.arange(t_train, -1, -stride, dtype=np.int64)
    return TimestepMap(steps=steps)
