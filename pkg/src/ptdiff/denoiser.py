"""Noise-prediction backends.

Two implementations of the same eps(z, t, cond) contract: an exact
analytic denoiser over a Gaussian mixture (small enough to verify
against quadrature) and a thin client delegating to a remote model
server. Condition handles are issued by a backend and are only valid
on the backend that issued them.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import BackendError, ConditionError, DataError, ParameterError
from .schedule import NoiseSchedule

try:
    from ._mixture_cy import eps_kernel as _eps_kernel
    KERNEL_BACKEND = "cython"
except ImportError:
    from ._mixture_np import eps_kernel as _eps_kernel
    KERNEL_BACKEND = "numpy"

CONDITION_KINDS = ("null_text", "prompt")


@dataclass(frozen=True)
class ConditionHandle:
    """Opaque reference to a conditioning signal, scoped to one backend."""

    id: int
    kind: str
    owner: object = field(repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in CONDITION_KINDS:
            raise ParameterError(f"unknown condition kind {self.kind!r}")


@dataclass(frozen=True)
class GaussianMixture:
    """Equally simple stand-in for a data distribution: K isotropic Gaussians."""

    weights: np.ndarray  # (K,), positive, sums to 1
    means: np.ndarray  # (K, C, H, W)
    sigma: float  # shared scalar std > 0

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        means = np.asarray(self.means, dtype=np.float64)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sigma", float(self.sigma))
        if weights.ndim != 1 or weights.size == 0:
            raise DataError("weights must be a non-empty 1-D array")
        if means.ndim != 4 or means.shape[0] != weights.size:
            raise DataError(
                f"means must have shape (K, C, H, W) with K={weights.size}, got {means.shape}"
            )
        if not np.all(weights > 0.0):
            raise DataError("mixture weights must be positive")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise DataError(f"mixture weights sum to {weights.sum()!r}, expected 1")
        if not np.all(np.isfinite(means)):
            raise DataError("mixture means must be finite")
        if not self.sigma > 0.0:
            raise DataError(f"sigma must be > 0, got {self.sigma}")

    @property
    def k(self):
        return int(self.weights.size)

    @property
    def latent_shape(self):
        return self.means.shape[1:]


def make_image_mixture(images, sigma):
    """Equal-weight mixture whose means are the given latents."""
    images = [np.asarray(img, dtype=np.float64) for img in images]
    if not images:
        raise ParameterError("need at least one image")
    shape = images[0].shape
    for i, img in enumerate(images):
        if img.shape != shape:
            raise ParameterError(
                f"image {i} has shape {img.shape}, expected {shape}"
            )
        if img.ndim != 3:
            raise ParameterError(f"image {i} must be (C, H, W), got {img.shape}")
    k = len(images)
    return GaussianMixture(
        weights=np.full(k, 1.0 / k), means=np.stack(images), sigma=sigma
    )


def analytic_eps(z, t, cond, mix, sched, with_responsibilities=False):
    """Exact eps for a Gaussian mixture at training timestep t.

    cond selects a component subset: None means all components (the
    null-text case), otherwise a sequence of component indices. The
    posterior mean of z_0 given z_t = z is closed-form; the returned
    eps is (z - sqrt(ab)*posterior_mean)/sqrt(1-ab) simplified so it
    stays finite at t = 0.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != mix.latent_shape:
        raise ParameterError(
            f"latent shape {z.shape} does not match mixture {mix.latent_shape}"
        )
    if cond is None:
        idx = np.arange(mix.k)
    else:
        idx = np.asarray(list(cond), dtype=np.int64)
        if idx.size == 0:
            raise ConditionError("condition selects no mixture components")
        if idx.min() < 0 or idx.max() >= mix.k:
            raise ConditionError(
                f"component index out of range for K={mix.k}: {idx.tolist()}"
            )
    a = sched.ab(t)
    means = np.ascontiguousarray(mix.means[idx].reshape(idx.size, -1))
    log_w = np.log(mix.weights[idx])  # softmax renormalizes the subset
    eps_flat, resp = _eps_kernel(
        np.ascontiguousarray(z.reshape(-1)), means, log_w, mix.sigma, a
    )
    eps = np.asarray(eps_flat).reshape(z.shape)
    if with_responsibilities:
        return eps, np.asarray(resp)
    return eps


class AnalyticDenoiser:
    """eps backend with an exact closed-form posterior, for desk-scale runs."""

    def __init__(self, mixture, schedule):
        if not isinstance(mixture, GaussianMixture):
            raise ParameterError("mixture must be a GaussianMixture")
        if not isinstance(schedule, NoiseSchedule):
            raise ParameterError("schedule must be a NoiseSchedule")
        self.mixture = mixture
        self.schedule = schedule
        self._subsets = {}
        self._ids = itertools.count(1)
        self._null = ConditionHandle(id=0, kind="null_text", owner=self)
        self._subsets[0] = None

    @property
    def latent_shape(self):
        return self.mixture.latent_shape

    def null_condition(self):
        return self._null

    def prompt_condition(self, components):
        """Handle restricting the mixture to the given component indices."""
        idx = tuple(int(i) for i in components)
        if not idx:
            raise ConditionError("prompt must select at least one component")
        for i in idx:
            if i < 0 or i >= self.mixture.k:
                raise ConditionError(
                    f"component {i} out of range for K={self.mixture.k}"
                )
        handle = ConditionHandle(id=next(self._ids), kind="prompt", owner=self)
        self._subsets[handle.id] = idx
        return handle

    def _resolve(self, cond):
        if not isinstance(cond, ConditionHandle) or cond.owner is not self:
            raise ConditionError("condition handle was not issued by this backend")
        if cond.id not in self._subsets:
            raise ConditionError(f"unknown condition id {cond.id}")
        return self._subsets[cond.id]

    def eps(self, z, t, cond):
        return analytic_eps(z, t, self._resolve(cond), self.mixture, self.schedule)

    def eps_with_responsibilities(self, z, t, cond):
        return analytic_eps(
            z, t, self._resolve(cond), self.mixture, self.schedule,
            with_responsibilities=True,
        )


class RemoteDenoiser:
    """eps backend delegating every call to a model server over the wire."""

    def __init__(self, client):
        self.client = client
        self._null = ConditionHandle(id=0, kind="null_text", owner=self)

    @property
    def latent_shape(self):
        return tuple(self.client.hello_info["shape"])

    def null_condition(self):
        # id 0 is the advertised null-text embedding on every server
        return self._null

    def prompt_condition(self, text):
        cond_id = self.client.embed_text(text)
        return ConditionHandle(id=cond_id, kind="prompt", owner=self)

    def eps(self, z, t, cond):
        if not isinstance(cond, ConditionHandle) or cond.owner is not self:
            raise ConditionError("condition handle was not issued by this backend")
        out = self.client.eps(z, int(t), cond.id)
        if out.shape != np.asarray(z).shape:
            raise BackendError(
                f"server returned shape {out.shape} for input {np.asarray(z).shape}"
            )
        return out
