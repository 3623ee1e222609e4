"""Image <-> latent boundary.

The identity codec maps [0, 1] pixels affinely onto [-1, 1] latents
(the variance scale the analytic mixture means use); the remote codec
delegates both directions to the model server.
"""

import numpy as np

from .errors import DataError


def encode(image):
    """Pixels in [0, 1] -> latent 2*p - 1 with a leading channel axis."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None, :, :]
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise DataError(f"image must be (H, W) or (3, H, W), got {image.shape}")
    if not np.all(np.isfinite(image)):
        raise DataError("image contains non-finite values")
    if image.min() < 0.0 or image.max() > 1.0:
        raise DataError(
            f"pixel values must lie in [0, 1], got range [{image.min()}, {image.max()}]"
        )
    return 2.0 * image - 1.0


def decode(latent):
    """Latent -> pixels (z + 1)/2, clamped to [0, 1].

    Single-channel latents come back as plain (H, W) grayscale. Clamping
    absorbs overshoot; measure it separately with :func:`clamp_fraction`.
    """
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 3:
        raise DataError(f"latent must be (C, H, W), got shape {latent.shape}")
    if not np.all(np.isfinite(latent)):
        raise DataError("latent contains non-finite values")
    image = np.clip((latent + 1.0) / 2.0, 0.0, 1.0)
    if image.shape[0] == 1:
        return image[0]
    return image


def clamp_fraction(latent):
    """Fraction of latent entries outside [-1, 1] that decode() clamps."""
    latent = np.asarray(latent, dtype=np.float64)
    return float(np.mean((latent < -1.0) | (latent > 1.0)))


class RemoteCodec:
    """Codec delegating to a model server over an open protocol client."""

    def __init__(self, client):
        self._client = client

    def encode(self, image):
        image = np.asarray(image, dtype=np.float64)
        if image.ndim not in (2, 3):
            raise DataError(f"image must be (H, W) or (3, H, W), got {image.shape}")
        return self._client.encode_image(image)

    def decode(self, latent):
        return self._client.decode_latent(np.asarray(latent, dtype=np.float64))
