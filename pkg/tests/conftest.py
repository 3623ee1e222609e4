"""Shared fixtures: the toy training schedule and the bundled pattern mixture."""

import numpy as np
import pytest

from ptdiff.assets import load_asset, load_patterns
from ptdiff.codec import encode
from ptdiff.denoiser import AnalyticDenoiser, make_image_mixture
from ptdiff.schedule import toy_schedule


@pytest.fixture(scope="session")
def sched():
    """1000-step toy schedule; session scoped, it is immutable."""
    return toy_schedule()


@pytest.fixture(scope="session")
def pattern_mixture():
    latents = [encode(img) for img in load_patterns()]
    return make_image_mixture(latents, 1.0)


@pytest.fixture(scope="session")
def pattern_denoiser(pattern_mixture, sched):
    return AnalyticDenoiser(pattern_mixture, sched)


@pytest.fixture(scope="session")
def face_latent():
    return encode(load_asset("face"))


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
