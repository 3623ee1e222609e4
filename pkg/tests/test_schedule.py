"""Noise schedule and timestep map tests.

The cumulative-product oracle is a plain Python loop, kept independent
of the vectorized implementation. The two endpoint literals below were
frozen from that loop before the module was written.
"""

import numpy as np
import pytest

from ptdiff.errors import ParameterError
from ptdiff.schedule import (
    DEFAULT_T_TRAIN,
    SD_BETA_END,
    SD_BETA_START,
    TOY_BETA_END,
    TOY_BETA_START,
    NoiseSchedule,
    TimestepMap,
    build_schedule,
    sd_schedule,
    subsample_timesteps,
    toy_schedule,
)

# Frozen endpoint values of alpha_bar[t_train], computed with the loop
# oracle below before build_schedule existed.
FROZEN_SCALED_LINEAR_AB_END = 0.004660098513077236
FROZEN_LINEAR_AB_END = 4.0358297653756754e-05


def loop_alpha_bar(betas):
    """Running product of (1 - beta) via plain Python floats."""
    out = [1.0]
    acc = 1.0
    for b in betas:
        acc *= 1.0 - b
        out.append(acc)
    return np.array(out)


def loop_betas(kind, t_train, start, end):
    if t_train == 1:
        return [start]
    if kind == "linear":
        return [start + (end - start) * i / (t_train - 1) for i in range(t_train)]
    roots = [
        start**0.5 + (end**0.5 - start**0.5) * i / (t_train - 1)
        for i in range(t_train)
    ]
    return [r * r for r in roots]


class TestBuildSchedule:
    def test_frozen_endpoints(self):
        assert sd_schedule().ab(DEFAULT_T_TRAIN) == pytest.approx(
            FROZEN_SCALED_LINEAR_AB_END, abs=1e-15
        )
        assert toy_schedule().ab(DEFAULT_T_TRAIN) == pytest.approx(
            FROZEN_LINEAR_AB_END, abs=1e-18
        )

    @pytest.mark.parametrize(
        "kind,start,end",
        [
            ("linear", TOY_BETA_START, TOY_BETA_END),
            ("scaled_linear", SD_BETA_START, SD_BETA_END),
            ("linear", 0.003, 0.003),
            ("scaled_linear", 1e-5, 0.5),
        ],
    )
    def test_matches_loop_oracle(self, kind, start, end):
        sched = build_schedule(kind, 50, start, end)
        oracle = loop_alpha_bar(loop_betas(kind, 50, start, end))
        assert np.allclose(sched.alpha_bar, oracle, rtol=0, atol=1e-15)

    def test_boundary_and_monotonicity(self, sched):
        assert sched.alpha_bar[0] == 1.0
        assert len(sched.alpha_bar) == sched.t_train + 1
        assert np.all(np.diff(sched.alpha_bar) < 0)
        assert np.all(sched.alpha_bar > 0)
        assert len(sched.beta) == sched.t_train

    def test_ab_lookup(self, sched):
        assert sched.ab(0) == 1.0
        assert sched.ab(1) == 1.0 - TOY_BETA_START
        assert isinstance(sched.ab(500), float)

    @pytest.mark.parametrize("t", [-1, 1001])
    def test_ab_out_of_range(self, sched, t):
        with pytest.raises(ParameterError):
            sched.ab(t)

    @pytest.mark.parametrize(
        "kind,t_train,start,end",
        [
            ("cosine", 10, 1e-4, 0.02),
            ("linear", 0, 1e-4, 0.02),
            ("linear", 10, 0.0, 0.02),
            ("linear", 10, 0.03, 0.02),
            ("linear", 10, 0.5, 1.0),
        ],
    )
    def test_rejects_bad_parameters(self, kind, t_train, start, end):
        with pytest.raises(ParameterError):
            build_schedule(kind, t_train, start, end)

    def test_single_step_schedule(self):
        sched = build_schedule("linear", 1, 0.01, 0.01)
        assert sched.ab(0) == 1.0
        assert sched.ab(1) == pytest.approx(0.99, abs=1e-15)


class TestTimestepMap:
    def test_grid_values(self):
        tmap = subsample_timesteps(1000, 100)
        assert tmap.n_steps == 100
        assert len(tmap.steps) == 101
        assert tmap.steps[0] == 1000
        assert tmap.steps[-1] == 0
        assert np.array_equal(tmap.steps, np.arange(1000, -1, -10))

    def test_identity_grid(self):
        tmap = subsample_timesteps(10, 10)
        assert np.array_equal(tmap.steps, np.arange(10, -1, -1))

    def test_single_step_grid(self):
        tmap = subsample_timesteps(1000, 1)
        assert np.array_equal(tmap.steps, [1000, 0])

    def test_index_of(self):
        tmap = subsample_timesteps(1000, 100)
        assert tmap.index_of(1000) == 0
        assert tmap.index_of(990) == 1
        assert tmap.index_of(0) == 100
        with pytest.raises(ParameterError):
            tmap.index_of(995)

    @pytest.mark.parametrize("t", [0, 1001, 7, 3])
    def test_rejects_bad_subsampling(self, t):
        with pytest.raises(ParameterError):
            subsample_timesteps(1000, t)

    def test_strictly_decreasing(self):
        for t in (1, 2, 4, 5, 8, 10, 20, 25, 50, 100, 500, 1000):
            steps = subsample_timesteps(1000, t).steps
            assert np.all(np.diff(steps) < 0)
            assert len(steps) == t + 1


def test_schedule_is_frozen(sched):
    with pytest.raises(AttributeError):
        sched.t_train = 5
    with pytest.raises(AttributeError):
        TimestepMap(steps=np.array([10, 0])).steps = None


def test_noise_schedule_direct_construction():
    """NoiseSchedule is a passive record; hand-built instances work too."""
    ab = np.array([1.0, 0.8, 0.64])
    sched = NoiseSchedule(kind="linear", t_train=2, beta=np.array([0.2, 0.2]), alpha_bar=ab)
    assert sched.ab(2) == 0.64
