"""Shared fixtures: seeded RNG, small geometries, and a fast scenario factory."""

import numpy as np
import pytest

from tmems.geometry import EmsGeometry
from tmems.isac import Scenario
from tmems.modulation import ControlMode, PulseSchedule, ReflectionStates
from tmems.synthesis import PsoConfig


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def ideal():
    return ReflectionStates.ideal()


@pytest.fixture
def geom4():
    return EmsGeometry(rows=4, cols=4)


def random_schedule(rng, rows, cols, period_s=1e-6):
    return PulseSchedule(period_s=period_s,
                         rise=rng.random((rows, cols)),
                         duty=rng.random((rows, cols)))


@pytest.fixture
def make_schedule():
    return random_schedule


@pytest.fixture
def fast_scenario():
    """Factory for small scenarios that keep pipeline tests under a second."""

    def make(mode=ControlMode.DELTA, rows=6, cols=6, theta_inc_deg=40.0,
             theta_refl_deg=-20.0, iterations=30, swarm=8, seed=7, synth_grid_n=32,
             period_s=1e-6, **kw):
        return Scenario(
            geometry=EmsGeometry(rows=rows, cols=cols),
            states=ReflectionStates.ideal(),
            period_s=period_s,
            mode=mode,
            theta_inc_deg=theta_inc_deg,
            theta_refl_deg=theta_refl_deg,
            pso=PsoConfig(swarm_size=swarm, iterations=iterations, seed=seed,
                          stagnation_window=0),
            synth_grid_n=synth_grid_n,
            **kw,
        )

    return make
