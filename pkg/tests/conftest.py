"""Shared fixtures: tight solver settings, small channels and a fake conic solver."""
import pytest

from bianm.domain.channel import generate_channel, observe
from bianm.domain.entities import ChannelInstance, ObservationSet, SolverSettings
from bianm.infrastructure.admm_solver import AdmmConicSolver

from .fakes import FakeConicSolver


@pytest.fixture
def fake_solver() -> FakeConicSolver:
    return FakeConicSolver()


@pytest.fixture
def admm_solver() -> AdmmConicSolver:
    return AdmmConicSolver()


@pytest.fixture
def tight_settings() -> SolverSettings:
    """Settings for closed-form oracle comparisons."""
    return SolverSettings(eps_abs=1e-7, eps_rel=1e-6, max_iterations=10000)


@pytest.fixture
def small_channel() -> ChannelInstance:
    return generate_channel(4, 4, 2, rng_seed=7)


@pytest.fixture
def noiseless_obs(small_channel: ChannelInstance) -> ObservationSet:
    return observe(small_channel, 0.0, rng_seed=11)
