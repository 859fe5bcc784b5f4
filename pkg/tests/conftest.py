import numpy as np
import pytest

from stopsim import (
    BoundarySides,
    DomainSpec,
    HysteresisConfig,
    PiecewiseLinearSignal,
    ReactionFunction,
    SFunctional,
    SolverConfig,
    assemble,
)


def random_signal(rng, n_points=40, t_max=4.0, amplitude=2.0):
    """Random piecewise-linear signal with a strictly increasing time grid."""
    gaps = rng.uniform(0.2, 1.0, n_points - 1)
    times = np.concatenate(([0.0], np.cumsum(gaps)))
    times *= t_max / times[-1]
    values = rng.uniform(-amplitude, amplitude, n_points)
    return PiecewiseLinearSignal(times=times, values=values)


def constant_sfun(disc, value=0.5):
    return SFunctional(weight=np.full((disc.n_components, disc.n_nodes), value))


@pytest.fixture
def hyst_cfg():
    return HysteresisConfig(a=-1.0, b=1.0, z0=0.0)


@pytest.fixture
def disc_dirichlet():
    return assemble(
        DomainSpec(dimension=1, extent=(1.0,), resolution=(21,)),
        [BoundarySides(left="dirichlet", right="dirichlet")],
        [1.0],
    )


@pytest.fixture
def disc_mixed():
    return assemble(
        DomainSpec(dimension=1, extent=(1.0,), resolution=(17,)),
        [BoundarySides(left="dirichlet", right="neumann")],
        [0.8],
    )


@pytest.fixture
def disc_neumann():
    return assemble(
        DomainSpec(dimension=1, extent=(2.0,), resolution=(25,)),
        [BoundarySides(left="neumann", right="neumann")],
        [0.5],
    )


@pytest.fixture
def disc_2d():
    return assemble(
        DomainSpec(dimension=2, extent=(1.0, 1.5), resolution=(7, 6)),
        [BoundarySides(left="dirichlet", right="neumann",
                       bottom="neumann", top="dirichlet")],
        [1.2],
    )


@pytest.fixture
def solver_short():
    return SolverConfig(dt=0.02, t_final=0.4)


@pytest.fixture
def linear_reaction():
    return ReactionFunction.linear(constant=0.0, state=-0.5, hysteresis=0.3)


@pytest.fixture
def saturating_reaction():
    return ReactionFunction.saturating(
        state_amplitude=-0.7, state_rate=1.1,
        hysteresis_amplitude=0.8, hysteresis_rate=0.9,
    )
