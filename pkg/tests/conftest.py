import numpy as np
import pytest

from voictrl import (
    DelayModel,
    SystemModel,
    solve_path_dp,
    solve_restricted_dp,
    solve_riccati,
)


@pytest.fixture(scope="session")
def paper_model():
    """The scalar benchmark instance used throughout the acceptance suite."""
    return SystemModel(
        A=1.1, B=1.0, W=1.0, Q=1.0, R=0.1, m0=0.0, M0=1.0, N=200,
        delay=DelayModel.bernoulli_fixed(5, 0.2), lam=0.5, ell=10.0,
    )


@pytest.fixture(scope="session")
def paper_schedule(paper_model):
    return solve_riccati(paper_model)


@pytest.fixture(scope="session")
def paper_restricted(paper_model, paper_schedule):
    return solve_restricted_dp(paper_model, paper_schedule)


@pytest.fixture(scope="session")
def paper_path(paper_model, paper_schedule):
    return solve_path_dp(paper_model, paper_schedule)


@pytest.fixture(scope="session")
def desk_model():
    """Smaller instance for statistically heavy unit tests."""
    return SystemModel(
        A=1.1, B=1.0, W=1.0, Q=1.0, R=0.1, m0=0.0, M0=1.0, N=40,
        delay=DelayModel.bernoulli_fixed(3, 0.3), lam=0.5, ell=10.0,
    )


@pytest.fixture(scope="session")
def desk_schedule(desk_model):
    return solve_riccati(desk_model)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
