import pytest

from artifact.replica_saddle import ModelParams, solve_saddle

ALPHA_MID = 0.8330785995


@pytest.fixture(scope="session")
def sp():
    """Saddle point inside the certified alpha bracket."""
    return solve_saddle(ModelParams(ALPHA_MID))


@pytest.fixture(scope="session")
def sp_833():
    return solve_saddle(ModelParams(0.833))

