import pytest

from ergodiff.model import build_law, make_drift
from ergodiff.simulate import SeedStream, simulate_path


@pytest.fixture(scope="session")
def ou_law():
    return build_law(make_drift("ou"))


@pytest.fixture(scope="session")
def ou_sin_law():
    return build_law(make_drift("ou_sin"))


@pytest.fixture(scope="session")
def ou_path(ou_law):
    """OU path at the default step, horizon 400."""
    return simulate_path(ou_law, 1e-3, 400.0, SeedStream(11, 0))
