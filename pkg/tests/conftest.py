import pytest

from arrayforge import make_suca


@pytest.fixture(scope="session")
def suca33():
    """The 3 x 11 stacked circular array used throughout the experiments."""
    return make_suca(3, 11, 0.5, 0.68)
