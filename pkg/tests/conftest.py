import pytest

from helpers import make_desk_model, make_small_model


@pytest.fixture(scope="session")
def desk_model():
    return make_desk_model()


@pytest.fixture(scope="session")
def small_model():
    return make_small_model()
