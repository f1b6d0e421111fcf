import pytest

from _stub import StubEngine


@pytest.fixture
def stub_engine():
    return StubEngine()
