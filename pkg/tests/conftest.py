import pytest
from hypothesis import HealthCheck, settings

from btwhy.domains import casestudy
from btwhy.model import build
from btwhy.trace import run

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def cs_tree():
    return casestudy.tree()


@pytest.fixture
def cs_sm():
    return casestudy.state_model()


@pytest.fixture
def cs_memory(cs_tree, cs_sm):
    return run(cs_tree, cs_sm, casestudy.initial(), 1)


@pytest.fixture
def cs_model(cs_tree, cs_sm):
    return build(cs_tree, cs_sm)
