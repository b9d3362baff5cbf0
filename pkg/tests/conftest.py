import numpy as np
import pytest

from earl.channel import generate_channel_set
from earl.scenario import Scenario, build_deployment


@pytest.fixture(scope="session")
def small_scenario():
    """Four RUs with two antennas each, two UEs: fast but non-trivial."""
    return Scenario(n_ru=4, n_ant=2, n_ue=2, area_side_m=200.0)


@pytest.fixture(scope="session")
def small_channels(small_scenario):
    deployment = build_deployment(small_scenario, seed=91)
    return generate_channel_set(small_scenario, deployment, 40, 92)
