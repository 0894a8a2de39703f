import numpy as np
import pytest

from emato.params import sedan_params, truck_params
from emato.powertrain import (build_engine_map, optimize_gear_policy,
                              truck_map_spec, truck_transmission)


@pytest.fixture(scope="session")
def truck():
    return truck_params()


@pytest.fixture(scope="session")
def sedan():
    return sedan_params()


@pytest.fixture(scope="session")
def truck_map():
    return build_engine_map(truck_map_spec())


@pytest.fixture(scope="session")
def truck_policy(truck_map, truck):
    v_grid = np.linspace(2.0, 27.0, 26)
    at_grid = np.linspace(0.0, 3.0, 16)
    return optimize_gear_policy(truck_map, truck_transmission(), v_grid,
                                at_grid, truck)
