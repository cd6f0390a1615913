import logging

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from geoduio.geometry import decompose_node
from geoduio.graphs import laplacian_from_edges, ring_edges
from geoduio.plants import (build_dgu_microgrid, build_example_ct,
                            build_example_dt, exact_discretize, node_system)
from geoduio.subspace import ContinuousRegion, DiscreteRegion

settings.register_profile(
    "repo", max_examples=100, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

logging.getLogger("geoduio").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def plant_ct():
    return build_example_ct()


@pytest.fixture(scope="session")
def plant_dt():
    return build_example_dt()


@pytest.fixture(scope="session")
def plant_dgu():
    return exact_discretize(build_dgu_microgrid(), 1e-3)


@pytest.fixture(scope="session")
def decomps_ct(plant_ct):
    return [decompose_node(node_system(plant_ct, i), ContinuousRegion())
            for i in range(plant_ct.n_nodes)]


@pytest.fixture(scope="session")
def decomps_dt(plant_dt):
    return [decompose_node(node_system(plant_dt, i), DiscreteRegion(0.999))
            for i in range(plant_dt.n_nodes)]


@pytest.fixture(scope="session")
def decomps_dgu(plant_dgu):
    return [decompose_node(node_system(plant_dgu, i), DiscreteRegion(0.99))
            for i in range(plant_dgu.n_nodes)]


@pytest.fixture(scope="session")
def ring4():
    return laplacian_from_edges(4, ring_edges(4))


@pytest.fixture(scope="session")
def ring5():
    return laplacian_from_edges(5, ring_edges(5))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from _acceptance import LOG
    if LOG:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LOG, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
