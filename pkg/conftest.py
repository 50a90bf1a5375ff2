import os
import sys

import pytest

# Get the absolute path to the project root
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

from bdmc.logging_config import setup_logging  # noqa: E402
from bdmc.models.service import simulate  # noqa: E402
from bdmc.models.views import BinarySpec, ClusteringSpec, LowRankSpec  # noqa: E402
from bdmc.prob.service import make_rng  # noqa: E402

setup_logging()


@pytest.fixture
def rng():
	return make_rng(20240601)


@pytest.fixture
def tiny_clustering_spec():
	return ClusteringSpec(N=4, D=2, K=2, noise_var=0.1)


@pytest.fixture
def tiny_binary_spec():
	return BinarySpec(N=3, D=2, K=2, attr_probs=(0.3, 0.3), noise_var=0.1)


@pytest.fixture
def tiny_lowrank_spec():
	return LowRankSpec(N=2, D=1, K=1, noise_var=0.1)


@pytest.fixture
def tiny_clustering(tiny_clustering_spec):
	state, data = simulate(tiny_clustering_spec, make_rng(7))
	return tiny_clustering_spec, state, data


@pytest.fixture
def tiny_binary(tiny_binary_spec):
	state, data = simulate(tiny_binary_spec, make_rng(8))
	return tiny_binary_spec, state, data


@pytest.fixture
def tiny_lowrank(tiny_lowrank_spec):
	state, data = simulate(tiny_lowrank_spec, make_rng(9))
	return tiny_lowrank_spec, state, data
