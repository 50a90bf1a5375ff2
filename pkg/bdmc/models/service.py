"""
Model-level operations dispatched on the spec's `kind`.

Every function takes the spec first; the per-model math lives in `clustering.py`,
`low_rank.py` and `binary.py`.
"""

import hashlib
import logging
import math
from functools import lru_cache

import numpy as np

from bdmc.models.base import LatentModel
from bdmc.models.binary import BinaryModel
from bdmc.models.clustering import ClusteringModel
from bdmc.models.low_rank import LowRankModel
from bdmc.models.views import BinarySpec, ClusteringSpec, Dataset, LatentState, LowRankSpec, ShapeMismatchError, SpecError
from bdmc.transitions.views import BetaOutOfRangeError

logger = logging.getLogger(__name__)

_MODEL_CLASSES: dict[str, type[LatentModel]] = {
	'clustering': ClusteringModel,
	'lowrank': LowRankModel,
	'binary': BinaryModel,
}


@lru_cache(maxsize=64)
def get_model(spec: ClusteringSpec | LowRankSpec | BinarySpec) -> LatentModel:
	try:
		model_cls = _MODEL_CLASSES[spec.kind]
	except KeyError:
		raise SpecError(f'unknown model kind {spec.kind!r}') from None
	return model_cls(spec)


def spec_hash(spec) -> str:
	"""Short stable digest of a spec, written into provenance headers"""
	return hashlib.sha256(spec.model_dump_json().encode()).hexdigest()[:16]


def check_beta(beta: float) -> float:
	if not 0.0 <= beta <= 1.0 or math.isnan(beta):
		raise BetaOutOfRangeError(f'beta must lie in [0, 1], got {beta}')
	return float(beta)


def simulate(spec, rng: np.random.Generator) -> tuple[LatentState, Dataset]:
	"""
	Forward-simulate (theta, z) from the prior and Y from the observation model.

	The returned state is an exact posterior sample for the returned dataset and is
	flagged as such.
	"""
	model = get_model(spec)
	state = model.sample_prior(spec.N, rng)
	data = model.sample_data(state, rng)
	state.is_exact = True
	logger.debug(f'simulated {spec.kind} dataset N={data.N} D={data.D} K={spec.K}')
	return state, data


def log_prior(spec, state) -> float:
	model = get_model(spec)
	model.check_shapes(state)
	return model.log_prior(state)


def log_likelihood(spec, state, data: Dataset) -> float:
	return get_model(spec).log_likelihood(state, data)


def log_joint(spec, state, data: Dataset) -> float:
	return log_prior(spec, state) + log_likelihood(spec, state, data)


def tempered_log_f(spec, state, data: Dataset, beta: float) -> float:
	"""log p(theta, z) + beta * log p(y | theta, z)"""
	beta = check_beta(beta)
	return log_prior(spec, state) + beta * log_likelihood(spec, state, data)


def predictive_loglik(spec, partial_state, data_prefix: Dataset, next_row: np.ndarray) -> float:
	"""
	log p(y_i | rows 1..i-1) with the parameter block collapsed where the model allows it.

	Clustering and binary integrate the centres / weights out and depend only on the latent
	rows of `partial_state`; low-rank conditions on its V and integrates the new U row out.
	"""
	model = get_model(spec)
	next_row = np.asarray(next_row, dtype=float)
	if next_row.shape != (model.D,):
		raise ShapeMismatchError(f'next row has shape {next_row.shape}, expected ({model.D},)')
	return model.predictive_loglik(partial_state, data_prefix, next_row)


def brute_force_log_ml(spec, data: Dataset) -> float:
	model = get_model(spec)
	if data.D != model.D:
		raise ShapeMismatchError(f'dataset has D={data.D}, spec has D={model.D}')
	value = model.brute_force_log_ml(data)
	logger.debug(f'brute-force log ML for {spec.kind} N={data.N}: {value:.6f}')
	return value
