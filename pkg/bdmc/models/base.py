from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Any, Generic, TypeVar

import numpy as np
from scipy.special import gammaln

from bdmc.models.views import Dataset, ShapeMismatchError

S = TypeVar('S')

# Largest number of latent configurations a brute-force oracle will sum over.
MAX_ENUMERATION = 10**6
ENUMERATION_CHUNK = 2**14


class LatentModel(ABC, Generic[S]):
	"""
	Shared interface of the three fixed-hyperparameter models.

	A model couples a spec with the math that operates on its latent states. Row-indexed
	latents (assignments, U rows, attribute rows) are the per-data-point part of the state;
	the remaining block (centres, V, A) is the parameter block.
	"""

	kind: str

	def __init__(self, spec):
		self.spec = spec

	@property
	def K(self) -> int:
		return self.spec.K

	@property
	def D(self) -> int:
		return self.spec.D

	@property
	def log_symmetry(self) -> float:
		"""log of the number of equivalent relabelings (K!)"""
		return float(gammaln(self.K + 1))

	# prior / likelihood ---------------------------------------------------

	@abstractmethod
	def sample_params(self, rng: np.random.Generator) -> np.ndarray: ...

	@abstractmethod
	def sample_rows(self, n_rows: int, rng: np.random.Generator) -> np.ndarray: ...

	@abstractmethod
	def make_state(self, rows: np.ndarray, params: np.ndarray, is_exact: bool = False) -> S: ...

	@abstractmethod
	def rows_of(self, state: S) -> np.ndarray: ...

	@abstractmethod
	def params_of(self, state: S) -> np.ndarray: ...

	@abstractmethod
	def mean_matrix(self, state: S) -> np.ndarray: ...

	@abstractmethod
	def log_prior_rows(self, rows: np.ndarray) -> float: ...

	@abstractmethod
	def log_prior_params(self, params: np.ndarray) -> float: ...

	@abstractmethod
	def sample_params_conditional(self, state: S, data: Dataset, rng: np.random.Generator, beta: float = 1.0) -> np.ndarray:
		"""Exact draw of the parameter block from its tempered conditional given the rows"""

	@abstractmethod
	def predictive_loglik(self, partial_state: S, data_prefix: Dataset, next_row: np.ndarray) -> float: ...

	@abstractmethod
	def sample_row_posterior(
		self, partial_state: S, data_prefix: Dataset, next_row: np.ndarray, rng: np.random.Generator
	) -> np.ndarray:
		"""Draw the latent row for `next_row` from the same posterior that `predictive_loglik` normalizes"""

	@abstractmethod
	def brute_force_log_ml(self, data: Dataset) -> float: ...

	@property
	@abstractmethod
	def n_free_params(self) -> int:
		"""Parameter count for the BIC penalty (for N = spec.N)"""

	def sample_prior(self, n_rows: int, rng: np.random.Generator) -> S:
		params = self.sample_params(rng)
		rows = self.sample_rows(n_rows, rng)
		return self.make_state(rows, params)

	def log_prior(self, state: S) -> float:
		return self.log_prior_params(self.params_of(state)) + self.log_prior_rows(self.rows_of(state))

	def log_likelihood(self, state: S, data: Dataset) -> float:
		self.check_shapes(state, data)
		if data.N == 0:
			return 0.0
		resid = data.Y - self.mean_matrix(state)
		nv = self.spec.noise_var
		return float(-0.5 * data.Y.size * math.log(2.0 * math.pi * nv) - np.sum(resid**2) / (2.0 * nv))

	def row_log_likelihoods(self, state: S, data: Dataset) -> np.ndarray:
		resid = data.Y - self.mean_matrix(state)
		nv = self.spec.noise_var
		return -0.5 * data.D * math.log(2.0 * math.pi * nv) - np.sum(resid**2, axis=1) / (2.0 * nv)

	def sample_data(self, state: S, rng: np.random.Generator) -> Dataset:
		mean = self.mean_matrix(state)
		return Dataset(mean + math.sqrt(self.spec.noise_var) * rng.standard_normal(mean.shape))

	# row bookkeeping used by the sequential estimators --------------------

	def truncate(self, state: S, n_rows: int) -> S:
		# a prefix of an exact posterior sample is not an exact sample for the prefix data
		return self.make_state(self.rows_of(state)[:n_rows].copy(), self.params_of(state).copy())

	def append_row(self, state: S, row: np.ndarray) -> S:
		rows = self.rows_of(state)
		return self.make_state(np.concatenate([rows, row[None, ...] if rows.ndim > 1 else np.atleast_1d(row)]), self.params_of(state))

	def with_params(self, state: S, params: np.ndarray) -> S:
		return self.make_state(self.rows_of(state).copy(), params, state.is_exact)  # type: ignore

	def sample_row_prior(self, rng: np.random.Generator) -> np.ndarray:
		return self.sample_rows(1, rng)[0]

	def check_shapes(self, state: S, data: Dataset | None = None) -> None:
		params = self.params_of(state)
		if params.shape != self.param_shape:
			raise ShapeMismatchError(f'{self.kind} parameter block has shape {params.shape}, expected {self.param_shape}')
		rows = self.rows_of(state)
		if rows.ndim > 1 and rows.shape[1] != self.K:
			raise ShapeMismatchError(f'{self.kind} latent rows have width {rows.shape[1]}, expected {self.K}')
		if data is not None:
			if data.D != self.D:
				raise ShapeMismatchError(f'dataset has D={data.D}, spec has D={self.D}')
			if data.N != rows.shape[0]:
				raise ShapeMismatchError(f'state covers {rows.shape[0]} rows, dataset has {data.N}')

	@property
	@abstractmethod
	def param_shape(self) -> tuple[int, ...]: ...

	def describe(self) -> dict[str, Any]:
		return self.spec.model_dump()
