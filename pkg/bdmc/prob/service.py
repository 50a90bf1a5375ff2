"""
Log-domain arithmetic shared by every estimator.

All weights are combined in log space end-to-end; these reductions are the only place
where exponentiation of weights happens.
"""

import logging
import math
from typing import Iterable

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import logsumexp

from bdmc.prob.views import (
	LOG_2PI,
	EmptyAggregationError,
	InvalidLogWeightError,
	LogWeight,
	RngStream,
	ZeroWeightError,
)

logger = logging.getLogger(__name__)


def _as_log_values(values: Iterable[float]) -> np.ndarray:
	arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float).ravel()
	if arr.size == 0:
		raise EmptyAggregationError('empty aggregation')
	if np.any(np.isnan(arr)):
		raise InvalidLogWeightError('NaN log weight')
	if np.any(arr == np.inf):
		raise InvalidLogWeightError('+inf log weight')
	return arr


def check_log_weight(value: float) -> LogWeight:
	"""Validate a single log weight (NaN and +inf are rejected, -inf is weight zero)"""
	if math.isnan(value) or value == math.inf:
		raise InvalidLogWeightError(f'invalid log weight {value}')
	return float(value)


def log_sum_exp(values: Iterable[float]) -> LogWeight:
	"""log sum_i exp(v_i) via a max shift; all -inf input gives -inf"""
	arr = _as_log_values(values)
	if np.all(arr == -np.inf):
		return -math.inf
	return float(logsumexp(arr))


def log_mean_exp(values: Iterable[float]) -> LogWeight:
	arr = _as_log_values(values)
	return log_sum_exp(arr) - math.log(arr.size)


def log_harmonic_mean_exp(values: Iterable[float]) -> LogWeight:
	"""log of K / sum_k exp(-v_k)"""
	arr = _as_log_values(values)
	if np.any(arr == -np.inf):
		raise ZeroWeightError('zero weight in harmonic mean')
	return -log_mean_exp(-arr)


def effective_sample_size(log_weights: Iterable[float]) -> float:
	"""(sum w)^2 / sum w^2, computed in log space"""
	arr = _as_log_values(log_weights)
	if np.all(arr == -np.inf):
		return 0.0
	return float(math.exp(2.0 * log_sum_exp(arr) - log_sum_exp(2.0 * arr)))


def normalized_weights(log_weights: Iterable[float]) -> np.ndarray:
	arr = _as_log_values(log_weights)
	return np.exp(arr - log_sum_exp(arr))


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
	return RngStream(seed=seed, stream_id=stream_id).generator()


def gaussian_logpdf(x, mean, var):
	"""Elementwise univariate Gaussian log density; `var` broadcasts"""
	x = np.asarray(x, dtype=float)
	var = np.asarray(var, dtype=float)
	return -0.5 * (LOG_2PI + np.log(var)) - (x - mean) ** 2 / (2.0 * var)


def sample_log_categorical(logits: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
	"""
	Draw one category per row of `logits` (unnormalized log probabilities, last axis).

	Returns the sampled indices and, alongside, the normalized log probabilities.
	"""
	logits = np.atleast_2d(logits)
	log_norm = logsumexp(logits, axis=-1, keepdims=True)
	log_probs = logits - log_norm
	u = rng.random(logits.shape[0])
	cdf = np.cumsum(np.exp(log_probs), axis=-1)
	idx = (u[:, None] > cdf).sum(axis=-1)
	return np.minimum(idx, logits.shape[-1] - 1), log_probs


def precision_gaussian_sample(precision: np.ndarray, rhs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
	"""
	Draw the columns of X independently from N(P^-1 rhs_m, P^-1), one column per column of `rhs`.

	Natural-parameter form: `precision` is P (k, k), `rhs` is the linear term (k, m).
	"""
	if rhs.size == 0:
		return np.zeros(rhs.shape)
	chol = np.linalg.cholesky(precision)
	mean = cho_solve((chol, True), rhs)
	noise = rng.standard_normal(mean.shape)
	return mean + solve_triangular(chol.T, noise, lower=False)


def precision_gaussian_logpdf(x: np.ndarray, precision: np.ndarray, rhs: np.ndarray) -> float:
	"""Summed log density of the columns of `x` under the law sampled by `precision_gaussian_sample`"""
	if x.size == 0:
		return 0.0
	chol = np.linalg.cholesky(precision)
	mean = cho_solve((chol, True), rhs)
	k = precision.shape[0]
	m = 1 if x.ndim == 1 else x.shape[1]
	diff = x - mean
	quad = float(np.sum(diff * (precision @ diff)))
	logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
	return m * (-0.5 * k * LOG_2PI + 0.5 * logdet) - 0.5 * quad
