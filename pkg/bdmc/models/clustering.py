"""
Finite Gaussian mixture with fixed hyperparameters.

    z_i ~ Categorical(pi),  theta_kj ~ N(0, between_var),  y_ij ~ N(theta_{z_i j}, noise_var)

Collapsed computations integrate the centres out through per-cluster sufficient
statistics (counts and sums).
"""

import math

import numpy as np
from scipy.special import logsumexp

from bdmc.models.base import ENUMERATION_CHUNK, MAX_ENUMERATION, LatentModel
from bdmc.models.views import ClusteringSpec, ClusteringState, InstanceTooLargeError
from bdmc.prob.service import gaussian_logpdf, log_sum_exp, sample_log_categorical
from bdmc.prob.views import LOG_2PI


class ClusteringModel(LatentModel[ClusteringState]):
	kind = 'clustering'

	def __init__(self, spec: ClusteringSpec):
		super().__init__(spec)
		self.pi = np.asarray(spec.mix_probs, dtype=float)
		with np.errstate(divide='ignore'):
			self.log_pi = np.log(self.pi)

	@property
	def param_shape(self) -> tuple[int, ...]:
		return (self.K, self.D)

	@property
	def n_free_params(self) -> int:
		return self.K * self.D

	def sample_params(self, rng):
		return math.sqrt(self.spec.between_var) * rng.standard_normal((self.K, self.D))

	def sample_rows(self, n_rows, rng):
		return rng.choice(self.K, size=n_rows, p=self.pi)

	def make_state(self, rows, params, is_exact=False):
		return ClusteringState(z=np.asarray(rows, dtype=np.int64), theta=np.asarray(params, dtype=float), is_exact=is_exact)

	def rows_of(self, state):
		return state.z

	def params_of(self, state):
		return state.theta

	def mean_matrix(self, state):
		return state.theta[state.z]

	def log_prior_rows(self, rows):
		return float(np.sum(self.log_pi[rows])) if rows.size else 0.0

	def log_prior_params(self, params):
		return float(np.sum(gaussian_logpdf(params, 0.0, self.spec.between_var)))

	# sufficient statistics ------------------------------------------------

	def cluster_stats(self, z: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
		"""Per-cluster counts (K,) and sums (K, D)"""
		counts = np.bincount(z, minlength=self.K).astype(float)
		sums = np.zeros((self.K, Y.shape[1]))
		np.add.at(sums, z, Y)
		return counts, sums

	def centre_posterior(self, counts, sums, beta: float = 1.0, noise_var: float | None = None):
		"""Precision (K,) and mean (K, D) of each centre given the data assigned to it"""
		nv = self.spec.noise_var if noise_var is None else noise_var
		precision = 1.0 / self.spec.between_var + beta * counts / nv
		mean = (beta / nv) * sums / precision[:, None]
		return precision, mean

	def sample_params_conditional(self, state, data, rng, beta=1.0):
		counts, sums = self.cluster_stats(state.z, data.Y)
		precision, mean = self.centre_posterior(counts, sums, beta)
		return mean + rng.standard_normal(mean.shape) / np.sqrt(precision)[:, None]

	def collapsed_log_likelihood(self, z: np.ndarray, Y: np.ndarray) -> float:
		"""log p(Y | z) with the centres integrated out"""
		return float(self._batched_collapsed_loglik(z[None, :], Y)[0])

	def collapsed_log_joint(self, z: np.ndarray, Y: np.ndarray) -> float:
		return self.log_prior_rows(z) + self.collapsed_log_likelihood(z, Y)

	def _batched_collapsed_loglik(self, zs: np.ndarray, Y: np.ndarray) -> np.ndarray:
		N, D = Y.shape
		if N == 0:
			return np.zeros(zs.shape[0])
		nv, bv = self.spec.noise_var, self.spec.between_var
		one_hot = np.eye(self.K)[zs]  # (M, N, K)
		counts = one_hot.sum(axis=1)  # (M, K)
		sums = np.einsum('mnk,nd->mkd', one_hot, Y)
		lam0 = 1.0 / bv
		lam = lam0 + counts / nv
		return (
			-0.5 * N * D * math.log(2.0 * math.pi * nv)
			- np.sum(Y**2) / (2.0 * nv)
			+ 0.5 * D * np.sum(np.log(lam0 / lam), axis=1)
			+ np.sum(np.sum(sums**2, axis=2) / lam, axis=1) / (2.0 * nv**2)
		)

	# predictive -----------------------------------------------------------

	def _predictive_logits(self, z_prefix: np.ndarray, Y_prefix: np.ndarray, y: np.ndarray) -> np.ndarray:
		counts, sums = self.cluster_stats(z_prefix, Y_prefix)
		precision, mean = self.centre_posterior(counts, sums)
		var = 1.0 / precision + self.spec.noise_var
		ll = -0.5 * self.D * (LOG_2PI + np.log(var)) - np.sum((y[None, :] - mean) ** 2, axis=1) / (2.0 * var)
		return self.log_pi + ll

	def predictive_loglik(self, partial_state, data_prefix, next_row):
		z_prefix = partial_state.z[: data_prefix.N]
		return float(logsumexp(self._predictive_logits(z_prefix, data_prefix.Y, np.asarray(next_row, dtype=float))))

	def sample_row_posterior(self, partial_state, data_prefix, next_row, rng):
		z_prefix = partial_state.z[: data_prefix.N]
		logits = self._predictive_logits(z_prefix, data_prefix.Y, np.asarray(next_row, dtype=float))
		idx, _ = sample_log_categorical(logits, rng)
		return idx[0]

	# oracle ---------------------------------------------------------------

	def brute_force_log_ml(self, data):
		N = data.N
		if N == 0:
			return 0.0
		n_configs = self.K**N
		if n_configs > MAX_ENUMERATION:
			raise InstanceTooLargeError(f'clustering oracle refuses K^N = {self.K}^{N} = {n_configs} configurations (cap {MAX_ENUMERATION})')
		partial = []
		for start in range(0, n_configs, ENUMERATION_CHUNK):
			codes = np.arange(start, min(start + ENUMERATION_CHUNK, n_configs))
			zs = np.stack(np.unravel_index(codes, (self.K,) * N), axis=1)
			values = self.log_pi[zs].sum(axis=1) + self._batched_collapsed_loglik(zs, data.Y)
			partial.append(log_sum_exp(values))
		return log_sum_exp(partial)
