"""
Binary attribute model.

    z_ik ~ Bernoulli(pi_k),  a_kj ~ N(0, a_var),  y_ij ~ N(sum_k z_ik a_kj, noise_var)

Collapsed computations integrate A out column by column; all D columns share the
posterior precision Lambda = I / a_var + Z^T Z / noise_var.
"""

import itertools
import math

import numpy as np
from scipy.special import logsumexp, xlogy

from bdmc.models.base import ENUMERATION_CHUNK, MAX_ENUMERATION, LatentModel
from bdmc.models.views import BinarySpec, BinaryState, EnumerationTooLargeError, InstanceTooLargeError
from bdmc.prob.service import gaussian_logpdf, log_sum_exp, precision_gaussian_sample, sample_log_categorical
from bdmc.prob.views import LOG_2PI

# 2^K terms per predictive evaluation
MAX_PREDICTIVE_K = 15


def all_binary_rows(K: int) -> np.ndarray:
	"""Every length-K binary vector, shape (2^K, K)"""
	return np.array(list(itertools.product((0, 1), repeat=K)), dtype=np.int8).reshape(-1, K)


class BinaryModel(LatentModel[BinaryState]):
	kind = 'binary'

	def __init__(self, spec: BinarySpec):
		super().__init__(spec)
		self.pi = np.asarray(spec.attr_probs, dtype=float)

	@property
	def param_shape(self) -> tuple[int, ...]:
		return (self.K, self.D)

	@property
	def n_free_params(self) -> int:
		return self.K * self.D

	def sample_params(self, rng):
		return math.sqrt(self.spec.a_var) * rng.standard_normal((self.K, self.D))

	def sample_rows(self, n_rows, rng):
		return (rng.random((n_rows, self.K)) < self.pi).astype(np.int8)

	def make_state(self, rows, params, is_exact=False):
		rows = np.asarray(rows, dtype=np.int8).reshape(-1, self.K)
		return BinaryState(Z=rows, A=np.asarray(params, dtype=float), is_exact=is_exact)

	def rows_of(self, state):
		return state.Z

	def params_of(self, state):
		return state.A

	def mean_matrix(self, state):
		return state.Z.astype(float) @ state.A

	def row_log_prior(self, rows: np.ndarray) -> np.ndarray:
		"""log p(z_i) for every row of `rows` (last axis is K)"""
		rows = rows.astype(float)
		return np.sum(xlogy(rows, self.pi) + xlogy(1.0 - rows, 1.0 - self.pi), axis=-1)

	def log_prior_rows(self, rows):
		return float(np.sum(self.row_log_prior(rows))) if rows.size else 0.0

	def log_prior_params(self, params):
		return float(np.sum(gaussian_logpdf(params, 0.0, self.spec.a_var)))

	# conditionals ---------------------------------------------------------

	def weights_natural(self, Z: np.ndarray, Y: np.ndarray, beta: float = 1.0, noise_var: float | None = None):
		"""Shared precision (K, K) and linear terms (K, D) of the columns of A given Z"""
		nv = self.spec.noise_var if noise_var is None else noise_var
		Zf = Z.astype(float)
		precision = np.eye(self.K) / self.spec.a_var + (beta / nv) * (Zf.T @ Zf)
		return precision, (beta / nv) * (Zf.T @ Y)

	def sample_params_conditional(self, state, data, rng, beta=1.0):
		precision, rhs = self.weights_natural(state.Z, data.Y, beta)
		return precision_gaussian_sample(precision, rhs, rng)

	def _batched_collapsed_loglik(self, Zs: np.ndarray, Y: np.ndarray) -> np.ndarray:
		N, D = Y.shape
		if N == 0:
			return np.zeros(Zs.shape[0])
		nv, av = self.spec.noise_var, self.spec.a_var
		Zf = Zs.astype(float)
		Lam = np.eye(self.K) / av + np.einsum('mnk,mnl->mkl', Zf, Zf) / nv
		H = np.einsum('mnk,nd->mkd', Zf, Y) / nv
		_, logdet = np.linalg.slogdet(Lam)
		trace = np.sum(H * np.linalg.solve(Lam, H), axis=(1, 2))
		return (
			-0.5 * N * D * math.log(2.0 * math.pi * nv)
			- np.sum(Y**2) / (2.0 * nv)
			- 0.5 * D * self.K * math.log(av)
			- 0.5 * D * logdet
			+ 0.5 * trace
		)

	def collapsed_log_likelihood(self, Z: np.ndarray, Y: np.ndarray) -> float:
		"""log p(Y | Z) with A integrated out"""
		return float(self._batched_collapsed_loglik(Z[None, ...], Y)[0])

	# predictive -----------------------------------------------------------

	def _predictive_logits(self, Z_prefix: np.ndarray, Y_prefix: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
		if self.K > MAX_PREDICTIVE_K:
			raise EnumerationTooLargeError(f'enumeration too large: 2^{self.K} attribute configurations (cap K <= {MAX_PREDICTIVE_K})')
		configs = all_binary_rows(self.K)
		precision, rhs = self.weights_natural(Z_prefix, Y_prefix)
		mean = np.linalg.solve(precision, rhs)  # (K, D)
		cov = np.linalg.inv(precision)
		cf = configs.astype(float)
		means = cf @ mean  # (2^K, D)
		var = self.spec.noise_var + np.einsum('ck,kl,cl->c', cf, cov, cf)
		ll = -0.5 * self.D * (LOG_2PI + np.log(var)) - np.sum((y[None, :] - means) ** 2, axis=1) / (2.0 * var)
		return configs, self.row_log_prior(configs) + ll

	def predictive_loglik(self, partial_state, data_prefix, next_row):
		Z_prefix = partial_state.Z[: data_prefix.N]
		_, logits = self._predictive_logits(Z_prefix, data_prefix.Y, np.asarray(next_row, dtype=float))
		return float(logsumexp(logits))

	def sample_row_posterior(self, partial_state, data_prefix, next_row, rng):
		Z_prefix = partial_state.Z[: data_prefix.N]
		configs, logits = self._predictive_logits(Z_prefix, data_prefix.Y, np.asarray(next_row, dtype=float))
		idx, _ = sample_log_categorical(logits, rng)
		return configs[idx[0]].copy()

	# oracle ---------------------------------------------------------------

	def brute_force_log_ml(self, data):
		N = data.N
		if N == 0:
			return 0.0
		n_bits = N * self.K
		if n_bits > 62 or 2**n_bits > MAX_ENUMERATION:
			raise InstanceTooLargeError(f'binary oracle refuses 2^(N*K) = 2^{n_bits} configurations (cap {MAX_ENUMERATION})')
		n_configs = 2**n_bits
		shifts = np.arange(n_bits - 1, -1, -1, dtype=np.int64)
		partial = []
		for start in range(0, n_configs, ENUMERATION_CHUNK):
			codes = np.arange(start, min(start + ENUMERATION_CHUNK, n_configs), dtype=np.int64)
			Zs = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.int8).reshape(-1, N, self.K)
			values = self.row_log_prior(Zs).sum(axis=1) + self._batched_collapsed_loglik(Zs, data.Y)
			partial.append(log_sum_exp(values))
		return log_sum_exp(partial)
