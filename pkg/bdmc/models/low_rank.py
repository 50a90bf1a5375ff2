"""
Low rank matrix plus Gaussian noise.

    u_ik ~ N(0, u_var),  v_kj ~ N(0, v_var),  y_ij ~ N(sum_k u_ik v_kj, noise_var)

The rows of U are the per-data-point latents; V is the parameter block.
"""

import logging
import math

import numpy as np
from scipy.integrate import nquad
from scipy.optimize import minimize

from bdmc.models.base import LatentModel
from bdmc.models.views import InstanceTooLargeError, LowRankSpec, LowRankState
from bdmc.prob.service import gaussian_logpdf, precision_gaussian_sample
from bdmc.prob.views import LOG_2PI

logger = logging.getLogger(__name__)

QUADRATURE_EPSREL = 1e-6
QUADRATURE_MAX_DIM = 4


class LowRankModel(LatentModel[LowRankState]):
	kind = 'lowrank'

	def __init__(self, spec: LowRankSpec):
		super().__init__(spec)

	@property
	def param_shape(self) -> tuple[int, ...]:
		return (self.K, self.D)

	@property
	def n_free_params(self) -> int:
		# U and V are both continuous, so both count
		return self.K * (self.spec.N + self.D)

	def sample_params(self, rng):
		return math.sqrt(self.spec.v_var) * rng.standard_normal((self.K, self.D))

	def sample_rows(self, n_rows, rng):
		return math.sqrt(self.spec.u_var) * rng.standard_normal((n_rows, self.K))

	def make_state(self, rows, params, is_exact=False):
		rows = np.asarray(rows, dtype=float).reshape(-1, self.K)
		return LowRankState(U=rows, V=np.asarray(params, dtype=float), is_exact=is_exact)

	def rows_of(self, state):
		return state.U

	def params_of(self, state):
		return state.V

	def mean_matrix(self, state):
		return state.U @ state.V

	def log_prior_rows(self, rows):
		return float(np.sum(gaussian_logpdf(rows, 0.0, self.spec.u_var)))

	def log_prior_params(self, params):
		return float(np.sum(gaussian_logpdf(params, 0.0, self.spec.v_var)))

	# tempered block conditionals ------------------------------------------

	def u_natural(self, V: np.ndarray, Y: np.ndarray, beta: float = 1.0, noise_var: float | None = None):
		"""Shared precision (K, K) and linear terms (K, N) of the rows of U given V"""
		nv = self.spec.noise_var if noise_var is None else noise_var
		precision = np.eye(self.K) / self.spec.u_var + (beta / nv) * (V @ V.T)
		return precision, (beta / nv) * (V @ Y.T)

	def v_natural(self, U: np.ndarray, Y: np.ndarray, beta: float = 1.0, noise_var: float | None = None):
		"""Shared precision (K, K) and linear terms (K, D) of the columns of V given U"""
		nv = self.spec.noise_var if noise_var is None else noise_var
		precision = np.eye(self.K) / self.spec.v_var + (beta / nv) * (U.T @ U)
		return precision, (beta / nv) * (U.T @ Y)

	def sample_params_conditional(self, state, data, rng, beta=1.0):
		precision, rhs = self.v_natural(state.U, data.Y, beta)
		return precision_gaussian_sample(precision, rhs, rng)

	# predictive -----------------------------------------------------------

	def _predictive_terms(self, V: np.ndarray, Y: np.ndarray) -> np.ndarray:
		"""log N(y_i; 0, noise_var I + u_var V^T V) for each row of Y, via the Woodbury identity"""
		nv, uv = self.spec.noise_var, self.spec.u_var
		ratio = nv / uv
		M = ratio * np.eye(self.K) + V @ V.T
		proj = Y @ V.T  # (n, K)
		sign, logdet_m = np.linalg.slogdet(M)
		quad = (np.sum(Y**2, axis=1) - np.sum(proj * np.linalg.solve(M, proj.T).T, axis=1)) / nv
		logdet = self.D * math.log(nv) + logdet_m - self.K * math.log(ratio)
		return -0.5 * (self.D * LOG_2PI + logdet + quad)

	def predictive_loglik(self, partial_state, data_prefix, next_row):
		y = np.asarray(next_row, dtype=float)[None, :]
		return float(self._predictive_terms(partial_state.V, y)[0])

	def sample_row_posterior(self, partial_state, data_prefix, next_row, rng):
		y = np.asarray(next_row, dtype=float)[None, :]
		precision, rhs = self.u_natural(partial_state.V, y)
		return precision_gaussian_sample(precision, rhs, rng)[:, 0]

	# oracle ---------------------------------------------------------------

	def _log_marginal_given_v(self, v: np.ndarray, Y: np.ndarray) -> float:
		return float(np.sum(self._predictive_terms(v[None, :], Y)) + np.sum(gaussian_logpdf(v, 0.0, self.spec.v_var)))

	def brute_force_log_ml(self, data):
		"""
		U is integrated analytically; the remaining integral over v in R^D is done by nested
		adaptive quadrature on a box wide enough to hold all but a negligible prior tail.
		"""
		N, D = data.N, data.D
		if N == 0:
			return 0.0
		if self.K != 1 or N + D > QUADRATURE_MAX_DIM:
			raise InstanceTooLargeError(
				f'low-rank oracle needs K=1 and N+D <= {QUADRATURE_MAX_DIM}, got K={self.K}, N={N}, D={D}'
			)

		def neg_log_f(v):
			return -self._log_marginal_given_v(np.asarray(v, dtype=float), data.Y)

		sd = math.sqrt(self.spec.v_var)
		starts = [np.zeros(D)] + [sd * np.eye(D)[j] for j in range(D)]
		_, _, vt = np.linalg.svd(data.Y, full_matrices=False)
		starts.append(sd * vt[0])
		best = min((minimize(neg_log_f, x0, method='BFGS') for x0 in starts), key=lambda r: r.fun)
		v_star = np.abs(np.asarray(best.x))
		shift = -float(best.fun)

		ranges = []
		opts = []
		for j in range(D):
			half_width = v_star[j] + 12.0 * sd
			ranges.append((-half_width, half_width))
			points = sorted({-v_star[j], 0.0, v_star[j]})
			opts.append({'points': points, 'epsrel': QUADRATURE_EPSREL, 'epsabs': 0.0, 'limit': 200})

		def integrand(*v):
			return math.exp(self._log_marginal_given_v(np.asarray(v), data.Y) - shift)

		value, abserr = nquad(integrand, ranges, opts=opts)
		logger.debug(f'low-rank quadrature: integral={value:.6g} abserr={abserr:.3g} shift={shift:.6g}')
		return shift + math.log(value)
