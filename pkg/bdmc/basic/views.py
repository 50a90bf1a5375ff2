from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

# stopping constants for nested sampling
NS_STOP_RATIO = 1.0 + 1e-10
NS_STOP_RATIO_ALT = 1.0 + math.exp(-10.0)
NS_MAX_STEPS = 10**6

VB_TOLERANCE = 0.01
VB_WINDOW = 50
VB_MAX_ITERATIONS = 20_000
VB_MONOTONICITY_SLACK = 1e-6

MAP_SEARCH_SWEEPS = 500


@dataclass
class VariationalPosterior:
	"""
	Mean-field posterior over (rows, parameter block).

	clustering: row_mean holds responsibilities q(z_i = k) (N, K); param_var holds the
	    isotropic variance of each centre (K,).
	lowrank:    row_mean holds the means of the rows of U (N, K) with the shared row
	    covariance row_cov (K, K); param_var is the shared covariance of the columns of V (K, K).
	binary:     row_mean holds q(z_ik = 1) (N, K); param_var is the isotropic variance of
	    each weight row A_k (K,).
	"""

	kind: Literal['clustering', 'lowrank', 'binary']
	row_mean: np.ndarray
	param_mean: np.ndarray
	param_var: np.ndarray
	row_cov: np.ndarray | None = None
	bound_trace: list[float] = field(default_factory=list)

	def copy(self) -> VariationalPosterior:
		return VariationalPosterior(
			kind=self.kind,
			row_mean=self.row_mean.copy(),
			param_mean=self.param_mean.copy(),
			param_var=self.param_var.copy(),
			row_cov=None if self.row_cov is None else self.row_cov.copy(),
			bound_trace=list(self.bound_trace),
		)


class NestedSamplingTrace(BaseModel):
	"""
	Cutoffs visited by one nested sampling run.

	The volume after step t is (K/(K+1))^t for K particles; `lower_sum` and `upper_sum`
	bracket the quadrature using the shell's lower and upper likelihood, `estimate` uses
	the mean of the live particles for the remaining volume.
	"""

	n_particles: int = Field(ge=2)
	stop_ratio: float = Field(gt=1.0)
	cutoffs: list[float] = []
	lower_sum: float = -math.inf
	upper_sum: float = -math.inf
	estimate: float = -math.inf

	@property
	def n_steps(self) -> int:
		return len(self.cutoffs)

	@property
	def shrink(self) -> float:
		return self.n_particles / (self.n_particles + 1)

	def volume(self, t: int) -> float:
		return self.shrink**t

	@property
	def volumes(self) -> list[float]:
		return [self.volume(t) for t in range(1, self.n_steps + 1)]
