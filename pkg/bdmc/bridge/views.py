from __future__ import annotations

import math
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

Direction = Literal['lower', 'upper', 'none']
ProposalKind = Literal['prior', 'posterior']
CombineRule = Literal['mean_exp', 'harmonic', 'max', 'mean_log']


class EstimatorError(Exception):
	"""Base class for all estimator errors"""


class ProvenanceError(EstimatorError):
	"""Raised when a reverse-direction estimator is given a state that is not an exact posterior sample"""


class ScheduleError(EstimatorError):
	"""Raised for an invalid annealing schedule"""


class ThresholdError(EstimatorError):
	"""Raised for a resampling threshold outside [0, 1]"""


class StarPointUnreachableError(EstimatorError):
	"""Raised when no chain state can reach the Chib star point in one sweep"""


class StopCriterionError(EstimatorError):
	"""Raised when nested sampling hits its step cap"""


class MonotonicityError(EstimatorError):
	"""Raised when a coordinate-ascent update decreases the variational bound"""


class AnnealingSchedule(BaseModel):
	"""Inverse temperatures beta_1 = 0 <= ... <= beta_T = 1"""

	model_config = ConfigDict(frozen=True)

	T: int = Field(ge=2)
	delta: float = Field(default=4.0, gt=0)
	betas: tuple[float, ...]

	@model_validator(mode='after')
	def _check_betas(self):
		b = np.asarray(self.betas)
		if b.size != self.T:
			raise ValueError(f'schedule has {b.size} betas, expected T={self.T}')
		if b[0] != 0.0 or b[-1] != 1.0:
			raise ValueError('schedule must start at exactly 0 and end at exactly 1')
		if np.any(np.diff(b) < 0):
			raise ValueError('schedule must be non-decreasing')
		return self

	def describe(self) -> dict[str, Any]:
		return {'T': self.T, 'delta': self.delta}


class LogEstimate(BaseModel):
	"""
	A log marginal likelihood estimate with its provenance.

	`direction` is the bound character the estimator is known to have: `lower` estimators
	are unbiased for Z (so stochastic lower bounds on log Z), `upper` ones for 1/Z.
	`correlated` marks chains that share one exact posterior sample.
	"""

	value: float
	estimator_id: str
	direction: Direction = 'none'
	trial_seed: int | None = None
	n_chains: int = 1
	config: dict[str, Any] = {}
	correlated: bool = False


class SandwichResult(BaseModel):
	lower: LogEstimate
	upper: LogEstimate
	gap: float
	kl_bound: float

	@property
	def midpoint(self) -> float:
		return 0.5 * (self.lower.value + self.upper.value)

	def contains(self, value: float, slack: float = 0.0) -> bool:
		return self.lower.value - slack <= value <= self.upper.value + slack


class SMCConfig(BaseModel):
	"""
	Particle learning settings shared by SMC and SHME.

	Default values:
		n_particles=1, sweeps_per_point=1, proposal='posterior', resample_threshold=0.5
	"""

	model_config = ConfigDict(frozen=True)

	n_particles: int = Field(default=1, ge=1)
	sweeps_per_point: int = Field(default=1, ge=0)
	proposal: ProposalKind = 'posterior'
	resample_threshold: float = 0.5

	def describe(self) -> dict[str, Any]:
		return self.model_dump()


class ParticleRunTrace(BaseModel):
	"""Per-row diagnostics of one particle run"""

	ess: list[float] = []
	n_resamples: int = 0
	log_weights: list[float] = []

	@property
	def min_ess(self) -> float:
		return min(self.ess) if self.ess else math.nan
