from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.linalg import cho_solve
from scipy.special import logsumexp

from bdmc.prob.service import gaussian_logpdf, precision_gaussian_logpdf, precision_gaussian_sample, sample_log_categorical


class TransitionError(Exception):
	"""Base class for all transition-operator errors"""


class BetaOutOfRangeError(TransitionError):
	"""Raised when an inverse temperature lies outside [0, 1]"""


class InfeasibleStartError(TransitionError):
	"""Raised when a constrained-prior move starts outside its constraint"""


class ScanPlanMismatchError(TransitionError):
	"""Raised when a scan plan does not fit the states it is applied to"""


class DegenerateConditionalError(TransitionError):
	"""Raised when a discrete conditional puts zero mass on every value"""


class UnregisteredConditionalError(TransitionError):
	"""Raised when a sweep or suite asks for a conditional nobody registered"""


class SweepPlan(BaseModel):
	"""
	Deterministic site order of one Gibbs sweep.

	Site names are `base` or `base[index]`. Sites listed in `terminal` stay last when the
	plan is reversed; they must be updates that do not read their own previous value.
	"""

	model_config = ConfigDict(frozen=True)

	kind: str
	scan_order: tuple[str, ...]
	direction: Literal['forward', 'reverse'] = 'forward'
	terminal: tuple[str, ...] = ()

	def reversed(self) -> SweepPlan:
		body = [s for s in self.scan_order if s not in self.terminal]
		tail = [s for s in self.scan_order if s in self.terminal]
		return SweepPlan(
			kind=self.kind,
			scan_order=tuple(reversed(body)) + tuple(tail),
			direction='reverse' if self.direction == 'forward' else 'forward',
			terminal=self.terminal,
		)


class ConstrainedPriorTarget(BaseModel):
	"""The prior restricted to states whose log-likelihood exceeds `cutoff`"""

	model_config = ConfigDict(frozen=True)

	cutoff: float = -math.inf

	@field_validator('cutoff')
	@classmethod
	def _finite_or_unconstrained(cls, v: float) -> float:
		if math.isnan(v) or v == math.inf:
			raise ValueError('cutoff must be finite or -inf')
		return v


class Mutation(BaseModel):
	"""Deliberately wrong conditional: noise variance scaled by `noise_var_factor` at one site"""

	model_config = ConfigDict(frozen=True)

	site: str
	noise_var_factor: float = 1.1


@dataclass
class SweepContext:
	"""Everything a conditional builder reads besides the state"""

	model: Any
	data: Any
	beta: float = 1.0
	mutation: Mutation | None = None

	def noise_var(self, site_base: str) -> float:
		nv = self.model.spec.noise_var
		if self.mutation is not None and self.mutation.site == site_base:
			return nv * self.mutation.noise_var_factor
		return nv


# Conditional distributions ------------------------------------------------


class DiscreteConditional:
	"""Independent categoricals, one per row of `logits` (M, C)"""

	discrete = True

	def __init__(self, logits: np.ndarray):
		logits = np.atleast_2d(np.asarray(logits, dtype=float))
		if np.any(np.all(logits == -np.inf, axis=1)):
			raise DegenerateConditionalError('discrete conditional has zero mass on every value')
		self._logits = logits
		self.log_probs = logits - logsumexp(logits, axis=1, keepdims=True)

	def sample(self, rng: np.random.Generator) -> np.ndarray:
		idx, _ = sample_log_categorical(self._logits, rng)
		return idx

	def log_prob(self, value) -> float:
		value = np.atleast_1d(np.asarray(value, dtype=np.int64))
		return float(np.sum(self.log_probs[np.arange(value.size), value]))

	def mode(self) -> np.ndarray:
		return np.argmax(self._logits, axis=1)


class GaussianConditional:
	"""Independent Gaussians with elementwise mean and (broadcast) variance"""

	discrete = False

	def __init__(self, mean: np.ndarray, var):
		self.mean = np.asarray(mean, dtype=float)
		self.var = np.broadcast_to(np.asarray(var, dtype=float), self.mean.shape)

	def sample(self, rng: np.random.Generator) -> np.ndarray:
		return self.mean + np.sqrt(self.var) * rng.standard_normal(self.mean.shape)

	def log_prob(self, value) -> float:
		return float(np.sum(gaussian_logpdf(value, self.mean, self.var)))

	def mode(self) -> np.ndarray:
		return self.mean.copy()


class PrecisionGaussianConditional:
	"""Columns of a (k, m) block, independent Gaussians sharing one precision matrix"""

	discrete = False

	def __init__(self, precision: np.ndarray, rhs: np.ndarray):
		self.precision = precision
		self.rhs = rhs

	def sample(self, rng: np.random.Generator) -> np.ndarray:
		return precision_gaussian_sample(self.precision, self.rhs, rng)

	def log_prob(self, value) -> float:
		return precision_gaussian_logpdf(np.asarray(value, dtype=float), self.precision, self.rhs)

	def mode(self) -> np.ndarray:
		if self.rhs.size == 0:
			return np.zeros(self.rhs.shape)
		chol = np.linalg.cholesky(self.precision)
		return cho_solve((chol, True), self.rhs)
