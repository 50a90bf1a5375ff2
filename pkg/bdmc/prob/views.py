from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

PROB_TOLERANCE = 1e-12

LOG_2PI = math.log(2.0 * math.pi)

# A log-domain weight in nats. -inf means weight zero; NaN and +inf are never legal.
LogWeight = float


class ProbError(Exception):
	"""Base class for all log-domain and distribution errors"""


class EmptyAggregationError(ProbError):
	"""Raised when a log-domain reduction receives no values"""


class ZeroWeightError(ProbError):
	"""Raised when a harmonic mean sees a weight of exactly zero"""


class InvalidLogWeightError(ProbError):
	"""Raised for NaN or +inf log weights"""


class ParameterError(ProbError):
	"""Raised when distribution parameters are invalid"""


class RngStream(BaseModel):
	"""
	Address of an independent random stream.

	Identical (seed, stream_id, path) always reproduces the same draws; any difference in
	stream_id or path gives a statistically independent stream. `path` addresses
	sub-streams (chains inside a trial, restarts inside an estimator, ...).
	"""

	model_config = ConfigDict(frozen=True)

	seed: int = Field(ge=0, lt=2**64)
	stream_id: int = Field(default=0, ge=0)
	path: tuple[int, ...] = ()

	def seed_sequence(self) -> np.random.SeedSequence:
		return np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *self.path))

	def generator(self) -> np.random.Generator:
		return np.random.Generator(np.random.PCG64(self.seed_sequence()))

	def child(self, index: int) -> RngStream:
		return RngStream(seed=self.seed, stream_id=self.stream_id, path=(*self.path, index))

	def children(self, n: int) -> list[RngStream]:
		return [self.child(i) for i in range(n)]


@dataclass(frozen=True)
class Gaussian:
	"""Univariate Gaussian N(mean, var)"""

	mean: float
	var: float

	def __post_init__(self):
		if not self.var > 0:
			raise ParameterError(f'variance must be strictly positive, got {self.var}')

	def sample(self, rng: np.random.Generator, size=None):
		return rng.normal(self.mean, math.sqrt(self.var), size=size)

	def log_density(self, x):
		x = np.asarray(x, dtype=float)
		return -0.5 * (LOG_2PI + math.log(self.var)) - (x - self.mean) ** 2 / (2.0 * self.var)


@dataclass(frozen=True)
class SphericalGaussian:
	"""Multivariate Gaussian with covariance var * I"""

	mean: np.ndarray
	var: float

	def __post_init__(self):
		if not self.var > 0:
			raise ParameterError(f'variance must be strictly positive, got {self.var}')
		object.__setattr__(self, 'mean', np.asarray(self.mean, dtype=float))

	@property
	def dim(self) -> int:
		return int(self.mean.shape[-1]) if self.mean.ndim else 1

	def sample(self, rng: np.random.Generator, size=None):
		shape = self.mean.shape if size is None else (*np.atleast_1d(size), *self.mean.shape)
		return self.mean + math.sqrt(self.var) * rng.standard_normal(shape)

	def log_density(self, x):
		"""Log density of one point or a stack of points along the last axis"""
		x = np.asarray(x, dtype=float)
		sq = np.sum((x - self.mean) ** 2, axis=-1)
		return -0.5 * self.dim * (LOG_2PI + math.log(self.var)) - sq / (2.0 * self.var)


@dataclass(frozen=True)
class Categorical:
	probs: np.ndarray = field(default_factory=lambda: np.ones(1))

	def __post_init__(self):
		probs = np.asarray(self.probs, dtype=float)
		if probs.ndim != 1 or probs.size == 0:
			raise ParameterError('probability vector must be a non-empty 1-d array')
		if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOLERANCE:
			raise ParameterError(f'invalid probability vector (sum={probs.sum():.15g})')
		object.__setattr__(self, 'probs', probs)

	def sample(self, rng: np.random.Generator, size=None):
		return rng.choice(self.probs.size, size=size, p=self.probs)

	def log_density(self, k):
		with np.errstate(divide='ignore'):
			return np.log(self.probs)[np.asarray(k, dtype=int)]


@dataclass(frozen=True)
class Bernoulli:
	p: float

	def __post_init__(self):
		if not 0.0 <= self.p <= 1.0:
			raise ParameterError(f'Bernoulli probability must lie in [0, 1], got {self.p}')

	def sample(self, rng: np.random.Generator, size=None):
		return (rng.random(size) < self.p).astype(np.int8)

	def log_density(self, x):
		x = np.asarray(x)
		with np.errstate(divide='ignore'):
			return np.where(x == 1, np.log(self.p), np.log1p(-self.p))
