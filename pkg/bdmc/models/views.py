from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Annotated, ClassVar, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from bdmc.prob.views import PROB_TOLERANCE

ModelKind = Literal['clustering', 'lowrank', 'binary']


class ModelError(Exception):
	"""Base class for all model errors"""


class SpecError(ModelError):
	"""Raised when a model spec is invalid"""


class ShapeMismatchError(ModelError):
	"""Raised when a latent state or dataset does not match its spec"""


class EnumerationTooLargeError(ModelError):
	"""Raised when a per-row enumeration would exceed its cap"""


class InstanceTooLargeError(ModelError):
	"""Raised when a brute-force oracle is asked for an instance it refuses to enumerate"""


class DatasetFormatError(ModelError):
	"""Raised when a dataset or latent-state file cannot be parsed"""


# Specs --------------------------------------------------------------------


class _SpecBase(BaseModel):
	model_config = ConfigDict(frozen=True)

	N: int = Field(default=50, ge=0)
	D: int = Field(default=25, ge=1)
	noise_var: float = Field(default=0.1, gt=0)

	def with_rows(self, n: int):
		return self.model_copy(update={'N': n})


class ClusteringSpec(_SpecBase):
	"""
	Finite Gaussian mixture with fixed hyperparameters (a Bayesian analogue of K-means).

	Default values:
		N=50, D=25, K=10, uniform mix_probs, between_var=1, noise_var=0.1
	"""

	kind: Literal['clustering'] = 'clustering'
	K: int = Field(default=10, ge=1)
	mix_probs: tuple[float, ...] | None = None
	between_var: float = Field(default=1.0, gt=0)

	@model_validator(mode='after')
	def _check_mix_probs(self):
		if self.mix_probs is None:
			object.__setattr__(self, 'mix_probs', tuple([1.0 / self.K] * self.K))
		probs = np.asarray(self.mix_probs, dtype=float)
		if probs.size != self.K:
			raise ValueError(f'mix_probs has length {probs.size}, expected K={self.K}')
		if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOLERANCE:
			raise ValueError('mix_probs must be a probability vector')
		return self


class LowRankSpec(_SpecBase):
	"""
	Low rank matrix plus Gaussian noise, Y = U V + E.

	Default values:
		N=50, D=25, K=5, u_var=1, v_var=1, noise_var=0.1
	"""

	kind: Literal['lowrank'] = 'lowrank'
	K: int = Field(default=5, ge=1)
	u_var: float = Field(default=1.0, gt=0)
	v_var: float = Field(default=1.0, gt=0)

	@model_validator(mode='after')
	def _check_rank(self):
		if self.K > self.D or (self.N > 0 and self.K > self.N):
			raise ValueError(f'rank K={self.K} exceeds min(N, D)=({self.N}, {self.D})')
		return self


class BinarySpec(_SpecBase):
	"""
	Binary attribute model, Y = Z A + E with Bernoulli attributes Z.

	Default values:
		N=50, D=25, K=10, attr_probs=0.3 each, a_var=1, noise_var=0.1
	"""

	kind: Literal['binary'] = 'binary'
	K: int = Field(default=10, ge=1)
	attr_probs: tuple[float, ...] | None = None
	a_var: float = Field(default=1.0, gt=0)

	@model_validator(mode='after')
	def _check_attr_probs(self):
		if self.attr_probs is None:
			object.__setattr__(self, 'attr_probs', tuple([0.3] * self.K))
		probs = np.asarray(self.attr_probs, dtype=float)
		if probs.size != self.K:
			raise ValueError(f'attr_probs has length {probs.size}, expected K={self.K}')
		if np.any(probs < 0) or np.any(probs > 1):
			raise ValueError('attr_probs must lie in [0, 1]')
		return self


ModelSpec = Annotated[Union[ClusteringSpec, LowRankSpec, BinarySpec], Field(discriminator='kind')]


# Latent states ------------------------------------------------------------


@dataclass
class ClusteringState:
	"""Assignments z (N,) in 0..K-1 and centres theta (K, D)"""

	z: np.ndarray
	theta: np.ndarray
	is_exact: bool = False
	kind: ClassVar[str] = 'clustering'

	@property
	def n_rows(self) -> int:
		return int(self.z.shape[0])

	def copy(self) -> ClusteringState:
		return replace(self, z=self.z.copy(), theta=self.theta.copy())


@dataclass
class LowRankState:
	"""Factors U (N, K) and V (K, D)"""

	U: np.ndarray
	V: np.ndarray
	is_exact: bool = False
	kind: ClassVar[str] = 'lowrank'

	@property
	def n_rows(self) -> int:
		return int(self.U.shape[0])

	def copy(self) -> LowRankState:
		return replace(self, U=self.U.copy(), V=self.V.copy())


@dataclass
class BinaryState:
	"""Binary attributes Z (N, K) and attribute weights A (K, D)"""

	Z: np.ndarray
	A: np.ndarray
	is_exact: bool = False
	kind: ClassVar[str] = 'binary'

	@property
	def n_rows(self) -> int:
		return int(self.Z.shape[0])

	def copy(self) -> BinaryState:
		return replace(self, Z=self.Z.copy(), A=self.A.copy())


LatentState = Union[ClusteringState, LowRankState, BinaryState]


@dataclass
class Dataset:
	"""Observation matrix Y with N rows of D-dimensional data points"""

	Y: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))

	def __post_init__(self):
		self.Y = np.asarray(self.Y, dtype=float)
		if self.Y.ndim != 2:
			raise ShapeMismatchError(f'dataset must be 2-d, got shape {self.Y.shape}')
		if not np.all(np.isfinite(self.Y)):
			raise ModelError('dataset entries must be finite')

	@property
	def N(self) -> int:
		return int(self.Y.shape[0])

	@property
	def D(self) -> int:
		return int(self.Y.shape[1])

	def prefix(self, n: int) -> Dataset:
		return Dataset(self.Y[:n])
