from __future__ import annotations

import math
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator

from bdmc.bridge.views import CombineRule, Direction
from bdmc.models.views import ModelSpec

CSV_HEADER = (
	'model',
	'estimator',
	'budget_name',
	'budget_value',
	'trial',
	'seed',
	'log_ml',
	'direction',
	'wall_seconds',
	'combined',
)

# estimates within this many nats of the truth count as accurate
RMSE_THRESHOLD = 10.0

# sandwich gap below which the midpoint is declared the ground truth
GROUND_TRUTH_GAP = 1.0

# Kass-Raftery bands on log10 Bayes factors
EVIDENCE_BANDS = (
	(0.5, 'not worth more than a bare mention'),
	(1.0, 'substantial'),
	(2.0, 'strong'),
	(math.inf, 'decisive'),
)


class HarnessError(Exception):
	"""Base class for all harness errors"""


class ConfigError(HarnessError):
	"""Raised for an unreadable or invalid experiment configuration"""


class MissingArtifactError(HarnessError):
	"""Raised when a command needs a file an earlier command should have written"""


class EstimatorGrid(BaseModel):
	"""One estimator swept over a grid of budgets; `options` are passed to the estimator as-is"""

	model_config = ConfigDict(frozen=True)

	estimator: str
	budgets: tuple[int, ...]
	options: dict[str, Any] = {}

	@field_validator('budgets')
	@classmethod
	def _positive(cls, v: tuple[int, ...]) -> tuple[int, ...]:
		if not v:
			raise ValueError('an estimator needs at least one budget')
		if any(b < 1 for b in v):
			raise ValueError(f'budgets must be positive, got {v}')
		return v


class ExperimentConfig(BaseModel):
	"""
	A full experiment: the model, the estimator grids and the trial protocol.

	Default values:
		n_trials=25, seed=0, ground_truth_T=10000, ground_truth_chains=4, n_workers=1,
		record_wall_time=True, out_dir='results'
	"""

	model: ModelSpec
	estimators: list[EstimatorGrid] = []
	n_trials: int = Field(default=25, ge=1)
	seed: int = Field(default=0, ge=0, lt=2**63)
	ground_truth_T: int = Field(default=10_000, ge=2)
	ground_truth_chains: int = Field(default=4, ge=1)
	n_workers: int = Field(default=1, ge=1)
	record_wall_time: bool = True
	out_dir: Path = Path('results')

	@property
	def dataset_path(self) -> Path:
		return self.out_dir / 'dataset.csv'

	@property
	def state_path(self) -> Path:
		return self.out_dir / 'exact_state.txt'

	@property
	def ground_truth_path(self) -> Path:
		return self.out_dir / 'ground_truth.json'

	@property
	def results_path(self) -> Path:
		return self.out_dir / 'results.csv'


class RegisteredEstimator(BaseModel):
	"""One entry of the estimator catalogue used by the sweep"""

	model_config = ConfigDict(arbitrary_types_allowed=True)

	id: str
	budget_name: str
	combine: CombineRule
	direction: Direction
	needs_exact: bool = False
	description: str = ''
	function: Any

	def describe(self) -> str:
		exact = ', needs an exact sample' if self.needs_exact else ''
		return f'{self.id} [{self.budget_name}; {self.combine}; {self.direction}{exact}]: {self.description}'


class SweepCell(BaseModel):
	"""One (estimator, budget, trial) run with the seed that reproduces it"""

	model_config = ConfigDict(frozen=True)

	estimator: str
	budget_value: int
	trial: int
	seed: int
	options: dict[str, Any] = {}


class ResultRow(BaseModel):
	model: str
	estimator: str
	budget_name: str
	budget_value: int
	trial: int
	seed: int
	log_ml: float
	direction: Direction
	wall_seconds: float = 0.0
	combined: bool = False


class GroundTruthRecord(BaseModel):
	model: str
	spec_hash: str
	T: int
	n_chains: int
	lower: float
	upper: float | None = None
	gap: float | None = None
	converged: bool = False
	truth: float | None = None
	status: str = ''
