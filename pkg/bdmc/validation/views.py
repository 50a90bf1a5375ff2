from __future__ import annotations

import math
from typing import Any

from pydantic import BaseModel

from bdmc.bridge.views import Direction

CONSISTENCY_TOLERANCE = 1e-8
GEWEKE_ALPHA = 1e-3
AUDIT_SLACK = 0.05
AGREEMENT_TOLERANCE = 2.0


class ValidationSuiteError(Exception):
	"""Base class for all validation-suite errors"""


class NoBoundError(ValidationSuiteError):
	"""Raised when auditing estimates that claim no bound direction"""


class AuditInputError(ValidationSuiteError):
	"""Raised when audited estimates are empty or mix estimators or directions"""


class ConsistencyReport(BaseModel):
	"""Worst relative violation of p(x|u)/p(x'|u) = p(x,u)/p(x',u) per conditional"""

	kind: str
	n_triples: int
	tolerance: float = CONSISTENCY_TOLERANCE
	worst: dict[str, float] = {}

	@property
	def failing(self) -> list[str]:
		return sorted(k for k, v in self.worst.items() if not v <= self.tolerance)

	@property
	def passed(self) -> bool:
		return not self.failing

	def to_text(self) -> str:
		lines = [f'conditional consistency ({self.kind}, {self.n_triples} triples)']
		for key, value in sorted(self.worst.items()):
			lines.append(f'  {key:<28} worst={value:.3e} {"ok" if value <= self.tolerance else "FAIL"}')
		return '\n'.join(lines)

	def to_records(self) -> list[dict[str, Any]]:
		return [
			{'suite': 'consistency', 'model': self.kind, 'item': k, 'value': v, 'passed': v <= self.tolerance}
			for k, v in sorted(self.worst.items())
		]


class GewekeReport(BaseModel):
	"""
	Matched statistic samples from forward simulation and from the
	sweep-then-resample-data chain, with two-sample KS results per statistic.
	"""

	kind: str
	n_iterations: int
	sweeps_per_iteration: int
	forward: dict[str, list[float]] = {}
	chain: dict[str, list[float]] = {}
	ks_statistics: dict[str, float] = {}
	p_values: dict[str, float] = {}
	alpha: float = GEWEKE_ALPHA

	@property
	def threshold(self) -> float:
		"""Per-statistic significance after Bonferroni correction"""
		return self.alpha / max(len(self.p_values), 1)

	@property
	def failing(self) -> list[str]:
		return sorted(name for name, p in self.p_values.items() if p <= self.threshold)

	@property
	def passed(self) -> bool:
		return not self.failing

	def to_text(self) -> str:
		lines = [f'geweke ({self.kind}, {self.n_iterations} iterations, {self.sweeps_per_iteration} sweeps each)']
		for name in sorted(self.p_values):
			lines.append(f'  {name:<20} ks={self.ks_statistics[name]:.4f} p={self.p_values[name]:.4g}')
		lines.append(f'  {"pass" if self.passed else "FAIL"} at per-statistic level {self.threshold:.2e}')
		return '\n'.join(lines)

	def to_records(self) -> list[dict[str, Any]]:
		return [
			{'suite': 'geweke', 'model': self.kind, 'item': name, 'value': p, 'passed': p > self.threshold}
			for name, p in sorted(self.p_values.items())
		]


class AuditRow(BaseModel):
	b: float
	rate: float
	cap: float
	flagged: bool


class AuditReport(BaseModel):
	"""Empirical frequency of estimates beyond truth by more than b, against the cap e^-b"""

	estimator_id: str
	direction: Direction
	truth: float
	n_estimates: int
	rows: list[AuditRow] = []

	@property
	def passed(self) -> bool:
		return not any(row.flagged for row in self.rows)

	def to_text(self) -> str:
		lines = [f'bound audit {self.estimator_id} ({self.direction}, {self.n_estimates} estimates, truth {self.truth:.3f})']
		for row in self.rows:
			lines.append(f'  b={row.b:<8.4g} rate={row.rate:.3f} cap={row.cap:.3f} {"FLAG" if row.flagged else "ok"}')
		return '\n'.join(lines)

	def to_records(self) -> list[dict[str, Any]]:
		return [
			{'suite': 'audit', 'model': self.estimator_id, 'item': f'b={row.b:g}', 'value': row.rate, 'passed': not row.flagged}
			for row in self.rows
		]


class AgreementReport(BaseModel):
	"""Estimates of every estimator on one easy instance"""

	kind: str
	estimates: dict[str, float] = {}
	truth: float | None = None
	tolerance: float = AGREEMENT_TOLERANCE

	@property
	def max_discrepancy(self) -> float:
		values = list(self.estimates.values())
		if len(values) < 2:
			return 0.0
		return max(values) - min(values)

	@property
	def max_truth_error(self) -> float:
		if self.truth is None or not self.estimates:
			return math.nan
		return max(abs(v - self.truth) for v in self.estimates.values())

	@property
	def passed(self) -> bool:
		if not all(math.isfinite(v) for v in self.estimates.values()):
			return False
		if self.max_discrepancy > self.tolerance:
			return False
		return self.truth is None or self.max_truth_error <= self.tolerance

	def to_text(self) -> str:
		lines = [f'estimator agreement ({self.kind})']
		for name, value in sorted(self.estimates.items()):
			lines.append(f'  {name:<12} {value:.4f}')
		if self.truth is not None:
			lines.append(f'  {"truth":<12} {self.truth:.4f}')
		lines.append(f'  max discrepancy {self.max_discrepancy:.4f} ({"pass" if self.passed else "FAIL"})')
		return '\n'.join(lines)

	def to_records(self) -> list[dict[str, Any]]:
		return [
			{'suite': 'agreement', 'model': self.kind, 'item': name, 'value': value, 'passed': self.passed}
			for name, value in sorted(self.estimates.items())
		]
