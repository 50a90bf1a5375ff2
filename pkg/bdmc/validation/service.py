"""
Correctness machinery: conditional-vs-joint consistency checks, the Geweke joint
distribution test, bound-violation audits and cross-estimator agreement.

Every suite accepts a `Mutation` so deliberately wrong conditionals can be used as
controls.
"""

import logging
import math
from functools import partial
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import ks_2samp

from bdmc.basic.service import cms, nested_sampling
from bdmc.bridge.service import ais_forward, ais_reverse, combine_estimates, make_sigmoid_schedule, shme_run, smc_run
from bdmc.bridge.views import LogEstimate
from bdmc.models.service import brute_force_log_ml, get_model, simulate
from bdmc.models.views import Dataset, InstanceTooLargeError
from bdmc.transitions.service import default_plan, gibbs_sweep
from bdmc.transitions.sites import conditionals, parse_site, put_site_value
from bdmc.transitions.views import Mutation, SweepContext
from bdmc.utils import time_execution_sync
from bdmc.validation.views import (
	AUDIT_SLACK,
	AgreementReport,
	AuditInputError,
	AuditReport,
	AuditRow,
	ConsistencyReport,
	GewekeReport,
	NoBoundError,
)

logger = logging.getLogger(__name__)

EstimatorFn = Callable[..., float]


# Conditional consistency -------------------------------------------------------------


def _site_indices(spec) -> dict[str, list[int | None]]:
	"""Every site any sweep of this model visits, grouped by base name"""
	sites: dict[str, set] = {}
	for beta in (0.5, 1.0):
		for collapse in (True, False):
			for name in default_plan(spec, spec.N, beta, collapse).scan_order:
				base, index = parse_site(name)
				conditionals.get(spec.kind, base)
				sites.setdefault(base, set()).add(index)
	return {base: sorted(indices, key=lambda i: -1 if i is None else i) for base, indices in sites.items()}


def conditional_consistency_suite(spec, n_triples: int, rng: np.random.Generator, mutation: Mutation | None = None) -> ConsistencyReport:
	"""
	For random (x, x', u) check log p(x|u) - log p(x'|u) against log p(x,u) - log p(x',u)
	for every registered conditional of the model, using the joint it was registered with.
	"""
	model = get_model(spec)
	sites = _site_indices(spec)
	report = ConsistencyReport(kind=spec.kind, n_triples=n_triples)
	for entry in conditionals.for_kind(spec.kind):
		indices = sites.get(entry.name)
		if not indices:
			# registered but unused by any plan at this size (e.g. no rows to assign)
			report.worst[entry.key] = 0.0
			continue
		worst = 0.0
		for _ in range(n_triples):
			_, data = simulate(spec, rng)
			state = model.sample_prior(spec.N, rng)
			beta = 1.0 if entry.collapsed else float(rng.uniform(0.1, 1.0))
			index = indices[int(rng.integers(len(indices)))]
			cond = entry.builder(SweepContext(model=model, data=data, beta=beta, mutation=mutation), state, index)
			x, x_alt = cond.sample(rng), cond.sample(rng)
			lhs = cond.log_prob(x) - cond.log_prob(x_alt)
			with_x, with_alt = state.copy(), state.copy()
			put_site_value(spec.kind, with_x, entry.name, index, x)
			put_site_value(spec.kind, with_alt, entry.name, index, x_alt)
			rhs = entry.joint(model, with_x, data, beta) - entry.joint(model, with_alt, data, beta)
			worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
		report.worst[entry.key] = worst
	if not report.passed:
		logger.warning(f'conditional consistency failed for {report.failing}')
	return report


def consistency_suites(specs: Iterable, n_triples: int, rng: np.random.Generator, mutation: Mutation | None = None) -> list[ConsistencyReport]:
	"""Run the suite for several models and check that no registered conditional went unchecked"""
	reports = [conditional_consistency_suite(spec, n_triples, rng, mutation) for spec in specs]
	conditionals.assert_covered(key for report in reports for key in report.worst)
	return reports


# Geweke --------------------------------------------------------------------------------


def _statistics(model, state, data: Dataset) -> dict[str, float]:
	rows = model.rows_of(state)
	if model.kind == 'clustering':
		occupancy = float(np.mean(rows == 0)) if rows.size else 0.0
	elif model.kind == 'binary':
		occupancy = float(np.mean(rows)) if rows.size else 0.0
	else:
		occupancy = float(np.mean(rows**2)) if rows.size else 0.0
	return {
		'data_mean': float(np.mean(data.Y)) if data.Y.size else 0.0,
		'data_variance': float(np.var(data.Y)) if data.Y.size else 0.0,
		'occupancy': occupancy,
		'param_norm': float(np.linalg.norm(model.params_of(state))),
	}


@time_execution_sync('--geweke_test')
def geweke_test(
	spec,
	n_iterations: int,
	sweeps_per_iteration: int,
	rng: np.random.Generator,
	mutation: Mutation | None = None,
	thin: int = 1,
) -> GewekeReport:
	"""
	Compare statistics of independent forward simulations with those of a chain that
	alternates `sweeps_per_iteration` Gibbs sweeps with resampling the data given the state.
	Both are draws from the joint when the sweeps are correct.
	"""
	if n_iterations < 2:
		raise ValueError(f'geweke test needs at least two iterations, got {n_iterations}')
	model = get_model(spec)
	report = GewekeReport(kind=spec.kind, n_iterations=n_iterations, sweeps_per_iteration=sweeps_per_iteration)

	for _ in range(n_iterations):
		state, data = simulate(spec, rng)
		for name, value in _statistics(model, state, data).items():
			report.forward.setdefault(name, []).append(value)

	state, data = simulate(spec, rng)
	for it in range(n_iterations * thin):
		if sweeps_per_iteration == 0:
			state, data = simulate(spec, rng)
		else:
			for _ in range(sweeps_per_iteration):
				state = gibbs_sweep(spec, state, data, 1.0, rng, mutation=mutation)
			data = model.sample_data(state, rng)
		if (it + 1) % thin == 0:
			for name, value in _statistics(model, state, data).items():
				report.chain.setdefault(name, []).append(value)

	for name in report.forward:
		result = ks_2samp(report.forward[name], report.chain[name])
		report.ks_statistics[name] = float(result.statistic)
		report.p_values[name] = float(result.pvalue)
	logger.debug(report.to_text())
	return report


# Bound audit ---------------------------------------------------------------------------


def bound_violation_audit(
	estimates: Sequence[LogEstimate], truth: float, b_values: Sequence[float], direction: str | None = None
) -> AuditReport:
	"""
	A stochastic lower bound satisfies Pr(estimate > truth + b) < e^-b (mirrored for upper
	bounds). Flags every b at which the empirical rate exceeds e^-b by more than 0.05.
	`direction` audits the estimates as if they claimed that direction.
	"""
	if not estimates:
		raise AuditInputError('no estimates to audit')
	ids = {e.estimator_id for e in estimates}
	directions = {e.direction for e in estimates}
	if len(ids) > 1 or len(directions) > 1:
		raise AuditInputError(f'audited estimates must share estimator and direction, got {sorted(ids)} / {sorted(directions)}')
	direction = direction or directions.pop()
	if direction not in ('lower', 'upper'):
		raise NoBoundError('no bound to audit')

	values = np.array([e.value for e in estimates])
	excess = values - truth if direction == 'lower' else truth - values
	rows = []
	for b in b_values:
		rate = float(np.mean(excess > b))
		cap = math.exp(-b)
		rows.append(AuditRow(b=b, rate=rate, cap=cap, flagged=rate > cap + AUDIT_SLACK))
	report = AuditReport(estimator_id=ids.pop(), direction=direction, truth=truth, n_estimates=len(values), rows=rows)
	if not report.passed:
		logger.warning(f'{report.estimator_id} violates its {direction} bound more often than e^-b allows')
	return report


# Cross-estimator agreement ---------------------------------------------------------------


def _ais_lower(spec, data, exact_sample, rng, T: int, n_chains: int) -> float:
	schedule = make_sigmoid_schedule(T)
	return combine_estimates([ais_forward(spec, data, schedule, rng)[0] for _ in range(n_chains)], 'mean_exp')


def _ais_upper(spec, data, exact_sample, rng, T: int, n_chains: int) -> float:
	schedule = make_sigmoid_schedule(T)
	return combine_estimates([-ais_reverse(spec, data, exact_sample, schedule, rng) for _ in range(n_chains)], 'harmonic')


def _smc(spec, data, exact_sample, rng, n_particles: int) -> float:
	return smc_run(spec, data, n_particles, 1, 'posterior', 0.5, rng)


def _shme(spec, data, exact_sample, rng, n_particles: int) -> float:
	return shme_run(spec, data, exact_sample, n_particles, 1, 'posterior', 0.5, rng)


def _ns(spec, data, exact_sample, rng, n_particles: int, mcmc_steps: int, n_runs: int) -> float:
	values = [nested_sampling(spec, data, mcmc_steps, rng, n_particles=n_particles)[0].value for _ in range(n_runs)]
	return combine_estimates(values, 'mean_log')


def _cms(spec, data, exact_sample, rng, n_transitions: int) -> float:
	return cms(spec, data, n_transitions, rng, n_map_sweeps=100).value


def generous_estimators() -> dict[str, EstimatorFn]:
	"""Estimators with budgets large enough to agree on easy instances"""
	return {
		'ais': partial(_ais_lower, T=500, n_chains=4),
		'reverse_ais': partial(_ais_upper, T=500, n_chains=4),
		'smc': partial(_smc, n_particles=100),
		'shme': partial(_shme, n_particles=100),
		'ns': partial(_ns, n_particles=10, mcmc_steps=20, n_runs=4),
		'cms': partial(_cms, n_transitions=2000),
	}


@time_execution_sync('--cross_estimator_agreement')
def cross_estimator_agreement(
	spec_easy,
	estimator_set: dict[str, EstimatorFn] | None,
	rng: np.random.Generator,
	truth: float | None = None,
) -> AgreementReport:
	"""Run every estimator on one simulated easy instance and compare them (and the oracle when available)"""
	estimator_set = estimator_set or generous_estimators()
	exact_sample, data = simulate(spec_easy, rng)
	if truth is None:
		try:
			truth = brute_force_log_ml(spec_easy, data)
		except InstanceTooLargeError:
			logger.info(f'no oracle for {spec_easy.kind} N={data.N}; comparing estimators with each other only')
	report = AgreementReport(kind=spec_easy.kind, truth=truth)
	for name, estimator in estimator_set.items():
		report.estimates[name] = float(estimator(spec_easy, data, exact_sample, rng))
		logger.debug(f'{name}: {report.estimates[name]:.4f}')
	if not report.passed:
		logger.warning(f'estimators disagree by {report.max_discrepancy:.3f} nats on the easy {spec_easy.kind} instance')
	return report
