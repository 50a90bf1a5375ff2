"""
Non-bridging estimators: likelihood weighting, the harmonic mean estimator, BIC, the
Chib-style estimator with a reverse-started chain (CMS), and nested sampling.

Variational Bayes lives in `bdmc.basic.variational`.
"""

import logging
import math

import numpy as np

from bdmc.basic.views import MAP_SEARCH_SWEEPS, NS_MAX_STEPS, NS_STOP_RATIO, NestedSamplingTrace
from bdmc.bridge.service import make_sigmoid_schedule
from bdmc.bridge.views import LogEstimate, ProvenanceError, StarPointUnreachableError, StopCriterionError
from bdmc.models.service import get_model
from bdmc.models.views import Dataset
from bdmc.prob.service import log_harmonic_mean_exp, log_mean_exp
from bdmc.transitions.service import constrained_prior_step, gibbs_sweep, mode_sweep, reverse_sweep, sweep_transition_logprob
from bdmc.utils import time_execution_sync

logger = logging.getLogger(__name__)

MAX_MODE_SWEEPS = 50


def likelihood_weighting(
	spec, data: Dataset, n_samples: int, rng: np.random.Generator, trial_seed: int | None = None
) -> LogEstimate:
	"""Importance sampling with the prior as proposal"""
	if n_samples < 1:
		raise ValueError(f'likelihood weighting needs at least one sample, got {n_samples}')
	model = get_model(spec)
	values = [model.log_likelihood(model.sample_prior(data.N, rng), data) for _ in range(n_samples)]
	return LogEstimate(
		value=log_mean_exp(values),
		estimator_id='lw',
		direction='lower',
		trial_seed=trial_seed,
		config={'n_samples': n_samples},
	)


def harmonic_mean(
	spec,
	data: Dataset,
	exact_sample,
	n_samples: int,
	sweeps_between: int,
	rng: np.random.Generator,
	trial_seed: int | None = None,
) -> LogEstimate:
	"""
	Harmonic mean of likelihoods along a posterior chain started at an exact sample.

	The first sample is the exact sample itself; each later one is `sweeps_between` sweeps on.
	"""
	if not getattr(exact_sample, 'is_exact', False):
		raise ProvenanceError('reverse chain requires an exact posterior sample')
	if n_samples < 1:
		raise ValueError(f'harmonic mean needs at least one sample, got {n_samples}')
	model = get_model(spec)
	state = exact_sample
	values = [model.log_likelihood(state, data)]
	for _ in range(n_samples - 1):
		for _ in range(sweeps_between):
			state = gibbs_sweep(spec, state, data, 1.0, rng)
		values.append(model.log_likelihood(state, data))
	return LogEstimate(
		value=log_harmonic_mean_exp(values),
		estimator_id='hme',
		direction='upper',
		trial_seed=trial_seed,
		config={'n_samples': n_samples, 'sweeps_between': sweeps_between},
	)


# MAP search and BIC -------------------------------------------------------------


def _log_joint(model, state, data: Dataset) -> float:
	return model.log_prior(state) + model.log_likelihood(state, data)


@time_execution_sync('--find_map')
def find_map(spec, data: Dataset, n_map_sweeps: int, rng: np.random.Generator):
	"""
	Approximate MAP state: annealed Gibbs from a prior draw, keeping the best state seen,
	polished by iterated conditional modes until the joint stops increasing.
	"""
	model = get_model(spec)
	state = model.sample_prior(data.N, rng)
	best, best_joint = state, _log_joint(model, state, data)
	if n_map_sweeps >= 2:
		for beta in make_sigmoid_schedule(n_map_sweeps).betas[1:]:
			state = gibbs_sweep(spec, state, data, beta, rng)
			joint = _log_joint(model, state, data)
			if joint > best_joint:
				best, best_joint = state, joint

	for _ in range(MAX_MODE_SWEEPS):
		polished = mode_sweep(spec, best, data)
		joint = _log_joint(model, polished, data)
		if joint <= best_joint:
			break
		best, best_joint = polished, joint
	logger.debug(f'map search for {spec.kind}: log joint {best_joint:.3f}')
	return best


def bic_dimension(spec, n_rows: int) -> int:
	"""Continuous parameter count entering the BIC penalty"""
	return get_model(spec.with_rows(n_rows)).n_free_params


def bic(spec, data: Dataset, n_map_sweeps: int, rng: np.random.Generator, trial_seed: int | None = None) -> LogEstimate:
	"""log p(y | MAP state) - d/2 ln N"""
	config = {'n_map_sweeps': n_map_sweeps}
	if data.N == 0:
		return LogEstimate(value=0.0, estimator_id='bic', trial_seed=trial_seed, config=config)
	state = find_map(spec, data, n_map_sweeps, rng)
	penalty = 0.5 * bic_dimension(spec, data.N) * math.log(data.N)
	value = get_model(spec).log_likelihood(state, data) - penalty
	return LogEstimate(value=value, estimator_id='bic', trial_seed=trial_seed, config=config)


# CMS -------------------------------------------------------------------------------


def cms(
	spec,
	data: Dataset,
	n_transitions: int,
	rng: np.random.Generator,
	n_map_sweeps: int = MAP_SEARCH_SWEEPS,
	star=None,
	trial_seed: int | None = None,
) -> LogEstimate:
	"""
	Chib's identity log p(y) = log p(x*, y) - log p(x* | y) at a high-probability star point,
	with the denominator estimated by averaging T(x* | x_s) over a chain whose first state is
	drawn from the reverse operator at x*. exp(estimate) is unbiased for Z.
	"""
	if n_transitions < 1:
		raise ValueError(f'cms needs at least one transition, got {n_transitions}')
	model = get_model(spec)
	if star is None:
		star = find_map(spec, data, n_map_sweeps, rng)
	star = star.copy()
	star.is_exact = False

	state = reverse_sweep(spec, star, data, rng)
	log_t = [sweep_transition_logprob(spec, state, star, data)]
	for _ in range(n_transitions - 1):
		state = gibbs_sweep(spec, state, data, 1.0, rng)
		log_t.append(sweep_transition_logprob(spec, state, star, data))

	if all(v == -math.inf for v in log_t):
		raise StarPointUnreachableError('star point unreachable')
	value = _log_joint(model, star, data) - log_mean_exp(log_t)
	return LogEstimate(
		value=value,
		estimator_id='cms',
		direction='lower',
		trial_seed=trial_seed,
		config={'n_transitions': n_transitions, 'n_map_sweeps': n_map_sweeps},
	)


# Nested sampling ---------------------------------------------------------------------


def _log_add(a: float, b: float) -> float:
	return float(np.logaddexp(a, b))


def _log_increment(accumulated: float, log_volume: float, low: float, high: float) -> float:
	"""
	log of (A + V L_max) / A, the largest factor the remaining volume can still add to the
	accumulated total A. Before anything is accumulated, A is taken as V L_min.
	"""
	base = accumulated if accumulated > -math.inf else log_volume + low
	return _log_add(accumulated, log_volume + high) - base


@time_execution_sync('--nested_sampling')
def nested_sampling(
	spec,
	data: Dataset,
	mcmc_steps: int,
	rng: np.random.Generator,
	n_particles: int = 2,
	stop_ratio: float = NS_STOP_RATIO,
	max_steps: int = NS_MAX_STEPS,
	trial_seed: int | None = None,
) -> tuple[LogEstimate, NestedSamplingTrace]:
	"""
	Nested sampling over prior volume.

	At every step the lowest-likelihood particle is replaced by a copy of a surviving one,
	moved by `mcmc_steps` prior moves constrained above the removed particle's likelihood.
	The run stops once the remaining volume could change the total by less than `stop_ratio`.
	"""
	if n_particles < 2:
		raise ValueError(f'nested sampling needs at least two particles, got {n_particles}')
	trace = NestedSamplingTrace(n_particles=n_particles, stop_ratio=stop_ratio)
	model = get_model(spec)
	particles = [model.sample_prior(data.N, rng) for _ in range(n_particles)]
	loglik = np.array([model.log_likelihood(x, data) for x in particles])

	log_shrink = math.log(trace.shrink)
	log_shell = math.log(1.0 - trace.shrink)
	log_stop = math.log(stop_ratio)
	lower = upper = -math.inf
	log_volume = 0.0
	previous = None

	while _log_increment(lower, log_volume, loglik.min(), loglik.max()) >= log_stop:
		if trace.n_steps >= max_steps:
			raise StopCriterionError(f'stop criterion never met after {max_steps} steps')
		worst = int(np.argmin(loglik))
		cutoff = float(loglik[worst])
		shell = log_volume + log_shell
		lower = _log_add(lower, shell + cutoff)
		if previous is not None:
			upper = _log_add(upper, previous + cutoff)
		previous = shell
		trace.cutoffs.append(cutoff)

		survivor = int(rng.integers(n_particles - 1))
		survivor += survivor >= worst
		moved = particles[survivor].copy()
		# a survivor sitting exactly on the cutoff has no feasible constrained move
		if loglik[survivor] > cutoff:
			for _ in range(mcmc_steps):
				moved = constrained_prior_step(spec, moved, data, cutoff, rng)
		particles[worst] = moved
		loglik[worst] = model.log_likelihood(moved, data)
		log_volume = trace.n_steps * log_shrink

	live_mean = log_mean_exp(loglik)
	if previous is not None:
		upper = _log_add(upper, previous + float(loglik.min()))
	trace.lower_sum = _log_add(lower, log_volume + float(loglik.min()))
	trace.upper_sum = _log_add(upper, log_volume + float(loglik.max()))
	trace.estimate = _log_add(lower, log_volume + live_mean)
	logger.debug(f'nested sampling stopped after {trace.n_steps} steps: {trace.estimate:.3f}')
	return (
		LogEstimate(
			value=trace.estimate,
			estimator_id='ns',
			trial_seed=trial_seed,
			config={'n_particles': n_particles, 'mcmc_steps': mcmc_steps, 'stop_ratio': stop_ratio},
		),
		trace,
	)
