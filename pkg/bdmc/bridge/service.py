"""
Bridging estimators: forward and reverse AIS, particle learning (SMC), the sequential
harmonic mean estimator (SHME), and the bidirectional sandwich built from them.

Forward estimators return log weights whose exponentials are unbiased for Z; reverse
estimators return log weights whose exponentials are unbiased for 1/Z (AIS) or whose
harmonic combination estimates Z (SHME).
"""

import logging
import math
from functools import partial

import numpy as np
from scipy.special import expit

from bdmc.bridge.views import (
	AnnealingSchedule,
	CombineRule,
	LogEstimate,
	ParticleRunTrace,
	ProposalKind,
	ProvenanceError,
	SandwichResult,
	ScheduleError,
	SMCConfig,
	ThresholdError,
)
from bdmc.models.service import get_model
from bdmc.models.views import Dataset
from bdmc.prob.service import effective_sample_size, log_harmonic_mean_exp, log_mean_exp, normalized_weights
from bdmc.prob.views import LogWeight, RngStream
from bdmc.transitions.service import gibbs_sweep, reverse_sweep
from bdmc.utils import run_indexed, time_execution_sync

logger = logging.getLogger(__name__)

# kinds whose predictive integrates the parameter block out, so particles refresh it explicitly
_COLLAPSED_PREDICTIVE = ('clustering', 'binary')


def make_sigmoid_schedule(T: int, delta: float = 4.0) -> AnnealingSchedule:
	"""
	Sigmoidal inverse-temperature schedule, rescaled so the endpoints are exactly 0 and 1.

	The sigmoid is evaluated on a grid symmetric about zero, so beta_t + beta_{T+1-t} = 1.
	"""
	if T < 2:
		raise ScheduleError(f'an annealing schedule needs T >= 2 distributions, got {T}')
	if not delta > 0:
		raise ScheduleError(f'sigmoid sharpness must be positive, got {delta}')
	grid = 2.0 * np.arange(T) / (T - 1) - 1.0
	raw = expit(delta * grid)
	betas = (raw - raw[0]) / (raw[-1] - raw[0])
	betas[0], betas[-1] = 0.0, 1.0
	return AnnealingSchedule(T=T, delta=delta, betas=tuple(float(b) for b in betas))


def _require_exact(state) -> None:
	if not getattr(state, 'is_exact', False):
		raise ProvenanceError('reverse chain requires an exact posterior sample')


# AIS -----------------------------------------------------------------------------


def ais_forward(spec, data: Dataset, schedule: AnnealingSchedule, rng: np.random.Generator):
	"""
	One forward AIS chain. Returns (log weight, final state).

	x_1 is a prior draw; for t = 2..T the weight gains (beta_t - beta_{t-1}) log p(y|x_{t-1})
	and x_t is one Gibbs sweep at beta_t away from x_{t-1}.
	"""
	model = get_model(spec)
	betas = schedule.betas
	state = model.sample_prior(data.N, rng)
	log_w = 0.0
	for t in range(1, schedule.T):
		log_w += (betas[t] - betas[t - 1]) * model.log_likelihood(state, data)
		state = gibbs_sweep(spec, state, data, betas[t], rng)
	return log_w, state


def ais_reverse(spec, data: Dataset, exact_sample, schedule: AnnealingSchedule, rng: np.random.Generator) -> LogWeight:
	"""
	One reverse AIS chain from an exact posterior sample. exp(result) is unbiased for 1/Z,
	so the chain's upper estimate of log Z is -result.
	"""
	_require_exact(exact_sample)
	model = get_model(spec)
	betas = schedule.betas
	state = exact_sample
	log_w = 0.0
	for t in range(schedule.T - 1, 0, -1):
		log_w -= (betas[t] - betas[t - 1]) * model.log_likelihood(state, data)
		if t > 1:
			state = reverse_sweep(spec, state, data, rng, beta=betas[t - 1])
	return log_w


# Particle learning -----------------------------------------------------------------


def _check_particle_args(n_particles: int, resample_threshold: float) -> None:
	if n_particles < 1:
		raise ValueError(f'need at least one particle, got {n_particles}')
	if not 0.0 <= resample_threshold <= 1.0 or math.isnan(resample_threshold):
		raise ThresholdError(f'resample threshold must lie in [0, 1], got {resample_threshold}')


def _resample(particles: list, scores: np.ndarray, rng: np.random.Generator) -> list:
	idx = rng.choice(len(particles), size=len(particles), p=normalized_weights(scores))
	return [particles[i].copy() for i in idx]


def _sweep_at_one(spec, state, data: Dataset, n_sweeps: int, rng: np.random.Generator, reverse: bool = False):
	for _ in range(n_sweeps):
		state = reverse_sweep(spec, state, data, rng) if reverse else gibbs_sweep(spec, state, data, 1.0, rng)
	return state


def smc_run_traced(
	spec,
	data: Dataset,
	n_particles: int,
	sweeps_per_point: int,
	proposal_kind: ProposalKind,
	resample_threshold: float,
	rng: np.random.Generator,
) -> tuple[LogWeight, ParticleRunTrace]:
	_check_particle_args(n_particles, resample_threshold)
	model = get_model(spec)
	particles = [model.sample_prior(0, rng) for _ in range(n_particles)]
	log_w = np.zeros(n_particles)
	trace = ParticleRunTrace()

	for i in range(data.N):
		prefix, upto = data.prefix(i), data.prefix(i + 1)
		y = data.Y[i]
		for p, x in enumerate(particles):
			if proposal_kind == 'prior':
				x = model.append_row(x, model.sample_row_prior(rng))
				log_w[p] += model.row_log_likelihoods(x, upto)[i]
			else:
				log_w[p] += model.predictive_loglik(x, prefix, y)
				x = model.append_row(x, model.sample_row_posterior(x, prefix, y, rng))
				if spec.kind in _COLLAPSED_PREDICTIVE:
					x = model.with_params(x, model.sample_params_conditional(x, upto, rng))
			particles[p] = _sweep_at_one(spec, x, upto, sweeps_per_point, rng)

		ess = effective_sample_size(log_w)
		trace.ess.append(ess)
		if n_particles > 1 and ess < resample_threshold * n_particles:
			particles = _resample(particles, log_w, rng)
			log_w = np.full(n_particles, log_mean_exp(log_w))
			trace.n_resamples += 1
			logger.debug(f'smc resampled after row {i} (ess={ess:.2f})')

	trace.log_weights = [float(w) for w in log_w]
	return log_mean_exp(log_w), trace


def smc_run(
	spec,
	data: Dataset,
	n_particles: int,
	sweeps_per_point: int,
	proposal_kind: ProposalKind,
	resample_threshold: float,
	rng: np.random.Generator,
) -> LogWeight:
	"""
	Particle learning: rows are added one at a time, each weighted by the proposal ratio
	(the exact predictive for the posterior proposal) and followed by MCMC sweeps on the
	prefix posterior. Returns the log of the averaged final weights.
	"""
	value, _ = smc_run_traced(spec, data, n_particles, sweeps_per_point, proposal_kind, resample_threshold, rng)
	return value


def shme_run_traced(
	spec,
	data: Dataset,
	exact_sample,
	n_particles: int,
	sweeps_per_point: int,
	proposal_kind: ProposalKind,
	resample_threshold: float,
	rng: np.random.Generator,
) -> tuple[LogWeight, ParticleRunTrace]:
	_require_exact(exact_sample)
	_check_particle_args(n_particles, resample_threshold)
	model = get_model(spec)
	particles = [exact_sample.copy() for _ in range(n_particles)]
	log_w = np.zeros(n_particles)
	trace = ParticleRunTrace()

	for i in range(data.N - 1, -1, -1):
		upto, prefix = data.prefix(i + 1), data.prefix(i)
		y = data.Y[i]
		for p, x in enumerate(particles):
			x = _sweep_at_one(spec, x, upto, sweeps_per_point, rng, reverse=True)
			if proposal_kind == 'prior':
				log_w[p] += model.row_log_likelihoods(x, upto)[i]
			x = model.truncate(x, i)
			if proposal_kind == 'posterior':
				log_w[p] += model.predictive_loglik(x, prefix, y)
			# the next level's parameter block is drawn afresh so states do not depend on the proposal
			if spec.kind in _COLLAPSED_PREDICTIVE:
				x = model.with_params(x, model.sample_params_conditional(x, prefix, rng))
			particles[p] = x

		ess = effective_sample_size(-log_w)
		trace.ess.append(ess)
		if n_particles > 1 and ess < resample_threshold * n_particles:
			particles = _resample(particles, -log_w, rng)
			log_w = np.full(n_particles, log_harmonic_mean_exp(log_w))
			trace.n_resamples += 1
			logger.debug(f'shme resampled before row {i} (ess={ess:.2f})')

	trace.log_weights = [float(w) for w in log_w]
	return log_harmonic_mean_exp(log_w), trace


def shme_run(
	spec,
	data: Dataset,
	exact_sample,
	n_particles: int,
	sweeps_per_point: int,
	proposal_kind: ProposalKind,
	resample_threshold: float,
	rng: np.random.Generator,
) -> LogWeight:
	"""
	Sequential harmonic mean estimator: particle learning run backwards from an exact
	posterior sample, deleting one row per step. The harmonic mean of the weights estimates Z.
	"""
	value, _ = shme_run_traced(spec, data, exact_sample, n_particles, sweeps_per_point, proposal_kind, resample_threshold, rng)
	return value


# Combination and the sandwich --------------------------------------------------------


def combine_estimates(values, rule: CombineRule) -> float:
	"""Combine per-chain (or per-trial) log estimates into one"""
	values = [float(v) for v in values]
	if rule == 'mean_exp':
		return log_mean_exp(values)
	if rule == 'harmonic':
		return log_harmonic_mean_exp(values)
	if rule == 'max':
		return max(values)
	if rule == 'mean_log':
		return float(np.mean(values))
	raise ValueError(f'unknown combination rule {rule!r}')


def posterior_kl_bound(lower: LogEstimate, upper: LogEstimate) -> float:
	"""Stochastic upper bound on KL(q || p) of the forward chains' final states: the sandwich gap"""
	return upper.value - lower.value


def _forward_chain(stream: RngStream, spec, data: Dataset, config) -> float:
	rng = stream.generator()
	if isinstance(config, AnnealingSchedule):
		return ais_forward(spec, data, config, rng)[0]
	return smc_run(spec, data, config.n_particles, config.sweeps_per_point, config.proposal, config.resample_threshold, rng)


def _reverse_chain(stream: RngStream, spec, data: Dataset, exact_sample, config) -> float:
	"""Upper estimate of log Z from one reverse chain"""
	rng = stream.generator()
	if isinstance(config, AnnealingSchedule):
		return -ais_reverse(spec, data, exact_sample, config, rng)
	return shme_run(
		spec, data, exact_sample, config.n_particles, config.sweeps_per_point, config.proposal, config.resample_threshold, rng
	)


@time_execution_sync('--bdmc_sandwich')
def bdmc_sandwich(
	spec,
	data: Dataset,
	exact_sample,
	config: AnnealingSchedule | SMCConfig,
	n_chains: int,
	stream: RngStream,
	n_workers: int = 1,
) -> SandwichResult:
	"""
	Sandwich log Z between a forward (stochastic lower) and a reverse (stochastic upper)
	estimate, each combined over `n_chains` independent chains.
	"""
	_require_exact(exact_sample)
	if n_chains < 1:
		raise ValueError(f'need at least one chain, got {n_chains}')
	forward_streams = stream.child(0).children(n_chains)
	reverse_streams = stream.child(1).children(n_chains)

	forward = run_indexed(partial(_forward_chain, spec=spec, data=data, config=config), forward_streams, n_workers)
	reverse = run_indexed(
		partial(_reverse_chain, spec=spec, data=data, exact_sample=exact_sample, config=config), reverse_streams, n_workers
	)

	is_ais = isinstance(config, AnnealingSchedule)
	lower = LogEstimate(
		value=combine_estimates(forward, 'mean_exp'),
		estimator_id='ais' if is_ais else 'smc',
		direction='lower',
		trial_seed=stream.seed,
		n_chains=n_chains,
		config=config.describe(),
	)
	upper = LogEstimate(
		value=combine_estimates(reverse, 'harmonic'),
		estimator_id='reverse_ais' if is_ais else 'shme',
		direction='upper',
		trial_seed=stream.seed,
		n_chains=n_chains,
		config=config.describe(),
		correlated=n_chains > 1,
	)
	gap = upper.value - lower.value
	logger.debug(f'sandwich [{lower.value:.3f}, {upper.value:.3f}] gap={gap:.3f} over {n_chains} chains')
	return SandwichResult(lower=lower, upper=upper, gap=gap, kl_bound=posterior_kl_bound(lower, upper))
