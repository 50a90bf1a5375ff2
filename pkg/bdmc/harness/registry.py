"""
Estimator catalogue for the sweep harness.

Every estimator is registered with the budget knob it is swept over, the rule that
combines its trials, and the bound direction it claims. Registered functions take
`(spec, data, exact_sample, budget, rng, **options)` and return a log estimate.
"""

from typing import Callable

from bdmc.basic.service import bic, cms, harmonic_mean, likelihood_weighting, nested_sampling
from bdmc.basic.variational import variational_bayes
from bdmc.basic.views import MAP_SEARCH_SWEEPS, NS_STOP_RATIO
from bdmc.bridge.service import ais_forward, ais_reverse, make_sigmoid_schedule, shme_run, smc_run
from bdmc.bridge.views import CombineRule, Direction
from bdmc.harness.views import ConfigError, RegisteredEstimator


class EstimatorRegistry:
	"""Service for registering and looking up estimators"""

	def __init__(self):
		self.estimators: dict[str, RegisteredEstimator] = {}

	def estimator(
		self,
		id: str,
		budget_name: str,
		combine: CombineRule,
		direction: Direction,
		needs_exact: bool = False,
	):
		"""Decorator for registering an estimator"""

		def decorator(func: Callable):
			self.estimators[id] = RegisteredEstimator(
				id=id,
				budget_name=budget_name,
				combine=combine,
				direction=direction,
				needs_exact=needs_exact,
				description=(func.__doc__ or '').strip(),
				function=func,
			)
			return func

		return decorator

	def get(self, id: str) -> RegisteredEstimator:
		try:
			return self.estimators[id]
		except KeyError:
			raise ConfigError(f'unknown estimator {id!r}; known: {sorted(self.estimators)}') from None

	def get_description(self) -> str:
		return '\n'.join(entry.describe() for entry in self.estimators.values())


estimators = EstimatorRegistry()


@estimators.estimator('ais', budget_name='T', combine='mean_exp', direction='lower')
def run_ais(spec, data, exact_sample, budget, rng, delta: float = 4.0):
	"""Forward annealed importance sampling over a sigmoid schedule of T distributions"""
	return ais_forward(spec, data, make_sigmoid_schedule(budget, delta), rng)[0]


@estimators.estimator('reverse_ais', budget_name='T', combine='harmonic', direction='upper', needs_exact=True)
def run_reverse_ais(spec, data, exact_sample, budget, rng, delta: float = 4.0):
	"""Reverse AIS from the exact posterior sample"""
	return -ais_reverse(spec, data, exact_sample, make_sigmoid_schedule(budget, delta), rng)


@estimators.estimator('smc', budget_name='sweeps_per_point', combine='mean_exp', direction='lower')
def run_smc(spec, data, exact_sample, budget, rng, n_particles: int = 1, proposal: str = 'posterior', resample_threshold: float = 0.5):
	"""Particle learning, rows added one at a time"""
	return smc_run(spec, data, n_particles, budget, proposal, resample_threshold, rng)


@estimators.estimator('shme', budget_name='sweeps_per_point', combine='harmonic', direction='upper', needs_exact=True)
def run_shme(spec, data, exact_sample, budget, rng, n_particles: int = 1, proposal: str = 'posterior', resample_threshold: float = 0.5):
	"""Sequential harmonic mean, rows deleted one at a time from the exact sample"""
	return shme_run(spec, data, exact_sample, n_particles, budget, proposal, resample_threshold, rng)


@estimators.estimator('lw', budget_name='n_samples', combine='mean_exp', direction='lower')
def run_lw(spec, data, exact_sample, budget, rng):
	"""Likelihood weighting with prior proposals"""
	return likelihood_weighting(spec, data, budget, rng).value


@estimators.estimator('hme', budget_name='n_samples', combine='harmonic', direction='upper', needs_exact=True)
def run_hme(spec, data, exact_sample, budget, rng, sweeps_between: int = 1):
	"""Harmonic mean of likelihoods along a chain from the exact sample"""
	return harmonic_mean(spec, data, exact_sample, budget, sweeps_between, rng).value


@estimators.estimator('bic', budget_name='n_map_sweeps', combine='mean_log', direction='none')
def run_bic(spec, data, exact_sample, budget, rng):
	"""Bayesian information criterion at an approximate MAP state"""
	return bic(spec, data, budget, rng).value


@estimators.estimator('cms', budget_name='n_transitions', combine='mean_exp', direction='lower')
def run_cms(spec, data, exact_sample, budget, rng, n_map_sweeps: int = MAP_SEARCH_SWEEPS):
	"""Chib's identity with a reverse-started chain"""
	return cms(spec, data, budget, rng, n_map_sweeps=n_map_sweeps).value


@estimators.estimator('ns', budget_name='mcmc_steps', combine='mean_log', direction='none')
def run_ns(spec, data, exact_sample, budget, rng, n_particles: int = 2, stop_ratio: float = NS_STOP_RATIO):
	"""Nested sampling with constrained prior moves"""
	return nested_sampling(spec, data, budget, rng, n_particles=n_particles, stop_ratio=stop_ratio)[0].value


@estimators.estimator('vb', budget_name='n_restarts', combine='max', direction='lower')
def run_vb(spec, data, exact_sample, budget, rng):
	"""Best mean-field bound over restarts"""
	return variational_bayes(spec, data, budget, rng)[0].value


@estimators.estimator('vb_corrected', budget_name='n_restarts', combine='max', direction='none')
def run_vb_corrected(spec, data, exact_sample, budget, rng):
	"""Mean-field bound plus ln K!"""
	return variational_bayes(spec, data, budget, rng)[1].value
