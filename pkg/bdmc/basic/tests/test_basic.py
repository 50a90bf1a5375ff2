import math

import numpy as np
import pytest

from bdmc.basic import variational
from bdmc.basic.service import (
	bic,
	bic_dimension,
	cms,
	find_map,
	harmonic_mean,
	likelihood_weighting,
	nested_sampling,
	_log_increment,
	_log_joint,
)
from bdmc.basic.views import NS_STOP_RATIO
from bdmc.basic.variational import fit_restart, variational_bayes, variational_bound
from bdmc.bridge.service import bdmc_sandwich, make_sigmoid_schedule
from bdmc.bridge.views import MonotonicityError, ProvenanceError, StarPointUnreachableError, StopCriterionError
from bdmc.models.service import brute_force_log_ml, get_model, simulate
from bdmc.models.views import BinarySpec, ClusteringSpec, Dataset, LowRankSpec
from bdmc.prob.service import make_rng
from bdmc.prob.views import RngStream
from bdmc.transitions.service import mode_sweep


def _empty(spec):
	state = get_model(spec).sample_prior(0, make_rng(0))
	state.is_exact = True
	return state, Dataset(np.zeros((0, spec.D)))


# likelihood weighting and harmonic mean ------------------------------------------------


def test_empty_dataset_estimates_are_zero():
	spec = ClusteringSpec(N=0, D=3, K=2)
	state, data = _empty(spec)
	assert likelihood_weighting(spec, data, 5, make_rng(1)).value == 0.0
	assert harmonic_mean(spec, data, state, 5, 1, make_rng(2)).value == 0.0
	assert bic(spec, data, 10, make_rng(3)).value == 0.0


def test_likelihood_weighting_converges_on_a_flat_instance():
	spec = ClusteringSpec(N=2, D=1, K=2, noise_var=1.0)
	_, data = simulate(spec, make_rng(4))
	estimate = likelihood_weighting(spec, data, 20_000, make_rng(5))
	assert estimate.direction == 'lower'
	assert estimate.value == pytest.approx(brute_force_log_ml(spec, data), abs=0.3)


def test_single_harmonic_sample_is_the_exact_sample_likelihood(tiny_binary):
	spec, state, data = tiny_binary
	estimate = harmonic_mean(spec, data, state, 1, 0, make_rng(6))
	assert estimate.value == pytest.approx(get_model(spec).log_likelihood(state, data), abs=1e-12)
	assert estimate.direction == 'upper'


def test_harmonic_mean_without_exact_sample_refused(tiny_clustering):
	spec, state, data = tiny_clustering
	approximate = state.copy()
	approximate.is_exact = False
	with pytest.raises(ProvenanceError):
		harmonic_mean(spec, data, approximate, 3, 1, make_rng(7))


@pytest.mark.slow
def test_weighting_and_harmonic_mean_straddle_the_sandwich():
	spec = ClusteringSpec()
	state, data = simulate(spec, make_rng(27))
	sandwich = bdmc_sandwich(spec, data, state, make_sigmoid_schedule(2000), 2, RngStream(seed=28))
	lw = likelihood_weighting(spec, data, 100, make_rng(29))
	hme = harmonic_mean(spec, data, state, 100, 1, make_rng(30))
	assert lw.value < sandwich.lower.value - 10.0
	assert hme.value > sandwich.upper.value + 10.0


# BIC ---------------------------------------------------------------------------------


def test_bic_parameter_counts():
	assert bic_dimension(ClusteringSpec(), 50) == 250
	assert bic_dimension(BinarySpec(), 50) == 250
	assert bic_dimension(LowRankSpec(), 50) == 5 * (50 + 25)


def test_bic_is_map_likelihood_minus_penalty(tiny_clustering):
	spec, _, data = tiny_clustering
	state = find_map(spec, data, 30, make_rng(8))
	expected = get_model(spec).log_likelihood(state, data) - 0.5 * spec.K * spec.D * math.log(data.N)
	assert bic(spec, data, 30, make_rng(8)).value == pytest.approx(expected, abs=1e-10)


def test_estimates_carry_the_trial_seed(tiny_clustering):
	spec, state, data = tiny_clustering
	estimates = [
		likelihood_weighting(spec, data, 3, make_rng(30), trial_seed=41),
		harmonic_mean(spec, data, state, 3, 1, make_rng(31), trial_seed=41),
		bic(spec, data, 5, make_rng(32), trial_seed=41),
		cms(spec, data, 2, make_rng(33), n_map_sweeps=5, trial_seed=41),
		nested_sampling(spec, data, 2, make_rng(34), trial_seed=41)[0],
		*variational_bayes(spec, data, 1, make_rng(35), trial_seed=41)[:2],
	]
	assert [e.trial_seed for e in estimates] == [41] * 7
	assert likelihood_weighting(spec, data, 3, make_rng(30)).trial_seed is None


def test_map_search_ends_at_a_mode_sweep_fixed_point(tiny_binary):
	spec, _, data = tiny_binary
	model = get_model(spec)
	state = find_map(spec, data, 40, make_rng(9))
	assert _log_joint(model, mode_sweep(spec, state, data), data) <= _log_joint(model, state, data) + 1e-9


# CMS ---------------------------------------------------------------------------------


@pytest.mark.parametrize('n_transitions', [1, 7])
def test_cms_is_exact_for_a_single_row(n_transitions):
	spec = ClusteringSpec(N=1, D=3, K=3, noise_var=0.2)
	_, data = simulate(spec, make_rng(10))
	estimate = cms(spec, data, n_transitions, make_rng(11), n_map_sweeps=10)
	assert estimate.value == pytest.approx(brute_force_log_ml(spec, data), abs=1e-8)
	assert estimate.direction == 'lower'


def test_cms_close_to_truth_on_a_mixing_instance():
	spec = ClusteringSpec(N=3, D=1, K=2, noise_var=0.5)
	_, data = simulate(spec, make_rng(24))
	estimate = cms(spec, data, 3000, make_rng(12), n_map_sweeps=100)
	assert estimate.value == pytest.approx(brute_force_log_ml(spec, data), abs=1.0)


def test_cms_star_outside_the_support_is_unreachable():
	spec = BinarySpec(N=2, D=2, K=2, attr_probs=(1.0, 0.5))
	model = get_model(spec)
	star = model.make_state(np.array([[0, 0], [0, 1]]), np.array([[1.0, 0.0], [0.0, 1.0]]))
	data = Dataset(np.array([[0.1, 0.0], [0.0, 0.9]]))
	with pytest.raises(StarPointUnreachableError, match='star point unreachable'):
		cms(spec, data, 3, make_rng(13), star=star)


# nested sampling -----------------------------------------------------------------------


def test_constant_likelihood_stops_immediately():
	spec = LowRankSpec(N=0, D=2, K=1)
	_, data = _empty(spec)
	estimate, trace = nested_sampling(spec, data, 5, make_rng(14))
	assert estimate.value == 0.0
	assert trace.n_steps == 0


def test_stop_rule_measures_growth_of_the_accumulated_total():
	# A = 1, V L_max = 0.2: the total can still grow by 20% even though V L_min = 0.1
	assert _log_increment(0.0, math.log(0.1), 0.0, math.log(2.0)) == pytest.approx(math.log(1.2))
	assert _log_increment(0.0, math.log(0.1), 0.0, math.log(2.0)) > math.log(1.15)
	assert math.log((1.0 + 0.2) / (1.0 + 0.1)) < math.log(1.15)


def test_stop_rule_keeps_going_on_a_tiny_remaining_mass():
	# V L_max = 2e-10 against A = 1 is still at least the default ratio
	assert _log_increment(0.0, math.log(2e-10), 0.0, 0.0) >= math.log(NS_STOP_RATIO)
	assert _log_increment(0.0, math.log(1e-12), 0.0, 0.0) < math.log(NS_STOP_RATIO)


def test_first_step_compares_the_extreme_likelihoods():
	assert _log_increment(-math.inf, 0.0, -3.0, -1.0) == pytest.approx(2.0)
	assert _log_increment(-math.inf, -5.0, -2.0, -2.0) == 0.0


def test_volume_bookkeeping():
	spec = ClusteringSpec(N=3, D=2, K=2)
	_, data = simulate(spec, make_rng(15))
	_, trace = nested_sampling(spec, data, 3, make_rng(16))
	assert trace.volume(3) == pytest.approx(8 / 27, rel=1e-15)
	assert trace.volumes == [(2 / 3) ** t for t in range(1, trace.n_steps + 1)]
	assert all(b >= a for a, b in zip(trace.cutoffs, trace.cutoffs[1:]))
	assert trace.lower_sum <= trace.estimate <= trace.upper_sum


def test_step_cap_raises(tiny_clustering):
	spec, _, data = tiny_clustering
	with pytest.raises(StopCriterionError, match='stop criterion never met'):
		nested_sampling(spec, data, 2, make_rng(17), max_steps=3)


def test_nested_sampling_needs_two_particles(tiny_clustering):
	spec, _, data = tiny_clustering
	with pytest.raises(ValueError):
		nested_sampling(spec, data, 2, make_rng(18), n_particles=1)


@pytest.mark.slow
def test_nested_sampling_mean_near_truth(tiny_clustering):
	spec, _, data = tiny_clustering
	truth = brute_force_log_ml(spec, data)
	values = [nested_sampling(spec, data, 20, make_rng(100 + run))[0].value for run in range(25)]
	assert np.mean(values) == pytest.approx(truth, abs=1.5)


# variational Bayes ---------------------------------------------------------------------


@pytest.mark.parametrize('fixture', ['tiny_clustering', 'tiny_binary', 'tiny_lowrank'])
def test_bound_is_monotone_and_below_truth(fixture, request):
	spec, state, data = request.getfixturevalue(fixture)
	truth = brute_force_log_ml(spec, data)
	lower, corrected, q = variational_bayes(spec, data, 3, make_rng(19))
	assert all(b >= a - 1e-6 for a, b in zip(q.bound_trace, q.bound_trace[1:]))
	assert lower.value <= truth
	assert corrected.value <= truth + get_model(spec).log_symmetry
	assert corrected.value - lower.value == pytest.approx(math.lgamma(spec.K + 1))
	assert variational_bound(spec, data, q) == pytest.approx(lower.value)


def test_symmetry_correction_for_ten_labels():
	assert get_model(ClusteringSpec()).log_symmetry == pytest.approx(math.log(3628800))


def test_centre_factors_are_a_local_maximum(tiny_clustering):
	spec, _, data = tiny_clustering
	model = get_model(spec)
	q = fit_restart(spec, data, make_rng(20))
	variational._clustering_update_params(model, data.Y, q)
	base = variational_bound(spec, data, q)
	for k in range(spec.K):
		for j in range(spec.D):
			for step in (1e-3, -1e-3):
				moved = q.copy()
				moved.param_mean[k, j] += step
				assert variational_bound(spec, data, moved) <= base + 1e-8


@pytest.mark.slow
@pytest.mark.parametrize('fixture', ['tiny_clustering', 'tiny_binary', 'tiny_lowrank'])
def test_best_bound_stays_below_truth_in_every_restart_set(fixture, request):
	spec, _, data = request.getfixturevalue(fixture)
	truth = brute_force_log_ml(spec, data)
	for restart_set in range(100):
		lower, _, _ = variational_bayes(spec, data, 5, make_rng(1000 + restart_set))
		assert lower.value <= truth, f'restart set {restart_set}: {lower.value} > {truth}'


def test_loading_factors_are_a_local_maximum(tiny_lowrank):
	spec, _, data = tiny_lowrank
	model = get_model(spec)
	q = fit_restart(spec, data, make_rng(25))
	variational._lowrank_update_params(model, data.Y, q)
	base = variational_bound(spec, data, q)
	for k in range(spec.K):
		for j in range(spec.D):
			for step in (1e-3, -1e-3):
				moved = q.copy()
				moved.param_mean[k, j] += step
				assert variational_bound(spec, data, moved) <= base + 1e-8


def test_last_feature_factor_is_a_local_maximum(tiny_binary):
	spec, _, data = tiny_binary
	model = get_model(spec)
	q = fit_restart(spec, data, make_rng(26))
	# features are updated in turn, so only the last one is optimal given all the others
	variational._binary_update_params(model, data.Y, q)
	base = variational_bound(spec, data, q)
	k = spec.K - 1
	for j in range(spec.D):
		for step in (1e-3, -1e-3):
			moved = q.copy()
			moved.param_mean[k, j] += step
			assert variational_bound(spec, data, moved) <= base + 1e-8


def test_hint_initialization_starts_from_the_given_state(tiny_lowrank):
	spec, state, data = tiny_lowrank
	lower, _, q = variational_bayes(spec, data, 1, make_rng(21), init_state=state)
	assert np.isfinite(lower.value)
	assert q.row_mean.shape == state.U.shape


def test_empty_dataset_bound_is_zero():
	spec = ClusteringSpec(N=0, D=2, K=3)
	_, data = _empty(spec)
	lower, _, _ = variational_bayes(spec, data, 1, make_rng(22))
	assert lower.value == pytest.approx(0.0, abs=1e-9)


def test_decreasing_update_is_caught(tiny_clustering, monkeypatch):
	spec, _, data = tiny_clustering
	init, bound, update_params, _ = variational._FAMILIES['clustering']

	def worst_assignments(model, Y, q):
		sq = -2.0 * Y @ q.param_mean.T + np.sum(q.param_mean**2, axis=1)[None, :]
		q.row_mean = np.eye(model.K)[np.argmax(sq, axis=1)]

	monkeypatch.setitem(variational._FAMILIES, 'clustering', (init, bound, update_params, worst_assignments))
	with pytest.raises(MonotonicityError, match='monotonicity violated'):
		variational_bayes(spec, data, 1, make_rng(23))
