import itertools
import math

import numpy as np
import pytest

from bdmc.models.service import get_model, simulate
from bdmc.models.views import BinarySpec, ClusteringSpec, ClusteringState, Dataset, LowRankSpec
from bdmc.prob.service import log_sum_exp, make_rng
from bdmc.transitions import service as transitions_service
from bdmc.transitions.service import (
	constrained_prior_step,
	default_plan,
	gibbs_sweep,
	mode_sweep,
	reverse_sweep,
	run_plan,
	run_sweeps,
	sweep_transition_logprob,
)
from bdmc.transitions.sites import build_plan, conditionals, tempered_joint
from bdmc.transitions.views import (
	BetaOutOfRangeError,
	DegenerateConditionalError,
	DiscreteConditional,
	InfeasibleStartError,
	ScanPlanMismatchError,
	SweepContext,
	UnregisteredConditionalError,
)


def _tempered_z_law(spec: ClusteringSpec, data: Dataset, beta: float) -> dict[tuple, float]:
	"""Marginal law of z under prior * likelihood^beta, by enumeration"""
	if beta == 0.0:
		log_pi = np.log(np.asarray(spec.mix_probs))
		weights = {z: float(np.sum(log_pi[list(z)])) for z in itertools.product(range(spec.K), repeat=data.N)}
	else:
		# a likelihood to the power beta is a Gaussian likelihood with noise_var / beta, up to a constant
		tempered = get_model(spec.model_copy(update={'noise_var': spec.noise_var / beta}))
		weights = {
			z: tempered.collapsed_log_joint(np.array(z), data.Y) for z in itertools.product(range(spec.K), repeat=data.N)
		}
	norm = log_sum_exp(list(weights.values()))
	return {z: math.exp(w - norm) for z, w in weights.items()}


def _all_clustering_states(spec, theta):
	for z in itertools.product(range(spec.K), repeat=spec.N):
		yield ClusteringState(z=np.array(z, dtype=np.int64), theta=theta.copy())


# plans -------------------------------------------------------------------------


def test_reverse_of_reverse_plan_is_forward_plan():
	for kind, n_rows, K in (('clustering', 4, 2), ('lowrank', 3, 2), ('binary', 3, 3)):
		for beta in (0.5, 1.0):
			plan = build_plan(kind, n_rows, K, beta)
			assert plan.reversed().reversed() == plan
			assert plan.reversed().direction == 'reverse'


def test_collapsed_plan_keeps_centre_refresh_last():
	plan = build_plan('clustering', 3, 2, 1.0)
	assert plan.scan_order == ('assignment[0]', 'assignment[1]', 'assignment[2]', 'centers')
	assert plan.reversed().scan_order == ('assignment[2]', 'assignment[1]', 'assignment[0]', 'centers')
	assert build_plan('clustering', 3, 2, 0.5).reversed().scan_order == ('centers', 'assignments')


def test_single_assignment_plan_is_palindromic():
	spec = ClusteringSpec(N=1, D=2, K=3)
	state, data = simulate(spec, make_rng(1))
	forward = gibbs_sweep(spec, state, data, 1.0, make_rng(2))
	backward = reverse_sweep(spec, state, data, make_rng(2))
	assert np.array_equal(forward.z, backward.z)
	assert np.array_equal(forward.theta, backward.theta)


def test_plan_for_other_model_is_rejected(tiny_clustering):
	spec, state, data = tiny_clustering
	plan = build_plan('binary', 4, 2)
	with pytest.raises(ScanPlanMismatchError):
		run_plan(spec, plan, state, data, 1.0, make_rng(0))


def test_beta_outside_unit_interval_rejected(tiny_clustering):
	spec, state, data = tiny_clustering
	with pytest.raises(BetaOutOfRangeError):
		gibbs_sweep(spec, state, data, 1.2, make_rng(0))


# sweeps ------------------------------------------------------------------------


def test_sweep_at_beta_zero_uses_prior_conditionals():
	spec = ClusteringSpec(N=5, D=3, K=2, between_var=2.0)
	state, data = simulate(spec, make_rng(3))
	ctx = SweepContext(model=get_model(spec), data=data, beta=0.0)
	centers = conditionals.get('clustering', 'centers').builder(ctx, state, None)
	assert np.allclose(centers.mean, 0.0)
	assert np.allclose(centers.var, 2.0)
	assignments = conditionals.get('clustering', 'assignments').builder(ctx, state, None)
	assert np.allclose(np.exp(assignments.log_probs), 0.5)


def test_exact_fit_assignments_never_move():
	spec = ClusteringSpec(N=6, D=2, K=3, noise_var=1e-6)
	z = np.array([0, 0, 1, 1, 2, 2])
	theta = np.array([[0.0, 3.0], [3.0, 0.0], [-3.0, -3.0]])
	data = Dataset(theta[z])
	state = ClusteringState(z=z.copy(), theta=theta.copy())
	rng = make_rng(4)
	for _ in range(20):
		state = gibbs_sweep(spec, state, data, 1.0, rng)
		assert np.array_equal(state.z, z)


def test_sweeps_do_not_touch_their_input(tiny_binary):
	spec, state, data = tiny_binary
	before = state.copy()
	gibbs_sweep(spec, state, data, 0.7, make_rng(5))
	assert np.array_equal(state.Z, before.Z) and np.array_equal(state.A, before.A)
	assert state.is_exact


@pytest.mark.parametrize('beta', [0.0, 0.5, 1.0])
def test_sweeps_preserve_the_tempered_assignment_law(beta):
	spec = ClusteringSpec(N=3, D=2, K=2, noise_var=0.5)
	_, data = simulate(spec, make_rng(6))
	law = _tempered_z_law(spec, data, beta)
	rng = make_rng(7)
	state = get_model(spec).sample_prior(spec.N, rng)
	state = run_sweeps(spec, state, data, beta, 50, rng)
	counts = dict.fromkeys(law, 0)
	n_sweeps = 6000
	for _ in range(n_sweeps):
		state = gibbs_sweep(spec, state, data, beta, rng)
		counts[tuple(int(v) for v in state.z)] += 1
	total_variation = 0.5 * sum(abs(counts[z] / n_sweeps - p) for z, p in law.items())
	assert total_variation < 0.08


def test_mode_sweep_does_not_decrease_the_joint():
	for spec in (ClusteringSpec(N=6, D=3, K=3), LowRankSpec(N=6, D=3, K=2), BinarySpec(N=6, D=3, K=2)):
		rng = make_rng(8)
		_, data = simulate(spec, rng)
		model = get_model(spec)
		state = model.sample_prior(spec.N, rng)
		before = tempered_joint(model, state, data, 1.0)
		for _ in range(3):
			state = mode_sweep(spec, state, data)
			after = tempered_joint(model, state, data, 1.0)
			assert after >= before - 1e-9
			before = after


# transition probabilities --------------------------------------------------------


@pytest.mark.parametrize('beta', [0.5, 1.0])
def test_transition_probabilities_normalize_over_assignments(beta):
	spec = ClusteringSpec(N=3, D=2, K=2, noise_var=0.4)
	rng = make_rng(9)
	state, data = simulate(spec, rng)
	from_state = get_model(spec).sample_prior(spec.N, rng)
	logps = [
		sweep_transition_logprob(spec, from_state, to_state, data, beta=beta, discrete_only=True)
		for to_state in _all_clustering_states(spec, state.theta)
	]
	assert math.exp(log_sum_exp(logps)) == pytest.approx(1.0, abs=1e-8)


def test_single_row_transition_is_the_posterior():
	spec = ClusteringSpec(N=1, D=2, K=3, noise_var=0.3)
	state, data = simulate(spec, make_rng(10))
	model = get_model(spec)
	joint = np.array([model.collapsed_log_joint(np.array([k]), data.Y) for k in range(3)])
	posterior = joint - log_sum_exp(joint)
	for k, to_state in enumerate(_all_clustering_states(spec, state.theta)):
		logp = sweep_transition_logprob(spec, state, to_state, data, discrete_only=True)
		assert logp == pytest.approx(posterior[k], abs=1e-10)


def test_reversed_scan_is_the_reverse_operator():
	spec = ClusteringSpec(N=3, D=2, K=2, noise_var=0.4)
	state, data = simulate(spec, make_rng(11))
	model = get_model(spec)
	plan = default_plan(spec, spec.N, 1.0)
	states = list(_all_clustering_states(spec, state.theta))
	for x in states:
		for x2 in states:
			forward = model.collapsed_log_joint(x.z, data.Y) + sweep_transition_logprob(
				spec, x, x2, data, plan=plan, discrete_only=True
			)
			backward = model.collapsed_log_joint(x2.z, data.Y) + sweep_transition_logprob(
				spec, x2, x, data, plan=plan.reversed(), discrete_only=True
			)
			assert forward == pytest.approx(backward, abs=1e-9)


def test_transition_between_states_of_different_sizes_rejected(tiny_clustering):
	spec, state, data = tiny_clustering
	with pytest.raises(ScanPlanMismatchError):
		sweep_transition_logprob(spec, state, get_model(spec).truncate(state, 2), data)


def test_continuous_transition_density_matches_sampling_law(tiny_lowrank):
	spec, state, data = tiny_lowrank
	plan = default_plan(spec, spec.N)
	new_state, logp_sampled = run_plan(spec, plan, state, data, 1.0, make_rng(12))
	assert sweep_transition_logprob(spec, state, new_state, data) == pytest.approx(logp_sampled, abs=1e-10)


# constrained prior ---------------------------------------------------------------


def test_unconstrained_step_accepts_everything(tiny_clustering):
	spec, state, data = tiny_clustering
	moved = constrained_prior_step(spec, state, data, -math.inf, make_rng(13))
	assert not np.array_equal(moved.theta, state.theta)


def test_cutoff_at_the_maximum_leaves_state_unchanged():
	spec = BinarySpec(N=3, D=2, K=2)
	state = get_model(spec).make_state(np.array([[1, 0], [0, 1], [1, 1]]), np.array([[0.5, -1.0], [2.0, 0.3]]))
	data = Dataset(state.Z.astype(float) @ state.A)
	model = get_model(spec)
	cutoff = model.log_likelihood(state, data) - 1e-9
	moved = constrained_prior_step(spec, state, data, cutoff, make_rng(14))
	assert np.array_equal(moved.Z, state.Z)
	assert np.array_equal(moved.A, state.A)


def test_constrained_step_never_leaves_the_constraint():
	for spec in (ClusteringSpec(N=5, D=2, K=2), LowRankSpec(N=4, D=3, K=1), BinarySpec(N=4, D=2, K=2)):
		rng = make_rng(15)
		state, data = simulate(spec, rng)
		model = get_model(spec)
		cutoff = model.log_likelihood(state, data) - 5.0
		for _ in range(30):
			state = constrained_prior_step(spec, state, data, cutoff, rng)
			assert model.log_likelihood(state, data) > cutoff


def test_boundary_rejection_drops_the_exact_flag(tiny_clustering, monkeypatch):
	spec, state, data = tiny_clustering
	state = state.copy()
	state.is_exact = True

	def overshoot(model, s, Y, threshold, rng):
		s.theta[:] = 1e3

	monkeypatch.setitem(transitions_service._CONSTRAINED_MOVES, 'clustering', overshoot)
	cutoff = get_model(spec).log_likelihood(state, data) - 1.0
	moved = constrained_prior_step(spec, state, data, cutoff, make_rng(17))
	assert np.array_equal(moved.theta, state.theta)
	assert np.array_equal(moved.z, state.z)
	assert not moved.is_exact
	assert state.is_exact


def test_infeasible_start_rejected(tiny_lowrank):
	spec, state, data = tiny_lowrank
	cutoff = get_model(spec).log_likelihood(state, data) + 1.0
	with pytest.raises(InfeasibleStartError, match='infeasible start'):
		constrained_prior_step(spec, state, data, cutoff, make_rng(16))


# registry ------------------------------------------------------------------------


def test_registry_lists_every_site_of_every_plan():
	keys = set(conditionals.keys())
	assert keys == {
		'clustering.assignments',
		'clustering.assignment',
		'clustering.centers',
		'lowrank.U',
		'lowrank.V',
		'binary.attribute',
		'binary.weights',
	}
	with pytest.raises(UnregisteredConditionalError):
		conditionals.get('clustering', 'weights')
	with pytest.raises(UnregisteredConditionalError):
		conditionals.assert_covered(['clustering.assignments'])
	assert 'collapsed' in conditionals.get('clustering', 'assignment').describe()


def test_degenerate_discrete_conditional_raises():
	with pytest.raises(DegenerateConditionalError):
		DiscreteConditional(np.array([[-np.inf, -np.inf]]))
