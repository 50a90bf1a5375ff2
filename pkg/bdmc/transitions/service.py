import logging
import math

import numpy as np

from bdmc.models.service import check_beta, get_model
from bdmc.models.views import Dataset
from bdmc.transitions.sites import build_plan, conditionals, get_site_value, parse_site, put_site_value
from bdmc.transitions.views import (
	ConstrainedPriorTarget,
	InfeasibleStartError,
	Mutation,
	ScanPlanMismatchError,
	SweepContext,
	SweepPlan,
)

logger = logging.getLogger(__name__)


def default_plan(spec, n_rows: int, beta: float = 1.0, collapse: bool = True) -> SweepPlan:
	return build_plan(spec.kind, n_rows, spec.K, beta, collapse)


def _check_plan(spec, plan: SweepPlan, n_rows: int) -> None:
	if plan.kind != spec.kind:
		raise ScanPlanMismatchError(f'plan is for {plan.kind!r}, spec is {spec.kind!r}')
	for name in plan.scan_order:
		_, index = parse_site(name)
		if name.startswith('assignment[') and index is not None and index >= n_rows:
			raise ScanPlanMismatchError(f'site {name} does not exist in a state with {n_rows} rows')


def run_plan(
	spec,
	plan: SweepPlan,
	state,
	data: Dataset,
	beta: float,
	rng: np.random.Generator | None = None,
	target=None,
	mode: bool = False,
	mutation: Mutation | None = None,
	discrete_only: bool = False,
):
	"""
	Walk `plan` once, site by site, on a copy of `state`.

	Each site's value is drawn from its conditional, or taken from `target` (forced
	transition), or set to the conditional's mode. Returns the new state and the summed log
	conditional probability of the values taken, each evaluated on the mixed state where
	earlier sites already hold their new values.
	"""
	beta = check_beta(beta)
	model = get_model(spec)
	_check_plan(spec, plan, state.n_rows)
	ctx = SweepContext(model=model, data=data, beta=beta, mutation=mutation)
	work = state.copy()
	total = 0.0
	for name in plan.scan_order:
		base, index = parse_site(name)
		entry = conditionals.get(spec.kind, base)
		cond = entry.builder(ctx, work, index)
		if target is not None:
			value = get_site_value(spec.kind, target, base, index)
		elif mode:
			value = cond.mode()
		else:
			value = cond.sample(rng)
		if not (discrete_only and not entry.discrete):
			total += cond.log_prob(value)
		put_site_value(spec.kind, work, base, index, value)
	work.is_exact = False
	return work, total


def gibbs_sweep(spec, state, data: Dataset, beta: float, rng: np.random.Generator, mutation: Mutation | None = None):
	"""One deterministic-scan Gibbs sweep leaving the tempered posterior at `beta` invariant"""
	plan = default_plan(spec, state.n_rows, beta)
	new_state, _ = run_plan(spec, plan, state, data, beta, rng, mutation=mutation)
	return new_state


def reverse_sweep(spec, state, data: Dataset, rng: np.random.Generator, beta: float = 1.0, mutation: Mutation | None = None):
	"""The reverse operator of `gibbs_sweep`: the same sites visited in mirrored order"""
	plan = default_plan(spec, state.n_rows, beta).reversed()
	new_state, _ = run_plan(spec, plan, state, data, beta, rng, mutation=mutation)
	return new_state


def run_sweeps(spec, state, data: Dataset, beta: float, n_sweeps: int, rng: np.random.Generator, mutation: Mutation | None = None):
	for _ in range(n_sweeps):
		state = gibbs_sweep(spec, state, data, beta, rng, mutation=mutation)
	return state


def mode_sweep(spec, state, data: Dataset, beta: float = 1.0):
	"""Iterated-conditional-modes sweep over the uncollapsed plan"""
	plan = default_plan(spec, state.n_rows, beta, collapse=False)
	new_state, _ = run_plan(spec, plan, state, data, beta, mode=True)
	return new_state


def sweep_transition_logprob(
	spec,
	from_state,
	to_state,
	data: Dataset,
	beta: float = 1.0,
	plan: SweepPlan | None = None,
	discrete_only: bool = False,
) -> float:
	"""log T(to_state | from_state) of one forward sweep"""
	if from_state.n_rows != to_state.n_rows:
		raise ScanPlanMismatchError(f'states cover {from_state.n_rows} and {to_state.n_rows} rows')
	plan = plan or default_plan(spec, from_state.n_rows, beta)
	_, logp = run_plan(spec, plan, from_state, data, beta, target=to_state, discrete_only=discrete_only)
	return logp


# Constrained-prior moves ---------------------------------------------------


def _ssq_threshold(model, data: Dataset, cutoff: float) -> float:
	"""log-likelihood > cutoff  <=>  residual sum of squares < threshold"""
	if cutoff == -math.inf:
		return math.inf
	nv = model.spec.noise_var
	return -2.0 * nv * (cutoff + 0.5 * data.Y.size * math.log(2.0 * math.pi * nv))


def _constrained_clustering(model, s, Y, threshold, rng):
	R = Y - s.theta[s.z]
	ssq = float(np.sum(R**2))
	sd = math.sqrt(model.spec.between_var)
	for i in range(Y.shape[0]):
		k = int(rng.choice(model.K, p=model.pi))
		row = Y[i] - s.theta[k]
		new_ssq = ssq - float(R[i] @ R[i]) + float(row @ row)
		if new_ssq < threshold:
			s.z[i], R[i], ssq = k, row, new_ssq
	for k in range(model.K):
		members = s.z == k
		for j in range(model.D):
			proposal = sd * rng.standard_normal()
			col = Y[members, j] - proposal
			new_ssq = ssq - float(R[members, j] @ R[members, j]) + float(col @ col)
			if new_ssq < threshold:
				s.theta[k, j], R[members, j], ssq = proposal, col, new_ssq


def _constrained_lowrank(model, s, Y, threshold, rng):
	R = Y - s.U @ s.V
	ssq = float(np.sum(R**2))
	su, sv = math.sqrt(model.spec.u_var), math.sqrt(model.spec.v_var)
	for i in range(Y.shape[0]):
		for k in range(model.K):
			proposal = su * rng.standard_normal()
			row = R[i] - (proposal - s.U[i, k]) * s.V[k]
			new_ssq = ssq - float(R[i] @ R[i]) + float(row @ row)
			if new_ssq < threshold:
				s.U[i, k], R[i], ssq = proposal, row, new_ssq
	for k in range(model.K):
		for j in range(model.D):
			proposal = sv * rng.standard_normal()
			col = R[:, j] - (proposal - s.V[k, j]) * s.U[:, k]
			new_ssq = ssq - float(R[:, j] @ R[:, j]) + float(col @ col)
			if new_ssq < threshold:
				s.V[k, j], R[:, j], ssq = proposal, col, new_ssq


def _constrained_binary(model, s, Y, threshold, rng):
	R = Y - s.Z.astype(float) @ s.A
	ssq = float(np.sum(R**2))
	sa = math.sqrt(model.spec.a_var)
	for i in range(Y.shape[0]):
		for k in range(model.K):
			proposal = int(rng.random() < model.pi[k])
			row = R[i] - (proposal - int(s.Z[i, k])) * s.A[k]
			new_ssq = ssq - float(R[i] @ R[i]) + float(row @ row)
			if new_ssq < threshold:
				s.Z[i, k], R[i], ssq = proposal, row, new_ssq
	for k in range(model.K):
		zk = s.Z[:, k].astype(float)
		for j in range(model.D):
			proposal = sa * rng.standard_normal()
			col = R[:, j] - (proposal - s.A[k, j]) * zk
			new_ssq = ssq - float(R[:, j] @ R[:, j]) + float(col @ col)
			if new_ssq < threshold:
				s.A[k, j], R[:, j], ssq = proposal, col, new_ssq


_CONSTRAINED_MOVES = {
	'clustering': _constrained_clustering,
	'lowrank': _constrained_lowrank,
	'binary': _constrained_binary,
}


def constrained_prior_step(spec, state, data: Dataset, cutoff: float | ConstrainedPriorTarget, rng: np.random.Generator):
	"""
	One sweep of single-site moves whose stationary law is the prior restricted to
	log-likelihood > cutoff.

	Each site proposes from its prior; the prior ratio cancels, so a proposal is accepted
	exactly when the full state keeps satisfying the constraint.
	"""
	target = cutoff if isinstance(cutoff, ConstrainedPriorTarget) else ConstrainedPriorTarget(cutoff=cutoff)
	model = get_model(spec)
	current = model.log_likelihood(state, data)
	if not current > target.cutoff:
		raise InfeasibleStartError(f'infeasible start: log-likelihood {current:.6g} <= cutoff {target.cutoff:.6g}')
	work = state.copy()
	work.is_exact = False
	_CONSTRAINED_MOVES[spec.kind](model, work, data.Y, _ssq_threshold(model, data, target.cutoff), rng)
	if not model.log_likelihood(work, data) > target.cutoff:
		# incremental residual sums can drift across the boundary by rounding
		logger.debug('constrained step rejected at the boundary after exact recomputation')
		fallback = state.copy()
		fallback.is_exact = False
		return fallback
	return work
