"""
Gibbs sites of the three models.

Every conditional is registered with the joint it is a conditional of, so the consistency
suite can check p(x|u)/p(x'|u) against p(x,u)/p(x',u) for each one. Tempered conditionals
scale the likelihood's natural parameters by beta; the collapsed clustering assignment
is only used at beta = 1.
"""

import math
import re
from typing import Callable

import numpy as np

from bdmc.transitions.registry.service import ConditionalRegistry
from bdmc.transitions.views import (
	DiscreteConditional,
	GaussianConditional,
	PrecisionGaussianConditional,
	ScanPlanMismatchError,
	SweepContext,
	SweepPlan,
)

conditionals = ConditionalRegistry()

_SITE_NAME = re.compile(r'^(?P<base>[A-Za-z_]+)(\[(?P<index>\d+)\])?$')


def tempered_joint(model, state, data, beta: float) -> float:
	return model.log_prior(state) + beta * model.log_likelihood(state, data)


def collapsed_clustering_joint(model, state, data, beta: float) -> float:
	return model.collapsed_log_joint(state.z, data.Y)


# Clustering ---------------------------------------------------------------


@conditionals.conditional('clustering', 'assignments', joint=tempered_joint, discrete=True)
def clustering_assignments(ctx: SweepContext, state, index=None):
	"""All z_i given the centres; rows are conditionally independent"""
	model, Y = ctx.model, ctx.data.Y
	nv = ctx.noise_var('assignments')
	sq = np.sum((Y[:, None, :] - state.theta[None, :, :]) ** 2, axis=2)
	ll = -0.5 * model.D * math.log(2.0 * math.pi * nv) - sq / (2.0 * nv)
	return DiscreteConditional(model.log_pi[None, :] + ctx.beta * ll)


@conditionals.conditional('clustering', 'assignment', joint=collapsed_clustering_joint, discrete=True, collapsed=True)
def clustering_assignment(ctx: SweepContext, state, index: int):
	"""z_i given the other assignments with the centres integrated out"""
	model, Y = ctx.model, ctx.data.Y
	nv = ctx.noise_var('assignment')
	others = np.arange(Y.shape[0]) != index
	counts, sums = model.cluster_stats(state.z[others], Y[others])
	precision, mean = model.centre_posterior(counts, sums, 1.0, nv)
	var = 1.0 / precision + nv
	ll = -0.5 * model.D * (np.log(2.0 * math.pi * var)) - np.sum((Y[index][None, :] - mean) ** 2, axis=1) / (2.0 * var)
	return DiscreteConditional(model.log_pi + ll)


@conditionals.conditional('clustering', 'centers', joint=tempered_joint)
def clustering_centers(ctx: SweepContext, state, index=None):
	"""All centres given the assignments"""
	model = ctx.model
	counts, sums = model.cluster_stats(state.z, ctx.data.Y)
	precision, mean = model.centre_posterior(counts, sums, ctx.beta, ctx.noise_var('centers'))
	return GaussianConditional(mean, (1.0 / precision)[:, None])


# Low rank -----------------------------------------------------------------


@conditionals.conditional('lowrank', 'U', joint=tempered_joint)
def lowrank_u(ctx: SweepContext, state, index=None):
	return PrecisionGaussianConditional(*ctx.model.u_natural(state.V, ctx.data.Y, ctx.beta, ctx.noise_var('U')))


@conditionals.conditional('lowrank', 'V', joint=tempered_joint)
def lowrank_v(ctx: SweepContext, state, index=None):
	return PrecisionGaussianConditional(*ctx.model.v_natural(state.U, ctx.data.Y, ctx.beta, ctx.noise_var('V')))


# Binary attributes --------------------------------------------------------


def _residual_without(state, Y: np.ndarray, k: int) -> np.ndarray:
	Zf = state.Z.astype(float)
	return Y - Zf @ state.A + np.outer(Zf[:, k], state.A[k])


@conditionals.conditional('binary', 'attribute', joint=tempered_joint, discrete=True)
def binary_attribute(ctx: SweepContext, state, index: int):
	"""Column k of Z given A and the other columns"""
	model, k = ctx.model, index
	nv = ctx.noise_var('attribute')
	R = _residual_without(state, ctx.data.Y, k)
	a = state.A[k]
	pi_k = model.pi[k]
	with np.errstate(divide='ignore'):
		log_on, log_off = math.log(pi_k) if pi_k > 0 else -math.inf, np.log1p(-pi_k)
	on = log_on + ctx.beta * (R @ a - 0.5 * float(a @ a)) / nv
	off = np.full(R.shape[0], log_off)
	return DiscreteConditional(np.stack([off, on], axis=1))


@conditionals.conditional('binary', 'weights', joint=tempered_joint)
def binary_weights(ctx: SweepContext, state, index: int):
	"""Row k of A given Z and the other rows"""
	model, k = ctx.model, index
	nv = ctx.noise_var('weights')
	R = _residual_without(state, ctx.data.Y, k)
	zk = state.Z[:, k].astype(float)
	precision = 1.0 / model.spec.a_var + ctx.beta * float(zk.sum()) / nv
	mean = ctx.beta * (zk @ R) / (nv * precision)
	return GaussianConditional(mean, 1.0 / precision)


# Site values --------------------------------------------------------------


def _set_z(state, v):
	state.z[:] = v


def _set_zi(state, i, v):
	state.z[i] = int(np.atleast_1d(v)[0])


def _set_theta(state, v):
	state.theta[...] = v


def _set_u(state, v):
	state.U = np.array(v, dtype=float).T.reshape(state.U.shape)


def _set_v(state, v):
	state.V[...] = v


def _set_zk(state, k, v):
	state.Z[:, k] = v


def _set_ak(state, k, v):
	state.A[k] = v


_ACCESS: dict[str, tuple[Callable, Callable]] = {
	'clustering.assignments': (lambda s, i: s.z.copy(), lambda s, i, v: _set_z(s, v)),
	'clustering.assignment': (lambda s, i: np.array([s.z[i]]), _set_zi),
	'clustering.centers': (lambda s, i: s.theta.copy(), lambda s, i, v: _set_theta(s, v)),
	'lowrank.U': (lambda s, i: s.U.T.copy(), lambda s, i, v: _set_u(s, v)),
	'lowrank.V': (lambda s, i: s.V.copy(), lambda s, i, v: _set_v(s, v)),
	'binary.attribute': (lambda s, k: s.Z[:, k].astype(np.int64), _set_zk),
	'binary.weights': (lambda s, k: s.A[k].copy(), _set_ak),
}


def parse_site(name: str) -> tuple[str, int | None]:
	match = _SITE_NAME.match(name)
	if match is None:
		raise ScanPlanMismatchError(f'malformed site name {name!r}')
	index = match.group('index')
	return match.group('base'), None if index is None else int(index)


def get_site_value(kind: str, state, base: str, index: int | None):
	return _ACCESS[f'{kind}.{base}'][0](state, index)


def put_site_value(kind: str, state, base: str, index: int | None, value) -> None:
	_ACCESS[f'{kind}.{base}'][1](state, index, value)


def build_plan(kind: str, n_rows: int, K: int, beta: float = 1.0, collapse: bool = True) -> SweepPlan:
	"""
	Forward scan plan of one sweep; latent rows first, then the parameter block.

	Clustering at beta = 1 updates each assignment with the centres integrated out and
	finishes with a centre refresh that ignores the previous centres.
	"""
	if kind == 'clustering':
		if collapse and beta == 1.0:
			order = tuple(f'assignment[{i}]' for i in range(n_rows)) + ('centers',)
			return SweepPlan(kind=kind, scan_order=order, terminal=('centers',))
		return SweepPlan(kind=kind, scan_order=('assignments', 'centers'))
	if kind == 'lowrank':
		return SweepPlan(kind=kind, scan_order=('U', 'V'))
	if kind == 'binary':
		order = tuple(f'attribute[{k}]' for k in range(K)) + tuple(f'weights[{k}]' for k in range(K))
		return SweepPlan(kind=kind, scan_order=order)
	raise ScanPlanMismatchError(f'no scan plan for model kind {kind!r}')
