"""
Plain-text file formats for datasets and latent states.

Dataset: first line `N,D`, then N rows of D comma-separated values.
Latent state: `# key = value` provenance header, then `[section]` blocks with one row per line.
"""

from pathlib import Path

import numpy as np
from pydantic import BaseModel

from bdmc.models.views import BinaryState, ClusteringState, Dataset, DatasetFormatError, LatentState, LowRankState

SECTIONS: dict[str, tuple[str, str]] = {
	'clustering': ('assignments', 'theta'),
	'lowrank': ('U', 'V'),
	'binary': ('Z', 'A'),
}


class StateProvenance(BaseModel):
	"""Header of a latent-state file; `exact` marks a sample drawn jointly with its dataset"""

	model: str
	seed: int | None = None
	stream_id: int = 0
	spec_hash: str = ''
	exact: bool = False


def _format_row(values) -> str:
	return ','.join(repr(v.item()) for v in np.atleast_1d(values))


def write_dataset(path: str | Path, data: Dataset) -> None:
	lines = [f'{data.N},{data.D}']
	lines.extend(_format_row(row) for row in data.Y)
	Path(path).write_text('\n'.join(lines) + '\n')


def read_dataset(path: str | Path) -> Dataset:
	path = Path(path)
	if not path.exists():
		raise DatasetFormatError(f'dataset file {path} does not exist')
	lines = [line.strip() for line in path.read_text().splitlines() if line.strip()]
	if not lines:
		raise DatasetFormatError(f'{path}: empty dataset file')
	try:
		N, D = (int(x) for x in lines[0].split(','))
		rows = [[float(x) for x in line.split(',')] for line in lines[1:]]
	except ValueError as e:
		raise DatasetFormatError(f'{path}: {e}') from e
	Y = np.asarray(rows, dtype=float).reshape(len(rows), -1) if rows else np.zeros((0, D))
	if Y.shape != (N, D):
		raise DatasetFormatError(f'{path}: header says {N}x{D}, body is {Y.shape[0]}x{Y.shape[1] if Y.ndim > 1 else 0}')
	return Dataset(Y)


def _state_blocks(state: LatentState) -> tuple[np.ndarray, np.ndarray]:
	if isinstance(state, ClusteringState):
		return state.z, state.theta
	if isinstance(state, LowRankState):
		return state.U, state.V
	return state.Z, state.A


def write_state(path: str | Path, state: LatentState, provenance: StateProvenance) -> None:
	rows_name, params_name = SECTIONS[state.kind]
	rows, params = _state_blocks(state)
	lines = [f'# {key} = {value}' for key, value in provenance.model_dump().items() if value is not None]
	lines.append(f'[{rows_name}]')
	lines.extend(_format_row(r) for r in rows)
	lines.append(f'[{params_name}]')
	lines.extend(_format_row(r) for r in params)
	Path(path).write_text('\n'.join(lines) + '\n')


def read_state(path: str | Path, K: int | None = None) -> tuple[LatentState, StateProvenance]:
	"""Parse a latent-state file; `K` fixes the width of empty row blocks (default: rows of the parameter block)"""
	path = Path(path)
	if not path.exists():
		raise DatasetFormatError(f'state file {path} does not exist')
	header: dict[str, str] = {}
	sections: dict[str, list[list[float]]] = {}
	current = None
	for raw in path.read_text().splitlines():
		line = raw.strip()
		if not line:
			continue
		if line.startswith('#'):
			key, _, value = line[1:].partition('=')
			header[key.strip()] = value.strip()
		elif line.startswith('[') and line.endswith(']'):
			current = line[1:-1]
			sections[current] = []
		elif current is None:
			raise DatasetFormatError(f'{path}: data line before any section')
		else:
			try:
				sections[current].append([float(x) for x in line.split(',')])
			except ValueError as e:
				raise DatasetFormatError(f'{path}: {e}') from e

	header['exact'] = str(header.get('exact', 'False') == 'True')
	provenance = StateProvenance.model_validate(header)
	if provenance.model not in SECTIONS:
		raise DatasetFormatError(f'{path}: unknown model {provenance.model!r}')
	rows_name, params_name = SECTIONS[provenance.model]
	if rows_name not in sections or params_name not in sections:
		raise DatasetFormatError(f'{path}: expected sections [{rows_name}] and [{params_name}]')

	params = np.asarray(sections[params_name], dtype=float)
	K = params.shape[0] if K is None else K
	rows = sections[rows_name]
	if provenance.model == 'clustering':
		z = np.asarray([int(r[0]) for r in rows], dtype=np.int64)
		state: LatentState = ClusteringState(z=z, theta=params, is_exact=provenance.exact)
	elif provenance.model == 'lowrank':
		U = np.asarray(rows, dtype=float).reshape(-1, K)
		state = LowRankState(U=U, V=params, is_exact=provenance.exact)
	else:
		Z = np.asarray(rows, dtype=float).reshape(-1, K).astype(np.int8)
		state = BinaryState(Z=Z, A=params, is_exact=provenance.exact)
	return state, provenance
