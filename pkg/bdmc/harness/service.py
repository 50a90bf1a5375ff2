"""
Experiment harness: simulate a dataset, build the BDMC ground truth, sweep estimators over
budgets and trials, and report accuracy against the ground truth.
"""

import configparser
import logging
import math
import os
import time
import zlib
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import ValidationError

from bdmc.bridge.service import ais_forward, bdmc_sandwich, combine_estimates, make_sigmoid_schedule
from bdmc.harness.registry import estimators
from bdmc.harness.views import (
	CSV_HEADER,
	EVIDENCE_BANDS,
	GROUND_TRUTH_GAP,
	RMSE_THRESHOLD,
	ConfigError,
	EstimatorGrid,
	ExperimentConfig,
	GroundTruthRecord,
	MissingArtifactError,
	ResultRow,
	SweepCell,
)
from bdmc.logging_config import log_result
from bdmc.models.io import StateProvenance, read_dataset, read_state, write_dataset, write_state
from bdmc.models.service import brute_force_log_ml, simulate, spec_hash
from bdmc.models.views import BinarySpec, ClusteringSpec, LowRankSpec, ModelSpec
from bdmc.prob.service import log_mean_exp
from bdmc.prob.views import RngStream
from bdmc.utils import run_indexed, time_execution_sync
from bdmc.validation.service import consistency_suites, cross_estimator_agreement, geweke_test

logger = logging.getLogger(__name__)

SIMULATE_STREAM = 0
GROUND_TRUTH_STREAM = 1
VALIDATE_STREAM = 2

_LIST_FIELDS = ('mix_probs', 'attr_probs')
_EXPERIMENT_FIELDS = ('n_trials', 'seed', 'ground_truth_T', 'ground_truth_chains', 'n_workers', 'record_wall_time', 'out_dir')


# Configuration ---------------------------------------------------------------------------


def _coerce(value: str) -> Any:
	"""Turn a config value into int, float or bool where it reads as one"""
	lowered = value.strip().lower()
	if lowered in ('true', 'false'):
		return lowered == 'true'
	for cast in (int, float):
		try:
			return cast(value)
		except ValueError:
			pass
	return value.strip()


def _parse_list(value: str) -> tuple[float, ...]:
	return tuple(float(v) for v in value.replace(',', ' ').split())


def config_from_parser(parser: configparser.ConfigParser, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
	"""Validate parsed sections into an ExperimentConfig; non-None overrides win over file values"""
	overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
	model = dict(parser['model']) if parser.has_section('model') else {}
	model = {k: _parse_list(v) if k in _LIST_FIELDS else _coerce(v) for k, v in model.items()}
	if 'model' in overrides and overrides['model'] != model.get('kind'):
		# switching model family keeps only the shared size settings
		model = {k: v for k, v in model.items() if k in ('N', 'D', 'K', 'noise_var')}
		model['kind'] = overrides['model']
	model.setdefault('kind', 'clustering')

	experiment = dict(parser['experiment']) if parser.has_section('experiment') else {}
	experiment = {k: _coerce(v) for k, v in experiment.items() if k in _EXPERIMENT_FIELDS}
	if 'n_workers' not in experiment and os.getenv('BDMC_WORKERS'):
		experiment['n_workers'] = int(os.environ['BDMC_WORKERS'])
	for key in ('seed', 'out_dir', 'n_trials', 'n_workers'):
		if key in overrides:
			experiment[key] = overrides[key]

	grids = []
	for section in parser.sections():
		if not section.startswith('estimator.'):
			continue
		options = {k: _coerce(v) for k, v in parser[section].items() if k != 'budgets'}
		budgets = tuple(int(b) for b in _parse_list(parser[section].get('budgets', '')))
		grids.append({'estimator': section.split('.', 1)[1], 'budgets': budgets, 'options': options})

	try:
		config = ExperimentConfig(model=model, estimators=grids, **experiment)
	except ValidationError as e:
		raise ConfigError(f'invalid experiment configuration: {e}') from e
	for grid in config.estimators:
		estimators.get(grid.estimator)
	return config


def parse_config_text(text: str, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
	parser = configparser.ConfigParser()
	parser.optionxform = str  # keep N, D, K upper case
	try:
		parser.read_string(text)
	except configparser.Error as e:
		raise ConfigError(f'unreadable configuration: {e}') from e
	return config_from_parser(parser, overrides)


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
	"""Read an INI-style experiment file (or only defaults and overrides when `path` is None)"""
	if path is None:
		return parse_config_text('', overrides)
	path = Path(path)
	if not path.exists():
		raise ConfigError(f'config file {path} does not exist')
	return parse_config_text(path.read_text(), overrides)


def cell_seed(master_seed: int, estimator: str, budget_value: int, trial: int) -> int:
	"""Seed of one sweep cell; depends only on its coordinates, never on scheduling"""
	sequence = np.random.SeedSequence([master_seed, zlib.crc32(estimator.encode()), budget_value, trial])
	# kept below 2**63 so the seed column stays a signed integer
	return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def evidence_strength(delta_nats: float) -> str:
	"""Strength-of-evidence band of a log marginal likelihood difference"""
	log10 = abs(delta_nats) / math.log(10.0)
	for limit, label in EVIDENCE_BANDS:
		if log10 <= limit:
			return label
	return EVIDENCE_BANDS[-1][1]


# Artifacts -------------------------------------------------------------------------------


def _load_artifacts(config: ExperimentConfig):
	"""Dataset, exact sample (None if it belongs to another model) and provenance"""
	if not config.dataset_path.exists():
		raise MissingArtifactError(f'no dataset at {config.dataset_path}; run `simulate` first')
	data = read_dataset(config.dataset_path)
	if not config.state_path.exists():
		logger.warning(f'no exact sample at {config.state_path}; reverse estimators are unavailable')
		return data, None, None
	state, provenance = read_state(config.state_path)
	if provenance.model != config.model.kind or provenance.spec_hash != spec_hash(config.model):
		logger.info(f'dataset was generated by a {provenance.model} model; treating it as foreign data')
		return data, None, provenance
	state.is_exact = provenance.exact
	return data, state, provenance


def cmd_simulate(config: ExperimentConfig) -> tuple[Path, Path]:
	"""Write the dataset and the exact posterior sample it was generated with"""
	stream = RngStream(seed=config.seed, stream_id=SIMULATE_STREAM)
	state, data = simulate(config.model, stream.generator())
	config.out_dir.mkdir(parents=True, exist_ok=True)
	write_dataset(config.dataset_path, data)
	provenance = StateProvenance(
		model=config.model.kind, seed=config.seed, stream_id=SIMULATE_STREAM, spec_hash=spec_hash(config.model), exact=True
	)
	write_state(config.state_path, state, provenance)
	log_result(logger, f'simulated {config.model.kind} N={data.N} D={data.D} K={config.model.K} into {config.out_dir}')
	return config.dataset_path, config.state_path


@time_execution_sync('--cmd_ground_truth')
def cmd_ground_truth(config: ExperimentConfig) -> GroundTruthRecord:
	"""
	Sandwich log Z with forward and reverse AIS at the ground-truth budget; the midpoint is
	the ground truth when the gap is at most one nat.
	"""
	data, exact, provenance = _load_artifacts(config)
	schedule = make_sigmoid_schedule(config.ground_truth_T)
	stream = RngStream(seed=config.seed, stream_id=GROUND_TRUTH_STREAM)
	common = {
		'model': config.model.kind,
		'spec_hash': spec_hash(config.model),
		'T': config.ground_truth_T,
		'n_chains': config.ground_truth_chains,
	}

	if exact is None:
		if provenance is None or provenance.model == config.model.kind:
			raise MissingArtifactError('provenance missing: no exact sample of this model spec is stored')
		# data from another model has no exact sample under this one, so only the lower side exists
		values = [ais_forward(config.model, data, schedule, s.generator())[0] for s in stream.child(0).children(config.ground_truth_chains)]
		record = GroundTruthRecord(lower=log_mean_exp(values), status='forward only', **common)
		log_result(logger, f'{config.model.kind} on foreign data: AIS lower estimate {record.lower:.3f}')
	else:
		if not exact.is_exact:
			raise MissingArtifactError('provenance missing: the stored state is not marked as an exact sample')
		result = bdmc_sandwich(config.model, data, exact, schedule, config.ground_truth_chains, stream, config.n_workers)
		converged = result.gap <= GROUND_TRUTH_GAP
		record = GroundTruthRecord(
			lower=result.lower.value,
			upper=result.upper.value,
			gap=result.gap,
			converged=converged,
			truth=result.midpoint if converged else None,
			status='converged' if converged else 'not converged, increase T',
			**common,
		)
		if converged:
			log_result(logger, f'ground truth {record.truth:.3f} (gap {record.gap:.3f} nats, T={config.ground_truth_T})')
		else:
			logger.warning(f'sandwich gap {record.gap:.3f} nats exceeds {GROUND_TRUTH_GAP}; not converged, increase T')

	config.out_dir.mkdir(parents=True, exist_ok=True)
	config.ground_truth_path.write_text(record.model_dump_json(indent=2))
	return record


def cmd_oracle(config: ExperimentConfig) -> float:
	"""Exact log marginal likelihood of the stored dataset under the configured model"""
	if not config.dataset_path.exists():
		raise MissingArtifactError(f'no dataset at {config.dataset_path}; run `simulate` first')
	value = brute_force_log_ml(config.model, read_dataset(config.dataset_path))
	log_result(logger, f'exact log marginal likelihood under {config.model.kind}: {value:.6f}')
	return value


# Sweep -------------------------------------------------------------------------------------


def _run_cell(cell: SweepCell, spec, data, exact_sample, record_wall_time: bool) -> tuple[float, float]:
	entry = estimators.get(cell.estimator)
	rng = RngStream(seed=cell.seed).generator()
	start = time.perf_counter()
	try:
		if entry.needs_exact and exact_sample is None:
			raise MissingArtifactError(f'{cell.estimator} needs an exact posterior sample of this model')
		value = float(entry.function(spec, data, exact_sample, cell.budget_value, rng, **cell.options))
	except Exception as e:
		logger.error(f'{cell.estimator} budget={cell.budget_value} trial={cell.trial} failed: {type(e).__name__}: {e}')
		value = math.nan
	wall = time.perf_counter() - start if record_wall_time else 0.0
	return value, wall


def sweep_cells(config: ExperimentConfig) -> list[SweepCell]:
	return [
		SweepCell(
			estimator=grid.estimator,
			budget_value=budget,
			trial=trial,
			seed=cell_seed(config.seed, grid.estimator, budget, trial),
			options=grid.options,
		)
		for grid in config.estimators
		for budget in grid.budgets
		for trial in range(config.n_trials)
	]


def combined_rows(config: ExperimentConfig, rows: list[ResultRow]) -> list[ResultRow]:
	"""One row per (estimator, budget) combining its trials by the estimator's rule"""
	groups: dict[tuple[str, int], list[ResultRow]] = {}
	for row in rows:
		groups.setdefault((row.estimator, row.budget_value), []).append(row)
	combined = []
	for (estimator, budget), members in groups.items():
		entry = estimators.get(estimator)
		finite = [r.log_ml for r in members if math.isfinite(r.log_ml)]
		value = combine_estimates(finite, entry.combine) if finite else math.nan
		combined.append(
			ResultRow(
				model=config.model.kind,
				estimator=estimator,
				budget_name=entry.budget_name,
				budget_value=budget,
				trial=-1,
				seed=config.seed,
				log_ml=value,
				direction=entry.direction,
				wall_seconds=sum(r.wall_seconds for r in members),
				combined=True,
			)
		)
	return combined


def write_results(path: Path, rows: list[ResultRow]) -> None:
	frame = pd.DataFrame([row.model_dump() for row in rows], columns=list(CSV_HEADER))
	path.parent.mkdir(parents=True, exist_ok=True)
	frame.to_csv(path, index=False, na_rep='nan')


def read_results(path: Path) -> pd.DataFrame:
	if not Path(path).exists():
		raise MissingArtifactError(f'no results at {path}; run `sweep` first')
	return pd.read_csv(path, float_precision='round_trip')


@time_execution_sync('--cmd_sweep')
def cmd_sweep(config: ExperimentConfig) -> list[ResultRow]:
	"""Run every (estimator, budget, trial) cell; failing cells are recorded as nan and the sweep continues"""
	data, exact, _ = _load_artifacts(config)
	cells = sweep_cells(config)
	logger.info(f'sweeping {len(cells)} cells on {config.n_workers} worker(s)')
	run = partial(_run_cell, spec=config.model, data=data, exact_sample=exact, record_wall_time=config.record_wall_time)
	outcomes = run_indexed(run, cells, config.n_workers)

	rows = []
	for cell, (value, wall) in zip(cells, outcomes):
		entry = estimators.get(cell.estimator)
		rows.append(
			ResultRow(
				model=config.model.kind,
				estimator=cell.estimator,
				budget_name=entry.budget_name,
				budget_value=cell.budget_value,
				trial=cell.trial,
				seed=cell.seed,
				log_ml=value,
				direction=entry.direction,
				wall_seconds=wall,
			)
		)
	rows = sorted(rows + combined_rows(config, rows), key=lambda r: (r.estimator, r.budget_value, r.combined, r.trial))
	write_results(config.results_path, rows)
	n_failed = sum(1 for r in rows if not r.combined and not math.isfinite(r.log_ml))
	log_result(logger, f'sweep wrote {len(rows)} rows to {config.results_path} ({n_failed} failed cells)')
	return rows


def cmd_replay(config: ExperimentConfig, estimator: str, budget_value: int, trial: int) -> tuple[float, float | None]:
	"""Recompute one trial from its recorded seed; returns (recomputed, recorded)"""
	data, exact, _ = _load_artifacts(config)
	grid = next((g for g in config.estimators if g.estimator == estimator), EstimatorGrid(estimator=estimator, budgets=(budget_value,)))
	recorded, seed = None, cell_seed(config.seed, estimator, budget_value, trial)
	if config.results_path.exists():
		frame = read_results(config.results_path)
		match = frame[
			(frame.estimator == estimator) & (frame.budget_value == budget_value) & (frame.trial == trial) & (~frame.combined)
		]
		if len(match):
			recorded, seed = float(match.log_ml.iloc[0]), int(match.seed.iloc[0])
	cell = SweepCell(estimator=estimator, budget_value=budget_value, trial=trial, seed=seed, options=grid.options)
	value, _ = _run_cell(cell, config.model, data, exact, False)
	log_result(logger, f'replayed {estimator} budget={budget_value} trial={trial}: {value!r} (recorded {recorded!r})')
	return value, recorded


# Report --------------------------------------------------------------------------------------


def _load_truth(config: ExperimentConfig) -> float | None:
	if not config.ground_truth_path.exists():
		return None
	record = GroundTruthRecord.model_validate_json(config.ground_truth_path.read_text())
	return record.truth


def _write_xy(path: Path, xs, ys) -> None:
	path.write_text(''.join(f'{int(x)} {float(y)!r}\n' for x, y in zip(xs, ys)))


def cmd_report(config: ExperimentConfig, truth: float | None = None) -> pd.DataFrame:
	"""
	Per-estimator curves (budget -> mean estimate, budget -> RMSE) as x/y files, plus a
	summary of the largest budget of each estimator.
	"""
	frame = read_results(config.results_path)
	trials = frame[~frame.combined.astype(bool)]
	truth = truth if truth is not None else _load_truth(config)
	if truth is None:
		logger.warning('no ground truth available; RMSE columns omitted')

	plots = config.out_dir / 'plots'
	plots.mkdir(parents=True, exist_ok=True)
	curves = trials.groupby(['estimator', 'budget_value']).log_ml.agg(['mean', 'std', 'count']).reset_index()
	if truth is not None:
		rmse = trials.assign(sq=(trials.log_ml - truth) ** 2).groupby(['estimator', 'budget_value']).sq.mean() ** 0.5
		curves['rmse'] = rmse.values

	summary = []
	for estimator, curve in curves.groupby('estimator'):
		curve = curve.sort_values('budget_value')
		_write_xy(plots / f'{estimator}_mean.dat', curve.budget_value, curve['mean'])
		last = curve.iloc[-1]
		row = {'estimator': estimator, 'budget_value': int(last.budget_value), 'mean': float(last['mean']), 'n_trials': int(last['count'])}
		if truth is not None:
			_write_xy(plots / f'{estimator}_rmse.dat', curve.budget_value, curve.rmse)
			row['rmse'] = float(last.rmse)
			row['accurate'] = bool(last.rmse < RMSE_THRESHOLD)
			row['evidence'] = evidence_strength(float(last['mean']) - truth)
		summary.append(row)

	table = pd.DataFrame(summary)
	table.to_csv(config.out_dir / 'summary.csv', index=False, na_rep='nan')
	log_result(logger, 'summary at the largest budget:\n' + table.to_string(index=False))
	return table


# Validation ----------------------------------------------------------------------------------


def _tiny_spec(spec) -> ModelSpec:
	"""A version of `spec` small enough for the enumeration oracle"""
	if isinstance(spec, LowRankSpec):
		return spec.model_copy(update={'N': 2, 'D': 1, 'K': 1})
	if isinstance(spec, BinarySpec):
		return BinarySpec(N=3, D=2, K=2, noise_var=spec.noise_var, a_var=spec.a_var)
	return ClusteringSpec(N=4, D=2, K=2, noise_var=spec.noise_var, between_var=spec.between_var)


def _geweke_spec(spec) -> ModelSpec:
	update = {'N': 10, 'D': 3, 'K': 3}
	if isinstance(spec, ClusteringSpec):
		return ClusteringSpec(noise_var=spec.noise_var, between_var=spec.between_var, **update)
	if isinstance(spec, BinarySpec):
		return BinarySpec(noise_var=spec.noise_var, a_var=spec.a_var, **update)
	return LowRankSpec(**{**spec.model_dump(), **update})


@time_execution_sync('--cmd_validate')
def cmd_validate(config: ExperimentConfig, n_triples: int = 200, geweke_iterations: int = 1000) -> bool:
	"""Consistency suites for every model, Geweke and estimator agreement for the configured one"""
	rng = RngStream(seed=config.seed, stream_id=VALIDATE_STREAM).generator()
	small = (
		ClusteringSpec(N=6, D=3, K=3, noise_var=0.3),
		LowRankSpec(N=5, D=3, K=2, noise_var=0.3),
		BinarySpec(N=5, D=3, K=3, noise_var=0.3),
	)
	reports = consistency_suites(small, n_triples, rng)
	reports.append(geweke_test(_geweke_spec(config.model), geweke_iterations, 3, rng, thin=5))
	reports.append(cross_estimator_agreement(_tiny_spec(config.model), None, rng))

	config.out_dir.mkdir(parents=True, exist_ok=True)
	(config.out_dir / 'validation.txt').write_text('\n\n'.join(r.to_text() for r in reports) + '\n')
	pd.DataFrame([rec for r in reports for rec in r.to_records()]).to_csv(config.out_dir / 'validation.csv', index=False)
	passed = all(r.passed for r in reports)
	log_result(logger, f'validation {"passed" if passed else "FAILED"}; details in {config.out_dir / "validation.txt"}')
	return passed
