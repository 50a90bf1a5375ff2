import math

import pandas as pd
import pytest

from bdmc.harness.cli import main
from bdmc.harness.service import (
	cell_seed,
	cmd_ground_truth,
	cmd_oracle,
	cmd_replay,
	cmd_report,
	cmd_simulate,
	cmd_sweep,
	evidence_strength,
	load_config,
	parse_config_text,
	write_results,
)
from bdmc.harness.views import CSV_HEADER, ConfigError, EstimatorGrid, ExperimentConfig, MissingArtifactError, ResultRow
from bdmc.models.io import read_dataset, read_state
from bdmc.models.service import brute_force_log_ml
from bdmc.models.views import ClusteringSpec, LowRankSpec

TINY = ClusteringSpec(N=4, D=2, K=2, noise_var=0.1)

CONFIG_TEXT = """
[model]
kind = binary
N = 3
D = 2
K = 2
attr_probs = 0.3, 0.4

[experiment]
n_trials = 3
seed = 11
record_wall_time = false

[estimator.ais]
budgets = 10, 20
delta = 5.0

[estimator.vb]
budgets = 2
"""


def _config(tmp_path, *grids, **kwargs):
	kwargs.setdefault('n_trials', 1)
	return ExperimentConfig(model=kwargs.pop('model', TINY), estimators=list(grids), record_wall_time=False, out_dir=tmp_path, **kwargs)


# configuration ----------------------------------------------------------------------------


def test_config_file_is_parsed_and_validated():
	config = parse_config_text(CONFIG_TEXT)
	assert config.model.kind == 'binary'
	assert config.model.attr_probs == (0.3, 0.4)
	assert config.n_trials == 3
	assert config.seed == 11
	assert not config.record_wall_time
	assert [g.estimator for g in config.estimators] == ['ais', 'vb']
	assert config.estimators[0].budgets == (10, 20)
	assert config.estimators[0].options == {'delta': 5.0}


def test_flags_override_file_values(tmp_path):
	path = tmp_path / 'experiment.ini'
	path.write_text(CONFIG_TEXT.replace('kind = binary', 'kind = clustering').replace('attr_probs', 'mix_probs'))
	config = load_config(path, {'seed': 5, 'n_trials': None, 'model': 'lowrank'})
	assert config.seed == 5
	assert config.n_trials == 3
	assert isinstance(config.model, LowRankSpec)
	assert (config.model.N, config.model.D, config.model.K) == (3, 2, 2)


def test_worker_count_from_environment(monkeypatch):
	monkeypatch.setenv('BDMC_WORKERS', '3')
	assert parse_config_text(CONFIG_TEXT).n_workers == 3


@pytest.mark.parametrize(
	'text',
	[
		'[estimator.nope]\nbudgets = 1\n',
		'[estimator.ais]\nbudgets = 0\n',
		'[estimator.ais]\n',
		'[experiment]\nn_trials = 0\n',
		'[model]\nkind = lowrank\nN = 2\nD = 1\nK = 2\n',
		'this is not an ini file',
	],
)
def test_bad_configs_rejected(text):
	with pytest.raises(ConfigError):
		parse_config_text(text)


def test_missing_config_file(tmp_path):
	with pytest.raises(ConfigError):
		load_config(tmp_path / 'absent.ini')


def test_cell_seeds_depend_only_on_coordinates():
	assert cell_seed(1, 'ais', 10, 0) == cell_seed(1, 'ais', 10, 0)
	seeds = {cell_seed(1, e, b, t) for e in ('ais', 'smc') for b in (10, 20) for t in range(3)}
	assert len(seeds) == 12
	assert all(0 <= s < 2**63 for s in seeds)


@pytest.mark.parametrize(
	'log10_units,label',
	[
		(0.0, 'not worth more than a bare mention'),
		(0.7, 'substantial'),
		(1.5, 'strong'),
		(3.0, 'decisive'),
		(-3.0, 'decisive'),
	],
)
def test_evidence_bands(log10_units, label):
	assert evidence_strength(log10_units * math.log(10.0)) == label


# simulate -----------------------------------------------------------------------------------


def test_simulate_writes_default_shapes(tmp_path):
	config = ExperimentConfig(model={'kind': 'clustering'}, out_dir=tmp_path)
	cmd_simulate(config)
	assert read_dataset(config.dataset_path).Y.shape == (50, 25)
	state, provenance = read_state(config.state_path)
	assert state.z.shape == (50,)
	assert state.theta.shape == (10, 25)
	assert provenance.exact


def test_simulate_lowrank_default_rank(tmp_path):
	config = ExperimentConfig(model={'kind': 'lowrank'}, out_dir=tmp_path)
	cmd_simulate(config)
	state, _ = read_state(config.state_path)
	assert state.V.shape == (5, 25)


def test_simulate_is_byte_identical_for_a_seed(tmp_path):
	first = ExperimentConfig(model=TINY, seed=4, out_dir=tmp_path / 'a')
	second = ExperimentConfig(model=TINY, seed=4, out_dir=tmp_path / 'b')
	cmd_simulate(first)
	cmd_simulate(second)
	assert first.dataset_path.read_bytes() == second.dataset_path.read_bytes()
	assert first.state_path.read_bytes() == second.state_path.read_bytes()


# sweep ----------------------------------------------------------------------------------------


def test_single_trial_gives_trial_and_combined_rows(tmp_path):
	config = _config(tmp_path, EstimatorGrid(estimator='lw', budgets=(10,)))
	cmd_simulate(config)
	rows = cmd_sweep(config)
	assert len(rows) == 2
	assert [r.combined for r in rows] == [False, True]
	assert rows[0].log_ml == rows[1].log_ml
	assert rows[1].trial == -1
	frame = pd.read_csv(config.results_path)
	assert tuple(frame.columns) == CSV_HEADER


def test_vb_trials_combine_by_max(tmp_path):
	config = _config(tmp_path, EstimatorGrid(estimator='vb', budgets=(1,)), n_trials=3)
	cmd_simulate(config)
	rows = cmd_sweep(config)
	trials = [r.log_ml for r in rows if not r.combined]
	combined = [r.log_ml for r in rows if r.combined]
	assert combined == [max(trials)]


def test_sweep_output_bytes_are_deterministic(tmp_path):
	grids = (EstimatorGrid(estimator='ais', budgets=(5, 10)), EstimatorGrid(estimator='hme', budgets=(3,)))
	paths = []
	for name in ('a', 'b'):
		config = _config(tmp_path / name, *grids, n_trials=2, seed=9)
		cmd_simulate(config)
		cmd_sweep(config)
		paths.append(config.results_path)
	assert paths[0].read_bytes() == paths[1].read_bytes()


def test_sweep_on_two_workers_matches_inline(tmp_path):
	grid = EstimatorGrid(estimator='lw', budgets=(5,))
	inline = _config(tmp_path / 'inline', grid, n_trials=3)
	pooled = _config(tmp_path / 'pooled', grid, n_trials=3, n_workers=2)
	for config in (inline, pooled):
		cmd_simulate(config)
		cmd_sweep(config)
	assert inline.results_path.read_bytes() == pooled.results_path.read_bytes()


def test_replay_reproduces_a_recorded_trial(tmp_path):
	config = _config(tmp_path, EstimatorGrid(estimator='ais', budgets=(8,)), n_trials=2)
	cmd_simulate(config)
	cmd_sweep(config)
	value, recorded = cmd_replay(config, 'ais', 8, 1)
	assert value == pytest.approx(recorded, abs=1e-12)


def test_failing_cells_are_recorded_as_nan(tmp_path):
	config = _config(tmp_path, EstimatorGrid(estimator='hme', budgets=(3,)), EstimatorGrid(estimator='lw', budgets=(3,)))
	cmd_simulate(config)
	config.state_path.unlink()
	rows = {(r.estimator, r.combined): r.log_ml for r in cmd_sweep(config)}
	assert math.isnan(rows[('hme', False)])
	assert math.isnan(rows[('hme', True)])
	assert math.isfinite(rows[('lw', False)])


def test_sweep_without_dataset(tmp_path):
	with pytest.raises(MissingArtifactError):
		cmd_sweep(_config(tmp_path, EstimatorGrid(estimator='lw', budgets=(3,))))


# ground truth and oracle ---------------------------------------------------------------------


@pytest.mark.slow
def test_ground_truth_converges_on_a_tiny_instance(tmp_path):
	config = _config(tmp_path, ground_truth_T=2000, ground_truth_chains=4, seed=2)
	cmd_simulate(config)
	record = cmd_ground_truth(config)
	assert record.converged
	assert record.status == 'converged'
	assert record.truth == pytest.approx(cmd_oracle(config), abs=0.5)
	assert config.ground_truth_path.exists()


def test_short_schedule_is_not_converged(tmp_path):
	config = _config(tmp_path, model=ClusteringSpec(N=20, D=5, K=3, noise_var=0.1), ground_truth_T=2, ground_truth_chains=1)
	cmd_simulate(config)
	record = cmd_ground_truth(config)
	assert not record.converged
	assert record.truth is None
	assert record.status == 'not converged, increase T'


def test_foreign_dataset_gets_a_forward_estimate_only(tmp_path):
	cmd_simulate(_config(tmp_path, model=LowRankSpec(N=4, D=2, K=1)))
	config = _config(tmp_path, ground_truth_T=10, ground_truth_chains=2)
	record = cmd_ground_truth(config)
	assert record.upper is None
	assert record.status == 'forward only'
	assert math.isfinite(record.lower)
	assert cmd_oracle(config) == brute_force_log_ml(TINY, read_dataset(config.dataset_path))


def test_ground_truth_needs_the_exact_sample(tmp_path):
	config = _config(tmp_path, ground_truth_T=10)
	cmd_simulate(config)
	config.state_path.unlink()
	with pytest.raises(MissingArtifactError, match='provenance missing'):
		cmd_ground_truth(config)


# report ----------------------------------------------------------------------------------------


def _rows(values, estimator='ais', budget=10):
	return [
		ResultRow(
			model='clustering',
			estimator=estimator,
			budget_name='T',
			budget_value=budget,
			trial=i,
			seed=i,
			log_ml=v,
			direction='lower',
		)
		for i, v in enumerate(values)
	]


def test_estimates_equal_to_truth_have_zero_rmse(tmp_path):
	config = _config(tmp_path)
	write_results(config.results_path, _rows([-7.5] * 4) + _rows([-7.5] * 4, budget=20))
	table = cmd_report(config, truth=-7.5)
	assert list(table.rmse) == [0.0]
	assert list(table.accurate) == [True]
	assert list(table.evidence) == ['not worth more than a bare mention']
	lines = (tmp_path / 'plots' / 'ais_rmse.dat').read_text().splitlines()
	assert [line.split() for line in lines] == [['10', '0.0'], ['20', '0.0']]


def test_report_flags_inaccurate_estimators(tmp_path):
	config = _config(tmp_path)
	write_results(config.results_path, _rows([-30.0, -10.0]) + _rows([-1.0, -1.0], estimator='smc'))
	table = cmd_report(config, truth=-1.0).set_index('estimator')
	assert table.loc['ais', 'rmse'] == pytest.approx(math.sqrt((29.0**2 + 9.0**2) / 2))
	assert not table.loc['ais', 'accurate']
	assert table.loc['smc', 'accurate']


def test_report_without_truth_omits_rmse(tmp_path):
	config = _config(tmp_path)
	write_results(config.results_path, _rows([-3.0, -4.0]))
	table = cmd_report(config)
	assert 'rmse' not in table.columns
	assert table.loc[0, 'mean'] == pytest.approx(-3.5)
	assert (tmp_path / 'plots' / 'ais_mean.dat').exists()
	assert not (tmp_path / 'plots' / 'ais_rmse.dat').exists()


# command line ------------------------------------------------------------------------------------


def test_cli_simulate_and_oracle(tmp_path):
	args = ['--out', str(tmp_path), '--seed', '3', '--model', 'lowrank']
	assert main(['simulate', *args]) == 0
	assert read_dataset(tmp_path / 'dataset.csv').Y.shape == (50, 25)
	# the default benchmark is far too large to enumerate
	assert main(['oracle', *args]) == 2


def test_cli_reports_config_errors(tmp_path):
	path = tmp_path / 'bad.ini'
	path.write_text('[estimator.nope]\nbudgets = 1\n')
	assert main(['sweep', '--config', str(path), '--out', str(tmp_path)]) == 2


def test_cli_lists_estimators(capsys):
	assert main(['estimators']) == 0
	out = capsys.readouterr().out
	for name in ('ais', 'reverse_ais', 'smc', 'shme', 'lw', 'hme', 'bic', 'cms', 'ns', 'vb', 'vb_corrected'):
		assert f'{name} [' in out
