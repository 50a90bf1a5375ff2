import argparse
import logging
import math
import sys
from pathlib import Path

from bdmc.bridge.views import EstimatorError
from bdmc.harness.registry import estimators
from bdmc.harness.service import (
	cmd_ground_truth,
	cmd_oracle,
	cmd_replay,
	cmd_report,
	cmd_simulate,
	cmd_sweep,
	cmd_validate,
	load_config,
)
from bdmc.harness.views import HarnessError
from bdmc.models.views import ModelError

logger = logging.getLogger(__name__)

COMMANDS = ('simulate', 'ground-truth', 'sweep', 'report', 'validate', 'oracle', 'replay', 'estimators')


def build_parser() -> argparse.ArgumentParser:
	parser = argparse.ArgumentParser(prog='bdmc', description='Marginal likelihood estimator benchmark')
	common = argparse.ArgumentParser(add_help=False)
	common.add_argument('--config', type=Path, default=None, help='experiment file ([model], [experiment], [estimator.<id>])')
	common.add_argument('--seed', type=int, default=None, help='master seed')
	common.add_argument('--out', type=Path, default=None, dest='out_dir', help='output directory')
	common.add_argument('--model', choices=('clustering', 'lowrank', 'binary'), default=None)
	common.add_argument('--trials', type=int, default=None, dest='n_trials')
	common.add_argument('--workers', type=int, default=None, dest='n_workers')

	sub = parser.add_subparsers(dest='command', required=True)
	sub.add_parser('simulate', parents=[common], help='write a dataset and its exact posterior sample')
	sub.add_parser('ground-truth', parents=[common], help='BDMC sandwich at the ground-truth budget')
	sub.add_parser('sweep', parents=[common], help='run every (estimator, budget, trial) cell')
	report = sub.add_parser('report', parents=[common], help='mean and RMSE curves plus a summary table')
	report.add_argument('--truth', type=float, default=None, help='use this log ML instead of ground_truth.json')
	validate = sub.add_parser('validate', parents=[common], help='consistency, Geweke and agreement suites')
	validate.add_argument('--triples', type=int, default=200)
	validate.add_argument('--geweke-iterations', type=int, default=1000)
	sub.add_parser('oracle', parents=[common], help='exact log ML by enumeration or quadrature')
	replay = sub.add_parser('replay', parents=[common], help='recompute one trial from its recorded seed')
	replay.add_argument('estimator')
	replay.add_argument('budget', type=int)
	replay.add_argument('trial', type=int)
	sub.add_parser('estimators', help='list the registered estimators')
	return parser


def main(argv: list[str] | None = None) -> int:
	args = build_parser().parse_args(argv)
	if args.command == 'estimators':
		print(estimators.get_description())
		return 0

	overrides = {key: getattr(args, key) for key in ('seed', 'out_dir', 'model', 'n_trials', 'n_workers')}
	try:
		config = load_config(args.config, overrides)
		if args.command == 'simulate':
			cmd_simulate(config)
		elif args.command == 'ground-truth':
			record = cmd_ground_truth(config)
			return 0 if record.converged or record.upper is None else 1
		elif args.command == 'sweep':
			cmd_sweep(config)
		elif args.command == 'report':
			cmd_report(config, truth=args.truth)
		elif args.command == 'validate':
			return 0 if cmd_validate(config, args.triples, args.geweke_iterations) else 1
		elif args.command == 'oracle':
			cmd_oracle(config)
		elif args.command == 'replay':
			value, recorded = cmd_replay(config, args.estimator, args.budget, args.trial)
			if recorded is not None and not (value == recorded or (math.isnan(value) and math.isnan(recorded))):
				logger.error(f'replayed value {value!r} differs from recorded {recorded!r}')
				return 1
	except (HarnessError, ModelError, EstimatorError) as e:
		logger.error(f'{args.command} failed: {e}')
		return 2
	return 0


if __name__ == '__main__':
	sys.exit(main())
