from bdmc.logging_config import setup_logging

setup_logging()

from bdmc.basic.service import bic as bic
from bdmc.basic.service import cms as cms
from bdmc.basic.service import harmonic_mean as harmonic_mean
from bdmc.basic.service import likelihood_weighting as likelihood_weighting
from bdmc.basic.service import nested_sampling as nested_sampling
from bdmc.basic.variational import variational_bayes as variational_bayes
from bdmc.bridge.service import ais_forward as ais_forward
from bdmc.bridge.service import ais_reverse as ais_reverse
from bdmc.bridge.service import bdmc_sandwich as bdmc_sandwich
from bdmc.bridge.service import shme_run as shme_run
from bdmc.bridge.service import smc_run as smc_run
from bdmc.models.service import brute_force_log_ml as brute_force_log_ml
from bdmc.models.service import simulate as simulate
from bdmc.models.views import BinarySpec as BinarySpec
from bdmc.models.views import ClusteringSpec as ClusteringSpec
from bdmc.models.views import LowRankSpec as LowRankSpec
from bdmc.prob.views import RngStream as RngStream

__all__ = [
	'ClusteringSpec',
	'LowRankSpec',
	'BinarySpec',
	'RngStream',
	'simulate',
	'brute_force_log_ml',
	'ais_forward',
	'ais_reverse',
	'bdmc_sandwich',
	'smc_run',
	'shme_run',
	'likelihood_weighting',
	'harmonic_mean',
	'bic',
	'cms',
	'nested_sampling',
	'variational_bayes',
]
