"""Rate-distortion analysis of delayed sequential coding systems."""
from .closed_forms import (cc_sum_rate_gm, cnc_sum_rate_gm, counter_example_gap,
                           dpcm_stage_rates, jc_rate_gm, transform_rates)
from .discrete_rd import (DiscreteProblem, cnc_sum_rate_discrete, equivalence_scan,
                          jc_rd_discrete)
from .errors import (ConfigError, InfeasibleError, InvalidSpecError, NoClosedFormError,
                     OutOfRegionError, UnsupportedTransformError)
from .gauss_opt import OptProblem, RDResult, SolverOptions, min_sum_rate, verify_corollary
from .info import JointPmf, directed_information, k_directed_information, mutual_information
from .mc_sim import SimConfig, SimReport, simulate_dpcm, simulate_jc_testchannel
from .model import SourceSpec, SystemKind, build_covariance, parse_kind

__version__ = "0.1.0"
