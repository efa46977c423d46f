"""Simulation engine for regularized contextual bandits on binned contexts."""

from .environment import (ArmModel, Environment, HolderMeanFunction,
                          LambdaFunction, default_arm_specs, make_environment,
                          rng_stream)
from .evaluation import (MarginProbe, RegretReport, approximation_error, eta,
                         fast_rate_normalizer, loss_functional, margin_probe,
                         oracle_policy, oracle_pstar, piecewise_policy,
                         regret_report, simplex_minimize,
                         slow_rate_normalizer)
from .orchestrator import (PolicyResult, RunConfig, SizingError,
                           run_algorithm, run_sweep, sweep_parallelism)
from .partition import (BinGrid, bin_average, bin_average_lambda,
                        bin_average_means, select_bin_count)
from .regularizers import (Entropy, KLDivergence, Regularizer,
                           SquaredDistance, SquaredNorm, from_spec)
from .simplex import check_simplex, project_to_simplex, uniform
from .ucfw import (PresampleSchedule, UcfwState, final_proportion,
                   lcb_gradient, make_presample_schedule, ucfw_step)

__version__ = "0.1.0"

__all__ = [
    "ArmModel", "BinGrid", "Entropy", "Environment", "HolderMeanFunction",
    "KLDivergence", "LambdaFunction", "MarginProbe", "PolicyResult",
    "PresampleSchedule", "Regularizer", "RegretReport", "RunConfig",
    "SizingError", "SquaredDistance", "SquaredNorm", "UcfwState",
    "approximation_error", "bin_average", "bin_average_lambda",
    "bin_average_means", "check_simplex", "default_arm_specs", "eta",
    "fast_rate_normalizer", "final_proportion", "from_spec",
    "lcb_gradient", "loss_functional", "make_environment", "margin_probe",
    "make_presample_schedule", "oracle_policy", "oracle_pstar",
    "piecewise_policy", "project_to_simplex", "regret_report",
    "rng_stream", "run_algorithm", "run_sweep", "select_bin_count",
    "simplex_minimize", "slow_rate_normalizer", "sweep_parallelism",
    "ucfw_step", "uniform",
]
