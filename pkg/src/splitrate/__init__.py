"""Fixed-point iterations of averaged operators with Hölder-regularity rate diagnostics."""

from ._config import Tolerances, get_tolerances, set_tolerances, tolerance_context
from .exceptions import ConfigError, DegenerateSampleError, NumericalError, SplitRateError, UsageError
from .geometry import *  # noqa: F401,F403
from .operators import *  # noqa: F401,F403
from .engine import *  # noqa: F401,F403
from .regularity import *  # noqa: F401,F403
from .diagnostics import *  # noqa: F401,F403
from .estimators import FixedPointSolver, HolderRegularityEstimator
from .experiments import (ExperimentConfig, RunSummary, builtin_config, emit_plot_data,
                          list_experiments, load_config, run_experiment)

__version__ = "0.1.0"
