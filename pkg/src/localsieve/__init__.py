"""localsieve: local Hardy space h1, bmo/lmo oscillation and commutators of localized singular integrals on grids."""

from .exceptions import AtomConstructionError, ConfigurationError, GridMismatchError, PaddingContractError
from .grid import *  # noqa: F401,F403
from .kernels import *  # noqa: F401,F403
from .operators import *  # noqa: F401,F403
from .spaces import *  # noqa: F401,F403
from .atoms import *  # noqa: F401,F403
from .commutators import *  # noqa: F401,F403
from .report import ExperimentReport
from .experiments import ExperimentConfig, emit_plot_data, run_experiment

__version__ = "0.1.0"
