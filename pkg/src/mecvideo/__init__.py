"""Joint quality selection, transcoding placement and rate allocation for
cached video delivery over a heterogeneous cellular network."""

from .config import DEFAULT_CONFIG, ConfigError, load_config
from .dual_solver import DualDecompositionSolver, run
from .harness import ExperimentSpec, MetricsRecord, build_scenario, emit, run_experiment
from .oracle import ExactSolver, OracleSizeError, check_feasible, solve_exact
from .problem import Instance, PrimalSolution, make_instance, random_small_instance, toy_instance
from .scenario import Topology, build_hetnet, enumerate_paths

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CONFIG", "ConfigError", "load_config",
    "DualDecompositionSolver", "run",
    "ExperimentSpec", "MetricsRecord", "build_scenario", "emit", "run_experiment",
    "ExactSolver", "OracleSizeError", "check_feasible", "solve_exact",
    "Instance", "PrimalSolution", "make_instance", "random_small_instance", "toy_instance",
    "Topology", "build_hetnet", "enumerate_paths",
]
