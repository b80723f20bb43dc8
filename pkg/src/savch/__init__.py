"""Solver for a stochastic Cahn-Hilliard equation with Allen-Cahn-type
dynamic boundary conditions, discretized by an augmented SAV P1 finite
element scheme with multiplicative Q-Wiener noise."""

from .config import ConfigError, RunConfig, parse_config, write_config
from .diagnostics import PathSummary, StepReport, path_statistics, report
from .fem import FemOperators, assemble, discrete_laplacian
from .harness import ConvergenceResult, McResult, convergence_study, mc_run, run_path
from .mesh import TriMesh, build_unit_square, extract_boundary
from .noise import NoiseModel, build_noise_model, noise_field, sample_increment
from .potentials import Potentials
from .stepper import CouplingVectors, SavState, StepFailure, Stepper, initial_state

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceResult",
    "CouplingVectors",
    "FemOperators",
    "McResult",
    "NoiseModel",
    "PathSummary",
    "Potentials",
    "RunConfig",
    "SavState",
    "StepFailure",
    "StepReport",
    "Stepper",
    "TriMesh",
    "assemble",
    "build_noise_model",
    "build_unit_square",
    "convergence_study",
    "discrete_laplacian",
    "extract_boundary",
    "initial_state",
    "mc_run",
    "noise_field",
    "parse_config",
    "path_statistics",
    "report",
    "run_path",
    "sample_increment",
    "write_config",
    "__version__",
]
