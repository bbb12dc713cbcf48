"""Numerical lab for linear-generator SPDEs driven by compensated Poisson noise."""
from .config import ConfigError, load_config, validate_config
from .estimators import InvariantMeasureSampler, MildSolutionSimulator
from .experiments import run_experiment
from .integrator import (
    CoefficientSet,
    DivergenceError,
    SimulationGrid,
    SPDEModel,
    simulate_ensemble,
    simulate_mild_path,
    simulate_yosida_path,
)
from .noise import AtomMarks, GaussianMarks, Integrand, RngStream, UniformBoxMarks
from .operators import DiagonalGenerator, laplacian_dirichlet
from .results import ResultTable, emit_plot_data
from .stability import mean_square_decay, quadratic_lyapunov
from .transport import w2, wasserstein2_exact

__version__ = "0.1.0"
