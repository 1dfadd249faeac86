"""
rmtlab

Monte Carlo experiments on the universality of Wigner matrices and beta
log-gases: spectra and resolvents, local laws, gap statistics, Dyson
Brownian motion, tridiagonal and MCMC log-gas samplers, Green function
comparison, and the harness that runs them from TOML configs.
"""

from rmtlab.config import ConfigError, ExperimentConfig, UnknownExperimentError, load_config
from rmtlab.harness import run, run_file
from rmtlab.report import ExperimentReport, ReportRow
from rmtlab.rng import seed_stream

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "ReportRow",
    "UnknownExperimentError",
    "load_config",
    "run",
    "run_file",
    "seed_stream",
]
