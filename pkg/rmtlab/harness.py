"""
Experiment Harness

Loads a config, runs the registered experiment and writes its report.
Exit codes: 0 all checks passed, 1 a check failed or the numerics broke
down, 2 unknown experiment, 3 invalid config, 4 I/O error.
"""

import logging
import time
from pathlib import Path
from typing import Optional, Tuple, Union

from rmtlab.config import ConfigError, ExperimentConfig, UnknownExperimentError, load_config
from rmtlab.experiments import RUNNERS, validate
from rmtlab.report import ExperimentReport, config_hash, git_blob_hash

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_UNKNOWN_EXPERIMENT = 2
EXIT_INVALID_CONFIG = 3
EXIT_IO = 4

__all__ = [
    "ConfigError",
    "UnknownExperimentError",
    "EXIT_OK",
    "EXIT_FAILED",
    "EXIT_UNKNOWN_EXPERIMENT",
    "EXIT_INVALID_CONFIG",
    "EXIT_IO",
    "run",
    "run_file",
]


def run(config: ExperimentConfig) -> ExperimentReport:
    """
    Run one experiment and, when `config.output` is set, write its report.

    Parameters
    ----------
    config : ExperimentConfig
        Validated config

    Returns
    -------
    ExperimentReport
        Rows, summary and identifying hashes

    Raises
    ------
    ConfigError
        If the config lacks a block the experiment reads
    OSError
        If the report cannot be written
    """
    validate(config)
    start = time.perf_counter()
    logger.info("running %s (samples=%d, seed=%d, threads=%d)", config.experiment, config.samples,
                config.seed, config.threads)
    rows, summary = RUNNERS[config.experiment](config)
    report = ExperimentReport(
        experiment=config.experiment,
        config_hash=config_hash(config.to_mapping()),
        input_hash=git_blob_hash(config.source),
        rows=rows,
        summary=summary,
        wall_time=time.perf_counter() - start,
    )
    logger.info("%s finished in %.1f s, %d failed rows", config.experiment, report.wall_time, len(report.failures))
    if config.output:
        report.write(config.output, config.format)
        logger.info("report written to %s", config.output)
    return report


def run_file(
    path: Union[str, Path],
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    output: Optional[str] = None,
    format: Optional[str] = None,
) -> Tuple[int, Optional[ExperimentReport]]:
    """
    Load, override and run a config file, mapping every outcome to an exit code.

    Returns
    -------
    code : int
        One of the EXIT_* constants
    report : ExperimentReport or None
        None when the run did not get as far as a report
    """
    try:
        config = load_config(path).with_overrides(seed, threads, output, format)
        report = run(config)
    except UnknownExperimentError as error:
        logger.error("%s", error)
        return EXIT_UNKNOWN_EXPERIMENT, None
    except ValueError as error:
        # ConfigError and out-of-range parameters the library rejects
        logger.error("invalid config %s: %s", path, error)
        return EXIT_INVALID_CONFIG, None
    except OSError as error:
        logger.error("I/O error: %s", error)
        return EXIT_IO, None
    except RuntimeError as error:
        logger.error("numerical failure: %s", error)
        return EXIT_FAILED, None
    return (EXIT_OK if report.passed else EXIT_FAILED), report
