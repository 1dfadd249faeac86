"""
Experiment Configuration

TOML experiment files and the versioned envelope defaults. A config names
one experiment, its sample sizes and seed, and the ensemble or log-gas blocks the
experiment needs; every block is validated before any sampling starts.
"""

import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Tuple, Union

from rmtlab.ensembles import EnsembleSpec
from rmtlab.loggas import LogGasSpec

logger = logging.getLogger(__name__)

EXPERIMENTS = (
    "semicircle",
    "rigidity",
    "deloc",
    "gaps",
    "twopoint",
    "dbm-relax",
    "edge",
    "er",
    "loggas",
    "conditional",
    "loop",
    "compare",
    "flucavg",
    "hs-check",
)
FORMATS = ("csv", "json")
TOP_LEVEL_KEYS = frozenset(
    {"experiment", "samples", "seed", "threads", "output", "format", "n", "n_sweep",
     "ensemble", "ensemble_b", "loggas", "params", "envelopes"}
)


class ConfigError(ValueError):
    """A config file that cannot be turned into a valid experiment."""


class UnknownExperimentError(ConfigError):
    """The `experiment` key names no registered experiment."""


def load_envelopes() -> dict[str, Any]:
    """Envelope constants shipped in rmtlab/defaults.toml."""
    text = resources.files("rmtlab").joinpath("defaults.toml").read_text(encoding="utf-8")
    return dict(tomllib.loads(text)["envelopes"])


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One resolved experiment run.

    Attributes
    ----------
    experiment : str
        One of EXPERIMENTS
    samples : int
        Monte Carlo samples per N
    seed : int
        Master seed
    n : int, optional
        Dimension of single-N experiments
    n_sweep : tuple of int
        Dimensions of scaling experiments
    ensemble, ensemble_b : EnsembleSpec, optional
        Matrix laws (the second one for comparisons), built at the first N
    loggas : LogGasSpec, optional
        Log-gas law
    params : dict
        Experiment specific settings
    envelopes : dict
        Defaults merged with the config's [envelopes] table
    threads : int
        Worker threads; never part of the config hash
    output : str, optional
        Report path
    format : str
        "csv" or "json"
    source : bytes
        Raw config file, hashed into the report
    """

    experiment: str
    samples: int
    seed: int
    n: Optional[int] = None
    n_sweep: Tuple[int, ...] = ()
    ensemble: Optional[EnsembleSpec] = None
    ensemble_b: Optional[EnsembleSpec] = None
    loggas: Optional[LogGasSpec] = None
    params: dict[str, Any] = field(default_factory=dict)
    envelopes: dict[str, Any] = field(default_factory=dict)
    threads: int = 1
    output: Optional[str] = None
    format: str = "csv"
    source: bytes = field(default=b"", repr=False)

    @property
    def n_values(self) -> list[int]:
        """The sweep, or [n] for single-N experiments."""
        if self.n_sweep:
            return list(self.n_sweep)
        if self.n is None:
            raise ConfigError(f"Experiment '{self.experiment}' needs n or n_sweep")
        return [self.n]

    @property
    def largest_n(self) -> int:
        return max(self.n_values)

    def param(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)

    def envelope(self, key: str) -> Any:
        if key not in self.envelopes:
            raise ConfigError(f"No envelope '{key}' in defaults or config")
        return self.envelopes[key]

    def require_ensemble(self) -> EnsembleSpec:
        if self.ensemble is None:
            raise ConfigError(f"Experiment '{self.experiment}' needs an [ensemble] section")
        return self.ensemble

    def require_loggas(self) -> LogGasSpec:
        if self.loggas is None:
            raise ConfigError(f"Experiment '{self.experiment}' needs a [loggas] section")
        return self.loggas

    def with_overrides(
        self,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
        output: Optional[str] = None,
        format: Optional[str] = None,
    ) -> "ExperimentConfig":
        """Apply command-line overrides; unset arguments keep the file's values."""
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = _non_negative("seed", seed)
        if threads is not None:
            changes["threads"] = _positive("threads", threads)
        if output is not None:
            changes["output"] = output
        if format is not None:
            changes["format"] = _format(format)
        return replace(self, **changes)

    def to_mapping(self) -> dict[str, Any]:
        """
        Canonical resolved form, the input of the config hash.

        Threads and the output path are left out: they do not change results.
        """
        return {
            "experiment": self.experiment,
            "samples": self.samples,
            "seed": self.seed,
            "n": self.n,
            "n_sweep": list(self.n_sweep),
            "ensemble": self.ensemble.to_mapping() if self.ensemble else None,
            "ensemble_b": self.ensemble_b.to_mapping() if self.ensemble_b else None,
            "loggas": self.loggas.to_mapping() if self.loggas else None,
            "params": self.params,
            "envelopes": self.envelopes,
            "format": self.format,
        }


def _positive(name: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"'{name}' must be a positive integer, got {value!r}")
    return value


def _non_negative(name: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ConfigError(f"'{name}' must be a non-negative integer, got {value!r}")
    return value


def _format(value: Any) -> str:
    if value not in FORMATS:
        raise ConfigError(f"Unknown format {value!r}, expected one of {FORMATS}")
    return str(value)


def config_from_mapping(mapping: Mapping[str, Any], source: bytes = b"") -> ExperimentConfig:
    """
    Validate a parsed config table.

    Raises
    ------
    UnknownExperimentError
        If `experiment` is missing or not registered
    ConfigError
        For unknown keys, bad sizes or sections that fail validation
    """
    experiment = mapping.get("experiment")
    if experiment not in EXPERIMENTS:
        raise UnknownExperimentError(
            f"Unknown experiment {experiment!r}, expected one of {', '.join(EXPERIMENTS)}"
        )
    unknown = set(mapping) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(sorted(unknown))}")

    samples = _positive("samples", mapping.get("samples", 1))
    seed = _non_negative("seed", mapping.get("seed", 0))
    threads = _positive("threads", mapping.get("threads", 1))
    n = mapping.get("n")
    if n is not None:
        n = _positive("n", n)
    sweep = tuple(_positive("n_sweep", v) for v in mapping.get("n_sweep", ()))
    first_n = sweep[0] if sweep else n

    try:
        ensemble = _ensemble(mapping.get("ensemble"), first_n)
        ensemble_b = _ensemble(mapping.get("ensemble_b"), first_n)
        loggas = None
        if "loggas" in mapping:
            loggas = LogGasSpec.from_mapping(mapping["loggas"], first_n)
    except (KeyError, TypeError, ValueError) as error:
        raise ConfigError(f"Invalid section: {error}") from error

    envelopes = load_envelopes()
    overrides = dict(mapping.get("envelopes", {}))
    unknown_envelopes = set(overrides) - set(envelopes)
    if unknown_envelopes:
        raise ConfigError(f"Unknown envelopes: {', '.join(sorted(unknown_envelopes))}")
    envelopes.update(overrides)

    output = mapping.get("output")
    return ExperimentConfig(
        experiment=str(experiment),
        samples=samples,
        seed=seed,
        n=n,
        n_sweep=sweep,
        ensemble=ensemble,
        ensemble_b=ensemble_b,
        loggas=loggas,
        params=dict(mapping.get("params", {})),
        envelopes=envelopes,
        threads=threads,
        output=None if output is None else str(output),
        format=_format(mapping.get("format", "csv")),
        source=source,
    )


def _ensemble(block: Optional[Mapping[str, Any]], n: Optional[int]) -> Optional[EnsembleSpec]:
    if block is None:
        return None
    dim = n if n is not None else block.get("n")
    if dim is None:
        raise ValueError("ensemble needs a dimension (top-level n, n_sweep or ensemble.n)")
    return EnsembleSpec.from_mapping(block, int(dim))


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate a TOML config file.

    Raises
    ------
    OSError
        If the file cannot be read
    ConfigError
        If it is not valid TOML or fails validation
    """
    source = Path(path).read_bytes()
    try:
        mapping = tomllib.loads(source.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as error:
        raise ConfigError(f"{path}: {error}") from error
    config = config_from_mapping(mapping, source)
    logger.debug("loaded %s: %s", path, config.experiment)
    return config
