"""
Experiment Reports

One row per statistic with its envelope and a pass/fail/na status, written
as CSV (with `#` metadata lines) or JSON. Reruns of the same config give
byte-identical output apart from the wall-time line.
"""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Tuple, Union

STATUSES = ("pass", "fail", "na")
CSV_HEADER = ("statistic", "n", "E", "eta", "value", "stderr", "envelope", "status", "samples", "seed")

Envelope = Union[None, float, Tuple[float, float]]


def tool_version() -> str:
    try:
        return metadata.version("rmtlab")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def config_hash(mapping: Mapping[str, Any]) -> str:
    """sha256 of the canonical JSON form of a resolved config."""
    canonical = json.dumps(mapping, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def git_blob_hash(data: bytes) -> str:
    """Content hash as `git hash-object` computes it: sha1 of 'blob <size>\\0' + data."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _number(value: Optional[float]) -> str:
    if value is None:
        return ""
    return f"{value:.12g}"


def _json_number(value: Optional[float]) -> Any:
    if value is None or not math.isfinite(value):
        return None if value is None else str(value)
    return value


@dataclass(frozen=True)
class ReportRow:
    """
    One reported statistic.

    `envelope` is an upper bound, a closed interval (low, high), or None for
    informational rows.
    """

    statistic: str
    value: float
    stderr: Optional[float] = None
    envelope: Envelope = None
    status: str = "na"
    n: Optional[int] = None
    E: Optional[float] = None
    eta: Optional[float] = None
    samples: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"Unknown status '{self.status}', expected one of {STATUSES}")

    def envelope_text(self) -> str:
        if self.envelope is None:
            return ""
        if isinstance(self.envelope, tuple):
            low, high = self.envelope
            return f"[{_number(low)};{_number(high)}]"
        return _number(self.envelope)

    def as_csv_row(self) -> list[str]:
        return [
            self.statistic,
            "" if self.n is None else str(self.n),
            _number(self.E),
            _number(self.eta),
            _number(self.value),
            _number(self.stderr),
            self.envelope_text(),
            self.status,
            "" if self.samples is None else str(self.samples),
            "" if self.seed is None else str(self.seed),
        ]

    def to_mapping(self) -> dict[str, Any]:
        envelope: Any = list(self.envelope) if isinstance(self.envelope, tuple) else self.envelope
        return {
            "statistic": self.statistic,
            "n": self.n,
            "E": self.E,
            "eta": self.eta,
            "value": _json_number(self.value),
            "stderr": _json_number(self.stderr),
            "envelope": envelope,
            "status": self.status,
            "samples": self.samples,
            "seed": self.seed,
        }


def check_row(statistic: str, value: float, bound: float, **kwargs: Any) -> ReportRow:
    """Pass when value <= bound (NaN fails)."""
    status = "pass" if value <= bound else "fail"
    return ReportRow(statistic, value, envelope=float(bound), status=status, **kwargs)


def interval_row(statistic: str, value: float, interval: Sequence[float], **kwargs: Any) -> ReportRow:
    """Pass when low <= value <= high."""
    low, high = float(interval[0]), float(interval[1])
    status = "pass" if low <= value <= high else "fail"
    return ReportRow(statistic, value, envelope=(low, high), status=status, **kwargs)


def info_row(statistic: str, value: float, **kwargs: Any) -> ReportRow:
    return ReportRow(statistic, value, status="na", **kwargs)


@dataclass
class ExperimentReport:
    """
    Rows of one run plus the metadata that identifies it.

    Attributes
    ----------
    experiment : str
        Experiment name
    config_hash : str
        sha256 of the resolved config
    input_hash : str
        git blob hash of the config file bytes
    rows : list of ReportRow
        Statistics in the order the experiment produced them
    summary : dict
        Free-form aggregate values mirrored into the JSON output
    wall_time : float
        Seconds spent; the only field allowed to differ between reruns
    """

    experiment: str
    config_hash: str
    input_hash: str
    rows: list[ReportRow] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    wall_time: float = 0.0
    version: str = field(default_factory=tool_version)

    @property
    def failures(self) -> list[ReportRow]:
        return [row for row in self.rows if row.status == "fail"]

    @property
    def passed(self) -> bool:
        return not self.failures

    def metadata(self) -> dict[str, str]:
        return {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "input_hash": self.input_hash,
            "version": self.version,
        }

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as handle:
            for key, value in self.metadata().items():
                handle.write(f"# {key}: {value}\n")
            handle.write(f"# wall_time: {self.wall_time:.3f}\n")
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in self.rows:
                writer.writerow(row.as_csv_row())

    def to_json(self, path: Union[str, Path]) -> None:
        document = {
            "metadata": self.metadata(),
            "wall_time": round(self.wall_time, 3),
            "rows": [row.to_mapping() for row in self.rows],
            "summary": self.summary,
            "passed": self.passed,
        }
        with open(path, "w") as handle:
            json.dump(document, handle, indent=2, sort_keys=True, default=str)
            handle.write("\n")

    def write(self, path: Union[str, Path], format: str = "csv") -> None:
        """Write in `format` ("csv" or "json"), creating parent directories."""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        if format == "csv":
            self.to_csv(target)
        elif format == "json":
            self.to_json(target)
        else:
            raise ValueError(f"Unknown format '{format}', expected 'csv' or 'json'")

    def __str__(self) -> str:
        lines = [f"{self.experiment}: {len(self.rows)} rows, {len(self.failures)} failed ({self.wall_time:.1f} s)"]
        for row in self.rows:
            if row.status != "na":
                lines.append(f"  [{row.status}] {row.statistic}: {_number(row.value)} vs {row.envelope_text()}")
        return "\n".join(lines)
