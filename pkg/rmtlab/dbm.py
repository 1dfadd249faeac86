"""
Dyson Brownian Motion

Matrix-level Ornstein–Uhlenbeck flow (exact in law), the eigenvalue SDE with
logarithmic repulsion integrated by Euler–Maruyama, and the relaxation
experiment comparing global and local time scales.

The SDE is

    d lambda_i = [-(beta/4) lambda_i + (beta/2N) sum_(j != i) 1/(lambda_i - lambda_j)] dt
                 + dB_i / sqrt(N)

with independent standard Brownian motions B_i. Its stationary law is
proportional to exp(-beta N H) with the log-gas Hamiltonian of
`rmtlab.loggas` for V(x) = x^2/2; at beta = 2 the eigenvalues of the complex
Hermitian OU flow follow it with the same time scale.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special, stats

from rmtlab.ensembles import EnsembleSpec, EntryDistribution, MatrixSample, detune, draw_sample, sample_wigner
from rmtlab.rng import map_samples, seed_stream
from rmtlab.spectral import SEMICIRCLE, eigen
from rmtlab.stats import ks_distance, unfold

logger = logging.getLogger(__name__)

DBM_ORIGINS = ("matrix_flow", "sde")
GAP_SAFETY = 10.0
MAX_HALVINGS = 20


# ---------------------------------------------------------------------------
# Matrix flow
# ---------------------------------------------------------------------------


def ou_interpolate(H0: MatrixSample, U: np.ndarray, t: float) -> MatrixSample:
    """H_t = e^(-t/2) H_0 + sqrt(1 - e^(-t)) U for a given Gaussian U."""
    if t < 0:
        raise ValueError(f"Flow time must be non-negative, got t = {t}")
    entries = math.exp(-t / 2.0) * H0.entries + math.sqrt(-math.expm1(-t)) * U
    return MatrixSample(entries, H0.spec, H0.seed_path, H0.flow_time + t)


def ou_matrix_flow(
    H0: MatrixSample,
    t: float,
    rng: np.random.Generator,
    symmetry: Optional[str] = None,
) -> MatrixSample:
    """
    Sample the Ornstein–Uhlenbeck matrix flow at time t.

    Parameters
    ----------
    H0 : MatrixSample
        Initial matrix
    t : float
        Flow time, t >= 0
    rng : np.random.Generator
        Stream for the Gaussian matrix U
    symmetry : str, optional
        Symmetry class of U; defaults to that of H0

    Returns
    -------
    MatrixSample
        Exact-in-law sample of H_t = e^(-t/2) H_0 + sqrt(1 - e^(-t)) U with U
        drawn from GOE/GUE of matching symmetry; `flow_time` is advanced by t

    Raises
    ------
    ValueError
        If t < 0 or `symmetry` differs from the symmetry of H0

    Examples
    --------
    >>> H0 = sample_wigner(EnsembleSpec.goe(3), np.random.default_rng(0))
    >>> bool(np.array_equal(ou_matrix_flow(H0, 0.0, np.random.default_rng(1)).entries, H0.entries))
    True
    """
    own = "complex_hermitian" if H0.is_complex else "real_symmetric"
    if symmetry is not None and symmetry != own:
        raise ValueError(f"Symmetry mismatch: H0 is {own}, requested U is {symmetry}")
    U = sample_wigner(EnsembleSpec(own, H0.n), rng).entries
    return ou_interpolate(H0, U, t)


@dataclass(frozen=True)
class MomentDrift:
    """Exact OU evolution of one entry moment and its linear-in-t bound."""

    order: int
    initial: float
    value: float
    drift: float
    bound: float

    def __str__(self) -> str:
        return f"m{self.order}: {self.initial:.6g} -> {self.value:.6g} (drift {self.drift:.3e} <= {self.bound:.3e})"


def _gaussian_moment(k: int) -> float:
    if k % 2:
        return 0.0
    return float(special.factorial2(k - 1, exact=True)) if k else 1.0


def moment_drift(
    dist0: EntryDistribution, t: float, orders: Sequence[int] = (1, 2, 3, 4)
) -> list[MomentDrift]:
    """
    Entry moments along v(t) = e^(-t/2) v + sqrt(1 - e^(-t)) g.

    The binomial expansion gives m_s(t) exactly; for a standardized start the
    first two moments are constant and

        |m_3(t) - m_3| <= (3/2) |m_3| t,    |m_4(t) - m_4| = |m_4 - 3| (1 - e^(-2t)) <= 2 |m_4 - 3| t

    Raises
    ------
    ValueError
        If t < 0, an order is outside 1..4, or dist0 is not standardized
    """
    if t < 0:
        raise ValueError(f"Flow time must be non-negative, got t = {t}")
    moments = (1.0,) + dist0.moments
    if abs(moments[1]) > 1e-9 or abs(moments[2] - 1.0) > 1e-9:
        raise ValueError(f"Entry law must be standardized, got mean {moments[1]}, variance {moments[2]}")

    a = math.exp(-t / 2.0)
    b = math.sqrt(-math.expm1(-t))
    constants = {1: 0.0, 2: 0.0, 3: 1.5 * abs(moments[3]), 4: 2.0 * abs(moments[4] - 3.0)}
    result = []
    for s in orders:
        if s not in constants:
            raise ValueError(f"Moment orders 1..4 are supported, got {s}")
        value = sum(
            math.comb(s, k) * a**k * b ** (s - k) * moments[k] * _gaussian_moment(s - k)
            for k in range(s + 1)
        )
        result.append(MomentDrift(s, moments[s], value, abs(value - moments[s]), constants[s] * t))
    return result


# ---------------------------------------------------------------------------
# Eigenvalue SDE
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DbmState:
    """
    Particle configuration at time t.

    Attributes
    ----------
    t : float
        Time, t >= 0
    positions : np.ndarray
        Strictly increasing positions (read-only)
    beta : float
        Inverse temperature (1 or 2 for matrix flows, any positive value for the SDE)
    origin : str
        "matrix_flow" or "sde"
    """

    t: float
    positions: np.ndarray
    beta: float
    origin: str = "sde"

    def __post_init__(self) -> None:
        positions = np.array(self.positions, dtype=float)
        if positions.ndim != 1 or positions.size == 0:
            raise ValueError("Positions must be a non-empty vector")
        if self.t < 0:
            raise ValueError(f"Time must be non-negative, got t = {self.t}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.origin not in DBM_ORIGINS:
            raise ValueError(f"Unknown origin '{self.origin}', expected one of {DBM_ORIGINS}")
        if np.any(np.diff(positions) <= 0):
            raise ValueError("Positions must be strictly increasing (collision)")
        positions.setflags(write=False)
        object.__setattr__(self, "positions", positions)

    @property
    def n(self) -> int:
        return int(self.positions.size)

    @classmethod
    def from_matrix(cls, H: MatrixSample) -> "DbmState":
        """Eigenvalues of H as the state at H.flow_time."""
        beta = 2.0 if H.is_complex else 1.0
        return cls(H.flow_time, eigen(H).eigenvalues, beta, "matrix_flow")


def dbm_drift(positions: np.ndarray, beta: float) -> np.ndarray:
    """
    -(beta/4) lambda_i + (beta/2N) sum_(j != i) 1/(lambda_i - lambda_j).

    Examples
    --------
    >>> [float(v) for v in dbm_drift(np.array([-1.0, 1.0]), 2.0)]
    [0.25, -0.25]
    """
    lam = np.asarray(positions, dtype=float)
    n = lam.size
    diff = lam[:, None] - lam[None, :]
    np.fill_diagonal(diff, np.inf)
    return -(beta / 4.0) * lam + (beta / (2.0 * n)) * np.sum(1.0 / diff, axis=1)


def _substeps(
    lam: np.ndarray, beta: float, h: float, count: int, rng: Optional[np.random.Generator]
) -> Optional[np.ndarray]:
    """`count` Euler–Maruyama steps of size h, or None on a near-collision."""
    n = lam.size
    threshold = GAP_SAFETY * math.sqrt(h / n)
    for _ in range(count):
        if rng is not None and n > 1 and np.min(np.diff(lam)) < threshold:
            return None
        step = dbm_drift(lam, beta) * h
        if rng is not None:
            step = step + rng.normal(0.0, math.sqrt(h / n), n)
        proposal = lam + step
        if np.any(np.diff(proposal) <= 0):
            return None
        lam = proposal
    return lam


def dbm_sde_step(
    state: DbmState,
    dt: float,
    rng: np.random.Generator,
    noise: bool = True,
    max_halvings: int = MAX_HALVINGS,
) -> DbmState:
    """
    Advance the eigenvalue SDE by dt with Euler–Maruyama.

    Brownian increments have variance h/N per coordinate. When a substep
    starts from a gap below 10 sqrt(h/N), or a proposal breaks the ordering,
    the whole interval is redone with h halved (2, 4, ... substeps).

    Parameters
    ----------
    state : DbmState
        Current configuration
    dt : float
        Time increment, dt > 0
    rng : np.random.Generator
        Noise stream (unused with noise=False)
    noise : bool, optional
        Switch the Brownian term off for the deterministic flow (default: True)
    max_halvings : int, optional
        Number of halvings before giving up (default: 20)

    Returns
    -------
    DbmState
        Strictly ordered state at t + dt

    Raises
    ------
    RuntimeError
        If every refinement collides; the message dumps the state
    """
    if dt <= 0:
        raise ValueError(f"Time step must be positive, got dt = {dt}")
    source = rng if noise else None
    for halving in range(max_halvings + 1):
        count = 2**halving
        result = _substeps(state.positions, state.beta, dt / count, count, source)
        if result is not None:
            if halving:
                logger.debug("t = %.6g: step accepted after %d halvings", state.t, halving)
            return DbmState(state.t + dt, result, state.beta, "sde")
    dump = np.array2string(state.positions, precision=17, separator=", ", threshold=10**6)
    raise RuntimeError(
        f"DBM collision at t = {state.t} after {max_halvings} halvings of dt = {dt} "
        f"(beta = {state.beta}, N = {state.n}, min gap = {np.min(np.diff(state.positions)) if state.n > 1 else 'n/a'}); "
        f"positions = {dump}"
    )


@dataclass
class DbmTrajectory:
    """Recorded times and positions of one SDE run."""

    times: np.ndarray
    positions: np.ndarray
    beta: float
    final: DbmState

    def to_csv(self, path: Union[str, Path]) -> None:
        """Write rows t, lambda_1, ..., lambda_N."""
        n = self.positions.shape[1]
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["t"] + [f"lambda_{i}" for i in range(1, n + 1)])
            for t, row in zip(self.times, self.positions):
                writer.writerow([f"{t:.12g}"] + [f"{v:.17g}" for v in row])


def dbm_sde_run(
    initial: DbmState,
    t_final: float,
    dt: float,
    rng: np.random.Generator,
    noise: bool = True,
    record_every: int = 1,
    dump: Optional[Union[str, Path]] = None,
) -> DbmTrajectory:
    """
    Integrate the SDE from `initial` up to time `initial.t + t_final`.

    The last step is shortened to land on the final time. Every
    `record_every`-th state is recorded (the first and last always are);
    `dump` writes the trajectory as CSV.
    """
    if t_final < 0:
        raise ValueError(f"Run length must be non-negative, got {t_final}")
    if record_every < 1:
        raise ValueError(f"record_every must be at least 1, got {record_every}")
    steps = int(math.ceil(t_final / dt - 1e-12)) if t_final > 0 else 0
    end = initial.t + t_final
    state = initial
    times, rows = [state.t], [state.positions]
    for k in range(1, steps + 1):
        h = min(dt, end - state.t)
        if h <= 0:
            break
        state = dbm_sde_step(state, h, rng, noise)
        if k % record_every == 0 or k == steps:
            times.append(state.t)
            rows.append(state.positions)
    logger.info("DBM run: N = %d, %d steps to t = %.6g", initial.n, steps, state.t)
    trajectory = DbmTrajectory(np.array(times), np.array(rows), initial.beta, state)
    if dump is not None:
        trajectory.to_csv(dump)
    return trajectory


# ---------------------------------------------------------------------------
# Relaxation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelaxationRow:
    """KS distances to the Gaussian reference at one flow time."""

    t: float
    ks_global: float
    ks_local: float
    global_floor: float
    local_floor: float


@dataclass
class RelaxationTable:
    """Relaxation statistics across the time grid."""

    n: int
    samples: int
    rows: list[RelaxationRow] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows])

    def trend(self, name: str) -> float:
        """Spearman correlation of a column with t (negative when it decays)."""
        if len(self.rows) < 3:
            return float("nan")
        return float(stats.spearmanr(self.column("t"), self.column(name)).statistic)

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["t", "ks_global", "ks_local", "global_floor", "local_floor"])
            for row in self.rows:
                writer.writerow(
                    [f"{row.t:.12g}", f"{row.ks_global:.12g}", f"{row.ks_local:.12g}",
                     f"{row.global_floor:.12g}", f"{row.local_floor:.12g}"]
                )


def _split_floor(parts: list[np.ndarray]) -> float:
    """KS distance between even- and odd-numbered samples of a pooled reference."""
    if len(parts) < 2:
        return float("nan")
    return ks_distance(np.concatenate(parts[0::2]), np.concatenate(parts[1::2]))


def relaxation_experiment(
    spec0: EnsembleSpec,
    t_grid: Sequence[float],
    samples: int,
    seed: int,
    threads: int = 1,
    detune_amount: float = 0.0,
    window: Tuple[float, float] = (0.0, 0.5),
) -> RelaxationTable:
    """
    Distance of the OU flow from the Gaussian ensemble, globally and locally.

    For each t the pooled eigenvalues of H_t are compared with pooled
    eigenvalues of independent GOE/GUE samples (global KS), and the pooled
    unfolded bulk gaps likewise (local KS). One U per sample is shared by
    every t (common random numbers). Noise floors are KS distances between
    the even and odd halves of the reference samples.

    Parameters
    ----------
    spec0 : EnsembleSpec
        Initial ensemble, typically non-Gaussian
    t_grid : sequence of float
        Non-negative flow times
    samples : int
        Matrices per time
    seed : int
        Master seed
    threads : int, optional
        Worker threads (default: 1)
    detune_amount : float, optional
        Global scale (1 + d) applied to H_0 to perturb the global density
    window : tuple (E, b), optional
        Bulk window for the gap statistic

    Returns
    -------
    RelaxationTable
    """
    times = np.asarray(t_grid, dtype=float)
    if times.size == 0 or np.any(times < 0):
        raise ValueError("Time grid must be non-empty and non-negative")
    if samples < 2:
        raise ValueError(f"Relaxation needs at least two samples, got {samples}")
    reference_spec = EnsembleSpec(spec0.symmetry, spec0.n)

    def one(k: int) -> Tuple[list[np.ndarray], list[np.ndarray], np.ndarray, np.ndarray]:
        H0 = draw_sample(spec0, seed, k)
        if detune_amount:
            H0 = detune(H0, detune_amount)
        U = sample_wigner(reference_spec, seed_stream(seed, k, f"flow-noise/{spec0.n}")).entries
        values, gaps = [], []
        for t in times:
            lam = eigen(ou_interpolate(H0, U, float(t))).eigenvalues
            values.append(lam)
            gaps.append(unfold(lam, SEMICIRCLE, window).gaps)
        ref = eigen(draw_sample(reference_spec, seed, k, label="reference")).eigenvalues
        return values, gaps, ref, unfold(ref, SEMICIRCLE, window).gaps

    results = map_samples(one, samples, threads)
    ref_values = [r[2] for r in results]
    ref_gaps = [r[3] for r in results]
    pooled_ref = np.concatenate(ref_values)
    pooled_ref_gaps = np.concatenate(ref_gaps)
    table = RelaxationTable(spec0.n, samples)
    global_floor = _split_floor(ref_values)
    local_floor = _split_floor(ref_gaps)
    for i, t in enumerate(times):
        flow_values = np.concatenate([r[0][i] for r in results])
        flow_gaps = np.concatenate([r[1][i] for r in results])
        row = RelaxationRow(
            float(t),
            ks_distance(flow_values, pooled_ref),
            ks_distance(flow_gaps, pooled_ref_gaps),
            global_floor,
            local_floor,
        )
        logger.info("relaxation t = %.4g: global %.4f, local %.4f", t, row.ks_global, row.ks_local)
        table.rows.append(row)
    return table
