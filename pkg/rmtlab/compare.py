"""
Green Function Comparison

Lindeberg replacement of a Wigner matrix with entry law v by one with entry
law w, one index pair at a time, while tracking (1/N) Tr G(z). The resolvent
is carried through the swaps by exact rank-2 (Woodbury) updates and
refreshed by full inversion every N swaps. The changes the rank-2 chain
produces between refreshes must telescope to the directly inverted difference
between the pure-v and pure-w matrices.

Only the first few moments of v and w should matter: a pair matching four
moments gives a smaller endpoint difference than a pair matching three.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from rmtlab.dbm import moment_drift
from rmtlab.ensembles import SYMMETRIES, EntryDistribution
from rmtlab.rng import map_samples, seed_stream
from rmtlab.spectral import green_function
from rmtlab.stats import SlopeFit, fit_loglog_slope

logger = logging.getLogger(__name__)

COUPLINGS = ("quantile", "independent")
SCHEDULES = ("lexicographic", "random")
MAX_SWAP_N = 400
ETA_EXPONENT_FLOOR = -1.2
DEGENERATE_TOL = 1e-12
MATCH_TOL = 1e-12


# ---------------------------------------------------------------------------
# Moment matching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentGap:
    """
    Differences |E v^s - E w^s| for s = 1..4.

    Attributes
    ----------
    gaps : tuple of float
        Moment differences, s = 1..4
    t : float, optional
        OU flow time when the pair is (v(0), v(t))
    """

    gaps: Tuple[float, float, float, float]
    t: Optional[float] = None

    @property
    def matching_order(self) -> int:
        """Number of leading moments that agree (2, 3 or 4)."""
        order = 0
        for gap in self.gaps:
            if gap > MATCH_TOL:
                break
            order += 1
        return order

    def satisfies(self, n: int, delta: float) -> bool:
        """Whether |E v^s - E w^s| <= N^(-delta - 2 + s/2) holds for every s."""
        return all(gap <= n ** (-delta - 2.0 + s / 2.0) for s, gap in enumerate(self.gaps, start=1))

    def __str__(self) -> str:
        body = ", ".join(f"{g:.3e}" for g in self.gaps)
        return f"moment gaps ({body}): {self.matching_order} moments match"


def _check_standardized(dist: EntryDistribution) -> Tuple[float, float, float, float]:
    moments = dist.moments
    if abs(moments[0]) > 1e-9 or abs(moments[1] - 1.0) > 1e-9:
        raise ValueError(
            f"Entry law '{dist.kind}' must be standardized, got mean {moments[0]}, variance {moments[1]}"
        )
    return moments


def moment_gap(dist_v: EntryDistribution, dist_w: EntryDistribution) -> MomentGap:
    """
    Exact first-four-moment differences of two standardized entry laws.

    Examples
    --------
    >>> from rmtlab.ensembles import BERNOULLI, GAUSSIAN
    >>> gap = moment_gap(GAUSSIAN, BERNOULLI)
    >>> gap.gaps, gap.matching_order
    ((0.0, 0.0, 0.0, 2.0), 3)
    """
    mv = _check_standardized(dist_v)
    mw = _check_standardized(dist_w)
    gaps = tuple(abs(a - b) for a, b in zip(mv, mw))
    return MomentGap(gaps)  # type: ignore[arg-type]


def ou_matching_check(dist0: EntryDistribution, t: float) -> MomentGap:
    """
    Moment gaps between the entry law of H_0 and that of the OU flow H_t.

    The first two moments never move; higher gaps are the exact drifts of
    `rmtlab.dbm.moment_drift`. At t = 0 every gap vanishes.

    Raises
    ------
    ValueError
        If t < 0 or the law is not standardized
    """
    if t < 0:
        raise ValueError(f"Flow time must be non-negative, got t = {t}")
    drifts = moment_drift(dist0, t)
    return MomentGap(tuple(d.drift for d in drifts), t)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Resolvent updates
# ---------------------------------------------------------------------------


def rank2_update(
    G: np.ndarray, i: int, j: int, delta: complex, tol: float = DEGENERATE_TOL
) -> Optional[np.ndarray]:
    """
    Resolvent after the self-adjoint change h_ij += delta, h_ji += conj(delta).

    With U = [e_i, e_j] and C = [[0, delta], [conj(delta), 0]] (or C = [delta]
    when i = j) the Woodbury identity gives

        G' = G - G U C (I + U^T G U C)^-1 U^T G

    at O(N^2) cost.

    Parameters
    ----------
    G : np.ndarray
        Current resolvent (H - z)^-1
    i, j : int
        Changed position; i = j changes a diagonal entry (delta real)
    delta : complex
        Change of h_ij
    tol : float, optional
        Smallest accepted |det(I + U^T G U C)|

    Returns
    -------
    np.ndarray or None
        Updated resolvent, or None when the update is degenerate and G must
        be recomputed by inversion
    """
    if i == j:
        idx = [i]
        C = np.array([[complex(delta).real]], dtype=complex)
    else:
        idx = [i, j]
        C = np.array([[0.0, delta], [np.conj(delta), 0.0]], dtype=complex)

    S = G[np.ix_(idx, idx)]
    M = np.eye(len(idx)) + S @ C
    if abs(np.linalg.det(M)) < tol:
        return None
    left = G[:, idx] @ C @ np.linalg.inv(M)
    return G - left @ G[idx, :]


def swap_schedule(n: int, kind: str = "lexicographic", rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Bijective ordering of the index pairs (i, j) with i <= j.

    Returns an array of shape (N(N+1)/2, 2); "lexicographic" runs row by row,
    "random" is a permutation of it drawn from `rng`.
    """
    if kind not in SCHEDULES:
        raise ValueError(f"Unknown schedule '{kind}', expected one of {SCHEDULES}")
    rows, cols = np.triu_indices(n)
    pairs = np.column_stack([rows, cols])
    if kind == "random":
        if rng is None:
            raise ValueError("A random schedule needs a random stream")
        pairs = pairs[rng.permutation(len(pairs))]
    return pairs


def coupled_matrices(
    dist_v: EntryDistribution,
    dist_w: EntryDistribution,
    n: int,
    rng: np.random.Generator,
    symmetry: str = "real_symmetric",
    coupling: str = "quantile",
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw H^(v) and H^(w) with flat variance 1/N.

    Under "quantile" coupling both matrices share the same uniforms, so
    v_ij = F_v^-1(U_ij) and w_ij = F_w^-1(U_ij); "independent" draws fresh
    uniforms for w.
    """
    if symmetry not in SYMMETRIES:
        raise ValueError(f"Unknown symmetry '{symmetry}', expected one of {SYMMETRIES}")
    if coupling not in COUPLINGS:
        raise ValueError(f"Unknown coupling '{coupling}', expected one of {COUPLINGS}")
    parts = 2 if symmetry == "complex_hermitian" else 1
    uniforms_v = rng.random((parts, n, n))
    uniforms_w = uniforms_v if coupling == "quantile" else rng.random((parts, n, n))

    def build(dist: EntryDistribution, uniforms: np.ndarray) -> np.ndarray:
        x = dist.quantile(uniforms[0])
        off = x + 1j * dist.quantile(uniforms[1]) if parts == 2 else x
        upper = np.triu(off / math.sqrt(2.0) if parts == 2 else off, k=1)
        H = upper + upper.conj().T + np.diag(np.diagonal(x))
        return H / math.sqrt(n)

    return build(dist_v, uniforms_v), build(dist_w, uniforms_w)


# ---------------------------------------------------------------------------
# Swap experiment
# ---------------------------------------------------------------------------


def _complex_mean_stderr(values: np.ndarray) -> Tuple[complex, float]:
    values = np.asarray(values, dtype=complex)
    mean = complex(values.mean())
    if values.size < 2:
        return mean, float("nan")
    spread = np.var(values.real, ddof=1) + np.var(values.imag, ddof=1)
    return mean, float(math.sqrt(spread / values.size))


@dataclass
class SwapTrace:
    """
    Checkpointed resolvent observables along the swap sequence.

    Attributes
    ----------
    n : int
        Matrix dimension
    z : complex
        Spectral parameter of the tracked (1/N) Tr G
    schedule : np.ndarray
        Pair ordering, shape (N(N+1)/2, 2)
    checkpoints : np.ndarray
        Swap counts at which G was refreshed; first 0, last N(N+1)/2
    values : np.ndarray
        (1/N) Tr G(z) from a fresh inversion at each checkpoint, shape
        (samples, checkpoints)
    chain_values : np.ndarray
        (1/N) Tr G(z) carried by the rank-2 updates up to each checkpoint,
        before the refresh; same shape as values
    z2 : complex, optional
        Second spectral parameter of the product observable
    products : np.ndarray, optional
        m(z) m(z2) at each checkpoint
    update_drift : float
        Largest |m_updated - m_refreshed| seen at a refresh
    recomputes : int
        Degenerate rank-2 updates replaced by inversion
    """

    n: int
    z: complex
    schedule: np.ndarray = field(repr=False)
    checkpoints: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    chain_values: np.ndarray = field(repr=False)
    symmetry: str = "real_symmetric"
    coupling: str = "quantile"
    z2: Optional[complex] = None
    products: Optional[np.ndarray] = field(default=None, repr=False)
    update_drift: float = 0.0
    recomputes: int = 0

    @property
    def samples(self) -> int:
        return int(self.values.shape[0])

    @property
    def endpoint_v(self) -> Tuple[complex, float]:
        """E (1/N) Tr G^(v)(z) with its standard error."""
        return _complex_mean_stderr(self.values[:, 0])

    @property
    def endpoint_w(self) -> Tuple[complex, float]:
        return _complex_mean_stderr(self.values[:, -1])

    def difference(self) -> Tuple[float, float]:
        """|E m^(w) - E m^(v)| and its standard error (paired samples)."""
        mean, se = _complex_mean_stderr(self.values[:, -1] - self.values[:, 0])
        return abs(mean), se

    def product_difference(self) -> Tuple[float, float]:
        """Same for E m(z) m(z2)."""
        if self.products is None:
            raise ValueError("No second spectral parameter was tracked")
        mean, se = _complex_mean_stderr(self.products[:, -1] - self.products[:, 0])
        return abs(mean), se

    @property
    def increments(self) -> np.ndarray:
        """Per-sample change of m produced by the rank-2 updates of each segment."""
        return self.chain_values[:, 1:] - self.values[:, :-1]

    @property
    def telescoping_error(self) -> float:
        """Largest per-sample |sum of update increments - (m^(w) - m^(v))| with both ends inverted."""
        worst = 0.0
        for row, inc in zip(self.values, self.increments):
            total = complex(math.fsum(inc.real), math.fsum(inc.imag))
            worst = max(worst, abs(total - (row[-1] - row[0])))
        return worst

    def profile(self) -> list[Tuple[int, float, float]]:
        """(checkpoint, |E cumulative change|, stderr) rows."""
        rows = []
        for c, count in enumerate(self.checkpoints):
            mean, se = _complex_mean_stderr(self.values[:, c] - self.values[:, 0])
            rows.append((int(count), abs(mean), se))
        return rows

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["checkpoint", "cumulative_delta", "stderr"])
            for count, delta, se in self.profile():
                writer.writerow([count, f"{delta:.12g}", f"{se:.12g}"])

    def __str__(self) -> str:
        diff, se = self.difference()
        return (
            f"N = {self.n}, z = {self.z:.4g}: |dE m| = {diff:.4e} +- {se:.2e} "
            f"({self.samples} samples, drift {self.update_drift:.1e})"
        )


def _trace_mean(G: np.ndarray) -> complex:
    return complex(np.trace(G)) / G.shape[0]


def _swap_one(
    hv: np.ndarray, hw: np.ndarray, z_values: Sequence[complex], schedule: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, float, int]:
    """
    Run the full swap sequence for one sample.

    Returns m per checkpoint per z after the refresh and before it (as carried
    by the updates), the largest refresh drift and the number of recomputes.
    """
    n = hv.shape[0]
    H = np.array(hv, dtype=complex)
    greens = [green_function(H, z) for z in z_values]
    records = [[_trace_mean(G) for G in greens]]
    chained = [list(records[0])]
    drift = 0.0
    recomputes = 0

    for count, (i, j) in enumerate(schedule, start=1):
        delta = hw[i, j] - H[i, j]
        H[i, j] = hw[i, j]
        H[j, i] = hw[j, i]
        if delta != 0:
            for k, z in enumerate(z_values):
                updated = rank2_update(greens[k], int(i), int(j), complex(delta))
                if updated is None:
                    logger.debug("degenerate update at (%d, %d), recomputing G", i, j)
                    updated = green_function(H, z)
                    recomputes += 1
                greens[k] = updated

        if count % n == 0 or count == len(schedule):
            chained.append([_trace_mean(G) for G in greens])
            refreshed = [green_function(H, z) for z in z_values]
            for old, new in zip(greens, refreshed):
                drift = max(drift, abs(_trace_mean(old) - _trace_mean(new)))
            greens = refreshed
            records.append([_trace_mean(G) for G in greens])

    return np.array(records, dtype=complex), np.array(chained, dtype=complex), drift, recomputes


def swap_experiment(
    dist_v: EntryDistribution,
    dist_w: EntryDistribution,
    n: int,
    z: complex,
    samples: int,
    seed: int,
    threads: int = 1,
    z2: Optional[complex] = None,
    symmetry: str = "real_symmetric",
    coupling: str = "quantile",
    schedule: str = "lexicographic",
) -> SwapTrace:
    """
    Swap H^(v) into H^(w) entry by entry and track E (1/N) Tr G(z).

    Parameters
    ----------
    dist_v, dist_w : EntryDistribution
        Standardized entry laws of the start and end ensembles
    n : int
        Matrix dimension, N <= 400
    z : complex
        Spectral parameter with Im z >= N^-1.2
    samples : int
        Monte Carlo samples (at least two)
    seed : int
        Master seed
    threads : int, optional
        Worker threads; samples are independent
    z2 : complex, optional
        Second parameter for the product observable E m(z) m(z2)
    symmetry : str, optional
        "real_symmetric" or "complex_hermitian"
    coupling : str, optional
        "quantile" (common uniforms) or "independent"
    schedule : str, optional
        "lexicographic" or "random" pair ordering

    Returns
    -------
    SwapTrace

    Raises
    ------
    ValueError
        If N > 400, Im z < N^-1.2, fewer than two samples, or a law is not
        standardized
    """
    if not 1 <= n <= MAX_SWAP_N:
        raise ValueError(f"Swap experiments need 1 <= N <= {MAX_SWAP_N}, got N = {n}")
    for point in (z, z2):
        if point is not None and complex(point).imag < n**ETA_EXPONENT_FLOOR:
            raise ValueError(f"Swap experiments need Im z >= N^-1.2 = {n**ETA_EXPONENT_FLOOR:.3g}, got z = {point}")
    if samples < 2:
        raise ValueError(f"Swap experiments need at least two samples, got {samples}")
    _check_standardized(dist_v)
    _check_standardized(dist_w)

    pairs = swap_schedule(n, schedule, seed_stream(seed, 0, f"schedule/{n}"))
    z_values = [complex(z)] if z2 is None else [complex(z), complex(z2)]

    def one(k: int) -> Tuple[np.ndarray, np.ndarray, float, int]:
        rng = seed_stream(seed, k, f"compare/{n}")
        hv, hw = coupled_matrices(dist_v, dist_w, n, rng, symmetry, coupling)
        return _swap_one(hv, hw, z_values, pairs)

    results = map_samples(one, samples, threads)
    stacked = np.stack([r[0] for r in results])  # (samples, checkpoints, len(z_values))
    chained = np.stack([r[1] for r in results])
    checkpoints = np.unique(np.append(np.arange(0, len(pairs) + 1, n), len(pairs)))
    products = stacked[:, :, 0] * stacked[:, :, 1] if z2 is not None else None

    trace = SwapTrace(
        n=n,
        z=complex(z),
        schedule=pairs,
        checkpoints=checkpoints,
        values=stacked[:, :, 0],
        chain_values=chained[:, :, 0],
        symmetry=symmetry,
        coupling=coupling,
        z2=None if z2 is None else complex(z2),
        products=products,
        update_drift=max(r[2] for r in results),
        recomputes=sum(r[3] for r in results),
    )
    logger.info("swap %s vs %s: %s", dist_v.kind, dist_w.kind, trace)
    return trace


def comparison_decay(
    dist_v: EntryDistribution,
    dist_w: EntryDistribution,
    n_values: Sequence[int],
    samples: int,
    seed: int,
    threads: int = 1,
    energy: float = 0.0,
    eta_exponent: float = -1.0,
    **kwargs: Any,
) -> Tuple[list[SwapTrace], SlopeFit]:
    """
    Endpoint difference across N at z = E + i N^eta_exponent, with its log-log slope.

    Extra keyword arguments go to `swap_experiment`. Differences that
    vanish exactly (identical laws under quantile coupling) are floored at
    1e-300 before the fit.
    """
    if len(n_values) < 2:
        raise ValueError("A decay fit needs at least two values of N")
    traces = []
    for n in n_values:
        z = complex(energy, n**eta_exponent)
        traces.append(swap_experiment(dist_v, dist_w, n, z, samples, seed, threads, **kwargs))
    diffs = [max(t.difference()[0], 1e-300) for t in traces]
    return traces, fit_loglog_slope(list(n_values), diffs)


def compare_differences(better: SwapTrace, worse: SwapTrace, confidence: float = 0.95) -> Tuple[float, bool]:
    """
    One-sided test of |dE m(better)| <= |dE m(worse)|.

    Returns the z statistic (difference over combined standard error) and
    whether it stays below the one-sided normal quantile.
    """
    a, se_a = better.difference()
    b, se_b = worse.difference()
    scale = math.hypot(se_a, se_b)
    statistic = (a - b) / scale if scale > 0 else (0.0 if a <= b else math.inf)
    return statistic, statistic <= float(stats.norm.ppf(confidence))
