"""
Local Semicircle Law Experiments

Empirical checks of the local law, eigenvalue rigidity, eigenvector
delocalization, fluctuation averaging of the Schur quadratic forms Z_i and
the Helffer–Sjöstrand representation, with scaling sweeps across N.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre

from rmtlab.ensembles import EnsembleSpec, MatrixSample, draw_sample
from rmtlab.rng import map_samples, seed_stream
from rmtlab.spectral import (
    MatrixLike,
    as_matrix,
    classical_locations,
    eigen,
    green_function,
    m_sc,
    minor_resolvent,
    resolvent,
)
from rmtlab.stats import SlopeFit, fit_loglog_slope, mean_stderr, median_stderr

logger = logging.getLogger(__name__)

MINOR_SUBSAMPLE = 32
MINOR_SUBSAMPLE_ABOVE = 300


# ---------------------------------------------------------------------------
# Local law
# ---------------------------------------------------------------------------


def _check_domain(n: int, z: np.ndarray) -> None:
    if np.any(np.abs(z.real) > 5.0):
        raise ValueError(f"Spectral domain needs |E| <= 5, got max |E| = {np.abs(z.real).max()}")
    if np.any(z.imag < 1.0 / n) or np.any(z.imag > 10.0):
        raise ValueError(
            f"Spectral domain needs 1/N <= eta <= 10 (1/N = {1.0 / n:.3g}), "
            f"got eta in [{z.imag.min():.3g}, {z.imag.max():.3g}]"
        )


def local_law_errors(H: MatrixLike, z_grid: Sequence[complex]) -> np.ndarray:
    """
    Errors of one matrix against the semicircle law.

    Returns
    -------
    np.ndarray
        Shape (len(z_grid), 3): max_j |G_jj - m_sc|, max_(i != j) |G_ij|
        and |m_N - m_sc| per grid point
    """
    A, _ = as_matrix(H)
    z = np.atleast_1d(np.asarray(z_grid, dtype=complex))
    sample = resolvent(eigen(A, want_vectors=True), z, with_entries=True)
    assert sample.entries is not None
    errors = np.empty((len(z), 3))
    for k, (G, m, zz) in enumerate(zip(sample.entries, sample.m_values, z)):
        target = m_sc(zz)
        off = G - np.diag(np.diagonal(G))
        errors[k] = (
            np.max(np.abs(np.diagonal(G) - target)),
            np.max(np.abs(off)) if A.shape[0] > 1 else 0.0,
            abs(m - target),
        )
    return errors


@dataclass(frozen=True)
class LocalLawRecord:
    """Medians over samples at one (N, z)."""

    n: int
    z: complex
    diag_error: float
    offdiag_error: float
    trace_error: float
    trace_error_stderr: float
    entry_envelope: float
    trace_envelope: float
    samples: int

    @property
    def entry_ratio(self) -> float:
        return max(self.diag_error, self.offdiag_error) / self.entry_envelope

    @property
    def trace_ratio(self) -> float:
        return self.trace_error / self.trace_envelope


@dataclass
class LocalLawReport:
    """
    Local-law records per (N, z) with polylog parameters.

    `log_power` (L) sets the (log N)^L slack allowed in `ratio_growth`; `phi`
    is kept as metadata only.
    """

    records: list[LocalLawRecord] = field(default_factory=list)
    log_power: float = 1.0
    phi: float = 1.0

    def ratio_growth(self, z_index: int = 0) -> float:
        """
        Largest factor by which trace_ratio grows between consecutive N at
        one grid column, divided by the polylog slack (log N2 / log N1)^L.

        Values at or below 1 mean the error tracks its envelope.
        """
        by_n: dict[int, list[LocalLawRecord]] = {}
        for record in self.records:
            by_n.setdefault(record.n, []).append(record)
        ns = sorted(by_n)
        ratios = [by_n[n][z_index].trace_ratio for n in ns]
        growth = [
            (ratios[k + 1] / ratios[k]) / (math.log(ns[k + 1]) / math.log(ns[k])) ** self.log_power
            for k in range(len(ns) - 1)
            if ratios[k] > 0 and ns[k] > 1
        ]
        return max(growth, default=0.0)


def local_law_envelopes(n: int, z: complex, q: Optional[float] = None) -> Tuple[float, float]:
    """
    (entry envelope, trace envelope) at z.

    Entries: sqrt(Im m_sc / (N eta)) + 1/(N eta); trace: 1/(N eta). Sparse
    matrices add 1/q to both.
    """
    eta = z.imag
    entry = math.sqrt(complex(m_sc(z)).imag / (n * eta)) + 1.0 / (n * eta)
    trace = 1.0 / (n * eta)
    if q is not None:
        entry += 1.0 / q
        trace += 1.0 / q
    return entry, trace


def local_law_report(
    spec: EnsembleSpec,
    z_grid: Sequence[complex],
    samples: int,
    seed: int,
    threads: int = 1,
) -> LocalLawReport:
    """
    Monte Carlo local-law errors on a z grid.

    Parameters
    ----------
    spec : EnsembleSpec
        Matrix law
    z_grid : sequence of complex
        Points with |E| <= 5 and 1/N <= eta <= 10
    samples : int
        Number of independent matrices
    seed : int
        Master seed
    threads : int, optional
        Worker threads; results do not depend on it

    Raises
    ------
    ValueError
        For grid points outside the domain (eta < 1/N is below resolution)
    """
    z = np.atleast_1d(np.asarray(z_grid, dtype=complex))
    _check_domain(spec.n, z)
    if samples < 1:
        raise ValueError(f"Need at least one sample, got {samples}")

    errors = np.array(
        map_samples(lambda k: local_law_errors(draw_sample(spec, seed, k), z), samples, threads)
    )
    q = spec.er_params.q if spec.er_params is not None else None
    report = LocalLawReport()
    for j, zz in enumerate(z):
        trace_median, trace_se = median_stderr(errors[:, j, 2])
        entry_env, trace_env = local_law_envelopes(spec.n, complex(zz), q)
        report.records.append(
            LocalLawRecord(
                n=spec.n,
                z=complex(zz),
                diag_error=float(np.median(errors[:, j, 0])),
                offdiag_error=float(np.median(errors[:, j, 1])),
                trace_error=trace_median,
                trace_error_stderr=trace_se,
                entry_envelope=entry_env,
                trace_envelope=trace_env,
                samples=samples,
            )
        )
    logger.info("local law N=%d: %d points, %d samples", spec.n, len(z), samples)
    return report


def local_law_sweep(
    spec: EnsembleSpec,
    n_values: Sequence[int],
    z_of_n: Callable[[int], Sequence[complex]],
    samples: int,
    seed: int,
    threads: int = 1,
) -> LocalLawReport:
    """Run `local_law_report` for every N, with a grid that may depend on N."""
    merged = LocalLawReport()
    for n in n_values:
        merged.records.extend(
            local_law_report(spec.with_n(n), z_of_n(n), samples, seed, threads).records
        )
    return merged


# ---------------------------------------------------------------------------
# Rigidity and delocalization
# ---------------------------------------------------------------------------


@dataclass
class RigidityReport:
    """
    Rigidity statistics of one N.

    Attributes
    ----------
    max_scaled_deviation : np.ndarray
        Per sample max_j |lambda_j - gamma_j| N^(2/3) min(j, N-j+1)^(1/3)
    q_values : np.ndarray
        Per sample Q = (1/N) sum_j (lambda_j - gamma_j)^2
    middle_deviation : np.ndarray
        Per sample |lambda_k - gamma_k| at k = ceil(N/2)
    """

    n: int
    max_scaled_deviation: np.ndarray
    q_values: np.ndarray
    middle_deviation: np.ndarray

    @property
    def q_mean(self) -> Tuple[float, float]:
        return mean_stderr(self.q_values)

    @property
    def median_max_deviation(self) -> float:
        return float(np.median(self.max_scaled_deviation))

    @property
    def median_middle_deviation(self) -> float:
        return float(np.median(self.middle_deviation))


def rigidity_statistics(
    eigenvalues: np.ndarray, gammas: np.ndarray
) -> Tuple[float, float, float]:
    """(max_j r_j, Q, |lambda_k - gamma_k| at the middle index) of one spectrum."""
    n = len(eigenvalues)
    j = np.arange(1, n + 1)
    deviation = np.abs(eigenvalues - gammas)
    scaled = deviation * n ** (2.0 / 3.0) * np.minimum(j, n - j + 1) ** (1.0 / 3.0)
    middle = (n + 1) // 2 - 1
    return float(scaled.max()), float(np.mean(deviation**2)), float(deviation[middle])


def rigidity_report(
    spec: EnsembleSpec,
    samples: int,
    seed: int,
    threads: int = 1,
    convention: str = "midpoint",
) -> RigidityReport:
    """
    Eigenvalue deviations from the semicircle classical locations.

    The midpoint convention F(gamma_j) = (j - 1/2)/N is the default, so that
    N = 1 gives gamma_1 = 0 and Q = E lambda^2.
    """
    gammas = classical_locations(spec.n, convention=convention)
    rows = map_samples(
        lambda k: rigidity_statistics(eigen(draw_sample(spec, seed, k)).eigenvalues, gammas),
        samples,
        threads,
    )
    data = np.array(rows)
    return RigidityReport(spec.n, data[:, 0], data[:, 1], data[:, 2])


def rigidity_sweep(
    spec: EnsembleSpec, n_values: Sequence[int], samples: int, seed: int, threads: int = 1
) -> Tuple[list[RigidityReport], SlopeFit]:
    """Reports for each N and the log-log slope of mean Q against N."""
    reports = [rigidity_report(spec.with_n(n), samples, seed, threads) for n in n_values]
    fit = fit_loglog_slope(list(n_values), [r.q_mean[0] for r in reports])
    logger.info("rigidity Q slope: %s", fit)
    return reports, fit


@dataclass
class DelocalizationReport:
    """Per-sample N max_a ||u_a||_inf^2 and the smallest sup-norm seen."""

    n: int
    values: np.ndarray
    min_sup_norm_squared: float

    @property
    def median(self) -> float:
        return float(np.median(self.values))

    @property
    def envelope(self) -> float:
        return math.log(self.n) ** 2


def sup_norms_squared(H: MatrixLike) -> np.ndarray:
    """||u_a||_inf^2 for every eigenvector of H."""
    vectors = eigen(H, want_vectors=True).eigenvectors
    assert vectors is not None
    return np.max(np.abs(vectors) ** 2, axis=0)


def delocalization_report(
    spec: EnsembleSpec, samples: int, seed: int, threads: int = 1
) -> DelocalizationReport:
    """Distribution of N max_a ||u_a||_inf^2 over samples."""
    norms = map_samples(lambda k: sup_norms_squared(draw_sample(spec, seed, k)), samples, threads)
    values = np.array([spec.n * v.max() for v in norms])
    smallest = float(min(v.min() for v in norms))
    return DelocalizationReport(spec.n, values, smallest)


# ---------------------------------------------------------------------------
# Fluctuation averaging
# ---------------------------------------------------------------------------


def schur_quadratic_forms(H: MatrixLike, z: complex) -> np.ndarray:
    """
    Z_i = sum_(k,l != i) h_ik G^(i)_kl h_li - (1/N) Tr G^(i) for every i.

    Uses one resolvent: the quadratic form equals h_ii - z - 1/G_ii and
    Tr G^(i) = Tr G - (G^2)_ii / G_ii, so no minor is decomposed.
    """
    A, _ = as_matrix(H)
    n = A.shape[0]
    G = green_function(A, z)
    diagonal = np.diagonal(G)
    quadratic = np.real(np.diagonal(A)) - z - 1.0 / diagonal
    g_squared = np.einsum("ik,ki->i", G, G)
    minor_traces = np.trace(G) - g_squared / diagonal
    return quadratic - minor_traces / n


def minor_quadratic_forms(
    H: MatrixLike, z: complex, indices: Optional[Sequence[int]] = None
) -> np.ndarray:
    """Same Z_i as `schur_quadratic_forms`, computed from explicit minors."""
    A, _ = as_matrix(H)
    n = A.shape[0]
    chosen = range(n) if indices is None else indices
    values = []
    for i in chosen:
        minor = minor_resolvent(A, i, z)
        assert minor.entries is not None and minor.labels is not None
        h = A[minor.labels, i]
        G_minor = minor.entries[0]
        values.append(h.conj() @ G_minor @ h - np.trace(G_minor) / n)
    return np.array(values)


@dataclass(frozen=True)
class FluctuationRecord:
    """
    Averaged and individual sizes of Z_i at one (N, z).

    A = |(1/N) sum_i Z_i| and B = (1/N) sum_i |Z_i| per sample.
    """

    n: int
    z: complex
    averaged: np.ndarray
    individual: np.ndarray
    z_mean: complex
    z_mean_stderr: float

    @property
    def median_averaged(self) -> float:
        return float(np.median(self.averaged))

    @property
    def median_individual(self) -> float:
        return float(np.median(self.individual))


def fluctuation_averaging_report(
    spec: EnsembleSpec,
    z: complex,
    samples: int,
    seed: int,
    threads: int = 1,
    method: str = "schur",
) -> FluctuationRecord:
    """
    Statistics of the Z_i at z.

    `method="minors"` decomposes every minor, subsampling 32 random indices
    per sample above N = 300; `"schur"` reads all Z_i from one resolvent.
    """
    if method not in ("schur", "minors"):
        raise ValueError(f"Unknown method '{method}', expected 'schur' or 'minors'")
    if complex(z).imag < 1.0 / spec.n:
        raise ValueError(f"Need eta >= 1/N, got eta = {complex(z).imag}")

    def one(k: int) -> np.ndarray:
        H = draw_sample(spec, seed, k)
        if method == "schur":
            return schur_quadratic_forms(H, z)
        indices = None
        if spec.n > MINOR_SUBSAMPLE_ABOVE:
            picker = seed_stream(seed, k, "minor-index")
            indices = picker.choice(spec.n, MINOR_SUBSAMPLE, replace=False)
        return minor_quadratic_forms(H, z, indices)

    forms = map_samples(one, samples, threads)
    averaged = np.array([abs(np.mean(Z)) for Z in forms])
    individual = np.array([np.mean(np.abs(Z)) for Z in forms])
    # per-sample means are independent, the Z_i within a sample are not
    means = np.array([np.mean(Z) for Z in forms])
    if samples > 1:
        spread = math.sqrt(float(np.sum(np.abs(means - means.mean()) ** 2)) / (samples - 1))
        stderr = spread / math.sqrt(samples)
    else:
        stderr = float("nan")
    return FluctuationRecord(spec.n, complex(z), averaged, individual, complex(means.mean()), stderr)


def fluctuation_averaging_sweep(
    spec: EnsembleSpec,
    n_values: Sequence[int],
    eta_of_n: Callable[[int], float],
    samples: int,
    seed: int,
    energy: float = 0.0,
    threads: int = 1,
) -> Tuple[list[FluctuationRecord], SlopeFit, SlopeFit]:
    """
    Records across N and the slopes of median A and median B against N eta.

    Expected slopes are about -1 for A and -1/2 for B.
    """
    records = [
        fluctuation_averaging_report(
            spec.with_n(n), complex(energy, eta_of_n(n)), samples, seed, threads
        )
        for n in n_values
    ]
    scale = [r.n * r.z.imag for r in records]
    slope_a = fit_loglog_slope(scale, [r.median_averaged for r in records])
    slope_b = fit_loglog_slope(scale, [r.median_individual for r in records])
    logger.info("fluctuation averaging: A %s, B %s", slope_a, slope_b)
    return records, slope_a, slope_b


@dataclass(frozen=True)
class SecondMomentCheck:
    """Monte Carlo E_i |Z_i|^2 (row i resampled) against the exact expression."""

    monte_carlo: float
    stderr: float
    exact: float
    resamples: int

    @property
    def z_score(self) -> float:
        return abs(self.monte_carlo - self.exact) / self.stderr


def z_second_moment_exact(G_minor: np.ndarray, n: int, m4: float, complex_entries: bool) -> float:
    """
    Conditional second moment of Z_i given the minor.

    Real: (2/N^2) sum_(k != l) |G_kl|^2 + (m4 - 1)/N^2 sum_k |G_kk|^2.
    Complex with E h^2 = 0: the first factor is 1/N^2 and the diagonal term
    uses E|v|^4 = (m4 + 1)/2 of v = (x + i y)/sqrt(2).
    """
    abs2 = np.abs(G_minor) ** 2
    diagonal = float(np.sum(np.diagonal(abs2)))
    off = float(np.sum(abs2)) - diagonal
    if complex_entries:
        return (off + ((m4 + 1.0) / 2.0 - 1.0) * diagonal) / n**2
    return (2.0 * off + (m4 - 1.0) * diagonal) / n**2


def z_second_moment_check(
    H: MatrixSample,
    i: int,
    z: complex,
    resamples: int,
    rng: np.random.Generator,
) -> SecondMomentCheck:
    """
    Resample row i of H and compare the mean of |Z_i|^2 with the exact formula.

    Only flat profiles up to N = 60 with imag_fraction 1/2 are supported.
    """
    spec = H.spec
    n = H.n
    if n > 60:
        raise ValueError(f"Second-moment check is limited to N <= 60, got {n}")
    if spec.variance_profile.kind != "flat" or spec.er_params is not None:
        raise ValueError("Second-moment check needs a flat Wigner profile")
    if spec.symmetry == "complex_hermitian" and spec.imag_fraction != 0.5:
        raise ValueError("Complex second-moment check needs imag_fraction = 1/2")

    minor = minor_resolvent(H, i, z)
    assert minor.entries is not None
    G_minor = minor.entries[0]
    trace_term = np.trace(G_minor) / n
    complex_entries = spec.symmetry == "complex_hermitian"

    x = spec.entries.sample(rng, (resamples, n - 1))
    if complex_entries:
        y = spec.entries.sample(rng, (resamples, n - 1))
        column = (x + 1j * y) / math.sqrt(2.0 * n)
    else:
        column = x / math.sqrt(n)
    forms = np.einsum("rk,kl,rl->r", column.conj(), G_minor, column) - trace_term
    squares = np.abs(forms) ** 2
    mean, se = mean_stderr(squares)
    exact = z_second_moment_exact(G_minor, n, spec.entries.moments[3], complex_entries)
    return SecondMomentCheck(mean, se, exact, resamples)


# ---------------------------------------------------------------------------
# Helffer–Sjöstrand
# ---------------------------------------------------------------------------


def _smooth_step(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """C-infinity step from 0 (t <= 0) to 1 (t >= 1) and its derivative."""
    t = np.asarray(t, dtype=float)
    inner = (t > 0) & (t < 1)
    tc = np.where(inner, t, 0.5)
    a = np.exp(-1.0 / tc)
    b = np.exp(-1.0 / (1.0 - tc))
    step = np.where(inner, a / (a + b), np.where(t >= 1, 1.0, 0.0))
    da = a / tc**2
    db = -b / (1.0 - tc) ** 2
    derivative = np.where(inner, (da * (a + b) - a * (da + db)) / (a + b) ** 2, 0.0)
    return step, derivative


@dataclass(frozen=True)
class Cutoff:
    """Even cutoff chi with chi = 1 on [-1/2, 1/2] and support in [-1, 1]."""

    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]


def smooth_cutoff() -> Cutoff:
    """chi(y) = 1 - step(2|y| - 1) built from exp(-1/t)."""

    def value(y: np.ndarray) -> np.ndarray:
        return 1.0 - _smooth_step(2.0 * np.abs(y) - 1.0)[0]

    def derivative(y: np.ndarray) -> np.ndarray:
        return -2.0 * np.sign(y) * _smooth_step(2.0 * np.abs(y) - 1.0)[1]

    return Cutoff(value, derivative)


@dataclass(frozen=True)
class CompactFunction:
    """Twice differentiable f with its derivatives and compact support."""

    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]
    support: Tuple[float, float]


def bump_function(center: float = 0.0, width: float = 1.0) -> CompactFunction:
    """C^2 bump (1 - u^2)^3 with u = (x - center)/width on |u| <= 1."""

    def u_of(x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - center) / width

    def f(x: np.ndarray) -> np.ndarray:
        u = u_of(x)
        return np.where(np.abs(u) < 1, (1 - u**2) ** 3, 0.0)

    def df(x: np.ndarray) -> np.ndarray:
        u = u_of(x)
        return np.where(np.abs(u) < 1, -6 * u * (1 - u**2) ** 2 / width, 0.0)

    def d2f(x: np.ndarray) -> np.ndarray:
        u = u_of(x)
        inner = -6 * (1 - u**2) ** 2 + 24 * u**2 * (1 - u**2)
        return np.where(np.abs(u) < 1, inner / width**2, 0.0)

    return CompactFunction(f, df, d2f, (center - width, center + width))


def zero_function(support: Tuple[float, float] = (-1.0, 1.0)) -> CompactFunction:
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    return CompactFunction(zero, zero, zero, support)


@dataclass(frozen=True)
class HSResult:
    """Helffer–Sjöstrand quadrature value and its distance to f(lambda)."""

    value: float
    target: float
    residual: float
    nodes: int
    change: float


def hs_integral(fn: CompactFunction, lam: float, chi: Cutoff, n: int) -> float:
    """(1/2pi) times the y > 0 integral, on an n x n Gauss–Legendre grid per panel."""
    nodes, weights = legendre.leggauss(n)
    a, b = fn.support
    x_breaks = [a, lam, b] if a < lam < b else [a, b]
    total = 0.0
    for x0, x1 in zip(x_breaks[:-1], x_breaks[1:]):
        x = 0.5 * (x1 - x0) * nodes + 0.5 * (x1 + x0)
        wx = 0.5 * (x1 - x0) * weights
        f, df, d2f = fn.f(x), fn.df(x), fn.d2f(x)
        for y0, y1 in ((0.0, 0.5), (0.5, 1.0)):
            y = 0.5 * (y1 - y0) * nodes + 0.5 * (y1 + y0)
            wy = 0.5 * (y1 - y0) * weights
            X, Y = np.meshgrid(x, y, indexing="ij")
            d = lam - X
            numerator = -2.0 * Y**2 * d2f[:, None] * chi.value(Y) - 2.0 * Y * chi.derivative(Y) * (
                f[:, None] + d * df[:, None]
            )
            integrand = numerator / (d**2 + Y**2)
            total += float(wx @ integrand @ wy)
    return total / (2.0 * math.pi)


def hs_identity_check(
    fn: CompactFunction,
    lam: float,
    chi: Optional[Cutoff] = None,
    tol: float = 1e-8,
    n_start: int = 25,
    n_max: int = 1600,
) -> HSResult:
    """
    Evaluate the Helffer–Sjöstrand integral for f at lambda and compare with f(lambda).

    With the almost-analytic extension (f(x) + i y f'(x)) chi(y) the formula
    reduces, after pairing y and -y, to the real integral

        (1/2pi) int int_(y>0) [-2 y^2 f''(x) chi(y) - 2 y chi'(y) (f(x) + (lambda - x) f'(x))]
                               / ((lambda - x)^2 + y^2) dx dy

    whose integrand is bounded. The x range is split at lambda, the y range
    at 1/2, and the per-panel Gauss–Legendre order doubles until two
    consecutive values differ by less than `tol`.

    Raises
    ------
    RuntimeError
        If `n_max` is reached first; the message carries the grid sizes and
        the last change
    """
    chi = chi if chi is not None else smooth_cutoff()
    n = n_start
    previous = hs_integral(fn, lam, chi, n)
    history = [(n, previous)]
    while n < n_max:
        n *= 2
        current = hs_integral(fn, lam, chi, n)
        history.append((n, current))
        change = abs(current - previous)
        if change < tol:
            target = float(fn.f(np.array([lam]))[0])
            logger.debug("HS quadrature converged at %d nodes per panel axis", n)
            return HSResult(current, target, abs(current - target), n, change)
        previous = current
    grid = ", ".join(f"{k}: {v:.3e}" for k, v in history)
    raise RuntimeError(
        f"Helffer–Sjöstrand quadrature did not converge to {tol:g} by n = {n_max} per axis "
        f"(values by n: {grid})"
    )
