"""
Spectral Statistics

Unfolding, gap distributions, Wigner surmise, averaged two-point
correlations, edge statistics, distribution distances and the regression
helpers used by the scaling reports.
"""

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special, stats

from rmtlab.spectral import SEMICIRCLE, Spectrum, SpectralLaw

logger = logging.getLogger(__name__)

# mean of min(s_i, s_i+1) / max(s_i, s_i+1)
GAP_RATIO_POISSON = 2.0 * math.log(2.0) - 1.0
GAP_RATIO_GOE = 0.5307
GAP_RATIO_GUE = 0.5996

SpectrumLike = Union[Spectrum, np.ndarray, Sequence[float]]


def _eigenvalues(spectrum: SpectrumLike) -> np.ndarray:
    if isinstance(spectrum, Spectrum):
        return spectrum.eigenvalues
    values = np.sort(np.asarray(spectrum, dtype=float))
    if values.ndim != 1:
        raise ValueError("A spectrum must be a one-dimensional array")
    return values


class ScaledLaw:
    """Law of c X for X distributed according to `law`."""

    def __init__(self, law: SpectralLaw, scale: float) -> None:
        if scale <= 0:
            raise ValueError(f"Scale must be positive, got {scale}")
        self.law = law
        self.scale = scale

    @property
    def support(self) -> Tuple[float, float]:
        a, b = self.law.support
        return (a * self.scale, b * self.scale)

    def density(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.law.density(np.asarray(x) / self.scale)) / self.scale

    def cdf(self, x: float) -> float:
        return self.law.cdf(x / self.scale)


class UniformLaw:
    """Uniform density on [a, b], the unfolding law of Poisson spectra."""

    def __init__(self, a: float = -1.0, b: float = 1.0) -> None:
        if not b > a:
            raise ValueError(f"Empty interval [{a}, {b}]")
        self.a = a
        self.b = b

    @property
    def support(self) -> Tuple[float, float]:
        return (self.a, self.b)

    def density(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)

    def cdf(self, x: float) -> float:
        return float(np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0))


def poisson_spectrum(n: int, rng: np.random.Generator, law: UniformLaw = UniformLaw()) -> np.ndarray:
    """N iid uniform points, sorted: a spectrum without level repulsion."""
    return np.sort(rng.uniform(law.a, law.b, n))


@dataclass(frozen=True)
class UnfoldedGaps:
    """
    Unfolded spacings s_i = N rho(midpoint) (lambda_(i+1) - lambda_i) in a window.

    Attributes
    ----------
    gaps : np.ndarray
        Non-negative unfolded spacings, pooled over samples
    window : tuple (E, b)
        Spectral window [E - b, E + b]
    law : SpectralLaw
        Density used for the unfolding
    """

    gaps: np.ndarray = field(repr=False)
    window: Tuple[float, float]
    law: SpectralLaw = SEMICIRCLE

    @property
    def mean(self) -> float:
        return float(np.mean(self.gaps)) if len(self.gaps) else float("nan")

    def __len__(self) -> int:
        return int(len(self.gaps))


def _check_bulk_window(law: SpectralLaw, window: Tuple[float, float], margin: float = 0.1) -> None:
    E, b = window
    left, right = law.support
    if b <= 0:
        raise ValueError(f"Window half-width must be positive, got {b}")
    if E - b <= left + margin or E + b >= right - margin:
        raise ValueError(
            f"Window [{E - b:.4g}, {E + b:.4g}] is not inside the bulk "
            f"({left + margin:.4g}, {right - margin:.4g})"
        )


def unfold(
    spectrum: SpectrumLike,
    law: SpectralLaw = SEMICIRCLE,
    window: Tuple[float, float] = (0.0, 0.5),
) -> UnfoldedGaps:
    """
    Spacings of consecutive eigenvalues inside a bulk window, in units of the mean spacing.

    Parameters
    ----------
    spectrum : Spectrum or array
        Eigenvalues of one sample
    law : SpectralLaw, optional
        Analytic equilibrium density (default: semicircle)
    window : tuple (E, b), optional
        Window [E - b, E + b], required to sit 0.1 inside the support

    Returns
    -------
    UnfoldedGaps

    Raises
    ------
    ValueError
        If the window leaves the bulk or contains fewer than two eigenvalues

    Examples
    --------
    >>> from rmtlab.spectral import classical_locations
    >>> gaps = unfold(classical_locations(1000), window=(0.0, 0.5))
    >>> bool(abs(gaps.mean - 1.0) < 0.02)
    True
    """
    _check_bulk_window(law, window)
    values = _eigenvalues(spectrum)
    n = len(values)
    E, b = window
    inside = values[(values >= E - b) & (values <= E + b)]
    if len(inside) < 2:
        raise ValueError(f"Empty window: {len(inside)} eigenvalues in [{E - b:.4g}, {E + b:.4g}]")

    midpoints = 0.5 * (inside[1:] + inside[:-1])
    gaps = n * np.asarray(law.density(midpoints)) * np.diff(inside)
    return UnfoldedGaps(gaps, (E, b), law)


def pool_gaps(parts: Iterable[UnfoldedGaps]) -> UnfoldedGaps:
    """Concatenate unfolded gaps of several samples (same window)."""
    parts = list(parts)
    if not parts:
        raise ValueError("Nothing to pool")
    return UnfoldedGaps(np.concatenate([p.gaps for p in parts]), parts[0].window, parts[0].law)


@dataclass(frozen=True)
class GapHistogram:
    """Density-normalized histogram with Poisson error bars."""

    edges: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    count: int

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["bin_left", "bin_right", "density", "stderr"])
            for left, right, d, e in zip(self.edges[:-1], self.edges[1:], self.density, self.stderr):
                writer.writerow([f"{left:.12g}", f"{right:.12g}", f"{d:.12g}", f"{e:.12g}"])


MIN_HISTOGRAM_GAPS = 500


def gap_histogram(gaps: UnfoldedGaps, bins: int = 40, upper: float = 4.0) -> GapHistogram:
    """
    Histogram of pooled unfolded gaps, normalized to a probability density.

    The range is [0, max(upper, largest gap)] so that every gap is counted and
    the density integrates to 1.

    Raises
    ------
    ValueError
        With fewer than 500 gaps
    """
    if len(gaps) < MIN_HISTOGRAM_GAPS:
        raise ValueError(
            f"Too few gaps for a histogram: {len(gaps)} < {MIN_HISTOGRAM_GAPS}"
        )
    if bins < 1:
        raise ValueError(f"Number of bins must be positive, got {bins}")

    top = max(upper, float(np.max(gaps.gaps)))
    counts, edges = np.histogram(gaps.gaps, bins=bins, range=(0.0, top))
    total = counts.sum()
    widths = np.diff(edges)
    density = counts / (total * widths)
    stderr = np.sqrt(counts) / (total * widths)
    return GapHistogram(edges, density, stderr, int(total))


def wigner_surmise_pdf(s: Union[float, np.ndarray], beta_class: int = 1) -> Union[float, np.ndarray]:
    """
    Wigner surmise for the nearest-neighbour spacing density.

    Parameters
    ----------
    s : float or np.ndarray
        Spacings (mean one), s >= 0
    beta_class : int, optional
        1: (pi s / 2) exp(-pi s^2 / 4); 2: (32/pi^2) s^2 exp(-4 s^2 / pi)

    Raises
    ------
    ValueError
        For negative spacings or an unknown symmetry class

    Examples
    --------
    >>> float(wigner_surmise_pdf(0.0))
    0.0
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("Spacings must be non-negative")
    if beta_class == 1:
        p = 0.5 * math.pi * s_arr * np.exp(-0.25 * math.pi * s_arr**2)
    elif beta_class == 2:
        p = (32.0 / math.pi**2) * s_arr**2 * np.exp(-4.0 * s_arr**2 / math.pi)
    else:
        raise ValueError(f"Wigner surmise is implemented for beta_class 1 and 2, got {beta_class}")
    return float(p) if p.ndim == 0 else p


def wigner_surmise_cdf(s: Union[float, np.ndarray], beta_class: int = 1) -> Union[float, np.ndarray]:
    """Closed-form CDF of `wigner_surmise_pdf`."""
    s_arr = np.maximum(np.asarray(s, dtype=float), 0.0)
    if beta_class == 1:
        F = 1.0 - np.exp(-0.25 * math.pi * s_arr**2)
    elif beta_class == 2:
        F = special.erf(2.0 * s_arr / math.sqrt(math.pi)) - (4.0 * s_arr / math.pi) * np.exp(
            -4.0 * s_arr**2 / math.pi
        )
    else:
        raise ValueError(f"Wigner surmise is implemented for beta_class 1 and 2, got {beta_class}")
    return float(F) if np.ndim(F) == 0 else F


def surmise_sup_distance(histogram: GapHistogram, beta_class: int = 1) -> float:
    """Sup-norm between the histogram and the bin averages of the surmise."""
    F = np.asarray(wigner_surmise_cdf(histogram.edges, beta_class))
    expected = np.diff(F) / histogram.widths
    return float(np.max(np.abs(histogram.density - expected)))


def gap_ratio_statistic(spectrum: SpectrumLike, bulk_fraction: float = 0.5) -> float:
    """
    Mean of min(s_i, s_(i+1)) / max(s_i, s_(i+1)) over the central eigenvalues.

    Needs no unfolding. Reference values: GAP_RATIO_POISSON, GAP_RATIO_GOE,
    GAP_RATIO_GUE.
    """
    values = _eigenvalues(spectrum)
    n = len(values)
    start = int(n * (1.0 - bulk_fraction) / 2.0)
    spacings = np.diff(values[start : n - start])
    if len(spacings) < 2:
        raise ValueError(f"Need at least three central eigenvalues, got {len(spacings) + 1}")
    left, right = spacings[:-1], spacings[1:]
    larger = np.maximum(left, right)
    ratios = np.divide(np.minimum(left, right), larger, out=np.ones_like(larger), where=larger > 0)
    return float(np.mean(ratios))


@dataclass(frozen=True)
class TwoPointCorrelation:
    """
    Window-averaged pair correlation R(alpha) in unfolded units.

    R = 1 for independent points, so `deviation` = R - 1 is the correlation
    beyond the Poisson baseline.
    """

    edges: np.ndarray
    values: np.ndarray
    pair_counts: np.ndarray
    n_spectra: int
    window: Tuple[float, float]

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def deviation(self) -> np.ndarray:
        return self.values - 1.0


MIN_CORRELATION_SPECTRA = 50


def two_point_window_correlation(
    spectra: Sequence[SpectrumLike],
    E: float = 0.0,
    b: float = 0.1,
    bins: Union[int, np.ndarray] = 30,
    alpha_max: float = 3.0,
    law: SpectralLaw = SEMICIRCLE,
) -> TwoPointCorrelation:
    """
    Averaged two-point function of rescaled separations alpha = N rho(E) (lambda_j - lambda_i).

    Pairs with both points in [E - b, E + b] are binned. With the window
    length l = 2b N rho(E) in unfolded units, independent points produce on
    average (l - alpha) d(alpha) pairs per spectrum, which is the
    normalization used, so R = 1 is the Poisson baseline.

    Raises
    ------
    ValueError
        With fewer than 50 spectra, or b < 10 / (N rho(E))
    """
    if len(spectra) < MIN_CORRELATION_SPECTRA:
        raise ValueError(
            f"Too few spectra: {len(spectra)} < {MIN_CORRELATION_SPECTRA}"
        )
    _check_bulk_window(law, (E, b))
    first = _eigenvalues(spectra[0])
    n = len(first)
    rho = float(np.asarray(law.density(np.array([E])))[0])
    if b < 10.0 / (n * rho):
        raise ValueError(f"Window too narrow: b = {b} < 10/(N rho(E)) = {10.0 / (n * rho):.4g}")

    edges = np.linspace(0.0, alpha_max, bins + 1) if isinstance(bins, int) else np.asarray(bins)
    counts = np.zeros(len(edges) - 1)
    for spectrum in spectra:
        values = _eigenvalues(spectrum)
        inside = values[(values >= E - b) & (values <= E + b)]
        separations = n * rho * (inside[None, :] - inside[:, None])
        alphas = separations[np.triu_indices(len(inside), k=1)]
        counts += np.histogram(alphas, bins=edges)[0]

    length = 2.0 * b * n * rho
    centers = 0.5 * (edges[1:] + edges[:-1])
    baseline = len(spectra) * (length - centers) * np.diff(edges)
    return TwoPointCorrelation(edges, counts / baseline, counts, len(spectra), (E, b))


def correlation_sup_difference(a: TwoPointCorrelation, b: TwoPointCorrelation) -> float:
    """Sup-norm difference of two correlation estimates on the same bins."""
    if not np.allclose(a.edges, b.edges):
        raise ValueError("Correlations must share their bins")
    return float(np.max(np.abs(a.values - b.values)))


@dataclass(frozen=True)
class EdgeStatistic:
    """Per-sample scaled edge values N^(2/3) (lambda - center)."""

    values: np.ndarray
    which: str
    ensemble: str = ""
    n: int = 0


EDGE_CHOICES = ("largest", "second_largest")
MIN_EDGE_N = 100


def edge_statistic(
    spectra: Sequence[SpectrumLike],
    which: str = "largest",
    ensemble: str = "",
    center: float = 2.0,
) -> EdgeStatistic:
    """
    N^(2/3) (lambda_N - 2), or the same for the second-largest eigenvalue.

    For Erdős–Rényi matrices the largest eigenvalue is an outlier and the
    second-largest carries the edge universality.

    Examples
    --------
    >>> stat = edge_statistic([np.linspace(-2.0, 2.0, 125)])
    >>> float(stat.values[0])
    0.0
    """
    if which not in EDGE_CHOICES:
        raise ValueError(f"Unknown edge choice '{which}', expected one of {EDGE_CHOICES}")
    values = []
    n = 0
    for spectrum in spectra:
        eigenvalues = _eigenvalues(spectrum)
        n = len(eigenvalues)
        if n < MIN_EDGE_N:
            raise ValueError(f"Edge statistics need N >= {MIN_EDGE_N}, got {n}")
        top = eigenvalues[-1] if which == "largest" else eigenvalues[-2]
        values.append(n ** (2.0 / 3.0) * (top - center))
    return EdgeStatistic(np.array(values), which, ensemble, n)


def ks_distance(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    """
    Two-sample Kolmogorov–Smirnov statistic sup |F_a - F_b|.

    Raises
    ------
    ValueError
        If either sample is empty
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS distance needs two non-empty samples")
    return float(stats.ks_2samp(a, b).statistic)


def ks_noise_floor(size_a: int, size_b: int, confidence: float = 0.95) -> float:
    """Asymptotic KS critical value c(alpha) sqrt((n + m) / (n m))."""
    c = math.sqrt(-0.5 * math.log((1.0 - confidence) / 2.0))
    return c * math.sqrt((size_a + size_b) / (size_a * size_b))


def split_half_ks(sample: Sequence[float]) -> float:
    """KS distance between the even- and odd-indexed halves of one sample."""
    values = np.asarray(sample, dtype=float)
    if values.size < 2:
        raise ValueError("Split-half comparison needs at least two values")
    return ks_distance(values[0::2], values[1::2])


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares slope of log y against log x with a confidence interval."""

    slope: float
    intercept: float
    stderr: float
    low: float
    high: float

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high

    def __str__(self) -> str:
        return f"slope {self.slope:.4f} [{self.low:.4f}, {self.high:.4f}]"


def fit_loglog_slope(
    x: Sequence[float], y: Sequence[float], confidence: float = 0.95
) -> SlopeFit:
    """
    Regress log y on log x.

    The interval uses the Student t quantile with n - 2 degrees of freedom;
    with two points it collapses to the slope itself.
    """
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.shape != ys.shape or xs.size < 2:
        raise ValueError("Slope fit needs two or more (x, y) pairs of equal length")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("Log-log regression needs positive data")

    fit = stats.linregress(np.log(xs), np.log(ys))
    dof = xs.size - 2
    if dof > 0:
        half = float(stats.t.ppf(0.5 + confidence / 2.0, dof)) * float(fit.stderr)
    else:
        half = 0.0
    return SlopeFit(float(fit.slope), float(fit.intercept), float(fit.stderr),
                    float(fit.slope) - half, float(fit.slope) + half)


def mean_stderr(values: Sequence[float]) -> Tuple[float, float]:
    """Sample mean and its standard error."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("No values")
    if arr.size == 1:
        return float(arr[0]), float("nan")
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def median_stderr(values: Sequence[float]) -> Tuple[float, float]:
    """
    Sample median with a standard error from the interquartile range.

    Uses sigma = IQR / 1.349 and se = 1.2533 sigma / sqrt(n).
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("No values")
    q1, med, q3 = np.percentile(arr, [25, 50, 75])
    se = 1.2533 * (q3 - q1) / 1.349 / math.sqrt(arr.size)
    return float(med), float(se)


def warn_small_sample(count: int, minimum: int, what: str) -> None:
    """RuntimeWarning when a Monte Carlo envelope rests on too few samples."""
    if count < minimum:
        warnings.warn(
            f"{what}: {count} samples is below the {minimum} needed for a stable envelope",
            RuntimeWarning,
        )
