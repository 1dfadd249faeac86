"""
Log-Gases (beta-Ensembles)

Measures on ordered configurations lambda_1 < ... < lambda_N with density
proportional to exp(-beta N H(lambda)),

    H(lambda) = sum_k V(lambda_k)/2 - (1/N) sum_(i<j) log(lambda_j - lambda_i),

sampled through the tridiagonal Gaussian model or a Metropolis chain, with
the one-cut equilibrium density, rigidity, the first loop equation and the
comparison of conditional (local) measures.
"""

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import legendre
from numpy.polynomial import polynomial as P
from scipy import integrate, linalg, optimize

from rmtlab.rng import map_samples, seed_stream
from rmtlab.spectral import SEMICIRCLE, Spectrum, classical_locations
from rmtlab.stats import SlopeFit, fit_loglog_slope, ks_distance, median_stderr

logger = logging.getLogger(__name__)

POTENTIAL_KINDS = ("quadratic", "quartic", "custom")
ACCEPTANCE_BAND = (0.1, 0.7)
MIN_LOOP_SAMPLES = 100
CONDITIONAL_K_RANGE = (16, 64)

ScalarFunction = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Potentials and the Hamiltonian
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """
    External potential V.

    Attributes
    ----------
    kind : str
        "quadratic" (x^2/2), "quartic" (x^2/2 + c x^4) or "custom"
    c : float
        Quartic coefficient, c >= 0
    V, dV : callable, optional
        Value and derivative, required for "custom"
    convexity : float, optional
        inf V'' for "custom" potentials
    """

    kind: str = "quadratic"
    c: float = 0.0
    V: Optional[ScalarFunction] = field(default=None, compare=False, repr=False)
    dV: Optional[ScalarFunction] = field(default=None, compare=False, repr=False)
    convexity: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"Unknown potential '{self.kind}', expected one of {POTENTIAL_KINDS}")
        if self.kind == "quartic" and self.c < 0:
            raise ValueError(f"Quartic coefficient must be non-negative, got c = {self.c}")
        if self.kind == "custom" and (self.V is None or self.dV is None):
            raise ValueError("Custom potentials need both V and dV")

    @classmethod
    def quadratic(cls) -> "Potential":
        return cls("quadratic")

    @classmethod
    def quartic(cls, c: float) -> "Potential":
        return cls("quartic", c=c)

    @classmethod
    def custom(
        cls, V: ScalarFunction, dV: ScalarFunction, convexity: Optional[float] = None
    ) -> "Potential":
        return cls("custom", V=V, dV=dV, convexity=convexity)

    @property
    def name(self) -> str:
        return f"quartic(c={self.c:g})" if self.kind == "quartic" else self.kind

    def value(self, x: Union[float, np.ndarray]) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "custom":
            assert self.V is not None
            return np.asarray(self.V(x), dtype=float)
        return 0.5 * x**2 + self.c * x**4

    def derivative(self, x: Union[float, complex, np.ndarray]) -> np.ndarray:
        """V'(x); polynomial potentials accept complex arguments."""
        if self.kind == "custom":
            assert self.dV is not None
            return np.asarray(self.dV(np.asarray(x)))
        x = np.asarray(x)
        return x + 4.0 * self.c * x**3

    def half_derivative_coefficients(self) -> np.ndarray:
        """Ascending coefficients of V'/2 (polynomial potentials only)."""
        if self.kind == "custom":
            raise ValueError("Custom potentials have no polynomial form")
        return np.array([0.0, 0.5, 0.0, 2.0 * self.c])

    @property
    def inf_second_derivative(self) -> float:
        """inf V'' (1 for quadratic and quartic with c >= 0)."""
        if self.kind == "custom":
            return float("nan") if self.convexity is None else float(self.convexity)
        return 1.0

    def to_mapping(self) -> dict[str, Any]:
        if self.kind == "custom":
            raise ValueError("Custom potentials cannot be serialized")
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class LogGasSpec:
    """beta-ensemble with N particles in potential V."""

    beta: float
    potential: Potential = field(default_factory=Potential.quadratic)
    n: int = 100

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.n < 1:
            raise ValueError(f"Number of particles must be positive, got {self.n}")

    @property
    def convexity(self) -> float:
        return self.potential.inf_second_derivative

    def with_n(self, n: int) -> "LogGasSpec":
        return LogGasSpec(self.beta, self.potential, n)

    def to_mapping(self) -> dict[str, Any]:
        return {"beta": self.beta, "n": self.n, "potential": self.potential.to_mapping()}

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], n: Optional[int] = None) -> "LogGasSpec":
        """Build from a config table: beta, n, potential.kind, potential.c."""
        potential = mapping.get("potential", {})
        kind = potential.get("kind", "quadratic")
        if kind == "custom":
            raise ValueError("Custom potentials cannot be read from a config")
        return cls(
            float(mapping.get("beta", 2.0)),
            Potential(kind, c=float(potential.get("c", 0.0))),
            int(n if n is not None else mapping.get("n", 100)),
        )


def hamiltonian(lam: np.ndarray, potential: Potential) -> Union[float, np.ndarray]:
    """
    H(lambda) = sum V(lambda_k)/2 - (1/N) sum_(i<j) log|lambda_j - lambda_i|.

    Accepts a batch of configurations along leading axes; coinciding points
    give +inf.

    Examples
    --------
    >>> round(float(hamiltonian(np.array([-1.0, 1.0]), Potential.quadratic())), 10)
    0.1534264097
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    external = 0.5 * np.sum(potential.value(lam), axis=-1)
    ii, jj = np.triu_indices(n, k=1)
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(lam[..., jj] - lam[..., ii]))
    value = external - np.sum(logs, axis=-1) / n
    return float(value) if np.ndim(value) == 0 else value


def log_acceptance_ratio(
    spec: LogGasSpec, current: np.ndarray, proposal: np.ndarray
) -> Union[float, np.ndarray]:
    """
    Metropolis log acceptance min(0, -beta N (H(proposal) - H(current))).

    Proposals that break the strict ordering get -inf.
    """
    proposal = np.asarray(proposal, dtype=float)
    ordered = np.all(np.diff(proposal, axis=-1) > 0, axis=-1)
    change = -spec.beta * spec.n * (
        hamiltonian(proposal, spec.potential) - hamiltonian(current, spec.potential)
    )
    value = np.where(ordered, np.minimum(0.0, change), -np.inf)
    return float(value) if np.ndim(value) == 0 else value


# ---------------------------------------------------------------------------
# Equilibrium density
# ---------------------------------------------------------------------------


def _inverse_root_series(a: float, b: float, terms: int) -> np.ndarray:
    """Coefficients g_m of (1 - (a+b) w + ab w^2)^(-1/2) = sum g_m w^m."""
    s, p = a + b, a * b
    g = np.zeros(max(terms, 2))
    g[0], g[1] = 1.0, s / 2.0
    for n in range(1, terms - 1):
        g[n + 1] = (s * (n + 0.5) * g[n] - p * n * g[n - 1]) / (n + 1)
    return g[:terms]


@dataclass(frozen=True)
class EquilibriumLaw:
    """
    One-cut equilibrium density rho(t) = (1/pi) r(t) sqrt((t - A)(B - t)) on [A, B].

    Stieltjes transforms follow m(z) = int rho(t)/(t - z) dt, and

        s(z) = 2 m(z) + V'(z) = 2 r(z) sqrt(z - A) sqrt(z - B),

    with principal roots, so that s(z)/z -> 1 at infinity.
    """

    potential: Potential
    A: float
    B: float
    r_coefficients: np.ndarray = field(repr=False)

    @property
    def support(self) -> Tuple[float, float]:
        return (self.A, self.B)

    def r(self, x: Union[float, complex, np.ndarray]) -> np.ndarray:
        return np.asarray(P.polyval(x, self.r_coefficients))

    def density(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x > self.A) & (x < self.B)
        root = np.sqrt(np.where(inside, (x - self.A) * (self.B - x), 0.0))
        return np.where(inside, self.r(x) * root / math.pi, 0.0)

    def cdf(self, x: float) -> float:
        """
        F(x) through t = A + (B - A)(1 - cos phi)/2, which turns the density into the
        smooth integrand r(t) ((B - A)/2)^2 sin^2(phi)/pi on [0, phi(x)].
        """
        if x <= self.A:
            return 0.0
        if x >= self.B:
            return 1.0
        half = 0.5 * (self.B - self.A)
        phi_x = math.acos(1.0 - (x - self.A) / half)
        nodes, weights = legendre.leggauss(64)
        phi = 0.5 * phi_x * (nodes + 1.0)
        t = self.A + half * (1.0 - np.cos(phi))
        integrand = self.r(t) * half**2 * np.sin(phi) ** 2 / math.pi
        return float(min(max(0.5 * phi_x * np.dot(weights, integrand), 0.0), 1.0))

    def s_function(self, z: Union[complex, np.ndarray]) -> Union[complex, np.ndarray]:
        z = np.asarray(z, dtype=complex)
        value = 2.0 * self.r(z) * np.sqrt(z - self.A) * np.sqrt(z - self.B)
        return complex(value) if value.ndim == 0 else value

    def stieltjes(self, z: Union[complex, np.ndarray]) -> Union[complex, np.ndarray]:
        z = np.asarray(z, dtype=complex)
        value = 0.5 * (np.asarray(self.s_function(z)) - self.potential.derivative(z))
        return complex(value) if value.ndim == 0 else value

    def total_mass(self) -> float:
        value, _ = integrate.quad(
            lambda t: self.r(t) / math.pi, self.A, self.B, weight="alg", wvar=(0.5, 0.5),
            epsabs=1e-13, epsrel=1e-13,
        )
        return float(value)

    def equilibrium_residual(self, points: int = 50) -> float:
        """max |V'(t)/2 - PV int rho(s)/(t - s) ds| on `points` interior grid points."""
        width = self.B - self.A
        grid = np.linspace(self.A + 0.02 * width, self.B - 0.02 * width, points)
        worst = 0.0
        for t in grid:
            # QAWC returns PV int rho(s)/(s - t) ds
            pv, _ = integrate.quad(
                lambda u: float(self.density(u)), self.A, self.B, weight="cauchy", wvar=t,
                epsabs=1e-12, epsrel=1e-12, limit=200,
            )
            worst = max(worst, abs(0.5 * float(self.potential.derivative(t)) + pv))
        return worst


def _endpoint_conditions(potential: Potential, A: float, B: float) -> np.ndarray:
    """One-cut conditions int g/sqrt = 0 and (1/pi) int t g/sqrt = 1 with g = V'/2."""
    g = lambda t: 0.5 * float(potential.derivative(t))  # noqa: E731
    first, _ = integrate.quad(g, A, B, weight="alg", wvar=(-0.5, -0.5), epsabs=1e-13)
    second, _ = integrate.quad(lambda t: t * g(t), A, B, weight="alg", wvar=(-0.5, -0.5), epsabs=1e-13)
    return np.array([first, second / math.pi - 1.0])


def equilibrium_density(
    spec: Union[LogGasSpec, Potential], residual_tol: float = 1e-4
) -> EquilibriumLaw:
    """
    One-cut equilibrium density of a quadratic or quartic potential.

    The endpoints solve the two one-cut moment conditions with
    `scipy.optimize.fsolve`; r is the polynomial part of
    (V'(z)/2) / sqrt((z - A)(z - B)). The result is checked against the
    equilibrium equation V'(t)/2 = PV int rho(s)/(t - s) ds on 50 interior
    points.

    Raises
    ------
    ValueError
        For custom potentials, or if r changes sign on [A, B] (not one-cut)
    RuntimeError
        If the endpoint solve fails or the equilibrium residual exceeds `residual_tol`

    Examples
    --------
    >>> law = equilibrium_density(Potential.quadratic())
    >>> [round(law.A, 10), round(law.B, 10)]
    [-2.0, 2.0]
    """
    potential = spec.potential if isinstance(spec, LogGasSpec) else spec
    if potential.kind == "custom":
        raise ValueError("Equilibrium density needs a quadratic or quartic potential")

    solution, info, ier, message = optimize.fsolve(
        lambda ab: _endpoint_conditions(potential, ab[0], ab[1]), x0=[-2.0, 2.0],
        xtol=1e-13, full_output=True,
    )
    A, B = float(solution[0]), float(solution[1])
    if ier != 1 or not A < B:
        raise RuntimeError(f"Endpoint solve failed for {potential.name}: {message}")
    # quadratic and quartic potentials are even
    B = 0.5 * (B - A)
    A = -B

    coeffs = potential.half_derivative_coefficients()
    degree = len(coeffs) - 1
    g = _inverse_root_series(A, B, degree + 1)
    r = np.array([sum(coeffs[n + 1 + m] * g[m] for m in range(degree - n)) for n in range(degree)])
    law = EquilibriumLaw(potential, A, B, r)

    grid = np.linspace(A, B, 201)
    if np.any(law.r(grid) <= 0):
        raise ValueError(f"{potential.name} is not one-cut: r changes sign on [{A:.6g}, {B:.6g}]")
    residual = law.equilibrium_residual()
    if residual > residual_tol:
        raise RuntimeError(
            f"Equilibrium residual {residual:.3e} exceeds {residual_tol:g} for {potential.name}"
        )
    logger.debug("%s: support [%.12g, %.12g], residual %.2e", potential.name, A, B, residual)
    return law


def quartic_support_edge(c: float) -> float:
    """Closed-form right edge 2a of x^2/2 + c x^4, with a^2 = (-1 + sqrt(1 + 48c))/(24c)."""
    if c < 0:
        raise ValueError(f"Quartic coefficient must be non-negative, got c = {c}")
    if c == 0:
        return 2.0
    return 2.0 * math.sqrt((-1.0 + math.sqrt(1.0 + 48.0 * c)) / (24.0 * c))


# ---------------------------------------------------------------------------
# Tridiagonal model
# ---------------------------------------------------------------------------


def gaussian_beta_tridiagonal_sample(beta: float, n: int, rng: np.random.Generator) -> Spectrum:
    """
    Exact sample of the Gaussian beta-ensemble with V = x^2/2.

    Diagonal entries are N(0, 2), off-diagonal entries chi_(beta k) for
    k = N-1, ..., 1; dividing the eigenvalues by sqrt(beta N) gives the
    density exp(-beta N sum lambda^2/4) |Vandermonde|^beta with support [-2, 2].

    Examples
    --------
    >>> spectrum = gaussian_beta_tridiagonal_sample(2.0, 5, np.random.default_rng(0))
    >>> spectrum.n
    5
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if n < 1:
        raise ValueError(f"Number of particles must be positive, got {n}")
    diagonal = rng.normal(0.0, math.sqrt(2.0), n)
    if n == 1:
        return Spectrum(diagonal / math.sqrt(beta))
    off = np.sqrt(rng.chisquare(beta * np.arange(n - 1, 0, -1)))
    values = linalg.eigvalsh_tridiagonal(diagonal, off)
    return Spectrum(np.sort(values) / math.sqrt(beta * n))


def tridiagonal_spectra(
    beta: float, n: int, samples: int, seed: int, threads: int = 1
) -> list[np.ndarray]:
    """Eigenvalues of `samples` tridiagonal draws, one stream per sample."""
    return map_samples(
        lambda k: gaussian_beta_tridiagonal_sample(beta, n, seed_stream(seed, k, f"tridiagonal/{n}")).eigenvalues,
        samples,
        threads,
    )


# ---------------------------------------------------------------------------
# Metropolis on ordered configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainParams:
    """Sweeps of burn-in (with step tuning), kept samples and sweeps between them."""

    burn_in: int = 500
    samples: int = 1000
    thin: int = 10
    step_size: Optional[float] = None
    target_acceptance: float = 0.3
    adapt: bool = True

    def __post_init__(self) -> None:
        if self.burn_in < 0 or self.samples < 1 or self.thin < 1:
            raise ValueError(
                f"Need burn_in >= 0, samples >= 1 and thin >= 1, got "
                f"{self.burn_in}, {self.samples}, {self.thin}"
            )
        if not 0.0 < self.target_acceptance < 1.0:
            raise ValueError(f"Target acceptance must lie in (0, 1), got {self.target_acceptance}")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "ChainParams":
        keys = ("burn_in", "samples", "thin", "step_size", "target_acceptance", "adapt")
        return cls(**{k: mapping[k] for k in keys if k in mapping})


@dataclass
class ChainResult:
    """Thinned samples of one chain with its acceptance rate."""

    samples: np.ndarray
    acceptance: float
    step_size: float
    sweeps: int

    def to_csv(self, path: Union[str, Path]) -> None:
        """Write rows sample, x_1, ..., x_K."""
        k = self.samples.shape[1]
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["sample"] + [f"x_{i}" for i in range(1, k + 1)])
            for j, row in enumerate(self.samples):
                writer.writerow([j] + [f"{v:.17g}" for v in row])


@dataclass
class OrderedMetropolis:
    """
    Single-site Gaussian Metropolis on ordered points inside (lower, upper).

    Targets exp(-E) with E(x) = sum_i external(x_i) - repulsion sum_(i<j) log|x_j - x_i|.
    A proposal leaving the interval between its neighbours is rejected,
    which is the same as giving it energy +inf.
    """

    external: Callable[[float], float]
    repulsion: float
    lower: float = -math.inf
    upper: float = math.inf

    def energy(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if np.any(np.diff(x) <= 0) or x[0] <= self.lower or x[-1] >= self.upper:
            return math.inf
        ii, jj = np.triu_indices(x.size, k=1)
        return float(sum(self.external(v) for v in x) - self.repulsion * np.sum(np.log(x[jj] - x[ii])))

    def site_change(self, x: np.ndarray, i: int, new: float) -> float:
        """E(x with x_i = new) - E(x)."""
        old = x[i]
        d_new = np.abs(x - new)
        d_old = np.abs(x - old)
        d_new[i] = 1.0
        d_old[i] = 1.0
        return float(
            self.external(new) - self.external(old) - self.repulsion * np.sum(np.log(d_new / d_old))
        )

    def sweep(self, x: np.ndarray, step: float, rng: np.random.Generator) -> int:
        """Update every site once in place; return the number of accepted moves."""
        k = x.size
        moves = rng.normal(0.0, step, k)
        log_u = np.log(rng.random(k))
        accepted = 0
        for i in range(k):
            new = x[i] + moves[i]
            left = x[i - 1] if i > 0 else self.lower
            right = x[i + 1] if i < k - 1 else self.upper
            if not left < new < right:
                continue
            if log_u[i] < -self.site_change(x, i, new):
                x[i] = new
                accepted += 1
        return accepted

    def initial_step(self, x0: np.ndarray) -> float:
        if x0.size > 1:
            return 0.5 * float(np.median(np.diff(x0)))
        if math.isfinite(self.lower) and math.isfinite(self.upper):
            return 0.25 * (self.upper - self.lower)
        return 1.0

    def run(self, x0: np.ndarray, params: ChainParams, rng: np.random.Generator) -> ChainResult:
        """
        Burn in (tuning the step toward the target acceptance), then keep every
        `thin`-th sweep.

        Warns with RuntimeWarning when the production acceptance lies outside
        [0.1, 0.7].
        """
        x = np.array(x0, dtype=float)
        if not math.isfinite(self.energy(x)):
            raise ValueError("Initial configuration must be ordered and inside the interval")
        step = params.step_size if params.step_size is not None else self.initial_step(x)
        k = x.size
        for sweep in range(params.burn_in):
            rate = self.sweep(x, step, rng) / k
            if params.adapt:
                step *= math.exp(min(max(rate - params.target_acceptance, -0.5), 0.5))
        logger.debug("chain tuned: K = %d, step %.4g", k, step)

        kept = np.empty((params.samples, k))
        accepted = 0
        for j in range(params.samples):
            for _ in range(params.thin):
                accepted += self.sweep(x, step, rng)
            kept[j] = x
        acceptance = accepted / (params.samples * params.thin * k)
        low, high = ACCEPTANCE_BAND
        if not low <= acceptance <= high:
            warnings.warn(
                f"Metropolis acceptance {acceptance:.3f} outside [{low}, {high}] after tuning "
                f"(step {step:.3g})",
                RuntimeWarning,
            )
        return ChainResult(kept, acceptance, step, params.burn_in + params.samples * params.thin)


def _initial_configuration(spec: LogGasSpec) -> np.ndarray:
    law = SEMICIRCLE if spec.potential.kind == "custom" else equilibrium_density(spec.potential)
    return classical_locations(spec.n, law, convention="midpoint")


def loggas_mcmc_sample(
    spec: LogGasSpec, params: ChainParams, rng: np.random.Generator
) -> ChainResult:
    """
    Metropolis samples of the log-gas exp(-beta N H).

    The chain starts at the midpoint classical locations of the equilibrium
    density (semicircle for custom potentials).

    Raises
    ------
    ValueError
        If inf V'' is not positive
    """
    if not spec.convexity > 0:
        raise ValueError(f"Metropolis route needs inf V'' > 0, got {spec.convexity}")
    weight = 0.5 * spec.beta * spec.n
    potential = spec.potential
    chain = OrderedMetropolis(lambda v: weight * float(potential.value(v)), spec.beta)
    result = chain.run(_initial_configuration(spec), params, rng)
    logger.info("log-gas chain N = %d, beta = %g: acceptance %.3f", spec.n, spec.beta, result.acceptance)
    return result


def loggas_chains(
    spec: LogGasSpec, params: ChainParams, chains: int, seed: int, threads: int = 1
) -> list[ChainResult]:
    """Independent chains on streams (seed, chain index)."""
    return map_samples(
        lambda k: loggas_mcmc_sample(spec, params, seed_stream(seed, k, f"mcmc/{spec.n}")),
        chains,
        threads,
    )


# ---------------------------------------------------------------------------
# Rigidity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogGasRigidityRecord:
    """Bulk deviations |lambda_k - gamma_k| at one N."""

    n: int
    beta: float
    median_deviation: float
    scaled_quantiles: Tuple[float, float, float]
    middle_median: float
    middle_stderr: float

    def __str__(self) -> str:
        q50, q90, q99 = self.scaled_quantiles
        return (
            f"N = {self.n}: median |lambda - gamma| = {self.median_deviation:.4e}, "
            f"N|lambda - gamma| quantiles 50/90/99% = {q50:.3f}/{q90:.3f}/{q99:.3f}"
        )


def _spectra(
    spec: LogGasSpec, samples: int, seed: int, threads: int, route: str, params: Optional[ChainParams]
) -> list[np.ndarray]:
    if route == "tridiagonal":
        if spec.potential.kind != "quadratic":
            raise ValueError("The tridiagonal route samples the quadratic potential only")
        return tridiagonal_spectra(spec.beta, spec.n, samples, seed, threads)
    if route == "mcmc":
        chain_params = params if params is not None else ChainParams(samples=samples)
        chains = loggas_chains(spec, chain_params, 1, seed, threads)
        return list(chains[0].samples[:samples])
    raise ValueError(f"Unknown route '{route}', expected 'tridiagonal' or 'mcmc'")


def loggas_rigidity_report(
    spec: LogGasSpec,
    n_values: Sequence[int],
    samples: int,
    seed: int,
    threads: int = 1,
    route: str = "tridiagonal",
    alpha: float = 0.1,
    params: Optional[ChainParams] = None,
) -> Tuple[list[LogGasRigidityRecord], SlopeFit]:
    """
    Rigidity of bulk particles k in [alpha N, (1 - alpha) N] for several N.

    Returns per-N records and the log-log slope of the median deviation
    against N (close to -1 for rigid configurations). The middle particle
    k = (N + 1)/2 is tracked for odd N.
    """
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")
    records = []
    for n in n_values:
        local = spec.with_n(n)
        law = SEMICIRCLE if local.potential.kind == "quadratic" else equilibrium_density(local.potential)
        gammas = classical_locations(n, law, convention="midpoint")
        bulk = np.arange(max(int(math.ceil(alpha * n)), 1) - 1, int(math.floor((1 - alpha) * n)))
        spectra = np.array(_spectra(local, samples, seed, threads, route, params))
        deviation = np.abs(spectra[:, bulk] - gammas[bulk])
        q = np.percentile(n * deviation, [50, 90, 99])
        if n % 2:
            middle, se = median_stderr(spectra[:, (n - 1) // 2])
        else:
            middle, se = float("nan"), float("nan")
        record = LogGasRigidityRecord(
            n, spec.beta, float(np.median(deviation)), (float(q[0]), float(q[1]), float(q[2])), middle, se
        )
        logger.info("log-gas rigidity %s", record)
        records.append(record)
    fit = fit_loglog_slope(list(n_values), [r.median_deviation for r in records])
    return records, fit


# ---------------------------------------------------------------------------
# Loop equation
# ---------------------------------------------------------------------------


def loop_kernel(potential: Potential, z: complex, t: np.ndarray) -> np.ndarray:
    """(V'(z) - V'(t))/(z - t); identically 1 for the quadratic potential."""
    t = np.asarray(t, dtype=float)
    return (potential.derivative(z) - potential.derivative(t)) / (z - t)


@dataclass(frozen=True)
class LoopRecord:
    """
    Terms of (m_bar - m)^2 + s (m_bar - m) + b_N - c_N at one z.

    `residual` is the modulus of that sum (zero in expectation), with a
    jackknife standard error.
    """

    z: complex
    m_bar: complex
    m_eq: complex
    variance_term: complex
    derivative_term: complex
    b_term: float
    residual: float
    stderr: float
    samples: int

    @property
    def deviation(self) -> float:
        return abs(self.m_bar - self.m_eq)


def _loop_terms(
    m_bar: np.ndarray, m2_bar: np.ndarray, d_bar: np.ndarray, m_eq: complex, s: complex, beta: float, n: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Residual, variance term and derivative term from sample means (vectorized)."""
    variance = m2_bar - m_bar**2
    derivative = (2.0 / beta - 1.0) * d_bar / n
    delta = m_bar - m_eq
    return delta**2 + s * delta + variance + derivative, variance, derivative


def loop_equation_residual(
    spec: LogGasSpec,
    z_grid: Sequence[complex],
    samples: int,
    seed: int,
    threads: int = 1,
) -> list[LoopRecord]:
    """
    Monte Carlo check of the first loop equation on tridiagonal samples.

    With m_N(z) = (1/N) sum 1/(lambda_k - z), m_bar = E m_N, k_N/N^2 = var m_N
    (var X = E X^2 - (E X)^2) and m_bar' = E (1/N) sum 1/(lambda_k - z)^2,

        (m_bar - m)^2 + s (m_bar - m) + k_N/N^2 + (2/beta - 1) m_bar'/N = 0,

    where b_N vanishes because the quadratic kernel is constant.

    Raises
    ------
    ValueError
        For non-quadratic potentials, Im z < 0.5 or fewer than 100 samples
    """
    if spec.potential.kind != "quadratic":
        raise ValueError("Loop equation residual needs the quadratic potential (b_N = 0)")
    if samples < MIN_LOOP_SAMPLES:
        raise ValueError(f"Variance estimate needs at least {MIN_LOOP_SAMPLES} samples, got {samples}")
    zs = np.asarray(z_grid, dtype=complex)
    if np.any(zs.imag < 0.5):
        raise ValueError(f"Loop equation grid needs Im z >= 0.5, got min {zs.imag.min():.3g}")

    law = equilibrium_density(spec.potential)
    spectra = np.array(tridiagonal_spectra(spec.beta, spec.n, samples, seed, threads))
    records = []
    for z in zs:
        inv = 1.0 / (spectra - z)
        m = inv.mean(axis=1)
        d = (inv**2).mean(axis=1)
        m_eq = complex(law.stieltjes(z))
        s = complex(law.s_function(z))
        m_bar, m2_bar, d_bar = m.mean(), np.mean(m**2), d.mean()
        total, variance, derivative = _loop_terms(m_bar, m2_bar, d_bar, m_eq, s, spec.beta, spec.n)

        # leave-one-out jackknife
        scale = samples / (samples - 1)
        loo, _, _ = _loop_terms(
            scale * m_bar - m / (samples - 1),
            scale * m2_bar - m**2 / (samples - 1),
            scale * d_bar - d / (samples - 1),
            m_eq, s, spec.beta, spec.n,
        )
        stderr = math.sqrt((samples - 1) / samples * np.sum(np.abs(loo - loo.mean()) ** 2))
        record = LoopRecord(
            complex(z), complex(m_bar), m_eq, complex(variance), complex(derivative), 0.0,
            abs(total), stderr, samples,
        )
        logger.info("loop equation z = %s: residual %.3e +- %.3e", z, record.residual, stderr)
        records.append(record)
    return records


# ---------------------------------------------------------------------------
# Conditional measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionalSpec:
    """
    Log-gas with all but K consecutive particles frozen.

    Attributes
    ----------
    gas : LogGasSpec
        Full measure (beta, V, N)
    L : int
        Interior particles are L+1, ..., L+K (1-based)
    K : int
        Number of interior particles
    boundary : np.ndarray
        The N - K frozen points y, ascending
    reference : np.ndarray
        Gaussian classical locations theta (N points)
    delta : float
        Recorded distance max |y_j - gamma_j| of the boundary from the classical locations
    """

    gas: LogGasSpec
    L: int
    K: int
    boundary: np.ndarray = field(repr=False)
    reference: np.ndarray = field(repr=False)
    delta: float = 0.0

    def __post_init__(self) -> None:
        n = self.gas.n
        if self.K < 1 or self.L < 1 or self.L + self.K + 1 > n:
            raise ValueError(f"Need 1 <= L and L + K + 1 <= N, got L = {self.L}, K = {self.K}, N = {n}")
        if len(self.boundary) != n - self.K or len(self.reference) != n:
            raise ValueError("Boundary must hold N - K points and reference N points")
        if np.any(np.diff(self.boundary) <= 0):
            raise ValueError("Boundary points must be strictly increasing")

    @classmethod
    def at_classical(cls, gas: LogGasSpec, L: int, K: int) -> "ConditionalSpec":
        """Boundary frozen at the midpoint classical locations of V (delta = 0)."""
        gammas = _initial_configuration(gas)
        interior = np.arange(L, L + K)
        theta = classical_locations(gas.n, SEMICIRCLE, convention="midpoint")
        return cls(gas, L, K, np.delete(gammas, interior), theta, 0.0)

    @classmethod
    def bulk_window(cls, gas: LogGasSpec, K: int) -> "ConditionalSpec":
        """Centered window, L = (N - K) // 2."""
        return cls.at_classical(gas, (gas.n - K) // 2, K)

    @property
    def interval(self) -> Tuple[float, float]:
        return float(self.boundary[self.L - 1]), float(self.boundary[self.L])

    @property
    def reference_boundary(self) -> np.ndarray:
        return np.delete(self.reference, np.arange(self.L, self.L + self.K))

    @property
    def reference_interval(self) -> Tuple[float, float]:
        return float(self.reference[self.L - 1]), float(self.reference[self.L + self.K])

    def to_reference_frame(self, x: np.ndarray) -> np.ndarray:
        """Affine map sending [theta_L, theta_(L+K+1)] onto [y_L, y_(L+K+1)]."""
        a, b = self.interval
        ta, tb = self.reference_interval
        return a + (np.asarray(x) - ta) * (b - a) / (tb - ta)


def _interior_sampler(cond: ConditionalSpec, reference: bool) -> Tuple[OrderedMetropolis, np.ndarray]:
    gas = cond.gas
    weight = 0.5 * gas.beta * gas.n
    if reference:
        frozen = cond.reference_boundary
        potential = Potential.quadratic()
        lower, upper = cond.reference_interval
        start = cond.reference[cond.L : cond.L + cond.K]
    else:
        frozen = cond.boundary
        potential = gas.potential
        lower, upper = cond.interval
        start = np.linspace(lower, upper, cond.K + 2)[1:-1]

    def external(v: float) -> float:
        return weight * float(potential.value(v)) - gas.beta * float(np.sum(np.log(np.abs(v - frozen))))

    return OrderedMetropolis(external, gas.beta, lower, upper), np.array(start, dtype=float)


def conditional_mcmc_sample(
    cond: ConditionalSpec, params: ChainParams, rng: np.random.Generator, reference: bool = False
) -> ChainResult:
    """
    Interior samples of the conditional measure (or of the Gaussian reference).

    The interior energy is (beta N/2) sum V(x_i) - beta sum_(i, j frozen) log|x_i - y_j|
    - beta sum_(i<j) log|x_j - x_i|, the exact conditional of the full measure.

    Raises
    ------
    RuntimeError
        If a sample leaves its interval
    """
    chain, start = _interior_sampler(cond, reference)
    result = chain.run(start, params, rng)
    lower, upper = chain.lower, chain.upper
    if np.any(result.samples <= lower) or np.any(result.samples >= upper):
        raise RuntimeError(f"Interior points escaped [{lower:.6g}, {upper:.6g}]")
    return result


def conditional_one_point_cdf(cond: ConditionalSpec, grid_points: int = 4001) -> Callable[[np.ndarray], np.ndarray]:
    """
    Exact CDF of the single interior point when K = 1, by quadrature of exp(-E)
    on (y_L, y_(L+2)).
    """
    if cond.K != 1:
        raise ValueError(f"One-point law needs K = 1, got K = {cond.K}")
    chain, _ = _interior_sampler(cond, reference=False)
    a, b = chain.lower, chain.upper
    x = np.linspace(a, b, grid_points)
    energy = np.array([chain.external(v) for v in x[1:-1]])
    weights = np.zeros_like(x)
    weights[1:-1] = np.exp(-(energy - energy.min()))
    cumulative = integrate.cumulative_trapezoid(weights, x, initial=0.0)
    cumulative /= cumulative[-1]
    return lambda v: np.interp(v, x, cumulative)


def _window_gaps(samples: np.ndarray, interval: Tuple[float, float]) -> np.ndarray:
    """Gaps of [a, x_1, ..., x_K, b] in units of (b - a)/(K + 1)."""
    a, b = interval
    k = samples.shape[1]
    padded = np.hstack([np.full((len(samples), 1), a), samples, np.full((len(samples), 1), b)])
    return (np.diff(padded, axis=1) * (k + 1) / (b - a)).ravel()


@dataclass(frozen=True)
class ConditionalRecord:
    """KS distance between interior gap laws of the conditional and reference measures."""

    K: int
    L: int
    beta: float
    potential: str
    ks: float
    noise_floor: float
    acceptance: float
    reference_acceptance: float
    samples: int

    def to_mapping(self) -> dict[str, Any]:
        return {
            "K": self.K, "L": self.L, "beta": self.beta, "potential": self.potential,
            "ks": self.ks, "stderr": self.noise_floor, "acceptance": self.acceptance,
            "reference_acceptance": self.reference_acceptance, "samples": self.samples,
        }

    def to_json(self, path: Union[str, Path]) -> None:
        with open(path, "w") as handle:
            json.dump(self.to_mapping(), handle, indent=2)


def conditional_measure_experiment(
    cond: ConditionalSpec, params: ChainParams, seed: int, threads: int = 1
) -> ConditionalRecord:
    """
    Compare interior gaps of mu_y and of the Gaussian reference sigma_theta.

    Reference samples are carried onto [y_L, y_(L+K+1)] by the affine map of
    `ConditionalSpec.to_reference_frame`. The noise floor is the KS distance
    between the even and odd thinned samples of the mu_y chain.

    Raises
    ------
    ValueError
        If K lies outside [16, 64]
    """
    low, high = CONDITIONAL_K_RANGE
    if not low <= cond.K <= high:
        raise ValueError(f"Conditional experiment needs K in [{low}, {high}], got {cond.K}")

    def chain(k: int) -> ChainResult:
        label = "conditional/reference" if k else "conditional/local"
        return conditional_mcmc_sample(cond, params, seed_stream(seed, 0, label), reference=bool(k))

    local, reference = map_samples(chain, 2, threads)
    local_gaps = _window_gaps(local.samples, cond.interval)
    mapped = cond.to_reference_frame(reference.samples)
    reference_gaps = _window_gaps(mapped, cond.interval)
    floor = float("nan")
    if len(local.samples) > 1:
        floor = ks_distance(
            _window_gaps(local.samples[0::2], cond.interval),
            _window_gaps(local.samples[1::2], cond.interval),
        )
    record = ConditionalRecord(
        cond.K, cond.L, cond.gas.beta, cond.gas.potential.name,
        ks_distance(local_gaps, reference_gaps), floor,
        local.acceptance, reference.acceptance, len(local.samples),
    )
    logger.info("conditional K = %d: KS %.4f (floor %.4f)", cond.K, record.ks, floor)
    return record
