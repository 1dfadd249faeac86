"""
Experiment Runners

Each registered runner turns an `ExperimentConfig` into report rows and a
summary dictionary. Runners only combine the library operations; all
randomness comes from `seed_stream`, so rows depend on the config alone.
"""

import logging
import math
from typing import Any, Callable, Optional, Tuple

import numpy as np
from scipy import stats as scipy_stats

from rmtlab.compare import moment_gap, swap_experiment
from rmtlab.config import EXPERIMENTS, ConfigError, ExperimentConfig, UnknownExperimentError
from rmtlab.dbm import moment_drift, relaxation_experiment
from rmtlab.ensembles import EnsembleSpec, draw_sample, entry_distribution_from_mapping
from rmtlab.loggas import (
    ChainParams,
    ConditionalSpec,
    conditional_mcmc_sample,
    conditional_measure_experiment,
    conditional_one_point_cdf,
    equilibrium_density,
    loggas_chains,
    loggas_rigidity_report,
    loop_equation_residual,
    tridiagonal_spectra,
)
from rmtlab.report import ReportRow, check_row, info_row, interval_row
from rmtlab.rng import derive_seed, map_samples, seed_stream
from rmtlab.semicircle_law import (
    bump_function,
    delocalization_report,
    fluctuation_averaging_sweep,
    hs_identity_check,
    local_law_sweep,
    minor_quadratic_forms,
    rigidity_report,
    rigidity_sweep,
    schur_quadratic_forms,
)
from rmtlab.spectral import eigen, green_function, semicircle_cdf
from rmtlab.stats import (
    GAP_RATIO_GOE,
    GAP_RATIO_POISSON,
    UniformLaw,
    correlation_sup_difference,
    edge_statistic,
    fit_loglog_slope,
    gap_histogram,
    gap_ratio_statistic,
    ks_distance,
    mean_stderr,
    poisson_spectrum,
    pool_gaps,
    surmise_sup_distance,
    two_point_window_correlation,
    unfold,
)

logger = logging.getLogger(__name__)

Outcome = Tuple[list[ReportRow], dict[str, Any]]
Runner = Callable[[ExperimentConfig], Outcome]

RUNNERS: dict[str, Runner] = {}
# config sections each experiment reads
REQUIRES: dict[str, Tuple[str, ...]] = {
    "semicircle": ("ensemble",),
    "rigidity": ("ensemble",),
    "deloc": ("ensemble",),
    "gaps": (),
    "twopoint": ("ensemble",),
    "dbm-relax": ("ensemble",),
    "edge": ("ensemble",),
    "er": ("ensemble",),
    "loggas": ("loggas",),
    "conditional": ("loggas",),
    "loop": ("loggas",),
    "compare": ("ensemble",),
    "flucavg": ("ensemble",),
    "hs-check": (),
}


def experiment(name: str) -> Callable[[Runner], Runner]:
    def register(fn: Runner) -> Runner:
        if name not in EXPERIMENTS:
            raise ValueError(f"Unknown experiment '{name}'")
        RUNNERS[name] = fn
        return fn

    return register


def validate(config: ExperimentConfig) -> None:
    """
    Check that the config carries every block and size its experiment reads.

    Raises
    ------
    ConfigError
        With the first missing piece
    """
    name = config.experiment
    if name not in RUNNERS:
        raise UnknownExperimentError(f"Unknown experiment {name!r}")
    for block in REQUIRES[name]:
        if getattr(config, block) is None:
            raise ConfigError(f"Experiment '{name}' needs a [{block}] section")
    if name == "gaps" and config.ensemble is None and config.param("diagnostic") != "poisson":
        raise ConfigError("Experiment 'gaps' needs an [ensemble] section or params.diagnostic = 'poisson'")
    if name not in ("loggas", "conditional", "loop", "hs-check") and config.n is None and not config.n_sweep:
        raise ConfigError(f"Experiment '{name}' needs n or n_sweep")
    if name == "er" and config.require_ensemble().er_params is None:
        raise ConfigError("Experiment 'er' needs an Erdős–Rényi ensemble (ensemble.er.p)")
    if name in ("conditional", "loop") and config.n_sweep:
        raise ConfigError(f"Experiment '{name}' runs at a single n")


def _spectra(config: ExperimentConfig, spec: EnsembleSpec, label: str = "entries") -> list[np.ndarray]:
    return map_samples(
        lambda k: eigen(draw_sample(spec, config.seed, k, label)).eigenvalues,
        config.samples,
        config.threads,
    )


def _reference(config: ExperimentConfig, spec: EnsembleSpec) -> EnsembleSpec:
    """Second ensemble, or the Gaussian ensemble of the same symmetry."""
    if config.ensemble_b is not None:
        return config.ensemble_b.with_n(spec.n)
    return EnsembleSpec(spec.symmetry, spec.n)


def _window(config: ExperimentConfig, default: Tuple[float, float] = (0.0, 0.5)) -> Tuple[float, float]:
    value = config.param("window", list(default))
    return float(value[0]), float(value[1])


def _meta(config: ExperimentConfig, n: Optional[int] = None, **kwargs: Any) -> dict[str, Any]:
    return {"n": n, "samples": config.samples, "seed": config.seed, **kwargs}


# ---------------------------------------------------------------------------
# Wigner matrices
# ---------------------------------------------------------------------------


@experiment("semicircle")
def run_semicircle(config: ExperimentConfig) -> Outcome:
    """Catalan moments at n; local-law scaling over n_sweep."""
    spec = config.require_ensemble()
    rows: list[ReportRow] = []
    summary: dict[str, Any] = {}
    if config.n is None and not config.n_sweep:
        raise ConfigError("Experiment 'semicircle' needs n or n_sweep")

    if config.n is not None:
        n = config.n
        values = _spectra(config, spec.with_n(n))
        for k, catalan in ((2, 1.0), (4, 2.0), (6, 5.0)):
            mean, se = mean_stderr([float(np.mean(v**k)) for v in values])
            summary[f"moment_{k}"] = mean
            rows.append(check_row(f"moment_{k}_error", abs(mean - catalan), config.envelope(f"moment_{k}"),
                                  stderr=se, **_meta(config, n)))
        pooled = np.concatenate(values)
        rows.append(info_row("ks_semicircle", float(scipy_stats.kstest(pooled, semicircle_cdf).statistic),
                             **_meta(config, n)))

    if config.n_sweep:
        energy = float(config.param("energy", 0.0))
        exponent = float(config.param("eta_exponent", -0.8))
        report = local_law_sweep(spec, config.n_sweep, lambda n: [complex(energy, n**exponent)],
                                 config.samples, config.seed, config.threads)
        for record in report.records:
            meta = _meta(config, record.n, E=record.z.real, eta=record.z.imag)
            rows.append(info_row("local_law_trace_error", record.trace_error, stderr=record.trace_error_stderr, **meta))
            rows.append(info_row("local_law_trace_ratio", record.trace_ratio, **meta))
            rows.append(info_row("local_law_entry_ratio", record.entry_ratio, **meta))
        fit = fit_loglog_slope([r.n * r.z.imag for r in report.records], [r.trace_error for r in report.records])
        rows.append(interval_row("local_law_slope", fit.slope, config.envelope("local_law_slope"),
                                 stderr=fit.stderr, **_meta(config)))
        rows.append(ReportRow("local_law_slope_ci", fit.slope, fit.stderr, (fit.low, fit.high), **_meta(config)))
        rows.append(check_row("local_law_ratio_growth", report.ratio_growth(0), config.envelope("local_law_ratio_growth"),
                              **_meta(config)))
        summary["local_law_slope"] = fit.slope
    return rows, summary


@experiment("rigidity")
def run_rigidity(config: ExperimentConfig) -> Outcome:
    """Q slope over the sweep and the bulk middle deviation at the largest N."""
    spec = config.require_ensemble()
    rows: list[ReportRow] = []
    summary: dict[str, Any] = {}
    n_values = config.n_values
    if len(n_values) >= 2:
        reports, fit = rigidity_sweep(spec, n_values, config.samples, config.seed, config.threads)
        rows.append(interval_row("rigidity_q_slope", fit.slope, config.envelope("rigidity_q_slope"),
                                 stderr=fit.stderr, **_meta(config)))
        rows.append(ReportRow("rigidity_q_slope_ci", fit.slope, fit.stderr, (fit.low, fit.high), **_meta(config)))
        summary["q_slope"] = fit.slope
    else:
        reports = [rigidity_report(spec.with_n(n_values[0]), config.samples, config.seed, config.threads)]

    for report in reports:
        q, se = report.q_mean
        rows.append(info_row("rigidity_q", q, stderr=se, **_meta(config, report.n)))
        rows.append(info_row("rigidity_max_scaled_deviation", report.median_max_deviation, **_meta(config, report.n)))

    largest = max(reports, key=lambda r: r.n)
    bound = config.envelope("rigidity_bulk_factor") * math.log(largest.n) / largest.n
    rows.append(check_row("rigidity_bulk_middle_deviation", largest.median_middle_deviation, bound,
                          **_meta(config, largest.n)))
    return rows, summary


@experiment("deloc")
def run_deloc(config: ExperimentConfig) -> Outcome:
    """Median N max ||u||_inf^2 per N and its growth exponent."""
    spec = config.require_ensemble()
    rows: list[ReportRow] = []
    reports = [delocalization_report(spec.with_n(n), config.samples, config.seed, config.threads)
               for n in config.n_values]
    for report in reports:
        rows.append(check_row("deloc_median", report.median, config.envelope("deloc_median"), **_meta(config, report.n)))
        rows.append(info_row("deloc_min_sup_norm_squared", report.min_sup_norm_squared, **_meta(config, report.n)))
    summary: dict[str, Any] = {"medians": {r.n: r.median for r in reports}}
    if len(reports) >= 2:
        fit = fit_loglog_slope([r.n for r in reports], [r.median for r in reports])
        rows.append(check_row("deloc_growth_exponent", fit.slope, config.envelope("deloc_growth"),
                              stderr=fit.stderr, **_meta(config)))
        summary["growth_exponent"] = fit.slope
    return rows, summary


# ---------------------------------------------------------------------------
# Local statistics
# ---------------------------------------------------------------------------


def _repulsion_rows(config: ExperimentConfig, spectra: list[np.ndarray], n: int) -> Tuple[list[ReportRow], bool]:
    ratio, se = mean_stderr([gap_ratio_statistic(v) for v in spectra])
    poisson_like = abs(ratio - GAP_RATIO_POISSON) < abs(ratio - GAP_RATIO_GOE)
    rows = [
        info_row("gap_ratio", ratio, stderr=se, **_meta(config, n)),
        info_row("no_level_repulsion", 1.0 if poisson_like else 0.0, **_meta(config, n)),
    ]
    return rows, poisson_like


@experiment("gaps")
def run_gaps(config: ExperimentConfig) -> Outcome:
    """Pooled unfolded bulk gaps against the surmise and, optionally, a second ensemble."""
    n = config.n_values[-1]
    window = _window(config)
    summary: dict[str, Any] = {}

    if config.param("diagnostic") == "poisson":
        law = UniformLaw()
        spectra = map_samples(lambda k: poisson_spectrum(n, seed_stream(config.seed, k, f"poisson/{n}")),
                              config.samples, config.threads)
        gaps = pool_gaps(unfold(v, law, window=(0.0, 0.5)) for v in spectra)
        rows, poisson_like = _repulsion_rows(config, spectra, n)
        rows.append(info_row("mean_gap", gaps.mean, **_meta(config, n)))
        if poisson_like:
            summary["flags"] = ["no level repulsion"]
        return rows, summary

    spec = config.require_ensemble().with_n(n)
    spectra = _spectra(config, spec)
    gaps = pool_gaps(unfold(v, window=window) for v in spectra)
    histogram = gap_histogram(gaps, bins=int(config.param("bins", 40)))
    rows = [
        info_row("gap_count", float(len(gaps)), **_meta(config, n)),
        check_row("surmise_sup", surmise_sup_distance(histogram, spec.beta), config.envelope("surmise_sup"),
                  **_meta(config, n, E=window[0])),
    ]
    repulsion, poisson_like = _repulsion_rows(config, spectra, n)
    rows.extend(repulsion)
    if poisson_like:
        summary["flags"] = ["no level repulsion"]
    if config.param("histogram_csv"):
        histogram.to_csv(config.param("histogram_csv"))

    if config.ensemble_b is not None:
        other = _spectra(config, _reference(config, spec), "comparison")
        other_gaps = pool_gaps(unfold(v, window=window) for v in other)
        rows.append(check_row("gap_ks", ks_distance(gaps.gaps, other_gaps.gaps), config.envelope("gap_ks"),
                              **_meta(config, n, E=window[0])))
    return rows, summary


@experiment("twopoint")
def run_twopoint(config: ExperimentConfig) -> Outcome:
    """Window-averaged two-point function against the Gaussian (or second) ensemble."""
    n = config.n_values[-1]
    spec = config.require_ensemble().with_n(n)
    energy = float(config.param("energy", 0.0))
    half_width = float(config.param("half_width", 0.1))
    options: dict[str, Any] = dict(E=energy, b=half_width, bins=int(config.param("bins", 30)),
                                   alpha_max=float(config.param("alpha_max", 3.0)))
    ours = two_point_window_correlation(_spectra(config, spec), **options)
    theirs = two_point_window_correlation(_spectra(config, _reference(config, spec), "comparison"), **options)
    meta = _meta(config, n, E=energy)
    rows = [
        check_row("twopoint_sup_difference", correlation_sup_difference(ours, theirs),
                  config.envelope("twopoint_sup"), **meta),
        info_row("twopoint_first_bin", float(ours.values[0]), **meta),
        info_row("twopoint_first_bin_reference", float(theirs.values[0]), **meta),
    ]
    return rows, {"centers": ours.centers.tolist(), "values": ours.values.tolist()}


@experiment("dbm-relax")
def run_dbm_relax(config: ExperimentConfig) -> Outcome:
    """Global and local KS distances along the OU flow."""
    n = config.n_values[-1]
    spec = config.require_ensemble().with_n(n)
    grid = [float(t) for t in config.param("t_grid", [0.0, 0.01, 0.1, 1.0, 3.0])]
    detune_amount = float(config.param("detune", 0.0))
    table = relaxation_experiment(spec, grid, config.samples, config.seed, config.threads,
                                  detune_amount, _window(config))
    rows: list[ReportRow] = []
    for row in table.rows:
        rows.append(info_row(f"ks_global[t={row.t:g}]", row.ks_global, stderr=row.global_floor, **_meta(config, n)))
        rows.append(info_row(f"ks_local[t={row.t:g}]", row.ks_local, stderr=row.local_floor, **_meta(config, n)))
        drift = moment_drift(spec.entries, row.t, orders=(4,))[0]
        rows.append(info_row(f"m4_drift[t={row.t:g}]", drift.drift, **_meta(config, n)))

    if len(table.rows) >= 2:
        rises = [
            (b.ks_local - a.ks_local) / max(b.local_floor, 1e-12)
            for a, b in zip(table.rows, table.rows[1:])
        ]
        rows.append(check_row("ks_local_max_rise_in_floors", max(rises), config.envelope("dbm_local_floors"),
                              **_meta(config, n)))
    if detune_amount and len(table.rows) >= 2:
        early = min(table.rows, key=lambda r: abs(r.t - float(config.param("t_early", 1.0 / n))))
        late = min(table.rows, key=lambda r: abs(r.t - float(config.param("t_late", 1.0))))
        status = "pass" if late.ks_global < early.ks_global else "fail"
        rows.append(ReportRow("ks_global_late_minus_early", late.ks_global - early.ks_global,
                              envelope=0.0, status=status, **_meta(config, n)))
    if config.param("table_csv"):
        table.to_csv(config.param("table_csv"))
    summary: dict[str, Any] = {}
    if len(table.rows) >= 3:
        summary["global_trend"] = table.trend("ks_global")
        summary["local_trend"] = table.trend("ks_local")
    return rows, summary


# ---------------------------------------------------------------------------
# Edges
# ---------------------------------------------------------------------------


@experiment("edge")
def run_edge(config: ExperimentConfig) -> Outcome:
    """N^(2/3)(lambda_N - 2) of the ensemble against the Gaussian (or second) ensemble."""
    n = config.n_values[-1]
    spec = config.require_ensemble().with_n(n)
    which = str(config.param("which", "largest"))
    ours = edge_statistic(_spectra(config, spec), which, spec.entries.kind)
    theirs = edge_statistic(_spectra(config, _reference(config, spec), "comparison"), which)
    mean, se = mean_stderr(ours.values)
    rows = [
        check_row("edge_ks", ks_distance(ours.values, theirs.values), config.envelope("edge_ks"), **_meta(config, n)),
        info_row("edge_mean", mean, stderr=se, **_meta(config, n)),
    ]
    return rows, {}


@experiment("er")
def run_er(config: ExperimentConfig) -> Outcome:
    """Outlier location and second-largest edge statistic of Erdős–Rényi graphs."""
    n = config.n_values[-1]
    spec = config.require_ensemble().with_n(n)
    if spec.er_params is None:
        raise ConfigError("Experiment 'er' needs an Erdős–Rényi ensemble (ensemble.er.p)")
    spectra = _spectra(config, spec)
    top, se = mean_stderr([v[-1] for v in spectra])
    location = spec.er_params.outlier_location
    second = edge_statistic(spectra, "second_largest", "erdos_renyi")
    goe = edge_statistic(_spectra(config, EnsembleSpec.goe(n), "comparison"), "largest", "gaussian")
    rows = [
        check_row("er_outlier_relative_error", abs(top - location) / location, config.envelope("er_outlier_rel"),
                  stderr=se / location, **_meta(config, n)),
        info_row("er_outlier_predicted", location, **_meta(config, n)),
        check_row("er_second_edge_ks", ks_distance(second.values, goe.values), config.envelope("er_edge_ks"),
                  **_meta(config, n)),
    ]
    return rows, {"q": spec.er_params.q}


# ---------------------------------------------------------------------------
# Log-gases
# ---------------------------------------------------------------------------


def _chain_params(config: ExperimentConfig, key: str = "chain") -> ChainParams:
    return ChainParams.from_mapping(config.param(key, {}))


@experiment("loggas")
def run_loggas(config: ExperimentConfig) -> Outcome:
    """Equilibrium law, tridiagonal and MCMC gap comparisons, and beta-rigidity."""
    gas = config.require_loggas()
    n = config.n if config.n is not None else gas.n
    gas = gas.with_n(n)
    window = _window(config, (0.0, 1.0))
    rows: list[ReportRow] = []
    summary: dict[str, Any] = {}
    quadratic = gas.potential.kind == "quadratic"

    law = equilibrium_density(gas)
    rows.append(check_row("equilibrium_residual", law.equilibrium_residual(), config.envelope("equilibrium_residual"),
                          **_meta(config, n)))
    summary["support"] = list(law.support)

    if quadratic:
        default_betas = [gas.beta] if gas.beta in (1.0, 2.0) else []
        for beta in config.param("dense_betas", default_betas):
            beta = float(beta)
            if beta not in (1.0, 2.0):
                raise ConfigError(f"Dense comparison needs beta 1 or 2, got {beta}")
            tri = tridiagonal_spectra(beta, n, config.samples, config.seed, config.threads)
            tri_gaps = pool_gaps(unfold(v, window=window) for v in tri)
            symmetry = "real_symmetric" if beta == 1.0 else "complex_hermitian"
            dense = _spectra(config, EnsembleSpec(symmetry, n), "dense")
            dense_gaps = pool_gaps(unfold(v, window=window) for v in dense)
            rows.append(check_row(f"tridiagonal_vs_dense_ks[beta={beta:g}]", ks_distance(tri_gaps.gaps, dense_gaps.gaps),
                                  config.envelope("tridiagonal_ks"), **_meta(config, n)))

    if config.param("mcmc", True):
        mcmc_n = int(config.param("mcmc_n", n))
        chains = loggas_chains(gas.with_n(mcmc_n), _chain_params(config), int(config.param("chains", 1)),
                               config.seed, config.threads)
        chain_gaps = pool_gaps(unfold(sample, law, window) for chain in chains for sample in chain.samples)
        acceptance = float(np.mean([c.acceptance for c in chains]))
        rows.append(info_row("mcmc_acceptance", acceptance, **_meta(config, mcmc_n)))
        # Gaussian beta-ensemble gaps; universality makes them the reference for any potential
        reference = tridiagonal_spectra(gas.beta, mcmc_n, config.samples, config.seed + 1, config.threads)
        reference_gaps = pool_gaps(unfold(v, window=window) for v in reference)
        distance = ks_distance(chain_gaps.gaps, reference_gaps.gaps)
        if quadratic:
            rows.append(check_row("mcmc_vs_tridiagonal_ks", distance, config.envelope("mcmc_ks"), **_meta(config, mcmc_n)))
        else:
            rows.append(info_row("mcmc_vs_gaussian_gap_ks", distance, **_meta(config, mcmc_n)))

    if len(config.n_sweep) >= 2:
        route = "tridiagonal" if quadratic else "mcmc"
        records, fit = loggas_rigidity_report(gas, config.n_sweep, config.samples, config.seed, config.threads,
                                              route=route, params=_chain_params(config))
        for record in records:
            rows.append(info_row("loggas_median_deviation", record.median_deviation, **_meta(config, record.n)))
            rows.append(info_row("loggas_middle_median", record.middle_median, stderr=record.middle_stderr,
                                 **_meta(config, record.n)))
        rows.append(interval_row("loggas_rigidity_slope", fit.slope, config.envelope("loggas_slope"),
                                 stderr=fit.stderr, **_meta(config)))
        summary["rigidity_slope"] = fit.slope
    return rows, summary


@experiment("conditional")
def run_conditional(config: ExperimentConfig) -> Outcome:
    """Conditional measure against its Gaussian reference, plus the K = 1 quadrature oracle."""
    gas = config.require_loggas()
    if config.n is not None:
        gas = gas.with_n(config.n)
    K = int(config.param("K", 32))
    cond = ConditionalSpec.bulk_window(gas, K)
    record = conditional_measure_experiment(cond, _chain_params(config), config.seed, config.threads)
    rows = [
        check_row("conditional_ks", record.ks, config.envelope("conditional_ks"), stderr=record.noise_floor,
                  n=gas.n, seed=config.seed, samples=record.samples),
        info_row("conditional_acceptance", record.acceptance, n=gas.n),
        info_row("reference_acceptance", record.reference_acceptance, n=gas.n),
    ]
    if config.param("k1_check", True):
        single = ConditionalSpec.at_classical(gas, gas.n // 2, 1)
        cdf = conditional_one_point_cdf(single)
        chain = conditional_mcmc_sample(single, _chain_params(config, "k1_chain"),
                                        seed_stream(config.seed, 0, f"conditional/k1/{gas.n}"))
        distance = float(scipy_stats.kstest(chain.samples[:, 0], cdf).statistic)
        rows.append(check_row("conditional_k1_ks", distance, config.envelope("conditional_k1_ks"),
                              n=gas.n, seed=config.seed, samples=len(chain.samples)))
    return rows, record.to_mapping()


@experiment("loop")
def run_loop(config: ExperimentConfig) -> Outcome:
    """Loop-equation residual against its jackknife error on a z grid."""
    gas = config.require_loggas()
    if config.n is not None:
        gas = gas.with_n(config.n)
    z_grid = [complex(float(re), float(im)) for re, im in config.param("z", [[0.0, 2.0]])]
    records = loop_equation_residual(gas, z_grid, config.samples, config.seed, config.threads)
    rows: list[ReportRow] = []
    for record in records:
        meta = _meta(config, gas.n, E=record.z.real, eta=record.z.imag)
        rows.append(info_row("loop_residual", record.residual, stderr=record.stderr, **meta))
        rows.append(check_row("loop_residual_in_stderrs", record.residual / record.stderr,
                              config.envelope("loop_stderrs"), **meta))
        rows.append(info_row("loop_mean_deviation", record.deviation, **meta))
    return rows, {}


# ---------------------------------------------------------------------------
# Comparison and identities
# ---------------------------------------------------------------------------


@experiment("compare")
def run_compare(config: ExperimentConfig) -> Outcome:
    """
    Swap a reference law into a 4-moment and a 3-moment partner across N.

    The reference law is ensemble.entries; params.better and params.worse
    name the partners. Each N runs params.repeats seeds and applies a
    one-sided t test to the per-seed differences |dE m(better)| - |dE m(worse)|.
    """
    spec = config.require_ensemble()
    reference = spec.entries
    better = entry_distribution_from_mapping(config.param("better", {"kind": "three_point_matched"}))
    worse = entry_distribution_from_mapping(config.param("worse", {"kind": "bernoulli_symmetric"}))
    energy = float(config.param("energy", 0.0))
    exponent = float(config.param("eta_exponent", -1.0))
    repeats = int(config.param("repeats", 10))
    z2 = config.param("z2")
    options: dict[str, Any] = dict(
        symmetry=spec.symmetry,
        coupling=str(config.param("coupling", "quantile")),
        schedule=str(config.param("schedule", "lexicographic")),
        z2=None if z2 is None else complex(float(z2[0]), float(z2[1])),
    )
    confidence = float(config.envelope("compare_confidence"))

    rows = [
        info_row("better_matching_order", float(moment_gap(reference, better).matching_order)),
        info_row("worse_matching_order", float(moment_gap(reference, worse).matching_order)),
    ]
    telescoping = 0.0
    means: dict[str, list[float]] = {"better": [], "worse": []}
    last = None
    for n in config.n_values:
        z = complex(energy, n**exponent)
        per_seed: dict[str, list[float]] = {"better": [], "worse": []}
        for r in range(repeats):
            repeat_seed = derive_seed(config.seed, r, "compare/repeat")
            for name, partner in (("better", better), ("worse", worse)):
                trace = swap_experiment(reference, partner, n, z, config.samples, repeat_seed, config.threads,
                                        **options)
                telescoping = max(telescoping, trace.telescoping_error)
                per_seed[name].append(trace.difference()[0])
                last = trace
        meta = _meta(config, n, E=z.real, eta=z.imag)
        for name in ("better", "worse"):
            mean, se = mean_stderr(per_seed[name])
            means[name].append(mean)
            rows.append(info_row(f"{name}_trace_difference", mean, stderr=se, **meta))

        deltas = np.array(per_seed["better"]) - np.array(per_seed["worse"])
        logger.info("compare N = %d: better %.3g, worse %.3g", n, means["better"][-1], means["worse"][-1])
        if repeats >= 2 and np.std(deltas, ddof=1) > 0:
            statistic = float(np.mean(deltas) / (np.std(deltas, ddof=1) / math.sqrt(repeats)))
            critical = float(scipy_stats.t.ppf(confidence, repeats - 1))
            status = "pass" if statistic <= critical else "fail"
            rows.append(ReportRow("better_le_worse_t", statistic, envelope=critical, status=status, **meta))
        else:
            status = "pass" if float(np.mean(deltas)) <= 0 else "fail"
            rows.append(ReportRow("better_le_worse_mean", float(np.mean(deltas)), envelope=0.0, status=status, **meta))

    rows.append(check_row("telescoping_error", telescoping, config.envelope("telescoping"), **_meta(config)))
    summary: dict[str, Any] = {"better": means["better"], "worse": means["worse"]}
    if len(config.n_values) >= 2 and min(means["better"] + means["worse"]) > 0:
        fit_better = fit_loglog_slope(config.n_values, means["better"])
        fit_worse = fit_loglog_slope(config.n_values, means["worse"])
        margin = 2.0 * math.hypot(fit_better.stderr, fit_worse.stderr)
        rows.append(info_row("better_decay_slope", fit_better.slope, stderr=fit_better.stderr))
        rows.append(info_row("worse_decay_slope", fit_worse.slope, stderr=fit_worse.stderr))
        rows.append(check_row("decay_slope_excess", fit_better.slope - fit_worse.slope, margin, **_meta(config)))
    if last is not None and config.param("profile_csv"):
        last.to_csv(config.param("profile_csv"))
    if last is not None and last.products is not None:
        value, se = last.product_difference()
        rows.append(info_row("product_difference", value, stderr=se, **_meta(config, last.n)))
    return rows, summary


@experiment("flucavg")
def run_flucavg(config: ExperimentConfig) -> Outcome:
    """Slopes of averaged and individual |Z| against N eta."""
    spec = config.require_ensemble()
    exponent = float(config.param("eta_exponent", -0.5))
    energy = float(config.param("energy", 0.0))
    records, slope_a, slope_b = fluctuation_averaging_sweep(
        spec, config.n_values, lambda n: n**exponent, config.samples, config.seed, energy, config.threads
    )
    rows: list[ReportRow] = []
    for record in records:
        meta = _meta(config, record.n, E=record.z.real, eta=record.z.imag)
        rows.append(info_row("flucavg_averaged", record.median_averaged, **meta))
        rows.append(info_row("flucavg_individual", record.median_individual, **meta))
    if len(records) >= 2:
        rows.append(interval_row("flucavg_averaged_slope", slope_a.slope, config.envelope("flucavg_averaged_slope"),
                                 stderr=slope_a.stderr, **_meta(config)))
        rows.append(interval_row("flucavg_individual_slope", slope_b.slope,
                                 config.envelope("flucavg_individual_slope"), stderr=slope_b.stderr, **_meta(config)))
    return rows, {}


@experiment("hs-check")
def run_hs_check(config: ExperimentConfig) -> Outcome:
    """Helffer–Sjöstrand quadrature, Ward identity and Schur complement checks."""
    rows: list[ReportRow] = []
    for lam in config.param("points", [0.0, 0.37, -0.8, 5.0]):
        result = hs_identity_check(bump_function(), float(lam))
        rows.append(check_row("hs_residual", result.residual, config.envelope("hs_residual"), E=float(lam)))

    n = config.n if config.n is not None else 50
    spec = config.ensemble.with_n(n) if config.ensemble is not None else EnsembleSpec.goe(n)
    z = complex(float(config.param("energy", 0.1)), float(config.param("eta", 0.05)))
    H = draw_sample(spec, config.seed, 0)
    G = green_function(H, z)
    # Ward: sum_j |G_ij|^2 = Im G_ii / eta
    lhs = np.sum(np.abs(G) ** 2, axis=1)
    rhs = np.diagonal(G).imag / z.imag
    ward = float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs)))
    rows.append(check_row("ward_identity", ward, config.envelope("ward"), n=n, E=z.real, eta=z.imag, seed=config.seed))

    re, im = config.param("schur_z", [0.3, 0.2])
    w = complex(float(re), float(im))
    schur = float(np.max(np.abs(schur_quadratic_forms(H, w) - minor_quadratic_forms(H, w))))
    rows.append(check_row("schur_identity", schur, config.envelope("schur"), n=n, E=w.real, eta=w.imag,
                          seed=config.seed))
    return rows, {}
