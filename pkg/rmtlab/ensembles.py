"""
Random Matrix Ensembles

Samplers for Wigner, generalized Wigner, band and Erdős–Rényi matrices with
pluggable entry distributions and variance profiles. Every sampler is a pure
function of (spec, random stream) and returns an exactly self-adjoint matrix.
"""

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from rmtlab.rng import seed_path, seed_stream

SYMMETRIES = ("real_symmetric", "complex_hermitian")
ENTRY_KINDS = (
    "gaussian",
    "bernoulli_symmetric",
    "uniform_centered",
    "three_point_matched",
    "custom_discrete",
)
PROFILE_KINDS = ("flat", "generalized", "band")
# kinds a config can name; two_block is the generalized profile with a contrast
CONFIG_PROFILE_KINDS = ("flat", "two_block", "band")

ShapeFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class EntryDistribution:
    """
    Law of a single standardized matrix entry v = sqrt(N) h.

    Attributes
    ----------
    kind : str
        One of ENTRY_KINDS
    atoms : tuple of (value, probability)
        Support of discrete laws (filled automatically for built-in discrete kinds)
    subexp_params : tuple (C0, theta), optional
        Subexponential decay tag, metadata only
    """

    kind: str
    atoms: Tuple[Tuple[float, float], ...] = ()
    subexp_params: Optional[Tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.kind not in ENTRY_KINDS:
            raise ValueError(
                f"Unknown entry distribution '{self.kind}', expected one of {ENTRY_KINDS}"
            )

        if self.kind == "bernoulli_symmetric" and not self.atoms:
            object.__setattr__(self, "atoms", ((-1.0, 0.5), (1.0, 0.5)))

        if self.kind in ("three_point_matched", "custom_discrete"):
            if not self.atoms:
                raise ValueError(f"'{self.kind}' requires a non-empty list of atoms")
            values = np.array([a[0] for a in self.atoms], dtype=float)
            probs = np.array([a[1] for a in self.atoms], dtype=float)
            if not np.all(np.isfinite(values)):
                raise ValueError("Atoms must be finite")
            if np.any(probs < 0):
                raise ValueError("Atom probabilities must be non-negative")
            if abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError(
                    f"Atom probabilities must sum to 1, got {probs.sum():.15f}"
                )

    @property
    def is_discrete(self) -> bool:
        return self.kind in ("bernoulli_symmetric", "three_point_matched", "custom_discrete")

    @property
    def moments(self) -> Tuple[float, float, float, float]:
        """First four moments (m1, m2, m3, m4)."""
        if self.kind == "gaussian":
            return (0.0, 1.0, 0.0, 3.0)
        if self.kind == "uniform_centered":
            return (0.0, 1.0, 0.0, 9.0 / 5.0)
        values = np.array([a[0] for a in self.atoms])
        probs = np.array([a[1] for a in self.atoms])
        m1, m2, m3, m4 = (float(np.sum(probs * values**s)) for s in range(1, 5))
        return (m1, m2, m3, m4)

    def exact_even_moments(self) -> Tuple[Fraction, Fraction]:
        """
        (E X^2, E X^4) of a symmetric discrete law in rational arithmetic.

        Squares of the atoms and the probabilities are recovered as fractions,
        so laws with atoms like sqrt(3) are checked without rounding.

        Raises
        ------
        ValueError
            If the law is not discrete or its atoms are not symmetric about 0
        """
        if not self.is_discrete:
            raise ValueError(f"Exact moments need a discrete law, got '{self.kind}'")

        weights: dict[float, float] = {}
        for value, prob in self.atoms:
            weights[value] = weights.get(value, 0.0) + prob
        for value, prob in weights.items():
            mirrored = weights.get(-value, 0.0) if value != 0 else prob
            if abs(mirrored - prob) > 1e-12:
                raise ValueError("Exact moments are only available for symmetric atoms")

        m2 = Fraction(0)
        m4 = Fraction(0)
        for value, prob in self.atoms:
            square = Fraction(value * value).limit_denominator(10**9)
            p = Fraction(prob).limit_denominator(10**9)
            m2 += p * square
            m4 += p * square * square
        return m2, m4

    def quantile(self, u: np.ndarray) -> np.ndarray:
        """Inverse CDF evaluated at uniforms u in (0, 1)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "gaussian":
            return np.asarray(stats.norm.ppf(u))
        if self.kind == "uniform_centered":
            return math.sqrt(3.0) * (2.0 * u - 1.0)

        values = np.array([a[0] for a in self.atoms])
        probs = np.array([a[1] for a in self.atoms])
        order = np.argsort(values)
        cumulative = np.cumsum(probs[order])
        index = np.searchsorted(cumulative, u, side="right")
        return values[order][np.minimum(index, len(values) - 1)]

    def sample(self, rng: np.random.Generator, size: Union[int, Tuple[int, ...]]) -> np.ndarray:
        """Draw standardized entries."""
        if self.kind == "gaussian":
            return rng.standard_normal(size)
        return self.quantile(rng.random(size))

    def to_mapping(self) -> dict[str, Any]:
        mapping: dict[str, Any] = {"kind": self.kind}
        if self.kind == "custom_discrete":
            mapping["atoms"] = [list(a) for a in self.atoms]
        return mapping


GAUSSIAN = EntryDistribution("gaussian")
BERNOULLI = EntryDistribution("bernoulli_symmetric")
UNIFORM = EntryDistribution("uniform_centered")


def make_moment_matched_three_point() -> EntryDistribution:
    """
    Symmetric three-atom law whose first four moments are (0, 1, 0, 3).

    Solves 2 p a^2 = 1 and 2 p a^4 = 3 for atoms {-a, 0, a} with weights
    {p, 1 - 2p, p}, giving a^2 = 3 and p = 1/6.

    Examples
    --------
    >>> dist = make_moment_matched_three_point()
    >>> [round(v, 6) for v in dist.moments]
    [0.0, 1.0, 0.0, 3.0]
    """
    a_squared = 3.0  # m4 / m2
    p = 1.0 / (2.0 * a_squared)
    a = math.sqrt(a_squared)
    return EntryDistribution(
        "three_point_matched",
        atoms=((-a, p), (0.0, 1.0 - 2.0 * p), (a, p)),
    )


def entry_distribution_from_mapping(mapping: Mapping[str, Any]) -> EntryDistribution:
    kind = str(mapping.get("kind", "gaussian"))
    if kind == "three_point_matched":
        return make_moment_matched_three_point()
    if kind == "custom_discrete":
        atoms = tuple((float(v), float(p)) for v, p in mapping.get("atoms", []))
        return EntryDistribution(kind, atoms=atoms)
    return EntryDistribution(kind)


def _shape_function(shape: Union[str, ShapeFunction]) -> ShapeFunction:
    if callable(shape):
        return shape
    if shape == "indicator":
        return lambda x: (np.abs(x) <= 0.5).astype(float)
    if shape == "triangle":
        return lambda x: np.maximum(0.0, 1.0 - np.abs(x))
    raise ValueError(f"Unknown band shape '{shape}', expected 'indicator' or 'triangle'")


def periodic_distance(n: int) -> np.ndarray:
    """Matrix of [i - j]_N, the distance on the discrete circle of length N."""
    idx = np.arange(n)
    d = np.abs(idx[:, None] - idx[None, :])
    return np.minimum(d, n - d)


@dataclass(frozen=True)
class VarianceProfile:
    """
    Matrix of entry variances sigma^2_ij with unit row sums.

    Use the constructors `flat`, `generalized`, `two_block` and `band`
    instead of instantiating directly.
    """

    kind: str
    n: int
    width: Optional[int] = None
    shape: Union[str, ShapeFunction] = "indicator"
    contrast: Optional[float] = None
    matrix: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"Unknown profile '{self.kind}', expected one of {PROFILE_KINDS}")
        if self.n < 1:
            raise ValueError(f"Profile dimension must be positive, got {self.n}")

    @classmethod
    def flat(cls, n: int) -> "VarianceProfile":
        return cls("flat", n)

    @classmethod
    def generalized(cls, matrix: np.ndarray) -> "VarianceProfile":
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Variance matrix must be square, got shape {matrix.shape}")
        matrix.setflags(write=False)
        profile = cls("generalized", matrix.shape[0], matrix=matrix)
        profile.validate()
        return profile

    @classmethod
    def two_block(cls, n: int, contrast: float) -> "VarianceProfile":
        """Generalized profile (1 +/- contrast)/N on diagonal/off-diagonal blocks."""
        if n % 2 != 0:
            raise ValueError(f"Two-block profile needs an even dimension, got {n}")
        if not 0.0 <= contrast < 1.0:
            raise ValueError(f"contrast must lie in [0, 1), got {contrast}")
        block = np.arange(n) < n // 2
        same = block[:, None] == block[None, :]
        matrix = np.where(same, 1.0 + contrast, 1.0 - contrast) / n
        profile = cls.generalized(matrix)
        object.__setattr__(profile, "contrast", contrast)
        return profile

    @classmethod
    def band(
        cls, n: int, width: int, shape: Union[str, ShapeFunction] = "indicator"
    ) -> "VarianceProfile":
        """
        Band profile sigma^2_ij = W^-1 f([i-j]_N / W), rows renormalized to 1.

        A width above N/2 cannot be resolved on the circle; the profile then
        degrades to flat with a RuntimeWarning.
        """
        if width < 1:
            raise ValueError(f"Band width must be positive, got {width}")
        if width > n / 2:
            warnings.warn(
                f"Band width W={width} exceeds N/2={n / 2}; using the flat profile",
                RuntimeWarning,
            )
            return cls.flat(n)
        _shape_function(shape)
        return cls("band", n, width=width, shape=shape)

    def sigma2(self) -> np.ndarray:
        """The N x N matrix of variances."""
        if self.kind == "flat":
            return np.full((self.n, self.n), 1.0 / self.n)
        if self.kind == "generalized":
            assert self.matrix is not None
            return np.array(self.matrix)

        assert self.width is not None
        f = _shape_function(self.shape)
        raw = f(periodic_distance(self.n) / self.width) / self.width
        row_sums = raw.sum(axis=1)
        if np.any(row_sums <= 0):
            raise ValueError("Band shape function vanishes on a whole row")
        # circulant, so every row has the same sum and the result stays symmetric
        return raw / row_sums[:, None]

    @property
    def bounds(self) -> Tuple[float, float]:
        """(C_inf, C_sup) with C_inf <= N sigma^2_ij <= C_sup."""
        scaled = self.n * self.sigma2()
        return float(scaled.min()), float(scaled.max())

    def validate(self) -> None:
        """Check symmetry, non-negativity and unit row sums (within 1e-10)."""
        s2 = self.sigma2()
        if np.any(s2 < 0):
            raise ValueError("Variance profile has negative entries")
        if not np.allclose(s2, s2.T, rtol=0.0, atol=1e-15):
            raise ValueError("Variance profile must be symmetric")
        deviation = np.max(np.abs(s2.sum(axis=1) - 1.0))
        if deviation > 1e-10:
            raise ValueError(f"Variance profile rows must sum to 1, max deviation {deviation:.2e}")

    def to_mapping(self) -> dict[str, Any]:
        mapping: dict[str, Any] = {"kind": "two_block" if self.contrast is not None else self.kind}
        if self.kind == "band":
            mapping["width"] = self.width
            if isinstance(self.shape, str):
                mapping["shape"] = self.shape
        if self.contrast is not None:
            mapping["contrast"] = self.contrast
        return mapping


@dataclass(frozen=True)
class ErdosRenyiParams:
    """Sparsity p, q = sqrt(pN) and the scaling gamma = (1 - q^2/N)^(-1/2)."""

    p: float
    q: float
    gamma: float

    @classmethod
    def from_p(cls, n: int, p: float) -> "ErdosRenyiParams":
        if not 0.0 < p <= 1.0:
            raise ValueError(f"Edge probability must lie in (0, 1], got {p}")
        q = math.sqrt(p * n)
        if q < 1.0:
            raise ValueError(
                f"Graph too sparse: q = sqrt(pN) = {q:.4f} < 1 (N={n}, p={p})"
            )
        if p == 1.0:
            warnings.warn(
                "Complete graph: gamma = (1 - q^2/N)^(-1/2) is undefined, using 1",
                RuntimeWarning,
            )
            return cls(p=p, q=q, gamma=1.0)
        return cls(p=p, q=q, gamma=1.0 / math.sqrt(1.0 - q * q / n))

    @property
    def outlier_location(self) -> float:
        """Predicted top eigenvalue gamma q + 1/(gamma q)."""
        gq = self.gamma * self.q
        return gq + 1.0 / gq


@dataclass(frozen=True)
class EnsembleSpec:
    """
    Complete description of a random-matrix law.

    Attributes
    ----------
    symmetry : str
        "real_symmetric" or "complex_hermitian"
    n : int
        Matrix dimension N
    entries : EntryDistribution
        Law of standardized entries
    profile : VarianceProfile
        Variances sigma^2_ij (flat 1/N when omitted)
    er_params : ErdosRenyiParams, optional
        Present for Erdős–Rényi adjacency matrices
    imag_fraction : float
        Share of an off-diagonal complex entry's variance carried by its
        imaginary part; 1/2 gives E h^2 = 0
    """

    symmetry: str
    n: int
    entries: EntryDistribution = GAUSSIAN
    profile: Optional[VarianceProfile] = None
    er_params: Optional[ErdosRenyiParams] = None
    imag_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.symmetry not in SYMMETRIES:
            raise ValueError(f"Unknown symmetry '{self.symmetry}', expected one of {SYMMETRIES}")
        if self.n < 1:
            raise ValueError(f"Matrix dimension must be positive, got {self.n}")
        if self.profile is None:
            object.__setattr__(self, "profile", VarianceProfile.flat(self.n))
        assert self.profile is not None
        if self.profile.n != self.n:
            raise ValueError(
                f"Dimension mismatch: spec has N={self.n} but profile has N={self.profile.n}"
            )
        if not 0.0 <= self.imag_fraction <= 1.0:
            raise ValueError(f"imag_fraction must lie in [0, 1], got {self.imag_fraction}")
        if self.er_params is not None and self.symmetry != "real_symmetric":
            raise ValueError("Erdős–Rényi matrices are real symmetric")

    @property
    def variance_profile(self) -> VarianceProfile:
        assert self.profile is not None
        return self.profile

    @property
    def beta(self) -> int:
        """Dyson index of the symmetry class."""
        return 1 if self.symmetry == "real_symmetric" else 2

    @classmethod
    def goe(cls, n: int) -> "EnsembleSpec":
        return cls("real_symmetric", n)

    @classmethod
    def gue(cls, n: int) -> "EnsembleSpec":
        return cls("complex_hermitian", n)

    @classmethod
    def erdos_renyi(cls, n: int, p: float) -> "EnsembleSpec":
        return cls(
            "real_symmetric",
            n,
            entries=EntryDistribution("custom_discrete", atoms=((0.0, 1.0 - p), (1.0, p))),
            er_params=ErdosRenyiParams.from_p(n, p),
        )

    def with_n(self, n: int) -> "EnsembleSpec":
        """Same law at another dimension (profiles are rebuilt for the new N)."""
        if self.er_params is not None:
            return EnsembleSpec.erdos_renyi(n, self.er_params.p)
        profile = self.variance_profile
        if profile.kind == "band":
            assert profile.width is not None
            new_profile = VarianceProfile.band(n, profile.width, profile.shape)
        elif profile.contrast is not None:
            new_profile = VarianceProfile.two_block(n, profile.contrast)
        elif profile.kind == "generalized":
            raise ValueError("A generalized profile given as a matrix cannot be resized")
        else:
            new_profile = VarianceProfile.flat(n)
        return EnsembleSpec(self.symmetry, n, self.entries, new_profile, None, self.imag_fraction)

    def to_mapping(self) -> dict[str, Any]:
        """Structured-config form (keys: symmetry, n, entries.kind, profile.kind, ...)."""
        mapping: dict[str, Any] = {
            "symmetry": self.symmetry,
            "n": self.n,
            "entries": self.entries.to_mapping(),
            "profile": self.variance_profile.to_mapping(),
        }
        if self.er_params is not None:
            mapping["er"] = {"p": self.er_params.p}
        if self.imag_fraction != 0.5:
            mapping["imag_fraction"] = self.imag_fraction
        return mapping

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any], n: Optional[int] = None) -> "EnsembleSpec":
        """Inverse of `to_mapping`; `n` overrides the stored dimension."""
        dim = int(n if n is not None else mapping.get("n", 0))
        er = mapping.get("er")
        if er is not None:
            return cls.erdos_renyi(dim, float(er["p"]))

        profile_map = mapping.get("profile", {"kind": "flat"})
        kind = profile_map.get("kind", "flat")
        if kind == "flat":
            profile = VarianceProfile.flat(dim)
        elif kind == "band":
            profile = VarianceProfile.band(
                dim, int(profile_map["width"]), profile_map.get("shape", "indicator")
            )
        elif kind == "two_block":
            profile = VarianceProfile.two_block(dim, float(profile_map.get("contrast", 0.0)))
        elif kind == "generalized":
            raise ValueError("A generalized profile needs its variance matrix; configs use kind 'two_block' with a contrast")
        else:
            raise ValueError(f"Unknown profile '{kind}', expected one of {CONFIG_PROFILE_KINDS}")

        return cls(
            symmetry=str(mapping.get("symmetry", "real_symmetric")),
            n=dim,
            entries=entry_distribution_from_mapping(mapping.get("entries", {})),
            profile=profile,
            imag_fraction=float(mapping.get("imag_fraction", 0.5)),
        )


@dataclass(frozen=True)
class MatrixSample:
    """One immutable self-adjoint matrix drawn from `spec`."""

    entries: np.ndarray = field(repr=False)
    spec: EnsembleSpec
    seed_path: str = ""
    flow_time: float = 0.0

    def __post_init__(self) -> None:
        entries = np.array(self.entries)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])

    @property
    def is_complex(self) -> bool:
        return bool(np.iscomplexobj(self.entries))


def _assemble(upper: np.ndarray, diagonal: np.ndarray) -> np.ndarray:
    """Self-adjoint matrix from a strictly upper triangle and a real diagonal."""
    return upper + upper.conj().T + np.diag(diagonal)


def sample_wigner(
    spec: EnsembleSpec, rng: np.random.Generator, seed_path: str = ""
) -> MatrixSample:
    """
    Draw a (generalized) Wigner matrix h_ij = sigma_ij v_ij.

    Parameters
    ----------
    spec : EnsembleSpec
        Ensemble without Erdős–Rényi parameters
    rng : np.random.Generator
        Random stream (see `rmtlab.rng.seed_stream`)
    seed_path : str, optional
        Identifier of the stream, stored on the sample

    Returns
    -------
    MatrixSample
        Self-adjoint sample, h_ij = conj(h_ji) bit-exact

    Notes
    -----
    - The diagonal is real with variance sigma^2_ii, drawn from the entry law
    - Complex entries are sqrt(1-f) x + i sqrt(f) y with independent
      standardized x, y and f = spec.imag_fraction

    Examples
    --------
    >>> H = sample_wigner(EnsembleSpec.goe(4), np.random.default_rng(0))
    >>> bool(np.array_equal(H.entries, H.entries.T))
    True
    """
    if spec.er_params is not None:
        raise ValueError("Erdős–Rényi specs are sampled with sample_erdos_renyi")

    n = spec.n
    sigma = np.sqrt(spec.variance_profile.sigma2())
    x = spec.entries.sample(rng, (n, n))

    if spec.symmetry == "complex_hermitian":
        y = spec.entries.sample(rng, (n, n))
        f = spec.imag_fraction
        off = math.sqrt(1.0 - f) * x + 1j * math.sqrt(f) * y
    else:
        off = x

    upper = np.triu(off * sigma, k=1)
    diagonal = np.diagonal(x) * np.diagonal(sigma)
    return MatrixSample(_assemble(upper, diagonal), spec, seed_path)


def sample_erdos_renyi(
    n: int, p: float, rng: np.random.Generator, seed_path: str = ""
) -> MatrixSample:
    """
    Scaled adjacency matrix of G(N, p): a_ij = gamma/q with probability p.

    Entries are not centered; the top eigenvalue is an outlier near
    gamma q + 1/(gamma q).

    Raises
    ------
    ValueError
        If q = sqrt(pN) < 1 or p is outside (0, 1]
    """
    spec = EnsembleSpec.erdos_renyi(n, p)
    assert spec.er_params is not None
    scale = spec.er_params.gamma / spec.er_params.q
    edges = rng.random((n, n)) < p
    upper = np.triu(edges, k=1) * scale
    return MatrixSample(_assemble(upper, np.zeros(n)), spec, seed_path)


def sample_band(
    n: int,
    width: int,
    shape: Union[str, ShapeFunction],
    rng: np.random.Generator,
    entries: EntryDistribution = GAUSSIAN,
    symmetry: str = "real_symmetric",
    seed_path: str = "",
) -> MatrixSample:
    """Draw a periodic band matrix with bandwidth `width` and shape `shape`."""
    profile = VarianceProfile.band(n, width, shape)
    spec = EnsembleSpec(symmetry, n, entries=entries, profile=profile)
    return sample_wigner(spec, rng, seed_path)


def sample_matrix(
    spec: EnsembleSpec, rng: np.random.Generator, seed_path: str = ""
) -> MatrixSample:
    """Draw from any spec, Erdős–Rényi included."""
    if spec.er_params is not None:
        return sample_erdos_renyi(spec.n, spec.er_params.p, rng, seed_path)
    return sample_wigner(spec, rng, seed_path)


def detune(sample: MatrixSample, amount: float) -> MatrixSample:
    """Scale every entry by (1 + amount), i.e. all variances by (1 + amount)^2."""
    if amount <= -1.0:
        raise ValueError(f"detune amount must exceed -1, got {amount}")
    return MatrixSample(
        sample.entries * (1.0 + amount), sample.spec, sample.seed_path, sample.flow_time
    )


def sample_many(
    spec: EnsembleSpec, rngs: Sequence[np.random.Generator]
) -> list[MatrixSample]:
    """One sample per stream, in stream order."""
    return [sample_matrix(spec, rng) for rng in rngs]


def draw_sample(
    spec: EnsembleSpec, master_seed: int, sample_index: int, label: str = "entries"
) -> MatrixSample:
    """Sample `sample_index` of an experiment, on a stream keyed by label and N."""
    stream_label = f"{label}/{spec.n}"
    return sample_matrix(
        spec,
        seed_stream(master_seed, sample_index, stream_label),
        seed_path(master_seed, sample_index, stream_label),
    )
