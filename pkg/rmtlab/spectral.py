"""
Spectral Toolkit

Dense self-adjoint eigensolver, resolvents and minors, Stieltjes transforms
and the closed-form semicircle objects (density, CDF, m_sc, classical
locations).

The Householder reduction follows the column-by-column reflection scheme of
a QR factorization, applied from both sides and with rank-one updates, so a
Hermitian matrix becomes tridiagonal in O(N^3) work.
"""

import csv
import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, linalg, optimize

from rmtlab.ensembles import EnsembleSpec, MatrixSample

logger = logging.getLogger(__name__)

EIGEN_METHODS = ("lapack", "householder")
LOCATION_CONVENTIONS = ("quantile", "midpoint")

MatrixLike = Union[MatrixSample, np.ndarray]
ComplexGrid = Union[complex, Sequence[complex], np.ndarray]


def matrix_hash(entries: np.ndarray) -> str:
    """Short sha256 fingerprint of a matrix, used in diagnostics."""
    data = np.ascontiguousarray(entries)
    return hashlib.sha256(data.tobytes()).hexdigest()[:16]


def as_matrix(H: MatrixLike) -> Tuple[np.ndarray, Optional[EnsembleSpec]]:
    if isinstance(H, MatrixSample):
        return H.entries, H.spec
    A = np.asarray(H)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"Matrix must be square, got shape {A.shape}")
    return A, None


def _check_self_adjoint(A: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if not np.allclose(A, A.conj().T, rtol=0.0, atol=1e-12 * scale):
        raise ValueError("Matrix must be self-adjoint (h_ij = conj(h_ji))")


@dataclass(frozen=True)
class Spectrum:
    """
    Ordered eigenvalues of one sample, with optional orthonormal eigenvectors.

    Attributes
    ----------
    eigenvalues : np.ndarray
        Ascending array of N reals
    eigenvectors : np.ndarray, optional
        Columns are the eigenvectors u_alpha
    source : EnsembleSpec, optional
        Law of the sampled matrix
    matrix_hash : str
        Fingerprint of the decomposed matrix
    """

    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray] = field(default=None, repr=False)
    source: Optional[EnsembleSpec] = None
    matrix_hash: str = ""

    def __post_init__(self) -> None:
        values = np.array(self.eigenvalues, dtype=float)
        if values.ndim != 1:
            raise ValueError("Eigenvalues must form a one-dimensional array")
        if np.any(np.diff(values) < 0):
            raise ValueError("Eigenvalues must be sorted in ascending order")
        values.setflags(write=False)
        object.__setattr__(self, "eigenvalues", values)
        if self.eigenvectors is not None:
            vectors = np.array(self.eigenvectors)
            vectors.setflags(write=False)
            object.__setattr__(self, "eigenvectors", vectors)

    @property
    def n(self) -> int:
        return int(self.eigenvalues.shape[0])

    def to_csv(self, path: Union[str, Path]) -> None:
        """Write (index, eigenvalue) rows, 1-based indices."""
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["index", "eigenvalue"])
            for j, value in enumerate(self.eigenvalues, start=1):
                writer.writerow([j, f"{value:.17g}"])


def householder_tridiagonalize(
    A: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Reduce a self-adjoint matrix to a real symmetric tridiagonal form.

    Parameters
    ----------
    A : np.ndarray
        Real symmetric or complex Hermitian matrix (n x n)

    Returns
    -------
    diagonal : np.ndarray
        Real diagonal of the tridiagonal matrix T
    off_diagonal : np.ndarray
        Non-negative sub-diagonal of T (length n - 1)
    Q : np.ndarray
        Unitary matrix with A = Q T Q^H

    Raises
    ------
    ValueError
        If A is not square

    Notes
    -----
    - Step k reflects x = A[k+1:, k] onto alpha e1 with
      alpha = -phase(x[0]) ||x||, which avoids cancellation in v = x - alpha e1
    - The reflection I - 2 v v^H is applied to the trailing block as two
      rank-one updates instead of forming the full matrix
    - Complex off-diagonals are rotated to |e_k| by the diagonal phase matrix
      D with d_(k+1) = d_k e_k / |e_k|; Q already contains D

    Examples
    --------
    >>> A = np.array([[4.0, 1.0, 2.0], [1.0, 3.0, 0.0], [2.0, 0.0, 1.0]])
    >>> d, e, Q = householder_tridiagonalize(A)
    >>> T = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    >>> bool(np.allclose(Q @ T @ Q.conj().T, A))
    True
    """
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"Matrix A must be square, got shape {A.shape}")

    n = A.shape[0]
    dtype = np.complex128 if np.iscomplexobj(A) else np.float64
    T = np.array(A, dtype=dtype)
    Q = np.eye(n, dtype=dtype)

    for k in range(n - 2):
        x = T[k + 1 :, k].copy()
        x_norm = np.linalg.norm(x)
        if x_norm < np.finfo(float).tiny:
            continue

        phase = x[0] / abs(x[0]) if abs(x[0]) > 0 else 1.0
        alpha = -phase * x_norm
        v = x
        v[0] -= alpha
        v_norm = np.linalg.norm(v)
        if v_norm < np.finfo(float).tiny:
            continue
        v /= v_norm

        block = T[k:, k + 1 :]
        block -= 2.0 * np.outer(block @ v, v.conj())
        block = T[k + 1 :, k:]
        block -= 2.0 * np.outer(v, v.conj() @ block)
        Q[:, k + 1 :] -= 2.0 * np.outer(Q[:, k + 1 :] @ v, v.conj())

    diagonal = np.real(np.diagonal(T)).copy()
    sub = np.diagonal(T, offset=-1).copy()
    off_diagonal = np.abs(sub)

    phases = np.ones(n, dtype=dtype)
    for k in range(n - 1):
        unit = sub[k] / off_diagonal[k] if off_diagonal[k] > 0 else 1.0
        phases[k + 1] = phases[k] * unit
    return diagonal, off_diagonal, Q * phases[None, :]


def eigen(
    H: MatrixLike, want_vectors: bool = False, method: str = "lapack"
) -> Spectrum:
    """
    All eigenvalues (ascending) and optionally eigenvectors of a self-adjoint matrix.

    Parameters
    ----------
    H : MatrixSample or np.ndarray
        Self-adjoint matrix
    want_vectors : bool, optional
        Also return orthonormal eigenvectors (default: False)
    method : str, optional
        "lapack" (numpy.linalg.eigh) or "householder" (own tridiagonal
        reduction followed by scipy.linalg.eigh_tridiagonal)

    Returns
    -------
    Spectrum

    Raises
    ------
    ValueError
        If H is not self-adjoint or the method is unknown
    RuntimeError
        If the eigensolver does not converge; the message carries the matrix hash
    """
    if method not in EIGEN_METHODS:
        raise ValueError(f"Unknown eigen method '{method}', expected one of {EIGEN_METHODS}")
    A, spec = as_matrix(H)
    _check_self_adjoint(A)
    fingerprint = matrix_hash(A)

    try:
        if method == "lapack":
            if want_vectors:
                values, vectors = np.linalg.eigh(A)
            else:
                values, vectors = np.linalg.eigvalsh(A), None
        else:
            if A.shape[0] == 1:
                values = np.real(A[0]).astype(float)
                vectors = np.ones((1, 1), dtype=A.dtype) if want_vectors else None
            else:
                d, e, Q = householder_tridiagonalize(A)
                if want_vectors:
                    values, W = linalg.eigh_tridiagonal(d, e)
                    vectors = Q @ W
                else:
                    values = linalg.eigh_tridiagonal(d, e, eigvals_only=True)
                    vectors = None
    except (np.linalg.LinAlgError, linalg.LinAlgError) as exc:
        raise RuntimeError(
            f"Eigensolver did not converge for matrix {fingerprint} (N={A.shape[0]}): {exc}"
        ) from exc

    order = np.argsort(values, kind="stable")
    values = np.asarray(values)[order]
    if vectors is not None:
        vectors = np.asarray(vectors)[:, order]
    return Spectrum(values, vectors, spec, fingerprint)


@dataclass(frozen=True)
class ResolventSample:
    """
    Stieltjes transform and optional Green function entries on a z grid.

    Attributes
    ----------
    z_grid : np.ndarray
        Complex spectral parameters E + i eta with eta > 0
    m_values : np.ndarray
        (1/N) Tr G(z) per grid point; for a minor N is the full dimension
    entries : np.ndarray, optional
        G_ij(z) with shape (len(z_grid), n, n)
    minor_index : int, optional
        Deleted index i for G^(i)
    labels : np.ndarray
        Original row labels of `entries`
    """

    z_grid: np.ndarray
    m_values: np.ndarray
    entries: Optional[np.ndarray] = field(default=None, repr=False)
    minor_index: Optional[int] = None
    labels: Optional[np.ndarray] = field(default=None, repr=False)

    def to_csv(self, path: Union[str, Path]) -> None:
        """Write (Re z, Im z, Re m, Im m) rows."""
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["re_z", "im_z", "re_m", "im_m"])
            for z, m in zip(self.z_grid, self.m_values):
                writer.writerow([f"{z.real:.17g}", f"{z.imag:.17g}", f"{m.real:.17g}", f"{m.imag:.17g}"])


def _z_array(z_grid: ComplexGrid) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z_grid, dtype=complex))
    if np.any(z.imag <= 0):
        raise ValueError(f"Spectral parameters need Im z > 0, got min Im z = {z.imag.min()}")
    return z


def resolvent(
    spectrum: Spectrum,
    z_grid: ComplexGrid,
    with_entries: bool = False,
    normalization: Optional[int] = None,
) -> ResolventSample:
    """
    Green function G(z) = (H - z)^-1 from an eigendecomposition.

    Parameters
    ----------
    spectrum : Spectrum
        Decomposition of H (eigenvectors needed when `with_entries`)
    z_grid : complex or array of complex
        Points with Im z > 0
    with_entries : bool, optional
        Also return G_ij(z) = sum_a u_a(i) conj(u_a(j)) / (lambda_a - z)
    normalization : int, optional
        Divisor of the trace (default: spectrum size)

    Raises
    ------
    ValueError
        If some Im z <= 0, or entries are requested without eigenvectors
    """
    z = _z_array(z_grid)
    lam = spectrum.eigenvalues
    denominators = lam[None, :] - z[:, None]
    norm = normalization if normalization is not None else spectrum.n
    m_values = np.sum(1.0 / denominators, axis=1) / norm

    entries = None
    if with_entries:
        if spectrum.eigenvectors is None:
            raise ValueError("Green function entries need eigenvectors (want_vectors=True)")
        U = spectrum.eigenvectors
        entries = np.stack([(U / d[None, :]) @ U.conj().T for d in denominators])
    return ResolventSample(z, m_values, entries, None, np.arange(spectrum.n))


def green_function(H: MatrixLike, z: complex) -> np.ndarray:
    """G(z) by direct inversion, used to refresh long update chains."""
    A, _ = as_matrix(H)
    if complex(z).imag <= 0:
        raise ValueError(f"Spectral parameter needs Im z > 0, got {z}")
    return np.linalg.inv(A - z * np.eye(A.shape[0]))


def minor_resolvent(
    H: MatrixLike, i: int, z_grid: ComplexGrid, with_entries: bool = True
) -> ResolventSample:
    """
    Resolvent G^(i) of the (N-1) x (N-1) minor with row and column i removed.

    Entries keep the original labels (stored in `labels`); m_values use the
    full dimension N so that |m - m^(i)| is directly comparable with 1/(N eta).
    """
    A, _ = as_matrix(H)
    n = A.shape[0]
    if not 0 <= i < n:
        raise ValueError(f"Minor index must lie in [0, {n - 1}], got {i}")
    if n < 2:
        raise ValueError("A 1 x 1 matrix has no non-empty minor")
    keep = np.delete(np.arange(n), i)
    minor = A[np.ix_(keep, keep)]
    sample = resolvent(eigen(minor, want_vectors=with_entries), z_grid, with_entries, n)
    return ResolventSample(sample.z_grid, sample.m_values, sample.entries, i, keep)


def interlacing_constants(
    H: MatrixLike, z: complex, indices: Optional[Sequence[int]] = None
) -> np.ndarray:
    """
    N eta |m(z) - m^(i)(z)| for each deleted index i.

    Interlacing of the minor's eigenvalues bounds these values by a constant;
    the empirical values are returned rather than asserted. Every minor is
    decomposed from scratch, so pass `indices` to subsample large N.
    """
    A, _ = as_matrix(H)
    n = A.shape[0]
    chosen = range(n) if indices is None else indices
    m = resolvent(eigen(A), z).m_values[0]
    eta = complex(z).imag
    constants = [
        n * eta * abs(m - minor_resolvent(A, i, z, with_entries=False).m_values[0])
        for i in chosen
    ]
    logger.debug("interlacing constants: max %.4f over %d minors", max(constants), len(constants))
    return np.array(constants)


def m_sc(z: ComplexGrid) -> Union[complex, np.ndarray]:
    """
    Stieltjes transform of the semicircle law, the root of m^2 + z m + 1 = 0.

    Uses m = (-z + sqrt(z - 2) sqrt(z + 2)) / 2 with principal square roots.
    The product of the two roots behaves like z at infinity, so the result is
    the branch with Im m > 0 on the upper half plane and m ~ -1/z for real
    |z| > 2.

    Raises
    ------
    ValueError
        For Im z < 0, or real z inside the support [-2, 2]

    Examples
    --------
    >>> round(complex(m_sc(2j)).imag, 6)
    0.414214
    >>> round(float(complex(m_sc(3.0)).real), 6)
    -0.381966
    """
    z_arr = np.asarray(z, dtype=complex)
    if np.any(z_arr.imag < 0):
        raise ValueError("m_sc is defined on the upper half plane, got Im z < 0")
    if np.any((z_arr.imag == 0) & (np.abs(z_arr.real) <= 2.0)):
        raise ValueError("m_sc is undefined on the support [-2, 2]; use semicircle_density")
    z_arr = np.where(z_arr.imag == 0, z_arr.real + 0j, z_arr)
    m = 0.5 * (-z_arr + np.sqrt(z_arr - 2.0) * np.sqrt(z_arr + 2.0))
    return complex(m) if m.ndim == 0 else m


def semicircle_density(x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """rho_sc(x) = sqrt((4 - x^2)_+) / (2 pi)."""
    x_arr = np.asarray(x, dtype=float)
    rho = np.sqrt(np.maximum(4.0 - x_arr**2, 0.0)) / (2.0 * math.pi)
    return float(rho) if rho.ndim == 0 else rho


def semicircle_cdf(x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Closed-form semicircle CDF."""
    x_arr = np.clip(np.asarray(x, dtype=float), -2.0, 2.0)
    F = 0.5 + x_arr * np.sqrt(4.0 - x_arr**2) / (4.0 * math.pi) + np.arcsin(x_arr / 2.0) / math.pi
    F = np.clip(F, 0.0, 1.0)
    return float(F) if F.ndim == 0 else F


class SpectralLaw(Protocol):
    """Any equilibrium density with a compact support and a CDF."""

    @property
    def support(self) -> Tuple[float, float]: ...

    def density(self, x: np.ndarray) -> np.ndarray: ...

    def cdf(self, x: float) -> float: ...


class SemicircleLaw:
    """Wigner semicircle law on [-2, 2]."""

    @property
    def support(self) -> Tuple[float, float]:
        return (-2.0, 2.0)

    def density(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(semicircle_density(x))

    def cdf(self, x: float) -> float:
        return float(semicircle_cdf(x))

    def stieltjes(self, z: ComplexGrid) -> Union[complex, np.ndarray]:
        return m_sc(z)

    def moment(self, k: int) -> float:
        """k-th moment by quadrature (Catalan numbers for even k)."""
        value, _ = integrate.quad(
            lambda x: x**k * semicircle_density(x), -2.0, 2.0, epsabs=1e-13, epsrel=1e-13
        )
        return float(value)

    def __repr__(self) -> str:
        return "SemicircleLaw()"


SEMICIRCLE = SemicircleLaw()


def classical_locations(
    n: int, law: SpectralLaw = SEMICIRCLE, convention: str = "quantile"
) -> np.ndarray:
    """
    Classical eigenvalue locations gamma_1 < ... < gamma_N of a density.

    Parameters
    ----------
    n : int
        Number of points N
    law : SpectralLaw, optional
        Equilibrium density (default: semicircle)
    convention : str, optional
        "quantile": F(gamma_j) = j/N, so gamma_N is the right support edge.
        "midpoint": F(gamma_j) = (j - 1/2)/N, antisymmetric on symmetric laws

    Returns
    -------
    np.ndarray
        Locations solved by bracketed root-finding, |F(gamma_j) - target| <= 1e-10

    Examples
    --------
    >>> float(classical_locations(4)[1])
    0.0
    """
    if n < 1:
        raise ValueError(f"Number of points must be positive, got {n}")
    if convention not in LOCATION_CONVENTIONS:
        raise ValueError(
            f"Unknown convention '{convention}', expected one of {LOCATION_CONVENTIONS}"
        )

    left, right = law.support
    offset = 0.0 if convention == "quantile" else 0.5
    gammas = np.empty(n)
    for j in range(1, n + 1):
        target = (j - offset) / n
        if target >= 1.0:
            gammas[j - 1] = right
            continue
        if abs(target - 0.5) < 1e-15 and math.isclose(left, -right):
            # symmetric law, exact median
            if abs(law.cdf(0.0) - 0.5) <= 1e-14:
                gammas[j - 1] = 0.0
                continue
        gammas[j - 1] = optimize.brentq(
            lambda x: law.cdf(x) - target, left, right, xtol=1e-14, rtol=4 * np.finfo(float).eps
        )
        residual = abs(law.cdf(gammas[j - 1]) - target)
        if residual > 1e-10:
            raise RuntimeError(
                f"Classical location {j} not resolved: |F - {target:.6g}| = {residual:.2e}"
            )
    return gammas
