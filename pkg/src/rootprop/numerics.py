"""Linear-algebra kernels shared by the estimators."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly

from .array_model import SnapshotMatrix

EPS = np.finfo(float).eps

HERMITIAN_RTOL = 1e-12
# A partition is treated as singular beyond this condition number.
MAX_CONDITION = 1.0 / (100.0 * EPS)
# The real-coefficient (Cayley) rooting path loses accuracy beyond this half order.
MAX_CAYLEY_HALF_ORDER = 24


class EstimationError(RuntimeError):
    """A single estimate could not be formed; the trial counts as unresolved."""


class SingularPartitionError(EstimationError, np.linalg.LinAlgError):
    """The leading block used to fit the propagator is rank deficient."""


class NoSignalRootsError(EstimationError):
    """The rooting polynomial is constant (or zero) and has no roots."""


class TooFewRootsError(EstimationError):
    """Fewer candidate roots than requested sources."""


@dataclass(frozen=True)
class CovarianceMatrix:
    """Hermitian M x M cross-spectral matrix."""

    data: np.ndarray

    @property
    def size(self) -> int:
        return self.data.shape[0]

    def __mul__(self, scale: float) -> "CovarianceMatrix":
        return CovarianceMatrix(self.data * scale)

    __rmul__ = __mul__


def as_matrix(R) -> np.ndarray:
    return R.data if isinstance(R, CovarianceMatrix) else np.asarray(R)


def sample_covariance(snapshots: SnapshotMatrix | np.ndarray) -> CovarianceMatrix:
    """R = (1/N) U U^H, symmetrised to remove rounding asymmetry."""
    U = snapshots.data if isinstance(snapshots, SnapshotMatrix) else np.asarray(snapshots)
    if U.ndim != 2 or U.shape[1] < 1:
        raise ValueError("snapshots must be an M x N matrix with N >= 1")
    R = U @ U.conj().T / U.shape[1]
    return CovarianceMatrix(0.5 * (R + R.conj().T))


def is_hermitian(R: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    R = np.asarray(R)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        return False
    scale = max(np.linalg.norm(R), 1.0)
    return bool(np.linalg.norm(R - R.conj().T) <= rtol * scale)


def hermitian_eigendecomposition(R, rtol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and matching orthonormal eigenvectors.

    Raises:
        ValueError: if ``R`` is not Hermitian to within ``rtol``.
    """
    R = as_matrix(R)
    if not is_hermitian(R, rtol):
        raise ValueError("matrix is not Hermitian")
    w, V = np.linalg.eigh(R)
    return w[::-1], V[:, ::-1]


def least_squares_solve(G: np.ndarray, H: np.ndarray, max_condition: float = MAX_CONDITION) -> np.ndarray:
    """Solve min_P ||G P - H||_F through a QR factorisation of G.

    Raises:
        SingularPartitionError: if G is not of full column rank.
    """
    G = np.asarray(G)
    H = np.asarray(H)
    if G.ndim != 2 or H.ndim != 2 or G.shape[0] != H.shape[0]:
        raise ValueError(f"incompatible shapes {G.shape} and {H.shape}")
    if G.shape[0] < G.shape[1]:
        raise SingularPartitionError("underdetermined partition")
    Qf, Rf = np.linalg.qr(G)
    sv = np.linalg.svd(Rf, compute_uv=False)
    if sv[-1] == 0.0 or sv[0] / sv[-1] > max_condition:
        raise SingularPartitionError(
            f"leading block is singular (condition number {sv[0] / max(sv[-1], 1e-300):.3g})"
        )
    return np.linalg.solve(Rf, Qf.conj().T @ H)


@dataclass(frozen=True)
class ComplexPolynomial:
    """Laurent polynomial sum_l c_l z^-l for l = -(K-1)..(K-1).

    ``coefficients`` holds c_{-(K-1)}, ..., c_{K-1} in that order, which is
    also the descending-power coefficient list of z^(K-1) * D(z).
    """

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim != 1 or c.size % 2 == 0:
            raise ValueError("coefficient count must be odd (2K - 1)")
        object.__setattr__(self, "coefficients", c)

    @property
    def half_order(self) -> int:
        """K - 1, the largest |l|."""
        return (self.coefficients.size - 1) // 2

    def lags(self) -> np.ndarray:
        k = self.half_order
        return np.arange(-k, k + 1)

    def coefficient(self, lag: int) -> complex:
        return complex(self.coefficients[lag + self.half_order])

    def __call__(self, z):
        """Evaluate sum_l c_l z^-l."""
        z = np.asarray(z, dtype=complex)
        k = self.half_order
        return np.polyval(self.coefficients, z) * z ** (-k)

    def on_unit_circle(self, phase) -> np.ndarray:
        """Evaluate at z = exp(j*phase); real for conjugate-symmetric coefficients."""
        phase = np.asarray(phase, dtype=float)
        return np.exp(-1j * np.multiply.outer(phase, self.lags())) @ self.coefficients

    def is_conjugate_symmetric(self, rtol: float = 1e-12) -> bool:
        c = self.coefficients
        return bool(np.linalg.norm(c - c[::-1].conj()) <= rtol * max(np.linalg.norm(c), 1.0))


@dataclass(frozen=True)
class RootSet:
    roots: np.ndarray

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.roots)

    @property
    def arguments(self) -> np.ndarray:
        return np.angle(self.roots)

    def __len__(self) -> int:
        return self.roots.size


def companion_matrix(coefficients: np.ndarray) -> np.ndarray:
    """Frobenius companion matrix of a monic-normalised descending-power polynomial."""
    c = np.asarray(coefficients, dtype=complex)
    n = c.size - 1
    C = np.zeros((n, n), dtype=complex)
    C[0, :] = -c[1:] / c[0]
    C[np.arange(1, n), np.arange(n - 1)] = 1.0
    return C


@lru_cache(maxsize=None)
def _cayley_basis(half_order: int) -> np.ndarray:
    # column l: ascending coefficients in w of (1 - jw)^(K+l) (1 + jw)^(K-l)
    K = half_order
    B = np.zeros((2 * K + 1, 2 * K + 1), dtype=complex)
    for i, lag in enumerate(range(-K, K + 1)):
        B[:, i] = npoly.polymul(npoly.polypow([1, -1j], K + lag), npoly.polypow([1, 1j], K - lag))
    B.setflags(write=False)
    return B


def _self_inversive_roots(c: np.ndarray) -> np.ndarray:
    """Roots of a conjugate-symmetric Laurent polynomial via the Cayley map.

    With z = (1 + jw)/(1 - jw) the unit circle maps onto the real w axis and
    (1 + w^2)^K D(z) becomes a polynomial in w with real coefficients, so half
    the work of a complex companion solve is saved and roots come out in exact
    z, 1/conj(z) pairs. A vanishing top coefficient in w is a root at z = -1.
    """
    K = (c.size - 1) // 2
    r = (_cayley_basis(K) @ c).real
    top = np.flatnonzero(np.abs(r) > 1e-14 * np.abs(r).max())[-1]
    at_minus_one = np.full(r.size - 1 - top, -1.0 + 0j)
    if top == 0:
        return at_minus_one
    w = np.linalg.eigvals(companion_matrix(r[top::-1].astype(complex)).real)
    return np.concatenate(((1 + 1j * w) / (1 - 1j * w), at_minus_one))


def find_roots(poly: ComplexPolynomial | np.ndarray) -> RootSet:
    """All roots of the nonnegative-power form of ``poly`` (multiplicities kept).

    Accepts a :class:`ComplexPolynomial` or a plain descending-power
    coefficient array. Leading zeros are dropped. For a Laurent
    :class:`ComplexPolynomial` trailing zeros are dropped too, since they only
    shift the power of z and z = 0 is not a root of the Laurent form.

    Conjugate-symmetric Laurent polynomials of moderate order are rooted
    through a real companion matrix (see :func:`_self_inversive_roots`);
    everything else through the complex companion matrix.

    Raises:
        NoSignalRootsError: if nothing but a constant (or zero) remains.
    """
    laurent = isinstance(poly, ComplexPolynomial)
    c = poly.coefficients if laurent else np.asarray(poly, dtype=complex)
    nonzero = np.flatnonzero(c)
    if nonzero.size == 0:
        raise NoSignalRootsError("polynomial is identically zero")
    c = c[nonzero[0]:nonzero[-1] + 1] if laurent else c[nonzero[0]:]
    if c.size < 2:
        raise NoSignalRootsError("polynomial is constant; no signal roots")
    if laurent and c.size % 2 == 1 and (c.size - 1) // 2 <= MAX_CAYLEY_HALF_ORDER:
        if ComplexPolynomial(c).is_conjugate_symmetric(1e-10):
            return RootSet(_self_inversive_roots(c))
    return RootSet(np.linalg.eigvals(companion_matrix(c)))
