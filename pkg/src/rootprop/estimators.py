"""Direction-of-arrival estimators for uniform linear arrays.

Three propagator-family estimators share one back end:

* ``propagator``: grid search of the propagator spectrum 1/(a^H Q Q^H a).
* ``root-propagator``: the same quadratic form written as a polynomial in
  z = exp(j*2*pi*(d/lambda)*cos(theta)) and rooted; bearings come from the
  arguments of the D roots nearest the unit circle.
* ``advanced``: root-propagator followed by a bounded left/right scan of the
  propagator spectrum around each rooted bearing.

MUSIC and root-MUSIC are the eigendecomposition baselines, obtained by
swapping Q Q^H for the noise-subspace projector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .array_model import ArrayGeometry, steering_grid
from .numerics import (
    CovarianceMatrix,
    ComplexPolynomial,
    RootSet,
    TooFewRootsError,
    as_matrix,
    find_roots,
    hermitian_eigendecomposition,
    least_squares_solve,
)

SPECTRUM_FLOOR = 1e-12
DEFAULT_GRID_STEP = 0.01
DEFAULT_SCAN_THRESHOLD = 5.0
DEFAULT_SCAN_STEP = 0.01
# roots this close to |z| = 1 count as on the circle when selecting signal roots
UNIT_CIRCLE_TOL = 1e-9
PAIR_TOL = 1e-6

# evaluation block sizes for the local scan; grows geometrically
_SCAN_BLOCK = 16


@dataclass(frozen=True)
class PropagatorModel:
    propagator: np.ndarray  # D x (M-D)
    q_matrix: np.ndarray  # M x (M-D)
    c_matrix: np.ndarray  # M x M

    @property
    def source_count(self) -> int:
        return self.propagator.shape[0]


@dataclass(frozen=True)
class AngleSpectrum:
    grid_deg: np.ndarray
    values: np.ndarray

    @property
    def step(self) -> float:
        return float(self.grid_deg[1] - self.grid_deg[0]) if self.grid_deg.size > 1 else 0.0


@dataclass(frozen=True)
class DoaEstimate:
    """Bearings in degrees, ascending, plus method-specific diagnostics.

    Rooting methods report ``root_magnitudes`` (one per angle); spectral
    methods report ``peak_heights``. ``degenerate`` marks a spectrum with
    fewer local maxima than sources; ``clamped`` marks a root whose argument
    fell outside the visible region and was clipped into [-1, 1].
    """

    angles_deg: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "angles_deg", np.sort(np.asarray(self.angles_deg, dtype=float)))


def _check_source_count(M: int, D: int) -> None:
    if not 1 <= D < M:
        raise ValueError(f"source count must satisfy 1 <= D < M (D={D}, M={M})")


def angle_grid(step_deg: float, start: float = 0.0, stop: float = 180.0) -> np.ndarray:
    """Uniform grid from ``start`` to ``stop`` inclusive."""
    if not step_deg > 0:
        raise ValueError(f"grid step must be positive, got {step_deg}")
    n = int(round((stop - start) / step_deg))
    return start + step_deg * np.arange(n + 1)


# -- propagator model ----------------------------------------------------------


def estimate_propagator_model(R, D: int) -> PropagatorModel:
    """Least-squares propagator from the column partition R = [G | H].

    P minimises ||G P - H|| where G holds the first D columns of R, and
    Q = [P^H, -I]^H annihilates the steering matrix when R is noise free.

    Raises:
        SingularPartitionError: if G is rank deficient.
    """
    R = as_matrix(R)
    M = R.shape[0]
    _check_source_count(M, D)
    P = least_squares_solve(R[:, :D], R[:, D:])
    # Q = [P^H, -I]^H
    Q = np.vstack([P, -np.eye(M - D)])
    return PropagatorModel(P, Q, Q @ Q.conj().T)


def _quadratic_form(basis: np.ndarray, geometry: ArrayGeometry, angles_deg) -> np.ndarray:
    """a^H B B^H a for each angle, from an M x K basis B."""
    V = basis.conj().T @ steering_grid(geometry, angles_deg)
    return np.einsum("ij,ij->j", V.real, V.real) + np.einsum("ij,ij->j", V.imag, V.imag)


def spectrum_function(basis: np.ndarray, geometry: ArrayGeometry) -> Callable[[np.ndarray], np.ndarray]:
    """F(theta) = 1/(a^H B B^H a + floor) as a callable over angle arrays."""

    def spectrum_at(angles_deg):
        return 1.0 / (_quadratic_form(basis, geometry, angles_deg) + SPECTRUM_FLOOR)

    return spectrum_at


def pm_spectrum(
    model: PropagatorModel, geometry: ArrayGeometry, grid_step_deg: float = DEFAULT_GRID_STEP
) -> AngleSpectrum:
    """Propagator spectrum 1/(a^H C a + floor) on a uniform grid over [0, 180]."""
    grid = angle_grid(grid_step_deg)
    return AngleSpectrum(grid, spectrum_function(model.q_matrix, geometry)(grid))


def pick_peaks(spectrum: AngleSpectrum, count: int) -> DoaEstimate:
    """Take the ``count`` highest strict local maxima, returned in angle order.

    Boundary samples qualify when they beat their single neighbour. When
    fewer maxima exist the largest remaining samples fill the gap. Either a
    fill-in or a boundary pick flags the estimate ``degenerate``: the
    spectrum then has no interior peak for that source.
    """
    f = np.asarray(spectrum.values)
    if f.size == 0:
        raise ValueError("empty spectrum")
    if f.size == 1:
        is_peak = np.ones(1, dtype=bool)
    else:
        padded = np.concatenate(([-np.inf], f, [-np.inf]))
        is_peak = (f > padded[:-2]) & (f > padded[2:])
    peaks = np.flatnonzero(is_peak)
    chosen = peaks[np.argsort(f[peaks], kind="stable")[::-1][:count]]
    degenerate = chosen.size < count
    if degenerate:
        rest = np.setdiff1d(np.arange(f.size), chosen)
        extra = rest[np.argsort(f[rest], kind="stable")[::-1][: count - chosen.size]]
        chosen = np.concatenate([chosen, extra])
    chosen = np.sort(chosen)
    if f.size > 1 and (chosen[0] == 0 or chosen[-1] == f.size - 1):
        degenerate = True
    return DoaEstimate(
        spectrum.grid_deg[chosen],
        "peaks",
        {"peak_heights": f[chosen], "degenerate": bool(degenerate)},
    )


# -- rooting -------------------------------------------------------------------


def diagonal_sums(C: np.ndarray) -> ComplexPolynomial:
    """c_l = sum of C[m, n] over m - n = l, for l = -(M-1)..(M-1)."""
    C = np.asarray(C)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("C must be square")
    M = C.shape[0]
    lag = np.subtract.outer(np.arange(M), np.arange(M)).ravel() + (M - 1)
    flat = C.ravel()
    real = np.bincount(lag, weights=flat.real, minlength=2 * M - 1)
    imag = np.bincount(lag, weights=flat.imag, minlength=2 * M - 1)
    return ComplexPolynomial(real + 1j * imag)


def select_signal_roots(roots, D: int, unit_tol: float = UNIT_CIRCLE_TOL, pair_tol: float = PAIR_TOL) -> np.ndarray:
    """The D roots inside the unit circle with the largest magnitudes.

    Roots of a conjugate-symmetric polynomial come in z, 1/conj(z) pairs and
    only the inner member of each pair is a candidate. Roots within
    ``unit_tol`` of the circle are admitted too; when one is picked, its
    partner (the nearest remaining root to 1/conj(z), if within ``pair_tol``)
    is discarded, so a split double root on the circle is not used twice.
    Ties in magnitude go to the smaller argument.

    Raises:
        TooFewRootsError: if fewer than D candidates remain.
    """
    z = np.asarray(roots.roots if isinstance(roots, RootSet) else roots, dtype=complex)
    cand = z[np.abs(z) <= 1.0 + unit_tol]
    order = np.lexsort((np.angle(cand), np.abs(1.0 - np.abs(cand))))
    # at most 2(M-1) candidates: plain Python is faster than array calls here
    alive = cand[order].tolist()
    picked = []
    while alive and len(picked) < D:
        z0 = alive.pop(0)
        picked.append(z0)
        if alive:
            partner = 1.0 / z0.conjugate()
            dist = [abs(z1 - partner) for z1 in alive]
            j = min(range(len(dist)), key=dist.__getitem__)
            if dist[j] <= pair_tol * max(1.0, abs(partner)):
                del alive[j]
    if len(picked) < D:
        raise TooFewRootsError(f"{len(picked)} candidate roots inside the unit circle, need {D}")
    return np.asarray(picked)


def roots_to_angles(roots: RootSet, geometry: ArrayGeometry, D: int, method: str = "roots") -> DoaEstimate:
    """Bearings from the D signal roots: cos(theta) = arg(z) / (2*pi*d/lambda).

    Raises:
        TooFewRootsError: if fewer than D roots lie inside the unit circle.
    """
    if D < 1:
        raise ValueError("D must be at least 1")
    picked = select_signal_roots(roots, D)
    cos_theta = np.angle(picked) / geometry.phase_scale
    clamped = bool(np.any(np.abs(cos_theta) > 1.0))
    theta = np.rad2deg(np.arccos(np.clip(cos_theta, -1.0, 1.0)))
    by_angle = np.argsort(theta)
    return DoaEstimate(
        theta[by_angle],
        method,
        {"root_magnitudes": np.abs(picked)[by_angle], "clamped": clamped},
    )


def root_propagator_estimate(R, geometry: ArrayGeometry, D: int) -> DoaEstimate:
    model = estimate_propagator_model(R, D)
    roots = find_roots(diagonal_sums(model.c_matrix))
    return roots_to_angles(roots, geometry, D, method="root-propagator")


def propagator_estimate(R, geometry: ArrayGeometry, D: int, grid_step_deg: float = DEFAULT_GRID_STEP) -> DoaEstimate:
    model = estimate_propagator_model(R, D)
    est = pick_peaks(pm_spectrum(model, geometry, grid_step_deg), D)
    return DoaEstimate(est.angles_deg, "propagator", est.diagnostics)


# -- local scan refinement -----------------------------------------------------


def _scan_for_peak(
    spectrum_at: Callable[[np.ndarray], np.ndarray],
    center: float,
    max_offset: int,
    step: float,
) -> tuple[int, float] | None:
    """Signed offset (in steps) and height of the nearest local peak, or None.

    Offsets 0, 1, 2, ... are checked on both sides together; a sample is a
    peak when it beats both its neighbours along the scan line. When both
    sides peak at the same distance the higher sample wins. Samples outside
    [0, 180] degrees are treated as -inf.
    """

    def evaluate(offsets: np.ndarray) -> np.ndarray:
        angles = center + step * offsets
        out = np.full(offsets.shape, -np.inf)
        ok = (angles >= 0.0) & (angles <= 180.0)
        if ok.any():
            out[ok] = spectrum_at(angles[ok])
        return out

    # right[k] = F(center + k*step), left[k] = F(center - k*step)
    right = evaluate(np.arange(0, 2))
    left = np.concatenate((right[:1], evaluate(np.array([-1.0]))))
    if right[0] > right[1] and right[0] > left[1]:
        return 0, float(right[0])

    k = 1
    block = _SCAN_BLOCK
    while k <= max_offset:
        hi = min(k + block, max_offset + 1)  # need samples up to hi for checks < hi
        new = np.arange(right.size, hi + 1, dtype=float)
        if new.size:
            vals = evaluate(np.concatenate((new, -new)))
            right = np.concatenate((right, vals[: new.size]))
            left = np.concatenate((left, vals[new.size:]))
        ks = np.arange(k, hi)
        r_peak = (right[ks] > right[ks - 1]) & (right[ks] > right[ks + 1])
        l_peak = (left[ks] > left[ks - 1]) & (left[ks] > left[ks + 1])
        hit = np.flatnonzero(r_peak | l_peak)
        if hit.size:
            kk = int(ks[hit[0]])
            rp, lp = r_peak[hit[0]], l_peak[hit[0]]
            if rp and (not lp or right[kk] >= left[kk]):
                return kk, float(right[kk])
            return -kk, float(left[kk])
        k = hi
        block *= 2
    return None


def refine_with_local_scan(
    rooted: DoaEstimate,
    spectrum_at: Callable[[np.ndarray], np.ndarray],
    scan_threshold_deg: float = DEFAULT_SCAN_THRESHOLD,
    scan_step_deg: float = DEFAULT_SCAN_STEP,
    method: str = "advanced",
) -> DoaEstimate:
    """Move each rooted bearing to the nearest spectrum peak within the threshold.

    Bearings with no peak inside the threshold keep their rooted value. If
    two refined bearings land within one scan step of each other both fall
    back to their rooted values.
    """
    if scan_threshold_deg < 0:
        raise ValueError("scan threshold must be non-negative")
    if not scan_step_deg > 0:
        raise ValueError("scan step must be positive")
    max_offset = int(np.floor(scan_threshold_deg / scan_step_deg + 1e-9))
    base = np.asarray(rooted.angles_deg, dtype=float)
    refined = base.copy()
    moved = np.zeros(base.size, dtype=bool)
    heights = np.full(base.size, np.nan)
    for i, theta in enumerate(base):
        found = _scan_for_peak(spectrum_at, float(theta), max_offset, scan_step_deg)
        if found is not None:
            offset, heights[i] = found
            refined[i] = theta + offset * scan_step_deg
            moved[i] = True

    tol = scan_step_deg * (1 + 1e-9)
    clash = np.zeros(base.size, dtype=bool)
    for i in range(base.size):
        for j in range(i + 1, base.size):
            if abs(refined[i] - refined[j]) <= tol:
                clash[i] = clash[j] = True
    refined[clash] = base[clash]
    moved &= ~clash

    diagnostics = dict(rooted.diagnostics)
    diagnostics.update({"rooted_angles_deg": base, "refined": moved, "peak_heights": heights, "reverted": clash})
    order = np.argsort(refined)
    for key in ("root_magnitudes", "rooted_angles_deg", "refined", "peak_heights", "reverted"):
        diagnostics[key] = np.asarray(diagnostics[key])[order]
    return DoaEstimate(refined[order], method, diagnostics)


def advanced_root_propagator_estimate(
    R,
    geometry: ArrayGeometry,
    D: int,
    scan_threshold_deg: float = DEFAULT_SCAN_THRESHOLD,
    scan_step_deg: float = DEFAULT_SCAN_STEP,
) -> DoaEstimate:
    """Root-propagator bearings refined by a bounded scan of the propagator spectrum."""
    model = estimate_propagator_model(R, D)
    rooted = roots_to_angles(find_roots(diagonal_sums(model.c_matrix)), geometry, D, method="root-propagator")
    spectrum_at = spectrum_function(model.q_matrix, geometry)
    return refine_with_local_scan(rooted, spectrum_at, scan_threshold_deg, scan_step_deg)


# -- eigendecomposition baselines ------------------------------------------------


def noise_subspace(R, D: int) -> np.ndarray:
    """Eigenvectors of the M - D smallest eigenvalues of R."""
    R = as_matrix(R)
    _check_source_count(R.shape[0], D)
    _, V = hermitian_eigendecomposition(R)
    return V[:, D:]


def music_estimate(R, geometry: ArrayGeometry, D: int, grid_step_deg: float = DEFAULT_GRID_STEP) -> DoaEstimate:
    En = noise_subspace(R, D)
    grid = angle_grid(grid_step_deg)
    spectrum = AngleSpectrum(grid, spectrum_function(En, geometry)(grid))
    est = pick_peaks(spectrum, D)
    return DoaEstimate(est.angles_deg, "music", est.diagnostics)


def root_music_estimate(R, geometry: ArrayGeometry, D: int) -> DoaEstimate:
    En = noise_subspace(R, D)
    roots = find_roots(diagonal_sums(En @ En.conj().T))
    return roots_to_angles(roots, geometry, D, method="root-music")


# -- registry ------------------------------------------------------------------

ESTIMATORS = {
    "propagator": "propagator",
    "root-propagator": "root-propagator",
    "advanced": "advanced",
    "advanced-root-propagator": "advanced",
    "music": "music",
    "root-music": "root-music",
}


def canonical_name(name: str) -> str:
    try:
        return ESTIMATORS[name.strip().lower()]
    except KeyError:
        raise ValueError(
            f"unknown algorithm {name!r}; choose from {', '.join(sorted(set(ESTIMATORS.values())))}"
        ) from None


def estimate(
    name: str,
    R: CovarianceMatrix | np.ndarray,
    geometry: ArrayGeometry,
    D: int,
    grid_step_deg: float = DEFAULT_GRID_STEP,
    scan_threshold_deg: float = DEFAULT_SCAN_THRESHOLD,
    scan_step_deg: float | None = None,
) -> DoaEstimate:
    """Dispatch to an estimator by identifier.

    ``scan_step_deg`` defaults to ``grid_step_deg`` so one resolution setting
    drives both the full grid search and the local scan.
    """
    name = canonical_name(name)
    if name == "propagator":
        return propagator_estimate(R, geometry, D, grid_step_deg)
    if name == "root-propagator":
        return root_propagator_estimate(R, geometry, D)
    if name == "advanced":
        step = grid_step_deg if scan_step_deg is None else scan_step_deg
        return advanced_root_propagator_estimate(R, geometry, D, scan_threshold_deg, step)
    if name == "music":
        return music_estimate(R, geometry, D, grid_step_deg)
    return root_music_estimate(R, geometry, D)
