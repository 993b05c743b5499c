"""Uniform linear array geometry, source scenarios and snapshot synthesis.

Sensors sit on the x-axis at positions m*d for m = 1..M and bearings are
measured from the array axis, so the phase progression across the array is
``2*pi*(d/lambda)*cos(theta)`` per element.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array along the x-axis.

    Attributes:
        sensor_count: Number of sensors M (at least 2).
        spacing_wavelengths: Inter-element spacing as a fraction of the
            carrier wavelength (d/lambda).
        carrier_frequency_hz: Informational only; every computation works
            from ``spacing_wavelengths``.
    """

    sensor_count: int = 12
    spacing_wavelengths: float = 0.5
    carrier_frequency_hz: float = 850e6

    def __post_init__(self):
        if int(self.sensor_count) != self.sensor_count or self.sensor_count < 2:
            raise ValueError(f"sensor_count must be an integer >= 2, got {self.sensor_count}")
        if not self.spacing_wavelengths > 0:
            raise ValueError(f"spacing_wavelengths must be positive, got {self.spacing_wavelengths}")

    @property
    def phase_scale(self) -> float:
        """Phase step per element per unit cos(theta), 2*pi*d/lambda."""
        return 2.0 * np.pi * self.spacing_wavelengths


def _check_angles(angles_deg: np.ndarray, lo_open: bool) -> None:
    if angles_deg.ndim != 1 or angles_deg.size == 0:
        raise ValueError("at least one source angle is required")
    if not np.all(np.isfinite(angles_deg)):
        raise ValueError("source angles must be finite")
    if lo_open:
        if np.any(angles_deg <= 0.0) or np.any(angles_deg >= 180.0):
            raise ValueError("source angles must lie strictly inside (0, 180) degrees")
    if np.unique(angles_deg).size != angles_deg.size:
        raise ValueError(f"source angles must be distinct, got {angles_deg.tolist()}")


@dataclass(frozen=True)
class Scenario:
    """Simulation ground truth for one batch of snapshots."""

    geometry: ArrayGeometry
    true_angles_deg: tuple[float, ...]
    snr_db: float
    snapshot_count: int = 200
    seed: int = 0

    def __post_init__(self):
        angles = tuple(float(a) for a in np.atleast_1d(self.true_angles_deg))
        object.__setattr__(self, "true_angles_deg", angles)
        _check_angles(np.asarray(angles), lo_open=True)
        if len(angles) >= self.geometry.sensor_count:
            raise ValueError(
                f"need fewer sources than sensors (D={len(angles)}, M={self.geometry.sensor_count})"
            )
        if int(self.snapshot_count) != self.snapshot_count or self.snapshot_count < 1:
            raise ValueError(f"snapshot_count must be a positive integer, got {self.snapshot_count}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def source_count(self) -> int:
        return len(self.true_angles_deg)

    @property
    def noise_variance(self) -> float:
        """Per-sensor noise power relative to unit source power."""
        return float(10.0 ** (-self.snr_db / 10.0))


@dataclass(frozen=True)
class SnapshotMatrix:
    """M x N complex observations, one column per snapshot."""

    data: np.ndarray = field(repr=False)

    @property
    def sensor_count(self) -> int:
        return self.data.shape[0]

    @property
    def snapshot_count(self) -> int:
        return self.data.shape[1]


def steering_vector(geometry: ArrayGeometry, theta_deg: float) -> np.ndarray:
    """Array response towards ``theta_deg``: ``exp(j*2*pi*m*(d/lambda)*cos(theta))``, m = 1..M."""
    m = np.arange(1, geometry.sensor_count + 1)
    return np.exp(1j * geometry.phase_scale * m * np.cos(np.deg2rad(theta_deg)))


def steering_grid(geometry: ArrayGeometry, angles_deg) -> np.ndarray:
    """Steering vectors for arbitrary angles stacked as columns, no model checks.

    This is the vectorised kernel behind spectrum evaluation; use
    :func:`steering_matrix` for a source steering matrix.
    """
    m = np.arange(1, geometry.sensor_count + 1)[:, None]
    cos_theta = np.cos(np.deg2rad(np.asarray(angles_deg, dtype=float)))[None, :]
    return np.exp(1j * geometry.phase_scale * m * cos_theta)


def steering_matrix(geometry: ArrayGeometry, angles_deg: Sequence[float]) -> np.ndarray:
    """M x D matrix whose columns are the steering vectors of ``angles_deg``.

    Raises:
        ValueError: if D >= M or the angles are not distinct.
    """
    angles = np.atleast_1d(np.asarray(angles_deg, dtype=float))
    _check_angles(angles, lo_open=False)
    if angles.size >= geometry.sensor_count:
        raise ValueError(
            f"need fewer sources than sensors (D={angles.size}, M={geometry.sensor_count})"
        )
    return steering_grid(geometry, angles)


def _complex_gaussian(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_snapshots(scenario: Scenario, noise_variance: float | None = None) -> SnapshotMatrix:
    """Draw u(t) = A s(t) + n(t) for every snapshot of ``scenario``.

    Sources are independent unit-power circular complex Gaussians and the
    noise is white with per-sensor variance ``10**(-snr_db/10)``. Passing
    ``noise_variance`` overrides that value (0 gives the noise-free model).
    The result depends only on the scenario (seed included).
    """
    rng = np.random.default_rng(scenario.seed)
    A = steering_matrix(scenario.geometry, scenario.true_angles_deg)
    M, D = A.shape
    N = scenario.snapshot_count
    sigma2 = scenario.noise_variance if noise_variance is None else float(noise_variance)
    # draw both blocks regardless of sigma2 so a seed maps to one source realisation
    s = _complex_gaussian(rng, (D, N), 1.0)
    n = _complex_gaussian(rng, (M, N), 1.0)
    return SnapshotMatrix(A @ s + np.sqrt(sigma2) * n)


def exact_covariance(geometry: ArrayGeometry, angles_deg: Sequence[float], noise_variance: float = 0.0) -> np.ndarray:
    """Model covariance A A^H + sigma^2 I for unit-power uncorrelated sources."""
    A = steering_matrix(geometry, angles_deg)
    return A @ A.conj().T + noise_variance * np.eye(geometry.sensor_count)
