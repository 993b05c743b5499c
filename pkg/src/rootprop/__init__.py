"""Root-propagator direction-of-arrival estimation for uniform linear arrays."""

__version__ = "0.1.0"

from .array_model import (  # noqa: E402
    ArrayGeometry,
    Scenario,
    SnapshotMatrix,
    exact_covariance,
    simulate_snapshots,
    steering_matrix,
    steering_vector,
)
from .estimators import (  # noqa: E402
    DoaEstimate,
    advanced_root_propagator_estimate,
    estimate,
    music_estimate,
    propagator_estimate,
    root_music_estimate,
    root_propagator_estimate,
)
from .numerics import EstimationError, sample_covariance  # noqa: E402

__all__ = [
    "ArrayGeometry",
    "DoaEstimate",
    "EstimationError",
    "Scenario",
    "SnapshotMatrix",
    "advanced_root_propagator_estimate",
    "estimate",
    "exact_covariance",
    "music_estimate",
    "propagator_estimate",
    "root_music_estimate",
    "root_propagator_estimate",
    "sample_covariance",
    "simulate_snapshots",
    "steering_matrix",
    "steering_vector",
]
