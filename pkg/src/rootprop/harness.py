"""Monte Carlo experiment engine.

Every (SNR, trial index) pair maps to one seed, independent of the
algorithm, so all algorithms in a run see the same snapshot realisation and
failure counts can be compared trial by trial.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .array_model import ArrayGeometry, Scenario, simulate_snapshots
from .estimators import (
    DEFAULT_GRID_STEP,
    DEFAULT_SCAN_THRESHOLD,
    DoaEstimate,
    canonical_name,
    diagonal_sums,
    estimate,
    estimate_propagator_model,
    refine_with_local_scan,
    roots_to_angles,
    spectrum_function,
)
from .numerics import EstimationError, find_roots, sample_covariance

log = logging.getLogger(__name__)

CSV_COLUMNS = ("algorithm", "snr_db", "trial_count", "rmse_all_deg", "rmse_resolved_deg", "unresolved", "mean_time_us")
TIMING_COLUMNS = ("mean_time_us",)


@dataclass
class ExperimentConfig:
    """Parameters of a Monte Carlo study; defaults follow the reference setup."""

    angles_deg: tuple[float, ...] = (40.0, 50.0)
    sensor_count: int = 12
    snapshot_count: int = 200
    spacing_wavelengths: float = 0.5
    snr_list_db: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0)
    trial_count: int = 200
    algorithms: tuple[str, ...] = ("propagator", "root-propagator", "advanced")
    resolve_threshold_deg: float = 7.0
    scan_threshold_deg: float = DEFAULT_SCAN_THRESHOLD
    grid_step_deg: float = DEFAULT_GRID_STEP
    master_seed: int = 2024
    carrier_frequency_hz: float = 850e6

    def __post_init__(self):
        self.angles_deg = tuple(float(a) for a in self.angles_deg)
        self.snr_list_db = tuple(float(s) for s in self.snr_list_db)
        self.algorithms = tuple(canonical_name(a) for a in self.algorithms)
        self.validate()

    def validate(self) -> None:
        if int(self.trial_count) != self.trial_count or self.trial_count < 1:
            raise ValueError(f"trial count must be a positive integer, got {self.trial_count}")
        if not self.snr_list_db:
            raise ValueError("at least one SNR value is required")
        if not all(math.isfinite(s) for s in self.snr_list_db):
            raise ValueError("SNR values must be finite")
        if not self.algorithms:
            raise ValueError("at least one algorithm is required")
        for name, value in (
            ("resolve threshold", self.resolve_threshold_deg),
            ("scan threshold", self.scan_threshold_deg),
            ("grid step", self.grid_step_deg),
        ):
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        # builds the geometry and a scenario, which check M, D, N and the angles
        self.scenario(self.snr_list_db[0], 0)

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.sensor_count, self.spacing_wavelengths, self.carrier_frequency_hz)

    @property
    def source_count(self) -> int:
        return len(self.angles_deg)

    def scenario(self, snr_db: float, trial_index: int) -> Scenario:
        return Scenario(
            self.geometry,
            self.angles_deg,
            snr_db,
            self.snapshot_count,
            trial_seed(self.master_seed, snr_db, trial_index),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("angles_deg", "snr_list_db", "algorithms"):
            d[key] = list(d[key])
        return d


def trial_seed(master_seed: int, snr_db: float, trial_index: int) -> int:
    """64-bit seed for one trial; the algorithm never enters the derivation."""
    snr_bits = int(np.float64(snr_db).view(np.uint64))
    words = np.random.SeedSequence([int(master_seed), snr_bits, int(trial_index)]).generate_state(2, np.uint64)
    return int(words[0])


@dataclass
class TrialMetrics:
    per_angle_error_deg: np.ndarray
    resolved: bool
    elapsed_estimation_time: float  # seconds
    failure_reason: str | None = None
    estimate: DoaEstimate | None = None


def match_estimates(truth_deg: Sequence[float], estimate_deg) -> np.ndarray:
    """Signed errors (estimate - truth) under order-preserving pairing, in truth order."""
    if isinstance(estimate_deg, DoaEstimate):
        estimate_deg = estimate_deg.angles_deg
    truth = np.asarray(truth_deg, dtype=float)
    est = np.sort(np.asarray(estimate_deg, dtype=float))
    if truth.shape != est.shape:
        raise ValueError(f"expected {truth.size} estimates, got {est.size}")
    order = np.argsort(truth, kind="stable")
    errors = np.empty_like(truth)
    errors[order] = est - truth[order]
    return errors


def compute_rmse(errors) -> float:
    """Root mean square over every entry of ``errors``."""
    e = np.asarray(list(errors) if not isinstance(errors, np.ndarray) else errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("cannot compute RMSE of an empty error set")
    return float(np.sqrt(np.mean(e * e)))


def _score(config: ExperimentConfig, est: DoaEstimate | None, elapsed: float, reason: str | None) -> TrialMetrics:
    D = config.source_count
    if est is None:
        return TrialMetrics(np.full(D, config.resolve_threshold_deg), False, elapsed, reason)
    errors = match_estimates(config.angles_deg, est)
    resolved = bool(np.all(np.abs(errors) < config.resolve_threshold_deg))
    return TrialMetrics(errors, resolved, elapsed, None if resolved else "threshold", est)


def evaluate_snapshots(config: ExperimentConfig, snapshots, algorithm: str) -> TrialMetrics:
    """Estimate from one snapshot matrix, timing covariance plus estimation."""
    est, reason = None, None
    start = time.perf_counter()
    try:
        R = sample_covariance(snapshots)
        est = estimate(
            algorithm,
            R,
            config.geometry,
            config.source_count,
            grid_step_deg=config.grid_step_deg,
            scan_threshold_deg=config.scan_threshold_deg,
        )
    except EstimationError as exc:
        reason = type(exc).__name__
    elapsed = time.perf_counter() - start
    return _score(config, est, elapsed, reason)


def run_trial(config: ExperimentConfig, snr_db: float, algorithm: str, trial_index: int) -> TrialMetrics:
    snapshots = simulate_snapshots(config.scenario(snr_db, trial_index))
    return evaluate_snapshots(config, snapshots, algorithm)


@dataclass
class CellSummary:
    algorithm: str
    snr_db: float
    trial_count: int
    rmse_all_deg: float
    rmse_resolved_deg: float
    unresolved: int
    mean_time_us: float
    failure_reasons: dict = field(default_factory=dict)

    @classmethod
    def from_trials(cls, algorithm: str, snr_db: float, trials: Sequence[TrialMetrics]) -> "CellSummary":
        resolved = [t.per_angle_error_deg for t in trials if t.resolved]
        reasons: dict[str, int] = {}
        for t in trials:
            if t.failure_reason:
                reasons[t.failure_reason] = reasons.get(t.failure_reason, 0) + 1
        return cls(
            algorithm=algorithm,
            snr_db=snr_db,
            trial_count=len(trials),
            rmse_all_deg=compute_rmse(np.concatenate([t.per_angle_error_deg for t in trials])),
            rmse_resolved_deg=compute_rmse(np.concatenate(resolved)) if resolved else math.nan,
            unresolved=len(trials) - len(resolved),
            mean_time_us=1e6 * float(np.mean([t.elapsed_estimation_time for t in trials])),
            failure_reasons=dict(sorted(reasons.items())),
        )


def _json_number(x: float):
    return None if isinstance(x, float) and not math.isfinite(x) else x


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    cells: list[CellSummary]
    version: str = __version__

    def cell(self, algorithm: str, snr_db: float) -> CellSummary:
        algorithm = canonical_name(algorithm)
        for c in self.cells:
            if c.algorithm == algorithm and c.snr_db == float(snr_db):
                return c
        raise KeyError((algorithm, snr_db))

    def to_csv(self, include_timing: bool = True) -> str:
        columns = [c for c in CSV_COLUMNS if include_timing or c not in TIMING_COLUMNS]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for cell in self.cells:
            row = asdict(cell)
            writer.writerow([_format_csv(row[c]) for c in columns])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "software": "rootprop",
            "version": self.version,
            "config": self.config.to_dict(),
            "timing": "seconds of covariance estimation + estimator call per trial, reported in microseconds",
            "cells": [{k: _json_number(v) for k, v in asdict(c).items()} for c in self.cells],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def summary_table(self) -> str:
        """Unresolved failures, one row per algorithm, one column per SNR."""
        snrs = self.config.snr_list_db
        head = f"{'algorithm':<18}" + "".join(f"{s:>9g} dB" for s in snrs)
        lines = [f"unresolved failures out of {self.config.trial_count} trials, angles {list(self.config.angles_deg)}", head]
        for alg in self.config.algorithms:
            lines.append(f"{alg:<18}" + "".join(f"{self.cell(alg, s).unresolved:>12d}" for s in snrs))
        return "\n".join(lines)


def _format_csv(value):
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return value


def run_experiment(config: ExperimentConfig, progress: bool = False) -> ExperimentReport:
    """Run every (algorithm, SNR) cell on paired trials.

    The L snapshot matrices of an SNR point are simulated once and handed to
    every algorithm in turn, so only the estimator work is timed and each
    algorithm runs its trials back to back. Execution is serial, which keeps
    the timings free of contention.
    """
    trials = {}
    for snr in config.snr_list_db:
        batch = [simulate_snapshots(config.scenario(snr, t)) for t in range(config.trial_count)]
        for alg in config.algorithms:
            trials[alg, snr] = [evaluate_snapshots(config, snapshots, alg) for snapshots in batch]
        if progress:
            log.info("SNR %g dB done", snr)
    cells = [
        CellSummary.from_trials(alg, snr, trials[alg, snr])
        for alg in config.algorithms
        for snr in config.snr_list_db
    ]
    return ExperimentReport(config, cells)


@dataclass
class SweepTable:
    thresholds_deg: tuple[float, ...]
    snr_list_db: tuple[float, ...]
    unresolved: dict  # (threshold, snr) -> count
    root_propagator_unresolved: dict  # snr -> count

    def rows(self) -> list[tuple[float, float, int]]:
        return [(th, snr, self.unresolved[th, snr]) for th in self.thresholds_deg for snr in self.snr_list_db]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["threshold_deg", "snr_db", "unresolved"])
        for th, snr, n in self.rows():
            writer.writerow([repr(th), repr(snr), n])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "software": "rootprop",
            "version": __version__,
            "rows": [{"threshold_deg": th, "snr_db": snr, "unresolved": n} for th, snr, n in self.rows()],
            "root_propagator_unresolved": {repr(k): v for k, v in self.root_propagator_unresolved.items()},
        }


def threshold_sweep(config: ExperimentConfig, thresholds_deg: Iterable[float]) -> SweepTable:
    """Advanced root-propagator failure counts for each local-scan threshold.

    The rooting step is shared across thresholds and trials are paired, so a
    zero threshold reproduces the plain root-propagator counts.
    """
    thresholds = tuple(float(t) for t in thresholds_deg)
    if not thresholds or any(t < 0 for t in thresholds):
        raise ValueError("thresholds must be non-negative")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly ascending")
    geometry, D = config.geometry, config.source_count
    counts = {(th, snr): 0 for th in thresholds for snr in config.snr_list_db}
    root_counts = {snr: 0 for snr in config.snr_list_db}
    for snr in config.snr_list_db:
        for t in range(config.trial_count):
            R = sample_covariance(simulate_snapshots(config.scenario(snr, t)))
            try:
                model = estimate_propagator_model(R, D)
                rooted = roots_to_angles(find_roots(diagonal_sums(model.c_matrix)), geometry, D)
            except EstimationError:
                root_counts[snr] += 1
                for th in thresholds:
                    counts[th, snr] += 1
                continue
            root_counts[snr] += not _score(config, rooted, 0.0, None).resolved
            spectrum_at = spectrum_function(model.q_matrix, geometry)
            for th in thresholds:
                refined = refine_with_local_scan(rooted, spectrum_at, th, config.grid_step_deg)
                counts[th, snr] += not _score(config, refined, 0.0, None).resolved
    return SweepTable(thresholds, config.snr_list_db, counts, root_counts)
