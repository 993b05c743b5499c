import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rootprop.array_model import simulate_snapshots
from rootprop.estimators import DoaEstimate
from rootprop.harness import (
    CSV_COLUMNS,
    CellSummary,
    ExperimentConfig,
    TrialMetrics,
    compute_rmse,
    match_estimates,
    run_experiment,
    run_trial,
    threshold_sweep,
    trial_seed,
)

ALL = ("propagator", "root-propagator", "advanced", "music", "root-music")


def small_config(**kw):
    base = dict(trial_count=6, snr_list_db=(-10.0, 0.0), grid_step_deg=0.05)
    base.update(kw)
    return ExperimentConfig(**base)


# -- matching and RMSE -----------------------------------------------------------


@pytest.mark.parametrize(
    "estimate, expected",
    [((39.5, 50.5), (-0.5, 0.5)), ((50.0, 40.0), (0.0, 0.0)), ((45.0, 45.0), (5.0, -5.0))],
)
def test_match_estimates_examples(estimate, expected):
    np.testing.assert_allclose(match_estimates((40.0, 50.0), estimate), expected)


def test_match_estimates_truth_order_and_doa_input():
    est = DoaEstimate(np.array([41.0, 52.0]), "x")
    np.testing.assert_allclose(match_estimates((50.0, 40.0), est), (2.0, 1.0))
    with pytest.raises(ValueError):
        match_estimates((40.0, 50.0), (40.0,))


@given(st.lists(st.floats(0, 180), min_size=1, max_size=5), st.randoms())
def test_match_is_minimum_total_error(truth, rnd):
    est = [t + rnd.uniform(-20, 20) for t in truth]
    errors = match_estimates(truth, est)
    # order-preserving pairing of sorted lists is an optimal assignment
    from itertools import permutations

    if len(truth) <= 4:
        best = min(sum(abs(e - t) for e, t in zip(p, truth)) for p in permutations(est))
        assert np.sum(np.abs(errors)) <= best + 1e-9


def test_compute_rmse_examples():
    assert compute_rmse([0.0, 0.0, 0.0]) == 0.0
    assert compute_rmse([3.0]) == 3.0
    assert compute_rmse([1.0, -1.0, 1.0, -1.0]) == 1.0
    assert compute_rmse(np.array([[3.0, 4.0]])) == pytest.approx(math.sqrt(12.5))
    with pytest.raises(ValueError):
        compute_rmse([])


# -- config and seeds ------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        {"trial_count": 0},
        {"snr_list_db": ()},
        {"algorithms": ("bogus",)},
        {"resolve_threshold_deg": 0.0},
        {"scan_threshold_deg": -1.0},
        {"grid_step_deg": 0.0},
        {"angles_deg": (40.0, 40.0)},
        {"sensor_count": 2},
        {"snapshot_count": 0},
        {"master_seed": -1},
    ],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_config_defaults():
    c = ExperimentConfig()
    assert (c.sensor_count, c.snapshot_count, c.trial_count) == (12, 200, 200)
    assert c.angles_deg == (40.0, 50.0)
    assert (c.grid_step_deg, c.resolve_threshold_deg, c.scan_threshold_deg) == (0.01, 7.0, 5.0)
    assert c.algorithms == ("propagator", "root-propagator", "advanced")


def test_trial_seed_independent_and_distinct():
    seeds = {trial_seed(1, snr, t) for snr in (-10.0, 0.0) for t in range(50)}
    assert len(seeds) == 100
    assert trial_seed(1, 0.0, 3) == trial_seed(1, 0.0, 3)
    assert trial_seed(1, 0.0, 3) != trial_seed(2, 0.0, 3)


def test_paired_trials_share_snapshots(monkeypatch):
    import rootprop.harness as harness

    seen = {}
    original = harness.evaluate_snapshots

    def spy(config, snapshots, algorithm):
        seen[algorithm] = snapshots.data.copy()
        return original(config, snapshots, algorithm)

    monkeypatch.setattr(harness, "evaluate_snapshots", spy)
    config = small_config(algorithms=ALL)
    for alg in ALL:
        run_trial(config, -5.0, alg, 3)
    first = seen["propagator"]
    assert all(np.array_equal(first, m) for m in seen.values())
    assert np.array_equal(first, simulate_snapshots(config.scenario(-5.0, 3)).data)


# -- trials and reports ----------------------------------------------------------


@pytest.mark.parametrize("alg", ALL)
def test_noise_free_trial_resolved(alg):
    config = small_config(snr_list_db=(300.0,), grid_step_deg=0.01)
    m = run_trial(config, 300.0, alg, 0)
    assert m.resolved and m.failure_reason is None
    assert np.all(np.abs(m.per_angle_error_deg) < 0.01)
    assert m.elapsed_estimation_time > 0


def test_failure_counts_as_threshold_error():
    config = small_config()
    s = CellSummary.from_trials(
        "root-propagator",
        0.0,
        [
            TrialMetrics(np.array([7.0, 7.0]), False, 1e-4, "NoSignalRootsError"),
            TrialMetrics(np.array([1.0, -1.0]), True, 3e-4),
        ],
    )
    assert s.unresolved == 1
    assert s.rmse_all_deg == pytest.approx(math.sqrt((49 + 49 + 1 + 1) / 4))
    assert s.rmse_resolved_deg == pytest.approx(1.0)
    assert s.mean_time_us == pytest.approx(200.0)
    assert s.failure_reasons == {"NoSignalRootsError": 1}
    assert config.resolve_threshold_deg == 7.0


def test_run_experiment_noiseless_all_resolved():
    config = small_config(trial_count=1, snr_list_db=(300.0,), algorithms=ALL, grid_step_deg=0.01)
    report = run_experiment(config)
    for cell in report.cells:
        assert cell.unresolved == 0
        assert cell.rmse_all_deg < 0.01


def test_report_structure_and_invariants():
    config = small_config(algorithms=ALL, snr_list_db=(-10.0, -5.0, 0.0))
    report = run_experiment(config)
    assert len(report.cells) == len(ALL) * 3
    for alg in ALL:
        for snr in config.snr_list_db:
            cell = report.cell(alg, snr)
            assert 0 <= cell.unresolved <= config.trial_count
            assert cell.rmse_all_deg >= 0
            if cell.unresolved < config.trial_count:
                assert cell.rmse_resolved_deg < config.resolve_threshold_deg
            else:
                assert math.isnan(cell.rmse_resolved_deg)
    lines = report.to_csv().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 1 + len(report.cells)
    assert "mean_time_us" not in report.to_csv(include_timing=False)
    doc = json.loads(report.to_json())
    assert doc["config"]["trial_count"] == 6 and len(doc["cells"]) == 15
    assert doc["version"]


def test_report_rerun_identical_except_timing():
    config = small_config(algorithms=ALL)
    a = run_experiment(config).to_csv(include_timing=False)
    b = run_experiment(config).to_csv(include_timing=False)
    assert a == b


def test_summary_table_lists_each_algorithm():
    report = run_experiment(small_config(trial_count=2))
    table = report.summary_table()
    for alg in report.config.algorithms:
        assert alg in table


# -- threshold sweep -------------------------------------------------------------


def test_sweep_zero_threshold_equals_root_propagator():
    config = small_config(trial_count=20, angles_deg=(62.0, 70.0), snr_list_db=(-10.0, -5.0), grid_step_deg=0.01)
    table = threshold_sweep(config, [0.0, 1.0, 5.0])
    report = run_experiment(
        small_config(trial_count=20, angles_deg=(62.0, 70.0), snr_list_db=(-10.0, -5.0), algorithms=("root-propagator",))
    )
    for snr in config.snr_list_db:
        assert table.unresolved[0.0, snr] == report.cell("root-propagator", snr).unresolved
        assert table.root_propagator_unresolved[snr] == report.cell("root-propagator", snr).unresolved


def test_sweep_matches_advanced_runs():
    config = small_config(trial_count=15, snr_list_db=(-10.0,), grid_step_deg=0.01)
    table = threshold_sweep(config, [2.0, 5.0])
    for th in (2.0, 5.0):
        cfg = small_config(trial_count=15, snr_list_db=(-10.0,), grid_step_deg=0.01, algorithms=("advanced",), scan_threshold_deg=th)
        assert table.unresolved[th, -10.0] == run_experiment(cfg).cell("advanced", -10.0).unresolved


def test_sweep_rows_and_validation():
    config = small_config(trial_count=2)
    table = threshold_sweep(config, [1, 2, 3])
    rows = table.rows()
    assert len(rows) == 3 * len(config.snr_list_db)
    assert table.to_csv().splitlines()[0] == "threshold_deg,snr_db,unresolved"
    with pytest.raises(ValueError):
        threshold_sweep(config, [2, 1])
    with pytest.raises(ValueError):
        threshold_sweep(config, [-1])
