"""Command-line front end.

    rootprop run      Monte Carlo study, CSV/JSON report and a failure table
    rootprop sweep    unresolved failures versus local-scan threshold
    rootprop single   one simulated trial, printed in detail
    rootprop validate noise-free consistency checks, no files written

Every flag can also come from a flat JSON config file (``--config``) using
the flag name as key, with dashes or underscores. Flags win over the file.
Exit status: 0 success, 1 configuration error, 2 failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .array_model import ArrayGeometry, exact_covariance, simulate_snapshots, steering_matrix
from .estimators import (
    DEFAULT_GRID_STEP,
    ESTIMATORS,
    SPECTRUM_FLOOR,
    diagonal_sums,
    estimate,
    estimate_propagator_model,
    pick_peaks,
    pm_spectrum,
    root_propagator_estimate,
)
from .harness import ExperimentConfig, match_estimates, run_experiment, threshold_sweep
from .numerics import EstimationError, sample_covariance

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 1, 2

DEFAULTS = {
    "sensors": 12,
    "sources": None,
    "snapshots": 200,
    "spacing_wavelengths": 0.5,
    "angles": [40.0, 50.0],
    "snr": [-10.0, -5.0, 0.0, 5.0, 10.0],
    "trials": 200,
    "grid_step": DEFAULT_GRID_STEP,
    "resolve_threshold": 7.0,
    "scan_threshold": 5.0,
    "algorithms": ["propagator", "root-propagator", "advanced"],
    "seed": 2024,
    "output": None,
    "format": None,
    "thresholds": [1, 2, 3, 4, 5, 6, 7],
    "algorithm": "root-propagator",
    "trial": 0,
    "noiseless": False,
    "estimator_spacing": None,
}

log = logging.getLogger("rootprop")


class ConfigError(ValueError):
    pass


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _str_list(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return [str(v).strip() for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment")
    g.add_argument("--config", type=Path, help="flat JSON file with the same keys as the flags")
    g.add_argument("--sensors", type=int, help="number of sensors M (default 12)")
    g.add_argument("--sources", type=int, help="number of sources D; must match --angles")
    g.add_argument("--snapshots", type=int, help="snapshots per trial N (default 200)")
    g.add_argument("--spacing-wavelengths", type=float, help="element spacing d/lambda (default 0.5)")
    g.add_argument("--angles", help="true bearings in degrees, comma separated (default 40,50)")
    g.add_argument("--snr", help="SNR values in dB, comma separated (default -10,-5,0,5,10)")
    g.add_argument("--trials", type=int, help="trials per cell L (default 200)")
    g.add_argument("--grid-step", type=float, help="spectrum grid and scan step in degrees (default 0.01)")
    g.add_argument("--resolve-threshold", type=float, help="error at which a trial is unresolved (default 7)")
    g.add_argument("--scan-threshold", type=float, help="local scan half-width for advanced (default 5)")
    g.add_argument("--algorithms", help=f"comma separated, from {', '.join(sorted(set(ESTIMATORS.values())))}")
    g.add_argument("--seed", type=int, help="master seed (default 2024)")
    g.add_argument("--output", type=Path, help="report file")
    g.add_argument("--format", choices=("csv", "json"), help="report format (default from suffix, else csv)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rootprop", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Monte Carlo accuracy/resolution/timing study")
    _add_common(p)

    p = sub.add_parser("sweep", help="failures of the advanced estimator versus scan threshold")
    _add_common(p)
    p.add_argument("--thresholds", help="scan thresholds in degrees, ascending (default 1..7)")

    p = sub.add_parser("single", help="run and print one trial")
    _add_common(p)
    p.add_argument("--algorithm", help="estimator for this trial (default root-propagator)")
    p.add_argument("--trial", type=int, help="trial index feeding the seed (default 0)")
    p.add_argument("--noiseless", action="store_true", default=None, help="drop the noise term")

    p = sub.add_parser("validate", help="noise-free oracle checks")
    _add_common(p)
    p.add_argument(
        "--estimator-spacing",
        type=float,
        help="d/lambda assumed by the estimators (default: same as simulation)",
    )
    return parser


def merge_settings(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then explicit flags."""
    settings = dict(DEFAULTS)
    if args.config is not None:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a flat JSON object")
        for key, value in doc.items():
            norm = key.replace("-", "_")
            if norm not in settings:
                raise ConfigError(f"unknown config key {key!r}")
            settings[norm] = value
    for key in settings:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def make_config(s: dict) -> ExperimentConfig:
    angles = _float_list(s["angles"])
    if s["sources"] is not None and int(s["sources"]) != len(angles):
        raise ConfigError(f"--sources {s['sources']} does not match {len(angles)} angles")
    try:
        return ExperimentConfig(
            angles_deg=tuple(angles),
            sensor_count=int(s["sensors"]),
            snapshot_count=int(s["snapshots"]),
            spacing_wavelengths=float(s["spacing_wavelengths"]),
            snr_list_db=tuple(_float_list(s["snr"])),
            trial_count=int(s["trials"]),
            algorithms=tuple(_str_list(s["algorithms"])),
            resolve_threshold_deg=float(s["resolve_threshold"]),
            scan_threshold_deg=float(s["scan_threshold"]),
            grid_step_deg=float(s["grid_step"]),
            master_seed=int(s["seed"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _resolve_format(s: dict) -> str:
    if s["format"]:
        return s["format"]
    out = s["output"]
    return "json" if out is not None and Path(out).suffix.lower() == ".json" else "csv"


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_run(s: dict) -> int:
    config = make_config(s)
    report = run_experiment(config, progress=True)
    print(report.summary_table())
    print()
    print(f"{'algorithm':<18}{'snr_db':>8}{'rmse_all':>11}{'rmse_res':>11}{'mean_us':>12}")
    for c in report.cells:
        print(f"{c.algorithm:<18}{c.snr_db:>8g}{c.rmse_all_deg:>11.4f}{c.rmse_resolved_deg:>11.4f}{c.mean_time_us:>12.1f}")
    if s["output"] is not None:
        out = Path(s["output"])
        if _resolve_format(s) == "json":
            _write(out, report.to_json())
        else:
            _write(out, report.to_csv())
            _write(out.with_suffix(".json") if out.suffix != ".json" else out.with_name(out.name + ".report.json"), report.to_json())
        print(f"\nreport written to {out}")
    return EXIT_OK


def cmd_sweep(s: dict) -> int:
    config = make_config(s)
    thresholds = _float_list(s["thresholds"])
    try:
        table = threshold_sweep(config, thresholds)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    snrs = config.snr_list_db
    print(f"advanced root-propagator unresolved failures, angles {list(config.angles_deg)}, {config.trial_count} trials")
    print(f"{'threshold':<12}" + "".join(f"{snr:>9g} dB" for snr in snrs))
    print(f"{'root-prop':<12}" + "".join(f"{table.root_propagator_unresolved[snr]:>12d}" for snr in snrs))
    for th in table.thresholds_deg:
        print(f"{th:<12g}" + "".join(f"{table.unresolved[th, snr]:>12d}" for snr in snrs))
    if s["output"] is not None:
        fmt = _resolve_format(s)
        _write(s["output"], json.dumps(table.to_dict(), indent=2) if fmt == "json" else table.to_csv())
    return EXIT_OK


def cmd_single(s: dict) -> int:
    s = dict(s, algorithms=[s["algorithm"]])
    config = make_config(s)
    name = config.algorithms[0]
    snr = config.snr_list_db[0]
    scenario = config.scenario(snr, int(s["trial"]))
    snapshots = simulate_snapshots(scenario, noise_variance=0.0 if s["noiseless"] else None)
    R = sample_covariance(snapshots)
    print(f"algorithm  {name}")
    print(f"snr_db     {'inf (noiseless)' if s['noiseless'] else f'{snr:g}'}")
    print(f"seed       {scenario.seed}")
    print(f"truth_deg  {_fmt(config.angles_deg)}")
    try:
        est = estimate(name, R, config.geometry, config.source_count, config.grid_step_deg, config.scan_threshold_deg)
    except EstimationError as exc:
        print(f"estimate   failed: {exc}")
        return EXIT_OK
    print(f"estimate   {_fmt(est.angles_deg)}")
    print(f"error_deg  {_fmt(match_estimates(config.angles_deg, est))}")
    for key in ("root_magnitudes", "peak_heights", "rooted_angles_deg", "refined", "degenerate", "clamped"):
        if key in est.diagnostics:
            value = est.diagnostics[key]
            print(f"{key:<18} {_fmt(value) if np.ndim(value) else value}")
    return EXIT_OK


def _fmt(values) -> str:
    arr = np.asarray(values)
    if arr.dtype == bool:
        return "[" + ", ".join(str(bool(v)) for v in arr) + "]"
    return "[" + ", ".join(f"{float(v):.6f}" for v in arr) + "]"


def validation_checks(config: ExperimentConfig, estimator_spacing: float | None = None) -> list[tuple[str, bool, str]]:
    """Noise-free checks of every estimator against the exact covariance.

    The covariance is built with the configured geometry; the estimators use
    ``estimator_spacing`` when given, which lets a deliberate mismatch show up
    as an angle-recovery failure.
    """
    sim_geometry = config.geometry
    est_geometry = ArrayGeometry(
        config.sensor_count,
        sim_geometry.spacing_wavelengths if estimator_spacing is None else estimator_spacing,
    )
    truth = np.asarray(config.angles_deg)
    D = truth.size
    R = exact_covariance(sim_geometry, truth)
    A = steering_matrix(est_geometry, truth)
    results = []

    model = estimate_propagator_model(R, D)
    residual = np.linalg.norm(model.q_matrix.conj().T @ A) / np.linalg.norm(A)
    results.append(("propagator annihilates steering matrix", residual <= 1e-8, f"|Q^H A|/|A| = {residual:.2e}"))

    # compare denominators: the noise-free spectrum has exact nulls on the grid
    spec = pm_spectrum(model, est_geometry, 0.1)
    poly = diagonal_sums(model.c_matrix)
    phase = est_geometry.phase_scale * np.cos(np.deg2rad(spec.grid_deg))
    gap = np.max(np.abs(poly.on_unit_circle(phase).real - (1.0 / spec.values - SPECTRUM_FLOOR)))
    scale = np.abs(poly.coefficients).sum()
    results.append(("spectrum equals unit-circle polynomial", gap <= 1e-10 * scale, f"max diff {gap / scale:.2e} x sum|c_l|"))

    grid_step = config.grid_step_deg
    for name in ("root-propagator", "root-music", "advanced", "propagator", "music"):
        tol = 1e-3 if name in ("root-propagator", "root-music", "advanced") else grid_step + 1e-9
        try:
            err = np.max(np.abs(match_estimates(truth, estimate(name, R, est_geometry, D, grid_step, config.scan_threshold_deg))))
            ok = err <= tol
            detail = f"max error {err:.2e} deg (tol {tol:g})"
        except EstimationError as exc:
            ok, detail = False, f"failed: {exc}"
        results.append((f"{name} recovers truth", bool(ok), detail))

    try:
        rooted = root_propagator_estimate(R, est_geometry, D).angles_deg
        searched = pick_peaks(pm_spectrum(model, est_geometry, 0.001), D).angles_deg
        gap = float(np.max(np.abs(rooted - searched)))
        results.append(("rooting matches 0.001 deg grid search", gap <= 0.002, f"max gap {gap:.2e} deg"))
    except EstimationError as exc:
        results.append(("rooting matches 0.001 deg grid search", False, f"failed: {exc}"))
    return results


def cmd_validate(s: dict) -> int:
    config = make_config(s)
    spacing = s["estimator_spacing"]
    results = validation_checks(config, None if spacing is None else float(spacing))
    for label, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {label:<42} {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAILURE


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "single": cmd_single, "validate": cmd_validate}


_LIST_FLAGS = ("--snr", "--angles", "--thresholds")


def _glue_negative_lists(argv: list[str]) -> list[str]:
    """Turn ``--snr -10,-5`` into ``--snr=-10,-5`` so argparse accepts it."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _LIST_FLAGS and i + 1 < len(argv) and argv[i + 1][:2].replace(".", "0")[1:].isdigit() and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(_glue_negative_lists(list(sys.argv[1:] if argv is None else argv)))
    except SystemExit as exc:
        # argparse exits 2 on usage errors; here that is a configuration error
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        settings = merge_settings(args)
        return COMMANDS[args.command](settings)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.debug("internal failure", exc_info=True)
        print(f"internal failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
