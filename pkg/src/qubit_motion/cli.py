"""Batch front end: ``simulate``, ``fit``, ``reconstruct`` and ``report``.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import json
import logging
import math
import re
import sys
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .estimator import bootstrap_sigma, fit_fringe, reconstruct_matrix
from .fringe_sim import CsvFormatError, default_time_grid, read_fringe_csv, simulate_fringe, write_fringe_csv
from .estimator import fringe_model
from .noise_model import (
    NoiseProcess,
    NotPositiveSemidefiniteError,
    assemble_covariance,
    nearest_psd,
    validate_psd,
)
from .plots import fringe_svg, heatmap_svg
from .report import ReportSchemaError, read_report, render_table, write_report
from .schedule import unit_phase_weights
from .units import UnitError

log = logging.getLogger("qubit_motion")

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
MANIFEST_VERSION = 1


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name.replace("'", "p"))


def _schedule_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=(index,)).generate_state(1)[0])


def _decay_guess(schedule, cov, t1_avg: float) -> float:
    wu = unit_phase_weights(schedule, cov.n)
    quad = float(wu @ cov.c @ wu)
    tau = math.sqrt(2.0 / quad) if quad > 0 else math.inf
    return min(tau, 2.0 * t1_avg)


def _noise_process(config: ExperimentConfig, project_psd: bool) -> NoiseProcess:
    if config.ground_truth is None:
        raise ConfigError("simulate needs a ground_truth correlation matrix")
    cov = assemble_covariance(config.device, config.ground_truth)
    psd, lo = validate_psd(cov)
    if not psd:
        if not project_psd:
            raise NotPositiveSemidefiniteError(lo)
        log.warning("ground truth covariance projected to PSD (min eigenvalue was %.6g)", lo)
        cov = nearest_psd(cov)
    return NoiseProcess(cov, config.noise_kind, config.correlation_time)


def run_simulate(config: ExperimentConfig, project_psd: bool = False, workers: int | None = None) -> Path:
    """Simulate every configured schedule; returns the manifest path."""
    process = _noise_process(config, project_psd)
    acq = config.acquisition
    workers = workers or acq.workers
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    if not config.schedules:
        log.warning("no schedules configured; nothing to simulate")
    entries = []
    for k, (name, schedule) in enumerate(config.schedules):
        t1_avg = float(np.mean([config.device[q].t1 for q in schedule.path]))
        times = acq.times
        if times is None:
            times = default_time_grid(_decay_guess(schedule, process.covariance, t1_avg), acq.points, acq.span)
        seed = _schedule_seed(acq.seed, k)
        data = simulate_fringe(schedule, process, t1_avg, times, acq.trajectories, acq.shots, seed, workers)
        stem = f"fringe_{k:03d}_{_safe(name)}"
        write_fringe_csv(data, out / f"{stem}.csv", name=name)
        (out / f"{stem}.svg").write_text(fringe_svg(data.times, data.populations, title=name))
        entries.append(
            {
                "file": f"{stem}.csv",
                "name": name,
                "path": list(schedule.path),
                "seed": seed,
                "t1_average_us": t1_avg,
                "mode": "osc" if schedule.detection.axis == "rotating_n" else "env",
                "pi_pulses": schedule.pi_count,
            }
        )
    manifest = {"version": MANIFEST_VERSION, "master_seed": acq.seed, "files": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load_manifest(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("version") != MANIFEST_VERSION or "files" not in doc:
        raise ConfigError(f"{path}: not a version {MANIFEST_VERSION} manifest")
    return doc


def run_reconstruct(config: ExperimentConfig, manifest_path, bootstrap: int = 0, out_dir=None):
    """Fit every manifest fringe and rebuild the correlation matrix.

    Writes ``report.json``, ``report.txt`` and ``heatmap.svg``; returns the
    report.  When several fringes share a path the pulse-free one is used.
    """
    manifest_path = Path(manifest_path)
    manifest = _load_manifest(manifest_path)
    base = manifest_path.parent
    out = Path(out_dir) if out_dir is not None else config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    chosen: dict = {}
    for entry in manifest["files"]:
        path = tuple(int(q) for q in entry["path"])
        if max(path) >= len(config.device):
            raise ConfigError(f"manifest entry {entry['file']} refers to undeclared qubits")
        if path in chosen and chosen[path].get("pi_pulses", 0) <= entry.get("pi_pulses", 0):
            continue
        chosen[path] = entry
    fits = {}
    for path, entry in sorted(chosen.items(), key=lambda kv: (len(kv[0]), kv[0])):
        data = read_fringe_csv(base / entry["file"])
        t1_avg = float(entry.get("t1_average_us") or np.mean([config.device[q].t1 for q in path]))
        mode = entry.get("mode", "osc")
        fit = fit_fringe(data, t1_avg, mode)
        if bootstrap and fit.converged and data.shots > 0:
            sigma = bootstrap_sigma(data, t1_avg, mode, bootstrap, entry.get("seed", 0))
            fit = type(fit)(**{**fit.to_dict(), "sigma_tau_L": sigma})
        fits[path] = fit
    report = reconstruct_matrix(fits, config.device)
    write_report(report, out / "report.json")
    (out / "report.txt").write_text(render_table(report))
    (out / "heatmap.svg").write_text(heatmap_svg(report.corr, report.labels))
    return report


def run_report(report_path) -> str:
    return render_table(read_report(report_path))


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(fn):
    """Map library exceptions onto the documented exit codes."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NotPositiveSemidefiniteError as exc:
            _fail(EXIT_VALIDATION, f"{exc} (or pass --project-psd)")
        except (ConfigError, UnitError, CsvFormatError, ReportSchemaError, FileNotFoundError) as exc:
            _fail(EXIT_VALIDATION, str(exc))
        except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
            _fail(EXIT_NUMERICAL, str(exc))
        except ValueError as exc:
            _fail(EXIT_VALIDATION, str(exc))

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Qubit-motion noise-correlation simulator and estimator."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s: %(message)s")


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True)
@click.option("--project-psd", is_flag=True, help="Project a non-PSD ground truth onto the PSD cone.")
@click.option("--workers", type=int, default=None, help="Threads for Monte Carlo (output is independent of this).")
@_guard
def simulate(config_path, project_psd, workers):
    """Simulate fringes for every configured schedule."""
    config = load_config(config_path)
    manifest = run_simulate(config, project_psd, workers)
    click.echo(str(manifest))


@main.command()
@click.option("--in", "in_path", type=click.Path(dir_okay=False), required=True)
@click.option("--t1-avg", type=float, required=True, help="Average T1 of the path, in us.")
@click.option("--mode", type=click.Choice(["osc", "env"]), default="osc", show_default=True)
@click.option("--svg", "svg_path", type=click.Path(dir_okay=False), default=None, help="Also plot data and fit.")
@_guard
def fit(in_path, t1_avg, mode, svg_path):
    """Fit one fringe CSV and print the result as JSON."""
    data = read_fringe_csv(in_path)
    result = fit_fringe(data, t1_avg, mode)
    click.echo(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    if svg_path and result.converged:
        params = (
            (result.amplitude, result.tau_L, result.omega_r, result.phi, result.offset)
            if mode == "osc"
            else (result.amplitude, result.tau_L, result.offset)
        )
        model = fringe_model(params, data.times, t1_avg, mode)
        Path(svg_path).write_text(fringe_svg(data.times, data.populations, model, Path(in_path).stem))


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(dir_okay=False), required=True)
@click.option("--bootstrap", type=int, default=0, help="Parametric bootstrap resamples for sigma (0: covariance).")
@_guard
def reconstruct(config_path, manifest_path, bootstrap):
    """Fit all manifest fringes and reconstruct the correlation matrix."""
    config = load_config(config_path)
    report = run_reconstruct(config, manifest_path, bootstrap)
    click.echo(render_table(report), nl=False)


@main.command()
@click.option("--in", "in_path", type=click.Path(dir_okay=False), required=True)
@_guard
def report(in_path):
    """Render a report document as a text table."""
    click.echo(run_report(in_path), nl=False)


if __name__ == "__main__":
    main()
