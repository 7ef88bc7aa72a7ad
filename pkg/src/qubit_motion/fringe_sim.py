"""Ramsey fringes of a moving logic qubit, closed form and Monte Carlo.

A fringe point at time ``t`` uses the schedule stretched to duration ``t``,
so the phase weights are ``t * w_unit``.  The population is

    p(t) = 1/2 + 1/2 * exp(-t / (2 T1_ave)) * <cos phi_noise(t)> * cos(omega_r t)

(the last factor is dropped for fixed-x detection).
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .noise_model import CovarianceMatrix, NoiseProcess, covariance_factor
from .schedule import MotionSchedule, schedule_from_dict, schedule_to_dict, unit_phase_weights

__all__ = [
    "CSV_HEADER",
    "FringeData",
    "CsvFormatError",
    "analytic_envelope",
    "analytic_probability",
    "ou_phase_variance",
    "simulate_fringe",
    "apply_shot_noise",
    "default_time_grid",
    "write_fringe_csv",
    "read_fringe_csv",
]

CSV_HEADER = ("time_us", "population", "shots")

QUASI_STATIC_BLOCK = 8192
OU_BLOCK = 256


class CsvFormatError(ValueError):
    def __init__(self, path, row: int, column: str, message: str):
        self.path, self.row, self.column = str(path), row, column
        super().__init__(f"{path}: row {row}, column {column!r}: {message}")


@dataclass(frozen=True)
class FringeData:
    """Sampled populations P(|1>) on a time grid.  ``shots == 0`` marks
    noiseless probabilities."""

    times: np.ndarray
    populations: np.ndarray
    shots: int
    schedule: MotionSchedule | None = None
    t1_average: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.populations, dtype=float)
        if t.ndim != 1 or t.shape != p.shape:
            raise ValueError("times and populations must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any((p < 0) | (p > 1)):
            raise ValueError("populations must lie in [0, 1]")
        if self.shots < 0:
            raise ValueError("shots must be >= 0")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "populations", p)


def _oscillation(schedule: MotionSchedule, times: np.ndarray) -> np.ndarray:
    if schedule.detection.axis == "rotating_n":
        return np.cos(schedule.detection.omega_r * times)
    return np.ones_like(times)


def _t1_factor(t1_avg: float | None, times: np.ndarray) -> np.ndarray:
    if t1_avg is None or math.isinf(t1_avg):
        return np.ones_like(times)
    return np.exp(-times / (2.0 * t1_avg))


def analytic_envelope(schedule: MotionSchedule, cov: CovarianceMatrix, t1_avg: float | None, t):
    """``exp(-t/(2 T1_ave)) * exp(-w(t) C w(t) / 2)`` for quasi-static noise.

    Accepts a scalar or an array of times.  No PSD requirement.
    """
    times = np.asarray(t, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    wu = unit_phase_weights(schedule, cov.n)
    quad = float(wu @ cov.c @ wu)
    env = _t1_factor(t1_avg, times) * np.exp(-0.5 * quad * times**2)
    return float(env) if env.ndim == 0 else env


def _x_plus_expm1(x: float) -> float:
    """``x - 1 + exp(-x)`` without cancellation for small ``x``."""
    if x < 1e-3:
        return x * x * (0.5 - x * (1.0 / 6.0 - x * (1.0 / 24.0 - x / 120.0)))
    return x + math.expm1(-x)


def _pair_kernel(a: float, b: float, c: float, d: float, tc: float) -> float:
    """Integral of exp(-|s-u|/tc) over s in [a,b], u in [c,d]; intervals are
    identical or disjoint."""
    if a == c and b == d:
        return 2.0 * tc * tc * _x_plus_expm1((b - a) / tc)
    if b > c:
        a, b, c, d = c, d, a, b
    return tc * tc * math.exp(-(c - b) / tc) * math.expm1(-(b - a) / tc) * math.expm1(-(d - c) / tc)


def ou_phase_variance(schedule: MotionSchedule, cov: CovarianceMatrix, correlation_time: float, t: float) -> float:
    """Exact variance of the accumulated phase under stationary OU noise with
    the schedule stretched to duration ``t``."""
    if t <= 0:
        return 0.0
    pieces = list(schedule.scaled(t).pieces())
    total = 0.0
    for p in pieces:
        for q in pieces:
            total += (
                p.sign * q.sign * cov.c[p.qubit, q.qubit]
                * _pair_kernel(p.start, p.end, q.start, q.end, correlation_time)
            )
    return total


def analytic_probability(schedule: MotionSchedule, process: NoiseProcess, t1_avg: float | None, times) -> np.ndarray:
    """Noiseless ``p(t)`` from the Gaussian average ``exp(-Var(phi)/2)``."""
    times = np.asarray(times, dtype=float)
    cov = process.covariance
    if process.kind == "quasi_static":
        env = np.asarray(analytic_envelope(schedule, cov, t1_avg, times))
    else:
        var = np.array([ou_phase_variance(schedule, cov, process.correlation_time, t) for t in times])
        env = _t1_factor(t1_avg, times) * np.exp(-0.5 * var)
    return 0.5 + 0.5 * env * _oscillation(schedule, times)


def _block_seed(seed, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=key)


def _quasi_static_block(factor, w_unit, times, size, seq):
    rng = np.random.default_rng(seq)
    delta = rng.standard_normal((size, factor.shape[0])) @ factor.T
    proj = delta @ w_unit
    return np.cos(np.outer(times, proj)).sum(axis=1)


def _cumulative_integral(xi: np.ndarray, dt: float) -> np.ndarray:
    F = np.zeros_like(xi)
    F[..., 1:] = np.cumsum(0.5 * dt * (xi[..., 1:] + xi[..., :-1]), axis=-1)
    return F


def _integral_at(F: np.ndarray, xi: np.ndarray, dt: float, s: float) -> np.ndarray:
    """Integral over [0, s] of the piecewise-linear interpolant of ``xi``."""
    k = min(int(s / dt), xi.shape[-1] - 2)
    h = s - k * dt
    x0, x1 = xi[..., k], xi[..., k + 1]
    return F[..., k] + x0 * h + (x1 - x0) * h * h / (2.0 * dt)


def _ou_dt(schedule: MotionSchedule, process: NoiseProcess, t_max: float) -> float:
    return min(process.correlation_time / 20.0, t_max / schedule.n / 50.0)


def _ou_block(process, schedule, times, dt, size, seq):
    from .noise_model import sample_ou_trajectories

    t_max = float(times[-1])
    xi = sample_ou_trajectories(process, dt, t_max, seq, paths=size)
    F = _cumulative_integral(xi, dt)
    out = np.empty(len(times))
    for k, t in enumerate(times):
        if t <= 0:
            out[k] = size
            continue
        phase = np.zeros(size)
        for q, a, b, s in schedule.scaled(t).pieces():
            phase += s * (_integral_at(F[:, q], xi[:, q], dt, b) - _integral_at(F[:, q], xi[:, q], dt, a))
        out[k] = np.cos(phase).sum()
    return out


def simulate_fringe(
    schedule: MotionSchedule,
    process: NoiseProcess,
    t1_avg: float | None,
    times: Sequence[float],
    trajectories: int,
    shots: int,
    rng_seed: int,
    workers: int = 1,
) -> FringeData:
    """Simulate a fringe.

    ``trajectories == 0`` uses the exact Gaussian average instead of Monte
    Carlo.  Trajectories are drawn in fixed-size blocks, each seeded from
    ``(rng_seed, block index)``, so the output does not depend on ``workers``.
    Binomial shot noise is applied when ``shots > 0``.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("need a non-empty 1-D time grid")
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    if trajectories < 0 or shots < 0:
        raise ValueError("trajectories and shots must be non-negative")
    cov = process.covariance
    if max(schedule.path) >= cov.n:
        raise ValueError(f"schedule path {schedule.path} exceeds the {cov.n}-qubit noise model")

    if trajectories == 0:
        p = analytic_probability(schedule, process, t1_avg, times)
    else:
        factor = covariance_factor(cov)  # raises for non-PSD covariance
        block = QUASI_STATIC_BLOCK if process.kind == "quasi_static" else OU_BLOCK
        sizes = [min(block, trajectories - i) for i in range(0, trajectories, block)]
        if process.kind == "quasi_static":
            w_unit = unit_phase_weights(schedule, cov.n)
            jobs = [
                (_quasi_static_block, (factor, w_unit, times, size, _block_seed(rng_seed, 1, b)))
                for b, size in enumerate(sizes)
            ]
        else:
            dt = _ou_dt(schedule, process, float(times.max()))
            jobs = [
                (_ou_block, (process, schedule, times, dt, size, _block_seed(rng_seed, 1, b)))
                for b, size in enumerate(sizes)
            ]
        if workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                partial = list(pool.map(lambda job: job[0](*job[1]), jobs))
        else:
            partial = [fn(*args) for fn, args in jobs]
        mean_cos = np.zeros(len(times))
        for part in partial:
            mean_cos += part
        mean_cos /= trajectories
        p = 0.5 + 0.5 * _t1_factor(t1_avg, times) * mean_cos * _oscillation(schedule, times)

    p = np.clip(p, 0.0, 1.0)
    if shots > 0:
        p = apply_shot_noise(p, shots, _block_seed(rng_seed, 0))
    meta = {"seed": int(rng_seed), "trajectories": int(trajectories), "noise": process.kind}
    return FringeData(times, p, int(shots), schedule, t1_avg, meta)


def apply_shot_noise(p, shots: int, rng_seed):
    """``Binomial(shots, p) / shots``; scalar in, scalar out."""
    arr = np.asarray(p, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(~np.isfinite(arr)):
        raise ValueError("probabilities must lie in [0, 1]")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(rng_seed)
    est = np.asarray(rng.binomial(shots, arr) / shots)
    return float(est) if est.ndim == 0 else est


def default_time_grid(decay_time: float, points: int = 50, span: float = 3.0) -> np.ndarray:
    """``points`` evenly spaced times on ``[0, span * decay_time]``."""
    if not decay_time > 0 or math.isinf(decay_time):
        raise ValueError("decay_time must be positive and finite")
    return np.linspace(0.0, span * decay_time, points)


def write_fringe_csv(data: FringeData, path, name: str | None = None) -> Path:
    """Write ``time_us,population,shots`` rows plus a ``.json`` sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for t, p in zip(data.times, data.populations):
            writer.writerow([repr(float(t)), repr(float(p)), data.shots])
    meta = dict(data.metadata)
    if name is not None:
        meta["name"] = name
    if data.schedule is not None:
        meta["schedule"] = schedule_to_dict(data.schedule)
    if data.t1_average is not None and math.isfinite(data.t1_average):
        meta["t1_average"] = f"{float(data.t1_average)!r} us"
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_fringe_csv(path) -> FringeData:
    """Parse a fringe CSV (and its sidecar when present)."""
    from .units import parse_time

    path = Path(path)
    times, pops, shots = [], [], None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise CsvFormatError(path, 1, "header", f"expected {','.join(CSV_HEADER)}, got {header}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise CsvFormatError(path, row_no, "*", f"expected 3 fields, got {len(row)}")
            values = []
            for col, raw in zip(CSV_HEADER, row):
                try:
                    values.append(int(raw) if col == "shots" else float(raw))
                except ValueError:
                    raise CsvFormatError(path, row_no, col, f"not a number: {raw!r}") from None
            t, p, s = values
            if not 0.0 <= p <= 1.0:
                raise CsvFormatError(path, row_no, "population", f"{p} outside [0, 1]")
            if times and t <= times[-1]:
                raise CsvFormatError(path, row_no, "time_us", "times must be strictly increasing")
            if shots is not None and s != shots:
                raise CsvFormatError(path, row_no, "shots", "shot count differs between rows")
            times.append(t)
            pops.append(p)
            shots = s
    if not times:
        raise CsvFormatError(path, 2, "*", "no data rows")
    schedule, t1, meta = None, None, {}
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        if "schedule" in meta:
            schedule = schedule_from_dict(meta.pop("schedule"))
        if "t1_average" in meta:
            t1 = parse_time(meta.pop("t1_average"))
    return FringeData(np.array(times), np.array(pops), shots, schedule, t1, meta)
