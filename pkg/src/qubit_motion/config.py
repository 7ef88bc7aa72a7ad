"""Experiment configuration documents (YAML, ``version: 1``).

Example::

    version: 1
    device:
      - {label: Q1, t1: 12.9 us, tau: 1.12 us, frequency: 3690 MHz}
      - {label: Q2, t1: 14.0 us, tau: 1.17 us, frequency: 4350 MHz}
    ground_truth:
      pairs: {"Q1,Q2": 0.32}
    noise: {kind: quasi_static}
    schedules: windows            # every contiguous window, or a list
    acquisition: {points: 50, span: 3.0, shots: 10000, trajectories: 0, seed: 7}
    output_dir: out

A schedule list entry is either ``{name, path, cpmg, detection,
swap_duration}`` with ``path`` given as labels or 1-based qubit numbers, or the
segment form ``{name, segments: [{qubit, residence_fraction,
pulse_fractions}], detection}``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .noise_model import CorrelationMatrix, QubitSpec
from .schedule import (
    DEFAULT_OMEGA_R,
    DetectionConfig,
    MotionSchedule,
    build_motion,
    insert_cpmg,
    schedule_from_dict,
)
from .units import parse_frequency, parse_time

CONFIG_VERSION = 1
SEED_ENV = "MC_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Acquisition:
    times: np.ndarray | None = None
    points: int = 50
    span: float = 3.0
    shots: int = 10_000
    trajectories: int = 0
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    device: tuple[QubitSpec, ...]
    ground_truth: CorrelationMatrix | None
    noise_kind: str
    correlation_time: float | None
    schedules: tuple[tuple[str, MotionSchedule], ...]
    acquisition: Acquisition = field(default_factory=Acquisition)
    output_dir: Path = Path("out")

    @property
    def labels(self) -> list[str]:
        return [q.label for q in self.device]


def _qubit_index(ref, labels) -> int:
    if isinstance(ref, bool):
        raise ConfigError(f"invalid qubit reference {ref!r}")
    if isinstance(ref, int):
        if not 1 <= ref <= len(labels):
            raise ConfigError(f"qubit number {ref} outside 1..{len(labels)}")
        return ref - 1
    if ref in labels:
        return labels.index(ref)
    raise ConfigError(f"unknown qubit {ref!r}; declared qubits are {labels}")


def _parse_device(items) -> tuple[QubitSpec, ...]:
    if not items:
        raise ConfigError("device must list at least one qubit")
    specs = []
    for k, q in enumerate(items):
        try:
            freq = parse_frequency(q["frequency"]) / 1e3 if "frequency" in q else None
            specs.append(QubitSpec(str(q.get("label", f"Q{k + 1}")), parse_time(q["t1"]), parse_time(q["tau"]), freq))
        except KeyError as exc:
            raise ConfigError(f"device[{k}] is missing {exc}") from None
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate qubit labels: {labels}")
    return tuple(specs)


def _parse_ground_truth(doc, labels) -> CorrelationMatrix | None:
    if doc is None:
        return None
    n = len(labels)
    if "matrix" in doc:
        m = np.asarray(doc["matrix"], dtype=float)
        if m.shape != (n, n):
            raise ConfigError(f"ground_truth matrix must be {n}x{n}, got {m.shape}")
        return CorrelationMatrix(m)
    pairs = {}
    for key, value in (doc.get("pairs") or {}).items():
        a, b = [s.strip() for s in str(key).split(",")]
        i = _qubit_index(int(a) if a.isdigit() and a not in labels else a, labels)
        j = _qubit_index(int(b) if b.isdigit() and b not in labels else b, labels)
        if i == j:
            raise ConfigError(f"ground_truth pair {key!r} names the same qubit twice")
        pairs[(i, j)] = float(value)
    return CorrelationMatrix.from_pairs(n, pairs)


def _parse_detection(doc) -> DetectionConfig:
    doc = doc or {}
    omega = 2 * math.pi * parse_frequency(doc["omega_r"]) if "omega_r" in doc else DEFAULT_OMEGA_R
    return DetectionConfig(doc.get("axis", "rotating_n"), omega)


def window_name(path, labels) -> str:
    return "-".join(labels[q] for q in path)


def all_windows(n: int, detection: DetectionConfig | None = None, labels=None):
    labels = labels or [f"Q{i + 1}" for i in range(n)]
    return tuple(
        (window_name(w, labels), build_motion(w, 1.0, detection))
        for L in range(1, n + 1)
        for w in (tuple(range(s, s + L)) for s in range(n - L + 1))
    )


def _parse_schedules(doc, labels) -> tuple[tuple[str, MotionSchedule], ...]:
    if doc is None:
        return ()
    if doc == "windows" or (isinstance(doc, dict) and "windows" in doc):
        det = _parse_detection(doc.get("detection")) if isinstance(doc, dict) else None
        return all_windows(len(labels), det, labels)
    out = []
    for k, item in enumerate(doc):
        det = _parse_detection(item.get("detection"))
        if "segments" in item:
            segs = [dict(s, qubit=_qubit_index(s["qubit"], labels)) for s in item["segments"]]
            sched = schedule_from_dict(dict(item, segments=segs))
        elif "path" in item:
            path = [_qubit_index(q, labels) for q in item["path"]]
            swap = parse_time(item["swap_duration"]) if "swap_duration" in item else 0.0
            sched = build_motion(path, 1.0, det, swap)
            if "cpmg" in item:
                sched = insert_cpmg(sched, item["cpmg"])
        else:
            raise ConfigError(f"schedules[{k}] needs 'path' or 'segments'")
        if max(sched.path) >= len(labels):
            raise ConfigError(f"schedules[{k}] refers to undeclared qubits")
        out.append((str(item.get("name", window_name(sched.path, labels))), sched))
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate schedule names: {names}")
    return tuple(out)


def _parse_acquisition(doc) -> Acquisition:
    doc = doc or {}
    times = None
    if "times" in doc:
        spec = doc["times"]
        if isinstance(spec, dict):
            times = np.linspace(parse_time(spec["start"]), parse_time(spec["stop"]), int(spec["points"]))
        else:
            times = np.array([parse_time(t) for t in spec])
    seed = int(doc.get("seed", 0))
    if os.environ.get(SEED_ENV):
        seed = int(os.environ[SEED_ENV])
    acq = Acquisition(
        times=times,
        points=int(doc.get("points", 50)),
        span=float(doc.get("span", 3.0)),
        shots=int(doc.get("shots", 10_000)),
        trajectories=int(doc.get("trajectories", 0)),
        seed=seed,
        workers=int(doc.get("workers", 1)),
    )
    if acq.shots < 0 or acq.trajectories < 0 or acq.points < 2 or acq.workers < 1:
        raise ConfigError("acquisition counts out of range")
    return acq


def parse_config(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    if doc.get("version") != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {doc.get('version')!r}; expected {CONFIG_VERSION}")
    try:
        device = _parse_device(doc.get("device"))
        labels = [q.label for q in device]
        noise = doc.get("noise") or {}
        kind = noise.get("kind", "quasi_static")
        tc = parse_time(noise["correlation_time"]) if "correlation_time" in noise else None
        out = Path(doc.get("output_dir", "out"))
        if base_dir is not None and not out.is_absolute():
            out = base_dir / out
        return ExperimentConfig(
            device,
            _parse_ground_truth(doc.get("ground_truth"), labels),
            kind,
            tc,
            _parse_schedules(doc.get("schedules"), labels),
            _parse_acquisition(doc.get("acquisition")),
            out,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(doc, path.parent)
