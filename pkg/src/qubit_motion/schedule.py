"""Qubit-motion, CPMG and Motion-CPMG sequences as timed segment lists.

A schedule moves the logic state along ``path``; it rests ``residence_time``
on every physical qubit, optionally followed by a SWAP of ``swap_duration``
during which the departing qubit still hosts the state.  Instantaneous
pi pulses (relative to segment start) flip the sign with which noise
accumulates into the phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple, Sequence

import numpy as np

__all__ = [
    "DEFAULT_OMEGA_R",
    "DetectionConfig",
    "MotionSchedule",
    "Piece",
    "build_motion",
    "insert_cpmg",
    "carr_purcell_positions",
    "phase_weights",
    "unit_phase_weights",
    "host_indicator",
    "schedule_to_dict",
    "schedule_from_dict",
]

#: 2 MHz fringe, in rad/us
DEFAULT_OMEGA_R = 2.0 * math.pi * 2.0

_AXES = ("rotating_n", "fixed_x")


@dataclass(frozen=True)
class DetectionConfig:
    """Final pi/2 rotation: a rotating axis (oscillating fringe at ``omega_r``
    rad/us) or a fixed x axis (envelope only)."""

    axis: str = "rotating_n"
    omega_r: float = DEFAULT_OMEGA_R

    def __post_init__(self):
        if self.axis not in _AXES:
            raise ValueError(f"detection axis must be one of {_AXES}, got {self.axis!r}")
        if self.axis == "rotating_n" and not self.omega_r > 0:
            raise ValueError("rotating_n detection needs omega_r > 0")


class Piece(NamedTuple):
    qubit: int
    start: float
    end: float
    sign: int


@dataclass(frozen=True)
class MotionSchedule:
    path: tuple[int, ...]
    residence_time: float
    pi_pulse_times: tuple[tuple[float, ...], ...] | None = None
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    swap_duration: float = 0.0

    def __post_init__(self):
        path = tuple(int(q) for q in self.path)
        if not path:
            raise ValueError("path must contain at least one qubit")
        if any(q < 0 for q in path):
            raise ValueError(f"qubit indices must be non-negative: {path}")
        if len(set(path)) != len(path):
            raise ValueError(f"path visits a qubit twice: {path}")
        if not self.residence_time > 0:
            raise ValueError("residence_time must be positive")
        if self.swap_duration < 0:
            raise ValueError("swap_duration must be non-negative")
        pulses = self.pi_pulse_times
        if pulses is None:
            pulses = ((),) * len(path)
        pulses = tuple(tuple(float(p) for p in seg) for seg in pulses)
        if len(pulses) != len(path):
            raise ValueError("need one pulse list per path segment")
        for seg in pulses:
            if any(b <= a for a, b in zip(seg, seg[1:])):
                raise ValueError(f"pulse times must be strictly increasing: {seg}")
            if seg and (seg[0] < 0 or seg[-1] > self.residence_time * (1 + 1e-12)):
                raise ValueError(f"pulse times must lie in [0, residence_time]: {seg}")
        object.__setattr__(self, "path", path)
        object.__setattr__(self, "pi_pulse_times", pulses)

    @property
    def n(self) -> int:
        return len(self.path)

    @property
    def duration(self) -> float:
        return self.n * self.residence_time + (self.n - 1) * self.swap_duration

    @property
    def pi_count(self) -> int:
        return sum(len(seg) for seg in self.pi_pulse_times)

    @property
    def odd_parity(self) -> bool:
        """An odd pi count inverts the readout; populations are reported in
        the un-inverted convention."""
        return self.pi_count % 2 == 1

    def segment_start(self, k: int) -> float:
        return k * (self.residence_time + self.swap_duration)

    def scaled(self, total_time: float) -> "MotionSchedule":
        """Copy stretched so that its duration equals ``total_time``; pulses
        keep their relative position inside each segment."""
        if not total_time > 0:
            raise ValueError("total_time must be positive")
        f = total_time / self.duration
        return MotionSchedule(
            self.path,
            self.residence_time * f,
            tuple(tuple(p * f for p in seg) for seg in self.pi_pulse_times),
            self.detection,
            self.swap_duration * f,
        )

    def pieces(self) -> Iterator[Piece]:
        """Constant-sign, single-host intervals covering ``[0, duration]``."""
        sign = 1
        for k, q in enumerate(self.path):
            t0 = self.segment_start(k)
            edges = [t0, *(t0 + p for p in self.pi_pulse_times[k]), t0 + self.residence_time]
            for j, (a, b) in enumerate(zip(edges, edges[1:])):
                if j:
                    sign = -sign
                if b > a:
                    yield Piece(q, a, b, sign)
            if k < self.n - 1 and self.swap_duration > 0:
                a = t0 + self.residence_time
                yield Piece(q, a, a + self.swap_duration, sign)


def carr_purcell_positions(tau0: float, k: int) -> tuple[float, ...]:
    """Pulse positions ``tau0*(2m-1)/(2k)``, m = 1..k."""
    if k < 0:
        raise ValueError("pulse count must be non-negative")
    return tuple(tau0 * (2 * m - 1) / (2 * k) for m in range(1, k + 1))


def build_motion(path: Sequence[int], tau0: float, detection: DetectionConfig | None = None,
                 swap_duration: float = 0.0, n_qubits: int | None = None) -> MotionSchedule:
    """Plain qubit motion without pi pulses; total time ``len(path)*tau0``."""
    path = tuple(path)
    if n_qubits is not None and any(not 0 <= q < n_qubits for q in path):
        raise ValueError(f"path {path} refers to qubits outside 0..{n_qubits - 1}")
    return MotionSchedule(path, tau0, None, detection or DetectionConfig(), swap_duration)


def insert_cpmg(schedule: MotionSchedule, counts: Sequence[int]) -> MotionSchedule:
    """Add ``counts[k]`` Carr-Purcell spaced pi pulses to segment ``k``."""
    counts = list(counts)
    if len(counts) != schedule.n:
        raise ValueError(f"expected {schedule.n} pulse counts, got {len(counts)}")
    if any(int(c) != c or c < 0 for c in counts):
        raise ValueError(f"pulse counts must be non-negative integers: {counts}")
    pulses = []
    for seg, k in zip(schedule.pi_pulse_times, counts):
        new = carr_purcell_positions(schedule.residence_time, int(k))
        pulses.append(tuple(sorted(seg + new)))
    return replace(schedule, pi_pulse_times=tuple(pulses))


def phase_weights(schedule: MotionSchedule, total_time: float, n_qubits: int | None = None) -> np.ndarray:
    """Signed time each qubit's noise contributes to the phase up to ``total_time``.

    The quasi-static dephasing factor is ``exp(-0.5 * w @ C @ w)``.  The
    vector is indexed by physical qubit (length ``n_qubits``, default
    ``max(path)+1``).
    """
    if total_time < 0 or total_time > schedule.duration * (1 + 1e-12):
        raise ValueError(f"total_time {total_time} outside [0, {schedule.duration}]")
    size = n_qubits if n_qubits is not None else max(schedule.path) + 1
    w = np.zeros(size)
    for q, a, b, s in schedule.pieces():
        if a >= total_time:
            break
        w[q] += s * (min(b, total_time) - a)
    return w


def unit_phase_weights(schedule: MotionSchedule, n_qubits: int | None = None) -> np.ndarray:
    """Phase weights of the schedule stretched to unit duration; for the
    stretched family ``w(t) = t * unit_phase_weights``."""
    return phase_weights(schedule.scaled(1.0), 1.0, n_qubits)


def host_indicator(schedule: MotionSchedule, t: float) -> int:
    """Qubit holding the logic state at time ``t`` (right-continuous)."""
    if t < 0 or t > schedule.duration:
        raise ValueError(f"t={t} outside [0, {schedule.duration}]")
    period = schedule.residence_time + schedule.swap_duration
    k = min(int(t // period), schedule.n - 1)
    return schedule.path[k]


def schedule_to_dict(schedule: MotionSchedule) -> dict:
    """Segment-list form used inside configs and sidecar metadata."""
    d = schedule.duration
    det = {"axis": schedule.detection.axis}
    if schedule.detection.axis == "rotating_n":
        det["omega_r"] = f"{schedule.detection.omega_r / (2 * math.pi):.12g} MHz"
    out = {
        "duration": f"{d:.12g} us",
        "segments": [
            {
                "qubit": q,
                "residence_fraction": float(f"{schedule.residence_time / d:.15g}"),
                "pulse_fractions": [
                    float(f"{p / schedule.residence_time:.15g}") for p in pulses
                ],
            }
            for q, pulses in zip(schedule.path, schedule.pi_pulse_times)
        ],
        "detection": det,
    }
    if schedule.swap_duration:
        out["swap_duration"] = f"{schedule.swap_duration:.12g} us"
    return out


def schedule_from_dict(doc: dict) -> MotionSchedule:
    from .units import parse_frequency, parse_time

    segments = doc["segments"]
    if not segments:
        raise ValueError("schedule needs at least one segment")
    fracs = [float(s.get("residence_fraction", 1.0 / len(segments))) for s in segments]
    if max(fracs) - min(fracs) > 1e-9:
        raise ValueError("all residence fractions must be equal")
    swap = parse_time(doc["swap_duration"]) if "swap_duration" in doc else 0.0
    if "duration" in doc:
        duration = parse_time(doc["duration"])
        tau0 = (duration - (len(segments) - 1) * swap) / len(segments)
    else:
        tau0 = 1.0
    det_doc = doc.get("detection", {})
    axis = det_doc.get("axis", "rotating_n")
    omega = (
        2 * math.pi * parse_frequency(det_doc["omega_r"])
        if "omega_r" in det_doc
        else DEFAULT_OMEGA_R
    )
    pulses = tuple(
        tuple(float(p) * tau0 for p in s.get("pulse_fractions", ())) for s in segments
    )
    return MotionSchedule(
        tuple(int(s["qubit"]) for s in segments), tau0, pulses, DetectionConfig(axis, omega), swap
    )
