"""Serialisation and text rendering of reconstruction reports."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .estimator import ReconstructionReport
from .noise_model import CorrelationMatrix

REPORT_VERSION = 1


class ReportSchemaError(ValueError):
    pass


def _num(x):
    return None if x is None or not math.isfinite(x) else float(x)


def report_to_dict(report: ReconstructionReport) -> dict:
    corr = report.corr
    n = corr.n
    matrix = [
        [
            {
                "r": _num(corr.entries[i, j]),
                "sigma": _num(corr.sigma[i, j]),
                "determinate": bool(corr.determinate[i, j]),
            }
            for j in range(n)
        ]
        for i in range(n)
    ]
    table = [
        {"window": list(w), "tau_L": _num(v[0]), "sigma": _num(v[1])}
        for w, v in sorted(report.tau_L_table.items(), key=lambda kv: (len(kv[0]), kv[0]))
    ]
    return {
        "version": REPORT_VERSION,
        "labels": list(report.labels),
        "matrix": matrix,
        "tau_L_table": table,
        "provenance": report.provenance,
    }


def report_from_dict(doc: dict) -> ReconstructionReport:
    if not isinstance(doc, dict) or doc.get("version") != REPORT_VERSION:
        raise ReportSchemaError(f"expected a version {REPORT_VERSION} report document")
    try:
        matrix = doc["matrix"]
        n = len(matrix)
        r = np.eye(n)
        s = np.zeros((n, n))
        d = np.ones((n, n), dtype=bool)
        for i, row in enumerate(matrix):
            if len(row) != n:
                raise ReportSchemaError(f"matrix row {i} has {len(row)} cells, expected {n}")
            for j, cell in enumerate(row):
                r[i, j] = np.nan if cell["r"] is None else cell["r"]
                s[i, j] = 0.0 if cell["sigma"] is None else cell["sigma"]
                d[i, j] = bool(cell["determinate"])
        table = {
            tuple(item["window"]): (
                np.nan if item["tau_L"] is None else item["tau_L"],
                np.nan if item["sigma"] is None else item["sigma"],
            )
            for item in doc["tau_L_table"]
        }
        labels = tuple(doc.get("labels") or (f"Q{i + 1}" for i in range(n)))
        return ReconstructionReport(CorrelationMatrix(r, s, d), table, list(doc.get("provenance", [])), labels)
    except (KeyError, TypeError) as exc:
        raise ReportSchemaError(f"malformed report document: {exc!r}") from exc


def write_report(report: ReconstructionReport, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n")
    return path


def read_report(path) -> ReconstructionReport:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ReportSchemaError(f"{path}: not valid JSON ({exc})") from exc
    return report_from_dict(doc)


def format_estimate(r: float, sigma: float, determinate: bool) -> str:
    """``0.11 (0.02)``, or ``--`` for an indeterminate entry."""
    if not determinate or not math.isfinite(r):
        return "--"
    text = f"{r:.2f}"
    if text == "-0.00":
        text = "0.00"
    return f"{text} ({sigma:.2f})"


_COLUMNS = ("qubit motion", "tau_L (us)", "correlation", "r_ij (±)")


def render_table(report: ReconstructionReport) -> str:
    """Text table with one row per motion window of two or more qubits."""
    labels = list(report.labels) or [f"Q{i + 1}" for i in range(report.corr.n)]
    rows = []
    for window, (tau, _) in sorted(report.tau_L_table.items(), key=lambda kv: (len(kv[0]), kv[0])):
        if len(window) < 2:
            continue
        a, b = window[0], window[-1]
        rows.append(
            (
                "→".join(labels[q] for q in window),
                f"{tau:.2f}" if math.isfinite(tau) else "--",
                f"r_{{{a + 1},{b + 1}}}",
                format_estimate(
                    report.corr.entries[a, b], report.corr.sigma[a, b], bool(report.corr.determinate[a, b])
                ),
            )
        )
    widths = [max(len(c), *(len(r[k]) for r in rows)) if rows else len(c) for k, c in enumerate(_COLUMNS)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(_COLUMNS), "-" * len(line(_COLUMNS))]
    out.extend(line(r) for r in rows)
    return "\n".join(out) + "\n"
