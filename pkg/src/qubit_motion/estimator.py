"""Fringe fitting and correlation-matrix reconstruction.

Windows of adjacent qubits are processed by increasing length; the fitted
decay time of window ``[a..b]`` fixes the one correlation ``r_ab`` that no
shorter window constrains.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.optimize import least_squares

from .fringe_sim import FringeData
from .noise_model import CorrelationMatrix, QubitSpec

__all__ = [
    "TAU_BOUNDS",
    "NONPHYSICAL_LIMIT",
    "FitResult",
    "CorrelationEstimate",
    "ReconstructionReport",
    "fit_fringe",
    "fringe_model",
    "solve_correlation",
    "reconstruct_matrix",
    "bootstrap_sigma",
    "contiguous_windows",
]

log = logging.getLogger(__name__)

TAU_BOUNDS = (1e-9, 1e3)
#: |r| above this is flagged non-physical; between 1 and this only warned about
NONPHYSICAL_LIMIT = 1.2

_MIN_POINTS = {"osc": 20, "env": 8}
_MODES = {"osc": "osc", "env": "env", "rotating_n": "osc", "fixed_x": "env"}


@dataclass(frozen=True)
class FitResult:
    tau_L: float
    omega_r: float
    phi: float
    amplitude: float
    offset: float
    sigma_tau_L: float
    residual_rms: float
    converged: bool
    message: str = ""

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class CorrelationEstimate(NamedTuple):
    r: float
    sigma: float
    determinate: bool
    reason: str = ""


def _mode(mode: str) -> str:
    try:
        return _MODES[mode]
    except KeyError:
        raise ValueError(f"unknown fit mode {mode!r}; use 'osc' or 'env'") from None


def fringe_model(params, t, t1_avg: float, mode: str = "osc") -> np.ndarray:
    """``A exp(-t/2T1 - t^2/tau^2) cos(omega t + phi) + B`` (osc) or the same
    without the cosine (env).  ``params`` is ``(A, tau, omega, phi, B)`` or
    ``(A, tau, B)``."""
    t = np.asarray(t, dtype=float)
    if _mode(mode) == "osc":
        A, tau, omega, phi, B = params
        return A * np.exp(-t / (2 * t1_avg) - (t / tau) ** 2) * np.cos(omega * t + phi) + B
    A, tau, B = params
    return A * np.exp(-t / (2 * t1_avg) - (t / tau) ** 2) + B


def _jacobian(params, t, t1_avg, mode):
    if mode == "osc":
        A, tau, omega, phi, B = params
        g = np.exp(-t / (2 * t1_avg) - (t / tau) ** 2)
        c, s = np.cos(omega * t + phi), np.sin(omega * t + phi)
        return np.column_stack(
            [g * c, A * g * c * 2 * t**2 / tau**3, -A * g * s * t, -A * g * s, np.ones_like(t)]
        )
    A, tau, B = params
    g = np.exp(-t / (2 * t1_avg) - (t / tau) ** 2)
    return np.column_stack([g, A * g * 2 * t**2 / tau**3, np.ones_like(t)])


def _envelope_seed(t, dev, amp, t1_avg):
    """Time at which the upper envelope of ``|dev|`` (T1 factor removed) falls
    to ``amp/e``."""
    rect = np.abs(dev) * np.exp(t / (2 * t1_avg))
    upper = np.maximum.accumulate(rect[::-1])[::-1]
    below = np.nonzero(upper < amp / math.e)[0]
    tau = t[below[0]] if below.size else t[-1]
    return float(np.clip(tau, max(t[1] - t[0], 1e-6), 0.9 * TAU_BOUNDS[1]))


def _dft_peak(t, y):
    span = t[-1] - t[0]
    dt = span / (len(t) - 1)
    omegas = np.linspace(0.0, math.pi / dt, 16 * len(t))[1:]
    X = np.exp(-1j * np.outer(omegas, t)) @ y
    k = int(np.argmax(np.abs(X)))
    return omegas[k], X[k]


def _initial_guess(t, y, t1_avg, mode):
    if mode == "osc":
        B0 = float(np.mean(y))
        dev = y - B0
        omega0, Xk = _dft_peak(t, dev)
        phi0 = float(np.angle(Xk))
        A0 = float(np.max(np.abs(dev)))
        tau0 = _envelope_seed(t, dev, A0, t1_avg)
        return np.array([A0, tau0, omega0, phi0, B0])
    B0 = float(y[-1])
    dev = y - B0
    A0 = float(dev[0]) if dev[0] != 0 else float(np.max(np.abs(dev)))
    tau0 = _envelope_seed(t, dev, abs(A0), t1_avg)
    return np.array([A0, tau0, B0])


def fit_fringe(data: FringeData, t1_avg: float, mode: str = "osc") -> FitResult:
    """Nonlinear least-squares fit of a Ramsey fringe with T1_ave held fixed.

    The oscillation frequency and phase are seeded from the DFT peak of the
    mean-subtracted data and the decay time from the 1/e point of the
    rectified upper envelope.  ``sigma_tau_L`` comes from the parameter
    covariance at the optimum.
    """
    mode = _mode(mode)
    if not t1_avg > 0:
        raise ValueError("t1_avg must be positive")
    t, y = data.times, data.populations
    if len(t) < _MIN_POINTS[mode]:
        raise ValueError(f"{mode} fits need at least {_MIN_POINTS[mode]} points, got {len(t)}")
    nan = float("nan")
    if np.ptp(y) < 1e-12:
        return FitResult(nan, nan, nan, 0.0, float(y[0]), nan, 0.0, False, "degenerate data: no signal")

    x0 = _initial_guess(t, y, t1_avg, mode)
    lo = np.full(len(x0), -np.inf)
    hi = np.full(len(x0), np.inf)
    lo[1], hi[1] = TAU_BOUNDS
    if mode == "osc":
        lo[2] = 0.0
    res = least_squares(
        lambda p: fringe_model(p, t, t1_avg, mode) - y,
        x0,
        jac=lambda p: _jacobian(p, t, t1_avg, mode),
        bounds=(lo, hi),
        method="trf",
        xtol=1e-10,
        ftol=1e-12,
        gtol=1e-12,
        max_nfev=200,
    )
    p = res.x.copy()
    if mode == "osc":
        A, tau, omega, phi, B = p
        if A < 0:
            A, phi = -A, phi + math.pi
        phi = (phi + math.pi) % (2 * math.pi) - math.pi
    else:
        A, tau, B = p
        omega, phi = 0.0, 0.0

    dof = len(t) - len(p)
    ssr = float(res.fun @ res.fun)
    J = res.jac
    try:
        cov = np.linalg.inv(J.T @ J) * (ssr / dof if dof > 0 else nan)
        sigma_tau = float(math.sqrt(max(cov[1, 1], 0.0)))
    except np.linalg.LinAlgError:
        sigma_tau = nan

    converged, message = bool(res.status > 0), res.message
    if not (TAU_BOUNDS[0] * 1.0001 < tau < TAU_BOUNDS[1] * 0.9999):
        converged, message = False, f"tau_L at bound ({tau:.6g} us)"
    elif not math.isfinite(sigma_tau):
        converged, message = False, "singular parameter covariance"
    return FitResult(
        float(tau), float(omega), float(phi), float(A), float(B),
        sigma_tau, math.sqrt(ssr / len(t)), converged, message,
    )


def bootstrap_sigma(data: FringeData, t1_avg: float, mode: str, resamples: int = 200,
                    rng_seed: int = 0, min_converged: float = 0.8) -> float:
    """Parametric-bootstrap standard deviation of the fitted decay time.

    Binomial counts are redrawn at the fitted model's probabilities and
    refitted.  Exact data (``shots == 0``) has zero spread.
    """
    if resamples < 100:
        raise ValueError("use at least 100 bootstrap resamples")
    base = fit_fringe(data, t1_avg, mode)
    if not base.converged:
        raise RuntimeError(f"cannot bootstrap a failed fit: {base.message}")
    if data.shots == 0:
        return 0.0
    m = _mode(mode)
    params = (
        (base.amplitude, base.tau_L, base.omega_r, base.phi, base.offset)
        if m == "osc"
        else (base.amplitude, base.tau_L, base.offset)
    )
    p = np.clip(fringe_model(params, data.times, t1_avg, m), 0.0, 1.0)
    taus = []
    for b in range(resamples):
        rng = np.random.default_rng(np.random.SeedSequence(rng_seed, spawn_key=(b,)))
        y = rng.binomial(data.shots, p) / data.shots
        fit = fit_fringe(FringeData(data.times, y, data.shots), t1_avg, m)
        if fit.converged:
            taus.append(fit.tau_L)
    if len(taus) < min_converged * resamples:
        raise RuntimeError(f"only {len(taus)}/{resamples} bootstrap refits converged")
    return float(np.std(taus, ddof=1))


class _Inversion(NamedTuple):
    r: float
    d_tau_L: float
    d_tau: np.ndarray
    d_known: dict
    indeterminate: list


def _invert(tau_L, taus, known: CorrelationMatrix, a: int, b: int) -> _Inversion:
    """Unknown ``r_ab`` and its partial derivatives with respect to ``tau_L``,
    each qubit's tau and each consumed entry ``r_ij``."""
    n = len(taus)
    u = taus**-2.0
    numer = n * n / tau_L**2 - math.fsum(u)
    dnumer_du = -np.ones(n)
    d_known, indeterminate = {}, []
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) == (a, b):
                continue
            r_ij = known.entries[i, j]
            if not known.determinate[i, j]:
                indeterminate.append((i, j))
            numer -= r_ij * (u[i] + u[j])
            dnumer_du[i] -= r_ij
            dnumer_du[j] -= r_ij
            d_known[(i, j)] = u[i] + u[j]
    denom = u[a] + u[b]
    r = numer / denom
    dr_du = dnumer_du / denom
    dr_du[[a, b]] -= r / denom
    d_tau_L = -2.0 * n * n / tau_L**3 / denom if math.isfinite(tau_L) else 0.0
    d_known = {k: -v / denom for k, v in d_known.items()}
    return _Inversion(float(r), d_tau_L, dr_du * (-2.0 * taus**-3.0), d_known, indeterminate)


def solve_correlation(
    tau_L: float,
    sigma_tau_L: float,
    specs: Sequence[QubitSpec],
    known: CorrelationMatrix,
    target_pair: tuple[int, int] | None = None,
    tau_sigmas: Sequence[float] | None = None,
) -> CorrelationEstimate:
    """Invert the motion decay formula for the single unknown correlation.

    ``specs`` and ``known`` are restricted to the path (in path order);
    ``target_pair`` holds positions within it (default: the endpoints).  The
    uncertainty is first-order propagation from ``sigma_tau_L``, the known
    entries' sigmas and ``tau_sigmas``, treating them as independent.
    """
    n = len(specs)
    if n < 2 or known.n != n:
        raise ValueError("need at least two qubits and a matching known matrix")
    a, b = target_pair if target_pair is not None else (0, n - 1)
    if a == b:
        raise ValueError("target pair must name two distinct qubits")
    a, b = min(a, b), max(a, b)
    if not tau_L > 0:
        return CorrelationEstimate(float("nan"), float("nan"), False, "non-positive tau_L")
    tau_sigmas = np.zeros(n) if tau_sigmas is None else np.asarray(tau_sigmas, dtype=float)
    inv = _invert(tau_L, np.array([s.tau for s in specs]), known, a, b)
    var = (
        (inv.d_tau_L * sigma_tau_L) ** 2
        + sum((g * known.sigma[k]) ** 2 for k, g in inv.d_known.items())
        + float(np.sum((inv.d_tau * tau_sigmas) ** 2))
    )
    sigma = math.sqrt(var) if math.isfinite(var) else float("nan")
    if inv.indeterminate or not math.isfinite(inv.r):
        reason = "depends on indeterminate " + ", ".join(f"r[{i},{j}]" for i, j in inv.indeterminate)
        return CorrelationEstimate(inv.r, sigma, False, reason)
    return CorrelationEstimate(inv.r, sigma, True, "")


def contiguous_windows(n: int) -> list[tuple[int, ...]]:
    """All windows of adjacent qubits, shortest first: n(n+1)/2 of them."""
    return [tuple(range(s, s + L)) for L in range(1, n + 1) for s in range(n - L + 1)]


@dataclass(frozen=True)
class ReconstructionReport:
    corr: CorrelationMatrix
    tau_L_table: dict
    provenance: list = field(default_factory=list)
    labels: tuple = ()

    @property
    def consumed_fits(self) -> int:
        return len(self.tau_L_table)


def _check_window(key, n) -> tuple[int, ...]:
    window = tuple(int(q) for q in key)
    if not window:
        raise ValueError("empty window key")
    if any(b - a != 1 for a, b in zip(window, window[1:])):
        raise ValueError(f"window {window} is not a contiguous run of adjacent qubits")
    if window[0] < 0 or window[-1] >= n:
        raise ValueError(f"window {window} refers to qubits outside 0..{n - 1}")
    return window


def reconstruct_matrix(fits: Mapping[Sequence[int], FitResult], specs: Sequence[QubitSpec]) -> ReconstructionReport:
    """Rebuild the full correlation matrix from windowed motion fits.

    Single-qubit windows give the per-qubit tau (falling back to
    ``specs[i].tau`` when missing).  An entry is indeterminate when its
    window is missing or failed, when it consumes an indeterminate entry,
    when ``sigma >= |r|``, or when ``|r| > NONPHYSICAL_LIMIT``.
    """
    n = len(specs)
    table = {_check_window(k, n): v for k, v in fits.items()}
    taus, tau_sig = [], []
    used: dict = {}
    provenance = []
    for i in range(n):
        fit = table.get((i,))
        if fit is not None and fit.converged:
            taus.append(fit.tau_L)
            tau_sig.append(fit.sigma_tau_L if math.isfinite(fit.sigma_tau_L) else 0.0)
            used[(i,)] = (fit.tau_L, fit.sigma_tau_L)
        else:
            taus.append(specs[i].tau)
            tau_sig.append(0.0)
            provenance.append({"window": [i], "note": "single-qubit fit missing; using device tau"})
    taus = np.array(taus)
    # every window's tau_L (and every single tau) is an independent input
    inputs = {w: k for k, w in enumerate(contiguous_windows(n))}
    input_sigma = np.zeros(len(inputs))
    for i in range(n):
        input_sigma[inputs[(i,)]] = tau_sig[i]
    grad = np.zeros((n, n, len(inputs)))

    r = np.eye(n)
    sig = np.zeros((n, n))
    det = np.ones((n, n), dtype=bool)
    for length in range(2, n + 1):
        for start in range(n - length + 1):
            window = tuple(range(start, start + length))
            a, b = window[0], window[-1]
            fit = table.get(window)
            step = {"pair": [a, b], "window": list(window)}
            if fit is None or not fit.converged:
                r[a, b] = r[b, a] = np.nan
                sig[a, b] = sig[b, a] = np.nan
                det[a, b] = det[b, a] = False
                step.update(determinate=False, reason="window missing" if fit is None else f"fit failed: {fit.message}")
                provenance.append(step)
                continue
            used[window] = (fit.tau_L, fit.sigma_tau_L)
            input_sigma[inputs[window]] = fit.sigma_tau_L if math.isfinite(fit.sigma_tau_L) else 0.0
            idx = list(window)
            known = CorrelationMatrix(
                np.nan_to_num(r[np.ix_(idx, idx)], nan=0.0),
                np.nan_to_num(sig[np.ix_(idx, idx)], nan=0.0),
                det[np.ix_(idx, idx)],
            )
            inv = _invert(fit.tau_L, taus[idx], known, 0, length - 1)
            # chain rule back to the independent fits: shorter-window entries
            # share inputs, so their errors are correlated
            g = np.zeros(len(inputs))
            g[inputs[window]] += inv.d_tau_L
            for k, q in enumerate(idx):
                g[inputs[(q,)]] += inv.d_tau[k]
            for (i, j), d in inv.d_known.items():
                g += d * grad[idx[i], idx[j]]
            grad[a, b] = grad[b, a] = g
            sigma = float(math.sqrt(np.sum((g * input_sigma) ** 2)))
            reason = ""
            if inv.indeterminate:
                reason = "depends on indeterminate " + ", ".join(f"r[{idx[i]},{idx[j]}]" for i, j in inv.indeterminate)
            est = CorrelationEstimate(inv.r, sigma, not inv.indeterminate and math.isfinite(inv.r), reason)
            inner = r[np.ix_(idx, idx)].copy()
            inner[0, -1] = inner[-1, 0] = 0.0
            value = est.r if np.isfinite(inner).all() else np.nan
            determinate, reason = est.determinate, est.reason
            if determinate:
                if not math.isfinite(est.r) or abs(est.r) > NONPHYSICAL_LIMIT:
                    determinate, reason = False, f"non-physical |r| = {abs(est.r):.3g}"
                elif est.sigma > 0 and est.sigma >= abs(est.r):
                    determinate, reason = False, "uncertainty as large as the estimate"
                elif abs(est.r) > 1.0:
                    log.warning("r[%d,%d] = %.3f exceeds 1 (kept, not clipped)", a, b, est.r)
                    reason = "|r| > 1 within rounding slack"
            r[a, b] = r[b, a] = value
            sig[a, b] = sig[b, a] = est.sigma
            det[a, b] = det[b, a] = determinate
            step.update(
                tau_L=fit.tau_L,
                sigma_tau_L=fit.sigma_tau_L,
                consumed=[[idx[i], idx[j]] for i in range(length) for j in range(i + 1, length) if (i, j) != (0, length - 1)],
                r=float(est.r),
                sigma=float(est.sigma),
                determinate=bool(determinate),
                reason=reason,
            )
            provenance.append(step)

    corr = CorrelationMatrix(r, np.nan_to_num(sig, nan=0.0), det)
    labels = tuple(s.label for s in specs)
    return ReconstructionReport(corr, used, provenance, labels)
