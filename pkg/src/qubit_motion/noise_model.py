"""Correlated Gaussian dephasing noise on a chain of qubits.

Each qubit ``i`` sees a frequency offset ``xi_i(t)`` (angular frequency,
rad/us).  Only spectrum-integrated quantities matter for the Ramsey decay,
so the noise is summarised by a covariance matrix of quasi-static offsets:

    c_ii = 2 / tau_i**2
    c_ij = r_ij * (1/tau_i**2 + 1/tau_j**2)

where ``tau_i`` is the Gaussian dephasing time of qubit ``i`` and ``r_ij``
the pairwise noise correlation coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "PSD_TOLERANCE",
    "QubitSpec",
    "CorrelationMatrix",
    "CovarianceMatrix",
    "NoiseProcess",
    "NotPositiveSemidefiniteError",
    "IndeterminateCorrelationError",
    "integrated_power",
    "tau_from_power",
    "assemble_covariance",
    "predict_tau_L",
    "validate_psd",
    "nearest_psd",
    "covariance_factor",
    "sample_quasi_static",
    "sample_ou_trajectories",
]

#: relative eigenvalue tolerance used when deciding positive semidefiniteness
PSD_TOLERANCE = 1e-10


class NotPositiveSemidefiniteError(ValueError):
    """Raised when a covariance used for sampling has a negative eigenvalue."""

    def __init__(self, min_eigenvalue: float):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"covariance is not positive semidefinite (min eigenvalue "
            f"{self.min_eigenvalue:.6g}); project it with nearest_psd() first"
        )


class IndeterminateCorrelationError(ValueError):
    """Raised when a prediction needs a correlation entry that is not known."""


@dataclass(frozen=True)
class QubitSpec:
    """Per-qubit parameters.

    ``t1`` and ``tau`` are in microseconds; ``tau`` is the constant of the
    single-qubit Gaussian envelope ``exp(-t**2 / tau**2)``.  ``frequency``
    (GHz) is carried along as metadata only.
    """

    label: str
    t1: float
    tau: float
    frequency: float | None = None

    def __post_init__(self):
        if not self.t1 > 0:
            raise ValueError(f"{self.label}: t1 must be > 0, got {self.t1}")
        if not self.tau > 0:
            raise ValueError(f"{self.label}: tau must be > 0, got {self.tau}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=a.dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric matrix of correlation coefficients with per-entry
    uncertainty and a determinacy flag.

    Indeterminate entries may hold ``nan``.
    """

    entries: np.ndarray
    sigma: np.ndarray | None = None
    determinate: np.ndarray | None = None

    def __post_init__(self):
        r = np.asarray(self.entries, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError(f"correlation matrix must be square, got shape {r.shape}")
        n = r.shape[0]
        sigma = np.zeros((n, n)) if self.sigma is None else np.asarray(self.sigma, dtype=float)
        det = (
            np.ones((n, n), dtype=bool)
            if self.determinate is None
            else np.asarray(self.determinate, dtype=bool)
        )
        if sigma.shape != (n, n) or det.shape != (n, n):
            raise ValueError("sigma/determinate must match the entries shape")
        both = np.isfinite(r) & np.isfinite(r.T)
        if not np.allclose(r[both], r.T[both], rtol=0, atol=1e-12):
            raise ValueError("correlation matrix is not symmetric")
        if not np.array_equal(det, det.T):
            raise ValueError("determinacy flags are not symmetric")
        if np.any(sigma < 0):
            raise ValueError("uncertainties must be non-negative")
        diag = np.diag(r)
        if not np.allclose(diag, 1.0, rtol=0, atol=1e-12):
            raise ValueError("correlation matrix must have a unit diagonal")
        sigma = sigma.copy()
        det = det.copy()
        np.fill_diagonal(sigma, 0.0)
        np.fill_diagonal(det, True)
        object.__setattr__(self, "entries", _frozen(r))
        object.__setattr__(self, "sigma", _frozen(sigma))
        object.__setattr__(self, "determinate", _frozen(det))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, n: int) -> "CorrelationMatrix":
        return cls(np.eye(n))

    @classmethod
    def from_pairs(cls, n: int, pairs: dict, sigma: dict | None = None) -> "CorrelationMatrix":
        """Build from ``{(i, j): r}`` with 0-based indices; unlisted pairs are 0."""
        r = np.eye(n)
        s = np.zeros((n, n))
        for (i, j), v in pairs.items():
            r[i, j] = r[j, i] = v
        for (i, j), v in (sigma or {}).items():
            s[i, j] = s[j, i] = v
        return cls(r, s)

    def restrict(self, indices: Sequence[int]) -> "CorrelationMatrix":
        idx = np.asarray(indices, dtype=int)
        sub = np.ix_(idx, idx)
        return CorrelationMatrix(self.entries[sub], self.sigma[sub], self.determinate[sub])


@dataclass(frozen=True)
class CovarianceMatrix:
    """Covariance of the quasi-static angular-frequency offsets, (rad/us)**2."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"covariance must be square, got shape {c.shape}")
        if not np.allclose(c, c.T, rtol=1e-12, atol=1e-12):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "c", _frozen(c))

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class NoiseProcess:
    """Noise statistics: quasi-static (one draw per shot) or Ornstein-Uhlenbeck
    with a common exponential autocorrelation time (us)."""

    covariance: CovarianceMatrix
    kind: str = "quasi_static"
    correlation_time: float | None = None

    def __post_init__(self):
        if self.kind not in ("quasi_static", "ornstein_uhlenbeck"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "ornstein_uhlenbeck":
            if self.correlation_time is None or not self.correlation_time > 0:
                raise ValueError("ornstein_uhlenbeck noise needs correlation_time > 0")


def integrated_power(tau: float) -> float:
    """Integrated noise power ``2 / tau**2`` of a qubit with dephasing time ``tau``."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return 2.0 / (tau * tau)


def tau_from_power(power: float) -> float:
    if not power > 0:
        raise ValueError(f"power must be positive, got {power}")
    return math.sqrt(2.0 / power)


def assemble_covariance(specs: Sequence[QubitSpec], corr: CorrelationMatrix) -> CovarianceMatrix:
    if corr.n != len(specs):
        raise ValueError(
            f"correlation matrix is {corr.n}x{corr.n} but {len(specs)} qubits were given"
        )
    inv2 = np.array([1.0 / s.tau**2 for s in specs])
    c = corr.entries * (inv2[:, None] + inv2[None, :])
    np.fill_diagonal(c, 2.0 * inv2)
    return CovarianceMatrix(c)


def predict_tau_L(specs: Sequence[QubitSpec], corr: CorrelationMatrix, path: Sequence[int]) -> float:
    """Decoherence time of the logic qubit moved along ``path`` with equal
    residence times.

    Returns ``math.inf`` when the effective noise power is not positive
    (strongly anticorrelated qubits: the motion fully cancels dephasing).
    """
    path = list(path)
    if not path:
        raise ValueError("path must contain at least one qubit")
    if len(set(path)) != len(path):
        raise ValueError(f"path has repeated qubits: {path}")
    n = len(path)
    if n == 1:
        return float(specs[path[0]].tau)
    inv2 = [1.0 / specs[i].tau ** 2 for i in path]
    denom = math.fsum(inv2)
    terms = []
    for a in range(n):
        for b in range(a + 1, n):
            i, j = path[a], path[b]
            if not corr.determinate[i, j] or not np.isfinite(corr.entries[i, j]):
                raise IndeterminateCorrelationError(
                    f"correlation between qubits {i} and {j} is indeterminate"
                )
            terms.append(corr.entries[i, j] * (inv2[a] + inv2[b]))
    denom = math.fsum([denom, *terms])
    if denom <= 0.0:
        return math.inf
    return math.sqrt(n * n / denom)


def validate_psd(cov: CovarianceMatrix | np.ndarray, tolerance: float = PSD_TOLERANCE) -> tuple[bool, float]:
    """Return ``(psd, min_eigenvalue)``; psd iff the smallest eigenvalue is at
    least ``-tolerance`` times the largest one."""
    c = cov.c if isinstance(cov, CovarianceMatrix) else np.asarray(cov, dtype=float)
    eig = np.linalg.eigvalsh(c)
    lo, hi = float(eig[0]), float(eig[-1])
    return lo >= -tolerance * max(abs(hi), 0.0), lo


def nearest_psd(cov: CovarianceMatrix) -> CovarianceMatrix:
    """Frobenius-nearest PSD matrix by clipping negative eigenvalues to zero."""
    psd, _ = validate_psd(cov)
    if psd:
        return cov
    w, v = np.linalg.eigh(cov.c)
    c = (v * np.clip(w, 0.0, None)) @ v.T
    return CovarianceMatrix(0.5 * (c + c.T))


def covariance_factor(cov: CovarianceMatrix) -> np.ndarray:
    """Matrix ``L`` with ``L @ L.T == cov``; works for singular PSD input."""
    psd, lo = validate_psd(cov)
    if not psd:
        raise NotPositiveSemidefiniteError(lo)
    # eigh instead of cholesky: rank-deficient covariances (r = +-1) are legal
    w, v = np.linalg.eigh(cov.c)
    return v * np.sqrt(np.clip(w, 0.0, None))


def sample_quasi_static(cov: CovarianceMatrix, rng_seed, size: int | None = None) -> np.ndarray:
    """Draw zero-mean Gaussian offsets with covariance ``cov``.

    Returns shape ``(n,)`` or ``(size, n)``.
    """
    factor = covariance_factor(cov)
    rng = np.random.default_rng(rng_seed)
    shape = (cov.n,) if size is None else (size, cov.n)
    z = rng.standard_normal(shape)
    return z @ factor.T


def sample_ou_trajectories(
    process: NoiseProcess, dt: float, duration: float, rng_seed, paths: int = 1
) -> np.ndarray:
    """Stationary vector Ornstein-Uhlenbeck noise on the grid ``k*dt``.

    Uses the exact discretisation ``x[k+1] = a x[k] + sqrt(1-a**2) L z`` with
    ``a = exp(-dt/correlation_time)``, so the stationary covariance equals
    ``process.covariance`` and the lag-``s`` covariance is ``C exp(-s/tc)``.
    The first sample is drawn from the stationary law.

    Returns an array of shape ``(paths, n, steps)`` with
    ``steps = ceil(duration/dt) + 1``.
    """
    if process.kind != "ornstein_uhlenbeck":
        raise ValueError("sample_ou_trajectories needs an ornstein_uhlenbeck process")
    tc = process.correlation_time
    if not 0 < dt < tc / 10:
        raise ValueError(f"dt={dt} too coarse: need 0 < dt < correlation_time/10 = {tc / 10}")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    factor = covariance_factor(process.covariance)
    n = process.covariance.n
    steps = int(math.ceil(duration / dt - 1e-12)) + 1
    a = math.exp(-dt / tc)
    b = math.sqrt(-math.expm1(-2.0 * dt / tc))
    rng = np.random.default_rng(rng_seed)
    z = rng.standard_normal((steps, paths, n)) @ factor.T
    out = np.empty((steps, paths, n))
    out[0] = z[0]
    for k in range(1, steps):
        out[k] = a * out[k - 1] + b * z[k]
    return np.ascontiguousarray(out.transpose(1, 2, 0))
