"""Correlated dephasing on qubit chains: qubit-motion / CPMG fringe
simulation and pairwise noise-correlation reconstruction."""

from .noise_model import (
    CorrelationMatrix,
    CovarianceMatrix,
    IndeterminateCorrelationError,
    NoiseProcess,
    NotPositiveSemidefiniteError,
    QubitSpec,
    assemble_covariance,
    integrated_power,
    nearest_psd,
    predict_tau_L,
    sample_ou_trajectories,
    sample_quasi_static,
    validate_psd,
)
from .schedule import (
    DetectionConfig,
    MotionSchedule,
    build_motion,
    host_indicator,
    insert_cpmg,
    phase_weights,
)
from .fringe_sim import FringeData, analytic_envelope, apply_shot_noise, simulate_fringe
from .estimator import (
    FitResult,
    ReconstructionReport,
    bootstrap_sigma,
    fit_fringe,
    reconstruct_matrix,
    solve_correlation,
)

__version__ = "0.1.0"
