"""
Quantum-classical hybrid transport of a single excitation on lattice
networks: master-equation and trajectory dynamics, dwelling times,
optimal noise scans, locked-state analysis and a two-tier driven model.
"""

__version__ = "0.1.0"

from .lattice import Lattice, build, neighbors
from .spectral import HamiltonianSpec, LockingReport, locked_states, locking_probability, perturb
from .dynamics import (
    InitialState,
    IntegrationError,
    ModelSpec,
    NetworkState,
    TimeSeries,
    kraus_step,
    limiting_population,
    propagate,
)
from .observables import (
    DivergenceError,
    dwelling_time,
    group_velocity,
    momentum_basis,
    momentum_map,
    momentum_populations,
    population,
)
from .optimizer import FitReport, ReinitResult, ScanResult, fit_scaling, reinit_estimate, scan_family, scan_optimal_p
from .trajectories import EnsembleResult, sample_ensemble, sample_trajectory
from .drive import DriveSpec, DrivenSeries, omega_band, propagate_driven

__all__ = [
    "Lattice", "build", "neighbors",
    "HamiltonianSpec", "LockingReport", "locked_states", "locking_probability", "perturb",
    "InitialState", "IntegrationError", "ModelSpec", "NetworkState", "TimeSeries",
    "kraus_step", "limiting_population", "propagate",
    "DivergenceError", "dwelling_time", "group_velocity", "momentum_basis", "momentum_map",
    "momentum_populations", "population",
    "FitReport", "ReinitResult", "ScanResult", "fit_scaling", "reinit_estimate", "scan_family",
    "scan_optimal_p",
    "EnsembleResult", "sample_ensemble", "sample_trajectory",
    "DriveSpec", "DrivenSeries", "omega_band", "propagate_driven",
]
