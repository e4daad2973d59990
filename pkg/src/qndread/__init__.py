"""Simulation and optimization toolkit for pulsed QND qubit readout through
a time-controlled transverse qubit-cavity coupling.

Layers, bottom up: hilbert (truncated state construction), models
(Hamiltonian builders and pulse shapes), integrate (exact propagation),
moments (Gaussian-closure surrogate), metrics (fidelity and disturbance),
search (constrained protocol optimization), scenarios/cli (reproducible
figure-class runs).
"""

__version__ = "0.1.0"

from .hilbert import CavityStateSpec, HilbertDims, TruncationError
from .integrate import IntegratorConfig, evolve_lindblad, evolve_schrodinger
from .metrics import measurement_report
from .models import Envelope, GaussianDrive, PulseSchedule, SustainDrive, SystemParams
from .moments import evolve_moments, initial_moments
from .search import SearchConfig, SearchContext, SearchSpace, optimize_protocol

__all__ = [
    "__version__",
    "CavityStateSpec",
    "HilbertDims",
    "TruncationError",
    "IntegratorConfig",
    "evolve_lindblad",
    "evolve_schrodinger",
    "measurement_report",
    "Envelope",
    "GaussianDrive",
    "PulseSchedule",
    "SustainDrive",
    "SystemParams",
    "evolve_moments",
    "initial_moments",
    "SearchConfig",
    "SearchContext",
    "SearchSpace",
    "optimize_protocol",
]
