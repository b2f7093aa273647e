"""Non-Markovian dynamics of two atoms coupled through a lossy cavity mode."""

from .errors import NMCavityError
from .kernels import KernelId, f1, f2, kernel, spectral_density
from .measure import MeasureResult, NonMarkovianityRun, measure_d0_limit, nonmarkovianity
from .model import CavityParams, RegOrder, TimeGrid, make_grid, validate_params
from .quantum_map import ChannelSnapshot, ChoiMatrix, choi, fidelity, trace_norm
from .rates import RateTrajectory, critical_N, gamma_N, gamma_single, rates_from_amplitudes
from .scan import critical_distance, natom_scan, sweep_distance
from .volterra import AmplitudeTrajectory, solve, solve_pair

__version__ = "0.1.0"

__all__ = [
    "AmplitudeTrajectory", "CavityParams", "ChannelSnapshot", "ChoiMatrix", "KernelId",
    "MeasureResult", "NMCavityError", "NonMarkovianityRun", "RateTrajectory", "RegOrder",
    "TimeGrid", "choi", "critical_N", "critical_distance", "f1", "f2", "fidelity", "gamma_N",
    "gamma_single", "kernel", "make_grid", "measure_d0_limit", "natom_scan", "nonmarkovianity",
    "rates_from_amplitudes", "solve", "solve_pair", "spectral_density", "sweep_distance",
    "trace_norm", "validate_params",
]
