"""Kerr parametric oscillator laboratory.

Truncated-Fock spectra with Z_mu sector decomposition, the classical energy
surface and its stationary points, excited-state phase-transition detectors,
and Husimi-volume tunneling measures.
"""
__version__ = "0.1.0"

from .errors import (ConfigError, ConvergenceError, GradientError, KPOError, NumericalError, PhysicsError,
                     TopologyError, TrackingError, TruncationError, TruncationWarning,
                     UnboundedHamiltonianError)
from .params import ClassicalScaling, ControlParams, rescale, unscale
from .quantum import (EigenSolution, HamiltonianMatrix, SectorBlock, build_hamiltonian, diagonalize,
                      full_spectrum, sector_decompose)
from .classical import (CriticalPoint, PhasePoint, PhaseRegionLabel, classical_energy, classify_stationary,
                        find_critical_points, hamiltonian_flow, hessian, phase_region)
from .montecarlo import MCConfig
from .spectral import (CrossingEvent, DOSHistogram, EhrenfestReport, ESQPTMarker, ParameterSweep,
                       classical_dos, detect_crossings, detect_esqpt, ehrenfest_order, mean_level_spacing,
                       quantum_dos, sweep_spectrum)
from .dynamics import (CoherentSpec, QuantumState, RegionMask, TunnelingTrace, build_region_mask,
                       coherent_state, effective_tunneling, evolve, husimi, husimi_volume, initial_center)
from .kernels import BACKEND
