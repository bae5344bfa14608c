"""Driven one-dimensional Fermi-Hubbard chain with feedback-controlled pairing.

Exact-diagonalization toolkit for pumping, enhancing and suppressing
staggered pair (eta) correlations: bitmask determinant bases, sparse
operator assembly, Krylov/Chebyshev time propagation, time-local feedback
laws with activation policies, spectral and time-frequency analysis, and
deterministic parameter scans.
"""

from .basis import SectorBasis, build_sector_basis
from .operators import (
    EtaOperators,
    HamiltonianFamily,
    SparseOperator,
    build_drift_generator,
    build_eta_operators,
    build_hamiltonian_family,
    expectation,
    max_abs_eigenvalue,
)
from .evolution import (
    FieldSource,
    ManyBodyState,
    PropagatorConfig,
    Trajectory,
    evolve,
    ground_state,
    step,
)
from .pulses import (
    PulseSpec,
    PumpSource,
    DoublePumpSource,
    ConstantSource,
    ReplaySource,
    double_pulse_phi,
    gaussian_smooth,
    pump_phi,
    switch_off,
)
from .control import (
    ControlSpec,
    WindowedAverage,
    DerivativeThreshold,
    FixedTime,
    PostDelayPositiveIntegral,
    activation_check,
    asymptotic_phi,
    concatenated_source,
    lyapunov_phi,
    suppress_phi,
)
from .analysis import (
    SpectralDecomposition,
    Spectrogram,
    decompose,
    full_spectrum,
    stft,
    trajectory_summary,
)
from .scan import GridSpec, ScanGrid, SweepCurve, activation_sweep, run_grid

__version__ = "0.1.0"
