"""heraldsqueeze — heralded measurement-and-feedforward squeezing gate.

Analytic Gaussian engine, probabilistic heralding filter, Monte Carlo
cross-validation, truncated Fock-space lab and a CLI experiment harness.

The top-level namespace re-exports the working API of every subsystem;
the submodules (`gaussian`, `filters`, `gate`, `montecarlo`, `fock`,
`cli`) remain importable directly for the long tail of helpers.
"""

from .exceptions import (
    AcceptanceStarvationError,
    ConfigError,
    FilterBreakdownError,
    HeraldSqueezeError,
    OperationalRegimeError,
    PhysicalityError,
    QuadratureError,
    TruncationError,
    UnityGainError,
)
from .gaussian import (
    AncillaSpec,
    GaussianState,
    SymplecticOp,
    apply,
    beamsplitter,
    coherent,
    condition_on_heterodyne,
    condition_on_homodyne,
    db_to_r,
    db_to_variance,
    displace,
    fidelity,
    loss_channel,
    r_to_db,
    rotation,
    squeezed_vacuum,
    squeezer,
    tensor,
    vacuum,
    variance_to_db,
)
from .filters import (
    FilterSpec,
    acceptance_probability,
    filtered_moments,
    minimal_coverage_cutoff,
    recommended_cutoff,
    reshape_factor,
    success_probability,
)
from .gate import (
    CutoffRule,
    GateConfig,
    GateResult,
    SweepPoint,
    conventional_output,
    deterministic_limit,
    heralded_output,
    outcome_moments,
    solve_gains_from_gamma,
    solved_config,
    target_state,
    tradeoff_curve,
    unity_gain_solve,
)
from .montecarlo import (
    CalibrationResult,
    EnsembleStats,
    RunConfig,
    acceptance_rate,
    calibrate_gains,
    estimate_fidelity,
    read_trajectories,
    simulate,
    wilson_interval,
    write_trajectories,
)
from .fock import (
    FockGateResult,
    FockState,
    calibrate_gains_fock,
    fock_cat,
    fock_coherent,
    fock_single_photon,
    fock_squeezed_vacuum,
    heralded_gate_fock,
    heterodyne_project,
    outcome_law,
)

__version__ = "0.1.0"

__all__ = [
    # errors
    "HeraldSqueezeError",
    "ConfigError",
    "PhysicalityError",
    "FilterBreakdownError",
    "UnityGainError",
    "OperationalRegimeError",
    "AcceptanceStarvationError",
    "QuadratureError",
    "TruncationError",
    # phase-space toolkit
    "GaussianState",
    "SymplecticOp",
    "AncillaSpec",
    "vacuum",
    "coherent",
    "squeezed_vacuum",
    "db_to_variance",
    "variance_to_db",
    "db_to_r",
    "r_to_db",
    "beamsplitter",
    "squeezer",
    "rotation",
    "tensor",
    "apply",
    "loss_channel",
    "displace",
    "condition_on_homodyne",
    "condition_on_heterodyne",
    "fidelity",
    # heralding filter
    "FilterSpec",
    "acceptance_probability",
    "filtered_moments",
    "success_probability",
    "recommended_cutoff",
    "minimal_coverage_cutoff",
    "reshape_factor",
    # gate
    "GateConfig",
    "GateResult",
    "SweepPoint",
    "CutoffRule",
    "target_state",
    "unity_gain_solve",
    "solve_gains_from_gamma",
    "conventional_output",
    "heralded_output",
    "deterministic_limit",
    "tradeoff_curve",
    "solved_config",
    "outcome_moments",
    # Monte Carlo
    "RunConfig",
    "EnsembleStats",
    "CalibrationResult",
    "simulate",
    "estimate_fidelity",
    "acceptance_rate",
    "wilson_interval",
    "calibrate_gains",
    "write_trajectories",
    "read_trajectories",
    # Fock-space lab
    "FockState",
    "FockGateResult",
    "fock_coherent",
    "fock_single_photon",
    "fock_cat",
    "fock_squeezed_vacuum",
    "heterodyne_project",
    "heralded_gate_fock",
    "outcome_law",
    "calibrate_gains_fock",
    "__version__",
]
