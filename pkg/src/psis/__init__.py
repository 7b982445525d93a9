"""Prescribed-instant stabilization toolkit.

Synthesizes state-feedback controllers that drive an integrator chain to a
setpoint at an exact, pre-chosen instant, simulates the closed loop through
the terminal singularity of the control law, and audits the result against
the settling and decay certificates that justify the design.
"""

from .errors import (
    AuditError,
    ConfigurationError,
    DivergenceError,
    DomainError,
    EvaluationError,
    IntegrationError,
    PsisError,
    SingularityError,
    StiffnessError,
    StructureError,
)
from .rcdf import (
    RcdfKind,
    RcdfSpec,
    StageEtaViolation,
    closed_form,
    psi,
    validate_stage_etas,
    zeta,
)
from .simulation import (
    IntegratorChain,
    Pendulum,
    PlantModel,
    Sample,
    SimConfig,
    Trajectory,
    pendulum_energy,
    plant_order,
    simulate,
    simulate_pendulum_raw,
    simulate_tau,
    torque_map,
)
from .synthesis import (
    Controller,
    SynthesisConfig,
    describe,
    error_coordinates,
    eval_control,
    synthesize,
    zero_setpoint_twin,
)
from .verification import (
    ControlVanishing,
    JensenResult,
    LyapunovAudit,
    SettlingEvidence,
    SweepReport,
    SweepRow,
    control_vanishing_check,
    jensen_check,
    jensen_h_names,
    lyapunov_audit,
    lyapunov_bounds,
    run_tolerance,
    settling_instant,
    sweep_initial_conditions,
)

__all__ = [
    "AuditError",
    "ConfigurationError",
    "DivergenceError",
    "DomainError",
    "EvaluationError",
    "IntegrationError",
    "PsisError",
    "SingularityError",
    "StiffnessError",
    "StructureError",
    "RcdfKind",
    "RcdfSpec",
    "StageEtaViolation",
    "closed_form",
    "psi",
    "validate_stage_etas",
    "zeta",
    "IntegratorChain",
    "Pendulum",
    "PlantModel",
    "Sample",
    "SimConfig",
    "Trajectory",
    "pendulum_energy",
    "plant_order",
    "simulate",
    "simulate_pendulum_raw",
    "simulate_tau",
    "torque_map",
    "Controller",
    "SynthesisConfig",
    "describe",
    "error_coordinates",
    "eval_control",
    "synthesize",
    "zero_setpoint_twin",
    "ControlVanishing",
    "JensenResult",
    "LyapunovAudit",
    "SettlingEvidence",
    "SweepReport",
    "SweepRow",
    "control_vanishing_check",
    "jensen_check",
    "jensen_h_names",
    "lyapunov_audit",
    "lyapunov_bounds",
    "run_tolerance",
    "settling_instant",
    "sweep_initial_conditions",
]

__version__ = "0.1.0"
