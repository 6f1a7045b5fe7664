"""Trapped-ion sideband dynamics on two motional modes and M00N-state protocols."""
from .coupling import (
    BranchPair,
    CouplingParams,
    commensurability_scan,
    coupling_f,
    laguerre_assoc,
    pi_pulse_time,
    rabi_frequency,
)
from .dynamics import (
    PulseSpec,
    evolve,
    evolve_pre_rwa,
    excited_probability,
    h_effective,
    h_quadratic,
    resonance_scan,
    u_analytic,
    u_numeric,
)
from .errors import (
    ConfigError,
    DegenerateCouplingError,
    InvalidArgumentError,
    MoonsimError,
    StiffnessError,
)
from .fock import HybridState, TruncatedMode, leakage
from .protocol import Protocol, moon_protocol, moon_target, run

__version__ = "0.1.0"

__all__ = [
    "BranchPair",
    "ConfigError",
    "CouplingParams",
    "DegenerateCouplingError",
    "HybridState",
    "InvalidArgumentError",
    "MoonsimError",
    "Protocol",
    "PulseSpec",
    "StiffnessError",
    "TruncatedMode",
    "commensurability_scan",
    "coupling_f",
    "evolve",
    "evolve_pre_rwa",
    "excited_probability",
    "h_effective",
    "h_quadratic",
    "laguerre_assoc",
    "leakage",
    "moon_protocol",
    "moon_target",
    "pi_pulse_time",
    "rabi_frequency",
    "resonance_scan",
    "run",
    "u_analytic",
    "u_numeric",
]
