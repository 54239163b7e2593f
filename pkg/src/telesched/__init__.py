"""Fidelity of quantum teleportation at a node whose memories dephase while qubits wait."""
from telesched._backend import COMPILED
from telesched.errors import InvariantViolation
from telesched.laplace import Discipline, StabilityError, phase_conditioned_mean, solve_phases
from telesched.markov import DoubleQueueConfig, service_probability, stationary_distribution
from telesched.qmath import (
    PLUS,
    DephasingParams,
    FidelityCurve,
    PureQubit,
    curve_bell,
    curve_epr,
    curve_request,
    teleported_fidelity,
)
from telesched.repeater import RepeaterConfig, mean_infidelity
from telesched.sim import PolicySpec, simulate

__version__ = "0.1.0"

__all__ = [
    "COMPILED",
    "DephasingParams",
    "Discipline",
    "DoubleQueueConfig",
    "FidelityCurve",
    "InvariantViolation",
    "PLUS",
    "PolicySpec",
    "PureQubit",
    "RepeaterConfig",
    "StabilityError",
    "curve_bell",
    "curve_epr",
    "curve_request",
    "mean_infidelity",
    "phase_conditioned_mean",
    "service_probability",
    "simulate",
    "solve_phases",
    "stationary_distribution",
    "teleported_fidelity",
]
