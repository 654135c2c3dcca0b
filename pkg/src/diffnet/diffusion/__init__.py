"""Simulation of the two-recursion adaptive clustering algorithm."""

from ._backend import default_backend_name, load_kernel
from .engine import DecisionLog, RunConfig, Trajectory, run_algorithm
from .steps import (
    DecisionRecord,
    SimulationState,
    adjacent_pairs,
    as_theta_matrix,
    atc_dynamic_step,
    atc_group_step,
    clustering_test,
    init_state,
    run_reference,
)

__all__ = [
    "DecisionLog",
    "DecisionRecord",
    "RunConfig",
    "SimulationState",
    "Trajectory",
    "adjacent_pairs",
    "as_theta_matrix",
    "atc_dynamic_step",
    "atc_group_step",
    "clustering_test",
    "default_backend_name",
    "init_state",
    "load_kernel",
    "run_algorithm",
    "run_reference",
]
