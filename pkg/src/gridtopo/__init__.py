"""Power-grid topology design minimizing an H2-based network-coherence metric."""

from .dynamics import (
    CoherenceSpec,
    MachineParams,
    StateSpace,
    assemble_state_space,
    h2_squared_closed_form,
    h2_squared_gramian,
    preset_spec,
    simulate_impulse,
)
from .formulation import DesignProblem, VariableBounds, bounds_augment, bounds_radial, build_milp
from .netgraph import InverseWeightGraph, build_laplacian, enumerate_critical_edges
from .network import Bus, Line, PowerNetwork, load_network, save_network
from .solver import DesignSolution, branch_and_bound, brute_force_design, evaluate_topology

__version__ = "0.1.0"

__all__ = [
    "Bus",
    "CoherenceSpec",
    "DesignProblem",
    "DesignSolution",
    "InverseWeightGraph",
    "Line",
    "MachineParams",
    "PowerNetwork",
    "StateSpace",
    "VariableBounds",
    "assemble_state_space",
    "bounds_augment",
    "bounds_radial",
    "branch_and_bound",
    "brute_force_design",
    "build_laplacian",
    "build_milp",
    "enumerate_critical_edges",
    "evaluate_topology",
    "h2_squared_closed_form",
    "h2_squared_gramian",
    "load_network",
    "preset_spec",
    "save_network",
    "simulate_impulse",
]
