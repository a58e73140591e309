"""Distributed unknown input observers over sensor networks.

Each node decouples the unobserved inputs from its estimation error, corrects
the part of the state its own output can see with a locally designed
H-infinity gain, and recovers the rest through diffusive coupling with its
neighbors on a communication graph.
"""

from duio.decomp import NodeSpec, PlantModel, check_assumptions, decompose, disturbance_decoupler
from duio.graph import CommGraph, laplacian
from duio.io import load_scenario
from duio.sim import Scenario, design_scenario, run_scenario
from duio.synthesis import design_network, verify_closed_loop

__all__ = [
    "CommGraph",
    "NodeSpec",
    "PlantModel",
    "Scenario",
    "check_assumptions",
    "decompose",
    "design_network",
    "design_scenario",
    "disturbance_decoupler",
    "laplacian",
    "load_scenario",
    "run_scenario",
    "verify_closed_loop",
]
