"""Built-in scenarios: a six-state test plant on a five-node ring, and a
nine-zone building heat-exchange model on four nodes (ring or split)."""

from __future__ import annotations

import numpy as np

from duio.decomp import DETECTABILITY, OBSERVABILITY, NodeSpec, PlantModel
from duio.errors import InvalidScenario
from duio.graph import CommGraph
from duio.sim import Controller, Scenario, UnknownInput

# diffusive gains published alongside each scenario; informational only
REFERENCE_G = {
    "example1-ring5": [0.4962, 0.4992, 0.4976, 0.4894, 0.4702],
    "heatx-ring4": [0.3335, 0.3348, 0.3315, 0.3330],
    "heatx-split": [0.6690, 0.6685, 0.1434, 0.1428],
}

_EX1_A = 0.1 * np.array(
    [
        [10.39, 0, 0, 0, 0, 0],
        [0.31, 10.36, 0, 0, 0, 0],
        [1.59, 0.67, 11.06, 0, 0, 0],
        [0.25, 0, 0, 10.58, 0, 0],
        [0.01, 0, 0, 0.48, 11.26, -0.02],
        [0.00, 0, 0, 0.05, 2.46, 11.05],
    ]
)
_EX1_B = np.array(
    [
        [0, 0, 0.1019],
        [0.1018, 0, 0.0015],
        [0.0033, 0, 0.0078],
        [0, 0.1029, 0.0012],
        [0, 0.1085, -0.0001],
        [0, 0.0120, 0.1052],
    ]
)
_EX1_C = [
    [[1, 0, 0, 0, 0, 1], [1, 1, 0, 0, 0, 0]],
    [[1, 0, 1, 0, 0, 1], [0, 1, 0, 1, 0, 1]],
    [[1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 1]],
    [[0, 0, 0, 1, 0, 0], [0, 0, 0, 0, 0, 1]],
    [[0, 0, 0, 0, 1, 1], [0, 0, 0, 0, 0, 1]],
]
# nodes 1 and 3 cannot read the third input
_EX1_KNOWN = [(0, 1), (0, 1, 2), (0, 1), (0, 1, 2), (0, 1, 2)]

_HEAT_A = 1e-3 * np.array(
    [
        [844.4, 114.0, 8.3, 23.4, 5.9, 0.8, 2.8, 0.5, 0.0],
        [114.0, 695.7, 103.6, 4.4, 60.5, 14.0, 0.5, 6.4, 0.8],
        [8.3, 103.6, 704.2, 0.4, 9.4, 162.8, 0.0, 1.0, 10.4],
        [23.4, 4.4, 0.4, 721.4, 61.7, 1.9, 174.7, 11.7, 0.4],
        [5.9, 60.5, 9.4, 61.7, 658.8, 40.4, 11.9, 142.1, 9.3],
        [0.8, 14.0, 162.8, 1.9, 40.4, 682.6, 0.3, 8.2, 89.1],
        [2.8, 0.5, 0.0, 174.7, 11.9, 0.3, 763.2, 44.5, 2.1],
        [0.5, 6.4, 1.0, 11.7, 142.1, 8.2, 44.5, 717.0, 68.7],
        [0.0, 0.8, 10.4, 0.4, 9.3, 89.1, 2.1, 68.7, 819.2],
    ]
)
_HEAT_B = np.array(
    [
        [0.4, 5.0, 0.4, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.2, 0.0, 0.2, 4.9, 0.1, 0.0, 0.5, 0.0],
        [0.0, 0.0, 0.6, 0.0, 0.1, 5.0, 0.0, 0.0, 0.3],
        [0.0] * 9,
    ]
).T
# rooms (1-based) read by each node's sensors
_HEAT_ROOMS = [(5, 6, 9), (2, 6, 9), (2, 5, 9), (2, 5, 6, 9)]


def _selector(rows, n):
    C = np.zeros((len(rows), n))
    for k, r in enumerate(rows):
        C[k, r - 1] = 1.0
    return C


def example1_ring5() -> Scenario:
    Bw = np.zeros((6, 1))
    Bw[5, 0] = 0.1
    plant = PlantModel(_EX1_A, _EX1_B, Bw, step_time=0.1)
    nodes = [NodeSpec(i, C, known) for i, (C, known) in enumerate(zip(_EX1_C, _EX1_KNOWN))]
    return Scenario(
        plant=plant,
        nodes=nodes,
        graph=CommGraph.ring(5),
        noise_covariance=1e-3 * np.eye(10),
        unknown_input=UnknownInput("sinusoid", amplitude=2.0, period=60.0),
        controller=Controller("lqr", x_ref=0.0),
        horizon=600,
        seed=0,
        x0=1.0,
        decomposition_mode=DETECTABILITY,
        name="example1-ring5",
    )


def _heat(edges, name) -> Scenario:
    Bw = np.zeros((9, 1))
    Bw[8, 0] = 0.1
    plant = PlantModel(_HEAT_A, _HEAT_B, Bw, step_time=60.0)
    # node i reads input i only; input 4 drives nothing
    nodes = [NodeSpec(i, _selector(rooms, 9), (i,)) for i, rooms in enumerate(_HEAT_ROOMS)]
    return Scenario(
        plant=plant,
        nodes=nodes,
        graph=CommGraph(4, edges),
        noise_covariance=0.2 * np.eye(13),
        unknown_input=UnknownInput("sinusoid", amplitude=2.0, period=6000.0),
        controller=Controller("lqr", x_ref=18.0),
        horizon=100,
        seed=0,
        x0=20.0,
        decomposition_mode=OBSERVABILITY,
        name=name,
    )


def heatx_ring4() -> Scenario:
    return _heat([(0, 1), (1, 2), (2, 3), (3, 0)], "heatx-ring4")


def heatx_split() -> Scenario:
    return _heat([(0, 1), (2, 3)], "heatx-split")


BUILTINS = {
    "example1-ring5": example1_ring5,
    "heatx-ring4": heatx_ring4,
    "heatx-split": heatx_split,
}


def builtin_scenario(name: str) -> Scenario:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise InvalidScenario(
            f"unknown built-in scenario {name!r}; choose from {sorted(BUILTINS)}"
        ) from None
