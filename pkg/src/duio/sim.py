"""Lockstep simulation of plant, state-feedback controller and observer network."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from duio.decomp import DETECTABILITY, MODES, NodeSpec, PlantModel
from duio.errors import InvalidScenario, ProtocolViolation, RiccatiDiverged
from duio.graph import CommGraph
from duio.synthesis import ObserverNetworkDesign, design_network

UNKNOWN_INPUT_KINDS = ("sinusoid", "constant", "zero", "tabulated")


@dataclass(eq=False)
class UnknownInput:
    """Scripted disturbance w(k); every component carries the same signal
    unless ``values`` tabulates it explicitly (rows are steps, held after the
    table ends)."""

    kind: str = "zero"
    amplitude: float = 0.0
    period: float = 1.0
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in UNKNOWN_INPUT_KINDS:
            raise InvalidScenario(f"unknown_input.kind {self.kind!r} not in {UNKNOWN_INPUT_KINDS}")
        if self.kind == "sinusoid" and not self.period > 0:
            raise InvalidScenario("unknown_input.period must be positive")
        if self.kind == "tabulated":
            if self.values is None or np.size(self.values) == 0:
                raise InvalidScenario("unknown_input.values required for tabulated input")
            self.values = np.atleast_2d(np.asarray(self.values, float))

    def at(self, k: int, step_time: float, n_w: int) -> np.ndarray:
        if self.kind == "zero" or n_w == 0:
            return np.zeros(n_w)
        if self.kind == "constant":
            return np.full(n_w, self.amplitude)
        if self.kind == "sinusoid":
            return np.full(n_w, self.amplitude * np.sin(2 * np.pi / self.period * k * step_time))
        row = self.values[min(k, self.values.shape[0] - 1)]
        if row.size != n_w:
            raise InvalidScenario(f"unknown_input.values rows have {row.size} entries, n_w = {n_w}")
        return row.copy()


@dataclass(eq=False)
class Controller:
    """u(k) = F (x(k) - x_ref) with F from LQR, or u = 0 for mode 'none'."""

    mode: str = "lqr"
    Q: np.ndarray | None = None
    R: np.ndarray | None = None
    x_ref: np.ndarray | float = 0.0

    def __post_init__(self):
        if self.mode not in ("lqr", "none"):
            raise InvalidScenario(f"controller.mode {self.mode!r} must be 'lqr' or 'none'")


@dataclass(eq=False)
class Scenario:
    plant: PlantModel
    nodes: list[NodeSpec]
    graph: CommGraph
    noise_covariance: np.ndarray
    unknown_input: UnknownInput = field(default_factory=UnknownInput)
    controller: Controller = field(default_factory=Controller)
    horizon: int = 100
    seed: int = 0
    x0: np.ndarray | float = 1.0
    decomposition_mode: str = DETECTABILITY
    hinf: bool = True
    poles: tuple | None = None
    name: str = ""

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidScenario("sim.horizon must be at least 1")
        if self.seed < 0:
            raise InvalidScenario("sim.seed must be unsigned")
        if self.decomposition_mode not in MODES:
            raise InvalidScenario(f"design.decomposition must be one of {MODES}")
        if self.graph.node_count != len(self.nodes):
            raise InvalidScenario(
                f"graph.m = {self.graph.node_count} but {len(self.nodes)} nodes are listed"
            )
        for node in self.nodes:
            node.validate(self.plant)
        self.noise_covariance = np.atleast_2d(np.asarray(self.noise_covariance, float))
        ny = self.n_y
        if self.noise_covariance.shape != (ny, ny):
            raise InvalidScenario(
                f"noise covariance is {self.noise_covariance.shape}, outputs total {ny}"
            )
        noise_factor(self.noise_covariance)
        n = self.plant.n_x
        if np.size(self.x0) not in (1, n):
            raise InvalidScenario(f"sim.x0 has {np.size(self.x0)} entries, expected 1 or {n}")
        if np.size(self.controller.x_ref) not in (1, n):
            raise InvalidScenario(f"controller.x_ref must be a scalar or have {n} entries")

    @property
    def n_y(self) -> int:
        return sum(node.n_y for node in self.nodes)

    @property
    def initial_state(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.x0, float), (self.plant.n_x,)).copy()

    @property
    def reference(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.controller.x_ref, float), (self.plant.n_x,)).copy()

    def output_slices(self) -> list[slice]:
        out, start = [], 0
        for node in self.nodes:
            out.append(slice(start, start + node.n_y))
            start += node.n_y
        return out

    def without_noise(self) -> "Scenario":
        return replace(self, noise_covariance=np.zeros_like(self.noise_covariance))

    def without_disturbance(self) -> "Scenario":
        return replace(self, unknown_input=UnknownInput("zero"))


# ---------------------------------------------------------------------------


def lqr_state_feedback(A, B, Q=None, R=None, tol: float = 1e-12, max_iter: int = 100_000):
    """Gain F of u = F x from the fixed point of the discrete Riccati recursion."""
    A = np.asarray(A, float)
    B = np.asarray(B, float).reshape(A.shape[0], -1)
    Q = np.eye(A.shape[0]) if Q is None else np.asarray(Q, float)
    R = np.eye(B.shape[1]) if R is None else np.asarray(R, float)
    P = Q.copy()
    for _ in range(max_iter):
        BtPA = B.T @ P @ A
        P_next = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA)
        P_next = 0.5 * (P_next + P_next.T)
        with np.errstate(over="ignore", invalid="ignore"):
            change = np.linalg.norm(P_next - P) / max(np.linalg.norm(P_next), 1e-300)
        if not np.isfinite(change):
            break
        P = P_next
        if change < tol:
            return -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    raise RiccatiDiverged(f"Riccati recursion did not converge in {max_iter} iterations")


def noise_factor(Q_v) -> np.ndarray:
    """Square factor L with L L^T = Q_v; rejects non-PSD input."""
    Q_v = np.atleast_2d(np.asarray(Q_v, float))
    if Q_v.size == 0:
        return Q_v
    if not np.allclose(Q_v, Q_v.T, atol=1e-12):
        raise InvalidScenario("noise covariance must be symmetric")
    lam, V = np.linalg.eigh(Q_v)
    if lam[0] < -1e-12 * max(1.0, abs(lam[-1])):
        raise InvalidScenario(f"noise covariance is not PSD (eigenvalue {lam[0]:.3e})")
    return V * np.sqrt(np.clip(lam, 0.0, None))


class NoiseStream:
    """Reproducible zero-mean Gaussian vectors with covariance Q_v.

    Backed by the counter-based Philox generator; one standard-normal draw
    per output per step.
    """

    def __init__(self, seed: int, Q_v):
        self._L = noise_factor(Q_v)
        self._rng = np.random.Generator(np.random.Philox(int(seed)))

    def draw(self) -> np.ndarray:
        return self._L @ self._rng.standard_normal(self._L.shape[0])

    def __iter__(self):
        while True:
            yield self.draw()


def gaussian_noise_stream(seed: int, Q_v) -> NoiseStream:
    return NoiseStream(seed, Q_v)


def plant_step(x, u, w, plant: PlantModel) -> np.ndarray:
    return plant.A @ x + plant.B @ u + plant.B_w @ w


@dataclass
class NodeRuntimeState:
    """xi is the internal state for the coming round, x_hat the latest estimate."""

    xi: np.ndarray
    x_hat: np.ndarray | None = None


def initial_states(design: ObserverNetworkDesign) -> list[NodeRuntimeState]:
    n = design.plant.n_x
    return [NodeRuntimeState(np.zeros(n)) for _ in design.observers]


def observer_round(
    states: Sequence[NodeRuntimeState],
    outputs: Sequence[np.ndarray],
    known_inputs: Sequence[np.ndarray],
    design: ObserverNetworkDesign,
) -> list[NodeRuntimeState]:
    """One synchronous round of the distributed observer.

    Phase 1: every node reconstructs x_hat_i(k) = xi_i(k) - E_i y_i(k).
    Phase 2: every node updates xi_i(k+1) from its own data and the phase-1
    estimates of its neighbors. No phase-2 value is visible inside the round.
    """
    m = len(design.observers)
    if not (len(states) == len(outputs) == len(known_inputs) == m):
        raise ProtocolViolation(
            f"round needs {m} states, outputs and inputs; got "
            f"{len(states)}, {len(outputs)}, {len(known_inputs)}"
        )
    estimates = []
    for i, (obs, st, y) in enumerate(zip(design.observers, states, outputs)):
        if y is None or st is None:
            raise ProtocolViolation(f"node {i + 1}: missing output or state")
        estimates.append(st.xi - obs.E @ y)
    estimates = tuple(estimates)

    graph = design.graph
    updated = []
    for i, (obs, st, y, u) in enumerate(zip(design.observers, states, outputs, known_inputs)):
        disagreement = np.zeros_like(st.xi)
        for j in graph.neighbors(i):
            x_j = estimates[j]
            if x_j is None or not np.all(np.isfinite(x_j)):
                raise ProtocolViolation(f"node {i + 1}: estimate of neighbor {j + 1} unavailable")
            disagreement += estimates[i] - x_j
        xi_next = (
            (obs.PA - obs.K @ obs.C) @ st.xi
            + obs.L @ y
            + obs.PB_known @ u
            - obs.G @ disagreement
        )
        updated.append(NodeRuntimeState(xi=xi_next, x_hat=estimates[i]))
    return updated


# ---------------------------------------------------------------------------


@dataclass(eq=False)
class TraceSet:
    """Per-step record; index k runs over 0 .. horizon-1."""

    x: np.ndarray  # (H, n_x)
    u: np.ndarray  # (H, n_u)
    w: np.ndarray  # (H, n_w)
    x_hat: np.ndarray  # (H, m, n_x)
    step_time: float = 1.0

    @property
    def horizon(self) -> int:
        return self.x.shape[0]

    @property
    def node_count(self) -> int:
        return self.x_hat.shape[1]

    @property
    def errors(self) -> np.ndarray:
        return self.x_hat - self.x[:, None, :]

    @property
    def err_norm(self) -> np.ndarray:
        """(H, m) Euclidean error norms."""
        return np.linalg.norm(self.errors, axis=2)

    def steady_state_rms(self, fraction: float = 0.1) -> np.ndarray:
        tail = max(1, int(round(self.horizon * fraction)))
        return np.sqrt(np.mean(self.err_norm[-tail:] ** 2, axis=0))

    def peak_error(self) -> np.ndarray:
        return self.err_norm.max(axis=0)

    def convergence_step(self, threshold: float) -> int | None:
        """First k after which every node's error stays below ``threshold``."""
        above = np.any(self.err_norm >= threshold, axis=1)
        if above[-1]:
            return None
        idx = np.flatnonzero(above)
        return 0 if idx.size == 0 else int(idx[-1] + 1)

    def summary(self, threshold: float = 1e-3, fraction: float = 0.1) -> dict:
        return {
            "steady_state_rms": self.steady_state_rms(fraction).tolist(),
            "peak_error": self.peak_error().tolist(),
            "convergence_step": self.convergence_step(threshold),
            "threshold": threshold,
        }


def design_scenario(scenario: Scenario, **overrides) -> ObserverNetworkDesign:
    """Synthesize the observer network with the scenario's design settings.

    Keyword overrides (``mode``, ``hinf``, ``poles``) take precedence.
    """
    kwargs = {
        "mode": scenario.decomposition_mode,
        "hinf": scenario.hinf,
        "poles": scenario.poles,
    }
    kwargs.update(overrides)
    return design_network(scenario.plant, scenario.nodes, scenario.graph, **kwargs)


def feedback_gain(scenario: Scenario) -> np.ndarray:
    plant, ctl = scenario.plant, scenario.controller
    if ctl.mode == "none" or plant.n_u == 0:
        return np.zeros((plant.n_u, plant.n_x))
    return lqr_state_feedback(plant.A, plant.B, ctl.Q, ctl.R)


def run_scenario(
    scenario: Scenario,
    design: ObserverNetworkDesign,
    F: np.ndarray | None = None,
) -> TraceSet:
    plant = scenario.plant
    H, n, m = scenario.horizon, plant.n_x, len(scenario.nodes)
    if len(design.observers) != m or design.plant.n_x != n:
        raise InvalidScenario("design was synthesized for a different scenario")
    F = feedback_gain(scenario) if F is None else F
    x_ref = scenario.reference
    noise = gaussian_noise_stream(scenario.seed, scenario.noise_covariance)
    slices = scenario.output_slices()
    known_cols = [list(node.known_input_columns) for node in scenario.nodes]

    xs = np.empty((H, n))
    us = np.empty((H, plant.n_u))
    ws = np.empty((H, plant.n_w))
    x_hat = np.empty((H, m, n))

    x = scenario.initial_state
    states = initial_states(design)
    for k in range(H):
        u = F @ (x - x_ref)
        w = scenario.unknown_input.at(k, plant.step_time, plant.n_w)
        v = noise.draw()
        outputs = [node.C @ x + v[s] for node, s in zip(scenario.nodes, slices)]
        states = observer_round(states, outputs, [u[c] for c in known_cols], design)
        xs[k], us[k], ws[k] = x, u, w
        x_hat[k] = [st.x_hat for st in states]
        x = plant_step(x, u, w, plant)
    return TraceSet(xs, us, ws, x_hat, plant.step_time)
