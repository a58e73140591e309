import copy
from dataclasses import replace

import numpy as np
import pytest

from duio.builtin import builtin_scenario
from duio.decomp import NodeSpec, PlantModel
from duio.errors import InvalidScenario, ProtocolViolation, RiccatiDiverged
from duio.graph import CommGraph
from duio.linalg import spectral_radius
from duio.sim import (
    Controller,
    NodeRuntimeState,
    NoiseStream,
    Scenario,
    UnknownInput,
    design_scenario,
    feedback_gain,
    gaussian_noise_stream,
    initial_states,
    lqr_state_feedback,
    observer_round,
    plant_step,
    run_scenario,
)
from duio.synthesis import design_network
from oracles import dare_gain


def test_lqr_zero_dynamics():
    F = lqr_state_feedback(np.zeros((2, 2)), np.eye(2))
    np.testing.assert_allclose(F, 0.0, atol=1e-12)


def test_lqr_scalar_against_dare():
    F = lqr_state_feedback([[2.0]], [[1.0]], [[1.0]], [[1.0]])
    F_ref, P_ref = dare_gain(2.0, 1.0, 1.0, 1.0)
    # P^2 - 4P - 1 = 0  ->  P = 2 + sqrt(5)
    assert P_ref.item() == pytest.approx(2 + np.sqrt(5))
    assert F.item() == pytest.approx(F_ref.item(), rel=1e-9)
    assert F.item() == pytest.approx(-2 * (2 + np.sqrt(5)) / (3 + np.sqrt(5)), rel=1e-9)
    assert 2.0 + F.item() == pytest.approx(0.381966, abs=1e-6)


def test_lqr_example1_stabilizes():
    sc = builtin_scenario("example1-ring5")
    F = lqr_state_feedback(sc.plant.A, sc.plant.B)
    F_ref, _ = dare_gain(sc.plant.A, sc.plant.B, np.eye(6), np.eye(3))
    np.testing.assert_allclose(F, F_ref, rtol=1e-7, atol=1e-9)
    assert spectral_radius(sc.plant.A + sc.plant.B @ F) < 1


def test_lqr_unstabilizable_diverges():
    with pytest.raises(RiccatiDiverged):
        lqr_state_feedback([[2.0]], [[0.0]], max_iter=500)


def test_noise_zero_covariance():
    stream = gaussian_noise_stream(3, np.zeros((4, 4)))
    assert all(not stream.draw().any() for _ in range(10))


def test_noise_deterministic():
    a = NoiseStream(11, 0.5 * np.eye(3))
    b = NoiseStream(11, 0.5 * np.eye(3))
    np.testing.assert_array_equal([a.draw() for _ in range(50)], [b.draw() for _ in range(50)])
    c = NoiseStream(12, 0.5 * np.eye(3))
    assert not np.array_equal(a.draw(), c.draw())


def test_noise_sample_covariance():
    Q = 1e-3 * np.eye(4)
    stream = gaussian_noise_stream(0, Q)
    draws = np.array([stream.draw() for _ in range(100_000)])
    np.testing.assert_allclose(np.diag(np.cov(draws.T)), np.diag(Q), rtol=0.1)
    assert np.abs(draws.mean(axis=0)).max() < 1e-3


def test_noise_correlated_covariance():
    Q = np.array([[2.0, 0.8], [0.8, 1.0]])
    stream = gaussian_noise_stream(5, Q)
    draws = np.array([stream.draw() for _ in range(100_000)])
    np.testing.assert_allclose(np.cov(draws.T), Q, atol=0.05)


def test_noise_rejects_indefinite():
    with pytest.raises(InvalidScenario):
        gaussian_noise_stream(0, [[1.0, 0.0], [0.0, -1.0]])


def test_plant_step_examples():
    plant = PlantModel(np.eye(2), np.zeros((2, 1)), np.array([[0.0], [0.3]]))
    x = np.array([1.0, 2.0])
    np.testing.assert_array_equal(plant_step(x, np.zeros(1), np.zeros(1), plant), x)
    np.testing.assert_allclose(plant_step(np.zeros(2), np.zeros(1), np.ones(1), plant), [0, 0.3])
    sc = builtin_scenario("example1-ring5")
    e1 = np.eye(6)[0]
    np.testing.assert_allclose(plant_step(e1, np.zeros(3), np.zeros(1), sc.plant), sc.plant.A[:, 0])


def test_unknown_input_signals():
    sine = UnknownInput("sinusoid", amplitude=2.0, period=60.0)
    assert sine.at(0, 0.1, 1).item() == 0.0
    assert sine.at(150, 0.1, 1).item() == pytest.approx(2.0)
    assert UnknownInput("constant", amplitude=1.5).at(7, 1.0, 2).tolist() == [1.5, 1.5]
    tab = UnknownInput("tabulated", values=[[1.0], [2.0]])
    assert [tab.at(k, 1.0, 1).item() for k in range(4)] == [1.0, 2.0, 2.0, 2.0]
    with pytest.raises(InvalidScenario):
        UnknownInput("square")


def _single_node(A, C):
    plant = PlantModel(A, np.zeros((A.shape[0], 0)), np.zeros((A.shape[0], 0)))
    node = NodeSpec(0, C)
    return plant, [node], CommGraph(1)


def test_round_equilibrium_single_node():
    A = np.array([[1.1, 0.2], [0.0, 0.7]])
    plant, nodes, graph = _single_node(A, np.eye(2)[:1])
    design = design_network(plant, nodes, graph)
    x = np.array([0.3, -0.4])
    states = [NodeRuntimeState(xi=x.copy())]  # E = 0, so x_hat(0) = x(0)
    for _ in range(30):
        y = nodes[0].C @ x
        states = observer_round(states, [y], [np.zeros(0)], design)
        np.testing.assert_allclose(states[0].x_hat, x, atol=1e-12)
        x = A @ x


def test_round_without_coupling_decouples_nodes(design_of):
    sc = builtin_scenario("example1-ring5")
    design = copy.deepcopy(design_of("example1-ring5"))
    for obs in design.observers:
        obs.G[:] = 0.0
    rng = np.random.default_rng(0)
    ys = [rng.normal(size=node.n_y) for node in sc.nodes]
    us = [rng.normal(size=len(node.known_input_columns)) for node in sc.nodes]
    states = [NodeRuntimeState(rng.normal(size=6)) for _ in sc.nodes]
    full = observer_round(states, ys, us, design)
    # perturb every other node; node 0 must not notice
    other = [states[0]] + [NodeRuntimeState(s.xi + 5.0) for s in states[1:]]
    alone = observer_round(other, ys, us, design)
    np.testing.assert_array_equal(full[0].xi, alone[0].xi)


def test_round_protocol_violations(design_of):
    sc = builtin_scenario("example1-ring5")
    design = design_of("example1-ring5")
    states = initial_states(design)
    ys = [np.zeros(node.n_y) for node in sc.nodes]
    us = [np.zeros(len(node.known_input_columns)) for node in sc.nodes]
    with pytest.raises(ProtocolViolation):
        observer_round(states[:-1], ys, us, design)
    ys[2] = None
    with pytest.raises(ProtocolViolation):
        observer_round(states, ys, us, design)
    bad = list(states)
    bad[1] = NodeRuntimeState(np.full(6, np.nan))
    ys[2] = np.zeros(2)
    with pytest.raises(ProtocolViolation):
        observer_round(bad, ys, us, design)


def test_chain_round_matches_aggregated_recursion():
    plant = PlantModel(np.diag([0.5, 1.5]), np.zeros((2, 0)), np.zeros((2, 0)))
    nodes = [NodeSpec(0, np.eye(2)), NodeSpec(1, [[1.0, 0.0]])]
    sc = Scenario(plant, nodes, CommGraph(2, [(0, 1)]), np.zeros((3, 3)),
                  controller=Controller("none"), horizon=40, x0=[1.0, -2.0])
    design = design_scenario(sc)
    assert [o.decomposition.nu for o in design.observers] == [0, 1]
    trace = run_scenario(sc, design)
    errors = trace.errors.reshape(sc.horizon, -1)
    T = design.certification.transition_matrix()
    for k in range(sc.horizon - 1):
        # the unstable plant state grows, so round-off scales with it
        scale = 1e-13 * max(1.0, np.abs(trace.x[k + 1]).max())
        np.testing.assert_allclose(errors[k + 1], T @ errors[k], rtol=0, atol=scale)
    assert np.abs(errors[-1]).max() < 1e-6


def test_run_determinism(design_of):
    sc = builtin_scenario("example1-ring5")
    design = design_of("example1-ring5")
    a, b = run_scenario(sc, design), run_scenario(sc, design)
    np.testing.assert_array_equal(a.x_hat, b.x_hat)
    np.testing.assert_array_equal(a.x, b.x)
    c = run_scenario(replace(sc, seed=1), design)
    assert not np.array_equal(a.x_hat, c.x_hat)


def test_hidden_input_invariance(design_of):
    """Changing an input component node 1 cannot read leaves its error alone."""
    sc = builtin_scenario("example1-ring5")
    design = design_of("example1-ring5")
    assert 2 not in sc.nodes[0].known_input_columns
    F = feedback_gain(sc)
    F_alt = F.copy()
    F_alt[2] *= 0.5
    a = run_scenario(sc, design, F)
    b = run_scenario(sc, design, F_alt)
    assert np.abs(a.u[:, 2] - b.u[:, 2]).max() > 1e-3
    np.testing.assert_allclose(a.err_norm[:, 0], b.err_norm[:, 0], rtol=1e-6)


def test_trace_lengths_and_summary(design_of):
    sc = replace(builtin_scenario("heatx-split"), horizon=50)
    tr = run_scenario(sc, design_of("heatx-split"))
    assert tr.x.shape == (50, 9) and tr.u.shape == (50, 4) and tr.w.shape == (50, 1)
    assert tr.x_hat.shape == (50, 4, 9) and tr.err_norm.shape == (50, 4)
    s = tr.summary(threshold=1e9)
    assert s["convergence_step"] == 0
    assert tr.summary(threshold=1e-12)["convergence_step"] is None
    np.testing.assert_allclose(
        s["steady_state_rms"], np.sqrt(np.mean(tr.err_norm[-5:] ** 2, axis=0))
    )


def test_scenario_validation():
    sc = builtin_scenario("example1-ring5")
    with pytest.raises(InvalidScenario):
        replace(sc, horizon=0)
    with pytest.raises(InvalidScenario):
        replace(sc, noise_covariance=np.eye(3))
    with pytest.raises(InvalidScenario):
        replace(sc, x0=[1.0, 2.0])
    with pytest.raises(InvalidScenario):
        replace(sc, graph=CommGraph.ring(4))
    with pytest.raises(InvalidScenario):
        replace(sc, decomposition_mode="kalman")
