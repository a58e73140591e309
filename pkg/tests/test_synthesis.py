import warnings

import numpy as np
import pytest

from duio.builtin import builtin_scenario
from duio.decomp import (
    NodeSpec,
    PlantModel,
    decompose,
    detectability_decomposition,
    disturbance_decoupler,
)
from duio.errors import ConsensusInfeasible, InvalidDesign, SynthesisInfeasible
from duio.graph import CommGraph, laplacian
from duio.linalg import spectral_radius
from duio.synthesis import (
    DetectableGainResult,
    assemble_observer,
    design_detectable_gain_hinf,
    design_detectable_gain_poleplacement,
    design_diffusive_gains,
    design_network,
    detectable_channel,
    diffusive_lmi_matrix,
    hinf_lmi_matrix,
    hinf_norm,
)
from oracles import chain_diffusive_level, scalar_hinf_scan, scalar_peak_gain


def _scalar(a, c=1.0):
    return detectability_decomposition(np.array([[a]]), np.array([[c]]))


def test_hinf_scalar_unstable_matches_scan():
    k_ref, beta_ref = scalar_hinf_scan(1.2)
    res = design_detectable_gain_hinf(_scalar(1.2), np.zeros((1, 1)))
    assert res.K_d.item() == pytest.approx(k_ref, abs=0.02)
    assert res.beta == pytest.approx(beta_ref, rel=0.05)
    # the certificate level bounds the true peak gain
    assert scalar_peak_gain(1.2 - res.K_d.item(), res.K_d.item()) <= res.beta * (1 + 1e-6)


def test_hinf_scalar_stable_needs_no_injection():
    res = design_detectable_gain_hinf(_scalar(0.5), np.zeros((1, 1)))
    assert res.beta <= 0.05
    assert abs(res.K_d.item()) < 1e-3


def test_hinf_result_invariants():
    dec = _scalar(1.2)
    res = design_detectable_gain_hinf(dec, np.zeros((1, 1)))
    np.testing.assert_allclose(res.K_d, np.linalg.solve(res.P, res.Y))
    assert np.linalg.eigvalsh(res.P)[0] > 0
    M = hinf_lmi_matrix(res.P, res.Y, res.beta, dec.A_d, dec.C_d, np.zeros((1, 1)))
    assert np.linalg.eigvalsh(M)[0] >= -1e-7


def test_hinf_empty_detectable_block():
    dec = detectability_decomposition(np.array([[2.0]]), np.array([[0.0]]))
    res = design_detectable_gain_hinf(dec, np.zeros((1, 1)))
    assert res.K_d.shape == (0, 1) and res.beta == 0.0


def test_hinf_norm_against_brute_force():
    a, k = 0.3, 0.9
    assert hinf_norm([[a]], [[k]]) == pytest.approx(scalar_peak_gain(a, k), rel=1e-6)
    assert hinf_norm([[1.5]], [[1.0]]) == float("inf")


def test_pole_placement_examples():
    res = design_detectable_gain_poleplacement(_scalar(1.2), [0.0])
    assert res.K_d.item() == pytest.approx(1.2)
    dec = detectability_decomposition(np.diag([1.1, 0.5]), np.eye(2))
    res = design_detectable_gain_poleplacement(dec, [0.2, 0.2])
    # D is any orthonormal basis; the plant-coordinate gain is basis free
    np.testing.assert_allclose(dec.D @ res.K_d, np.diag([0.9, 0.3]), atol=1e-9)


def test_pole_placement_errors():
    with pytest.raises(SynthesisInfeasible):
        design_detectable_gain_poleplacement(_scalar(1.2), [1.5])
    with pytest.raises(SynthesisInfeasible):
        design_detectable_gain_poleplacement(_scalar(1.2), [0.1, 0.2])
    dec = decompose(np.diag([0.5, 0.9]), np.array([[1.0, 0.0]]), "detectability")
    with pytest.raises(SynthesisInfeasible):
        design_detectable_gain_poleplacement(dec, [0.1, 0.2])


@pytest.mark.parametrize("pole", [0.0, 0.1, 0.3, 0.5, -0.4])
def test_pole_placement_never_beats_hinf(pole):
    dec = _scalar(1.2)
    hinf = design_detectable_gain_hinf(dec, np.zeros((1, 1)))
    pp = design_detectable_gain_poleplacement(dec, [pole], np.zeros((1, 1)))
    # pole 0 is exactly the optimum; allow the LMI margin
    assert pp.beta >= hinf.beta - 1e-4


def _chain():
    return [_scalar(0.5), detectability_decomposition(np.array([[1.5]]), np.array([[0.0]]))]


def test_diffusive_chain_matrix_and_optimum():
    decs = _chain()
    L = laplacian(CommGraph(2, [(0, 1)]))
    M = diffusive_lmi_matrix(decs, L, [0.0, 1.5])
    np.testing.assert_allclose(M, [[-3.25, 1.5], [1.5, -1.0]])
    np.testing.assert_allclose(np.linalg.eigvalsh(M), [-4.0, -0.25])
    res = design_diffusive_gains(decs, L)
    grid = np.linspace(0.0, 3.0, 30001)
    best = min(chain_diffusive_level(g) for g in grid)
    assert res.g[0] == 0.0
    assert res.beta_u == pytest.approx(best, abs=1e-5)
    assert res.beta_u <= -0.25


def test_diffusive_all_detectable_is_trivial():
    res = design_diffusive_gains([_scalar(0.5), _scalar(0.3)], laplacian(CommGraph(2, [(0, 1)])))
    np.testing.assert_array_equal(res.g, [0.0, 0.0])
    assert res.beta_u == -1.0


def test_diffusive_blind_network_infeasible():
    blind = detectability_decomposition(np.array([[1.5]]), np.array([[0.0]]))
    with pytest.raises(ConsensusInfeasible):
        design_diffusive_gains([blind, blind], laplacian(CommGraph(2, [(0, 1)])))


def test_diffusive_laplacian_shape_checked():
    with pytest.raises(InvalidDesign):
        design_diffusive_gains(_chain(), np.eye(3))


def _chain_plant():
    plant = PlantModel(np.diag([0.5, 1.5]), np.zeros((2, 0)), np.zeros((2, 0)))
    nodes = [NodeSpec(0, [[1.0, 0.0], [0.0, 1.0]]), NodeSpec(1, [[1.0, 0.0]])]
    return plant, nodes


def test_assembly_identities():
    plant, nodes = _chain_plant()
    design = design_network(plant, nodes, CommGraph(2, [(0, 1)]))
    for obs in design.observers:
        dec = obs.decomposition
        np.testing.assert_allclose(obs.K, dec.D @ obs.gain.K_d)
        np.testing.assert_allclose(obs.G, obs.g * dec.U @ dec.U.T)
        # E = 0 here, so L reduces to K
        np.testing.assert_allclose(obs.L, obs.K)
        if dec.nu:
            assert np.linalg.norm(dec.U.T @ obs.K) < 1e-12
    full, partial = design.observers
    assert full.decomposition.nu == 0 and not full.G.any()
    np.testing.assert_allclose(partial.G, partial.g * np.diag([0.0, 1.0]), atol=1e-14)


def test_assemble_rejects_wrong_shapes():
    plant, nodes = _chain_plant()
    dcp = disturbance_decoupler(plant, nodes[1])
    dec = decompose(dcp.P @ plant.A, nodes[1].C)
    bad = DetectableGainResult(np.zeros((2, 1)), 0.0)
    with pytest.raises(InvalidDesign):
        assemble_observer(plant, nodes[1], dcp, dec, bad, 0.0)


def test_closed_loop_report_is_block_triangular():
    plant, nodes = _chain_plant()
    design = design_network(plant, nodes, CommGraph(2, [(0, 1)]))
    cert = design.certification
    assert cert.rho == pytest.approx(max(cert.rho_d, cert.rho_u))
    assert cert.rho == pytest.approx(spectral_radius(cert.transition_matrix()))
    assert cert.stable


def test_closed_loop_all_detectable():
    plant = PlantModel(np.diag([0.5, 1.5]), np.zeros((2, 0)), np.zeros((2, 0)))
    nodes = [NodeSpec(0, np.eye(2)), NodeSpec(1, np.eye(2))]
    cert = design_network(plant, nodes, CommGraph(2)).certification
    assert cert.Phi_u.size == 0
    assert cert.rho == cert.rho_d < 1


def test_example1_local_gains_stabilize(design_of):
    design = design_of("example1-ring5")
    for obs in design.observers:
        dec = obs.decomposition
        Phi = dec.A_d - obs.gain.K_d @ dec.C_d
        assert spectral_radius(Phi) < 1
        # certified level bounds the actual peak gain of the channel
        assert hinf_norm(*detectable_channel(dec, obs.E, obs.gain.K_d)) <= obs.gain.beta * 1.001


def test_example1_pole_placement_meets_poles(design_of):
    design = design_of("example1-ring5", poles=(0.2, 0.6))
    for obs in design.observers:
        dec = obs.decomposition
        poles = np.sort(np.linalg.eigvals(dec.A_d - obs.gain.K_d @ dec.C_d).real)
        np.testing.assert_allclose(poles, np.linspace(0.2, 0.6, dec.n_d), atol=1e-6)


def test_example1_hinf_beats_poleplacement_per_node(design_of):
    hinf = design_of("example1-ring5")
    pp = design_of("example1-ring5", poles=(0.2, 0.6))
    for a, b in zip(hinf.observers, pp.observers):
        assert a.gain.beta <= b.gain.beta * (1 + 1e-6)


def test_design_network_node_count_checked():
    sc = builtin_scenario("example1-ring5")
    with pytest.raises(InvalidDesign):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            design_network(sc.plant, sc.nodes, CommGraph.ring(4))
