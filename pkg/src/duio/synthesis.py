"""Observer gain synthesis and closed-loop certification.

Local output-injection gains come from an H-infinity LMI on each node's
detectable block (or from pole placement as a non-optimal baseline). The
scalar diffusive gains come from one global LMI on the stacked undetectable
blocks. Both programs go through :mod:`duio.sdp`.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import optimize, signal

from duio.decomp import (
    DETECTABILITY,
    NodeDecomposition,
    NodeDecoupler,
    NodeSpec,
    PlantModel,
    decompose,
    disturbance_decoupler,
)
from duio.errors import ConsensusInfeasible, InvalidDesign, SynthesisInfeasible
from duio.graph import CommGraph, laplacian
from duio.linalg import DEFAULT_TOL, Tolerance, is_observable, spectral_radius
from duio.sdp import FAILED, INFEASIBLE, AffineLmi, solve_lmi_program

log = logging.getLogger(__name__)

LMI_MARGIN = 1e-6
DEFAULT_POLE_RANGE = (0.2, 0.6)


# ---------------------------------------------------------------------------
# detectable subspace: local output injection


@dataclass(eq=False)
class DetectableGainResult:
    K_d: np.ndarray
    beta: float
    P: np.ndarray | None = None
    Y: np.ndarray | None = None
    method: str = "hinf"
    solver: str | None = None


def hinf_lmi_matrix(P, Y, beta, A_d, C_d, DtE) -> np.ndarray:
    """Bounded-real LMI of the detectable error channel v~ -> e_d.

    State matrix A_d - K C_d with K = P^-1 Y, disturbance input
    [K, -D^T E] acting on (v(k), v(k+1)), performance output e_d itself.
    """
    n = A_d.shape[0]
    ny = C_d.shape[0]
    Z = np.zeros
    top_in = np.hstack([Y, -P @ DtE])
    M = np.block(
        [
            [P, P @ A_d - Y @ C_d, top_in, Z((n, n))],
            [Z((n, n)), P, Z((n, 2 * ny)), np.eye(n)],
            [Z((2 * ny, n)), Z((2 * ny, n)), beta * np.eye(2 * ny), Z((2 * ny, n))],
            [Z((n, n)), Z((n, n)), Z((n, 2 * ny)), beta * np.eye(n)],
        ]
    )
    upper = np.triu(M, 1)
    return np.triu(M) + upper.T


def _sym_from_vec(v, n):
    S = np.zeros((n, n))
    S[np.triu_indices(n)] = v
    return S + np.triu(S, 1).T


def design_detectable_gain_hinf(
    dec: NodeDecomposition, E: np.ndarray, margin: float = LMI_MARGIN
) -> DetectableGainResult:
    """Minimize the H-infinity level beta of the detectable error channel."""
    A_d, C_d = dec.A_d, dec.C_d
    n, ny = A_d.shape[0], C_d.shape[0]
    if n == 0:
        return DetectableGainResult(np.zeros((0, ny)), 0.0, np.zeros((0, 0)), np.zeros((0, ny)))
    DtE = dec.D.T @ E
    n_p = n * (n + 1) // 2
    n_y = n * ny
    nvar = n_p + n_y + 1

    def unpack(x):
        return _sym_from_vec(x[:n_p], n), x[n_p : n_p + n_y].reshape(n, ny), x[-1]

    main = AffineLmi.from_function(
        lambda x: hinf_lmi_matrix(*unpack(x), A_d, C_d, DtE), nvar, margin, "hinf"
    )
    pos = AffineLmi.from_function(lambda x: unpack(x)[0], nvar, margin, "P>0")
    c = np.zeros(nvar)
    c[-1] = 1.0
    sol = solve_lmi_program(c, [main, pos])
    if sol.status in (INFEASIBLE, FAILED):
        raise SynthesisInfeasible(f"H-infinity LMI {sol.status}: {sol.detail}")
    P, Y, beta = unpack(sol.x)
    P = 0.5 * (P + P.T)
    if sol.violation > 0.0:
        beta = _repair_beta(P, Y, beta, A_d, C_d, DtE, margin)
        if beta is None:
            raise SynthesisInfeasible(f"H-infinity LMI could not be certified: {sol.detail}")
        log.debug("H-infinity level raised to %.6g to restore the certificate", beta)
    K = np.linalg.solve(P, Y)
    return DetectableGainResult(K, float(beta), P, Y, "hinf", sol.solver)


def _repair_beta(P, Y, beta, A_d, C_d, DtE, margin):
    """Smallest beta making the bounded-real LMI hold for fixed (P, Y).

    With the beta blocks split off, the condition is the Schur complement
    beta - margin >= lambda_max(W^T (T - margin I)^-1 W), where T is the
    leading 2n x 2n block. Returns None if T itself misses the margin.
    """
    n, ny = A_d.shape[0], C_d.shape[0]
    if np.linalg.eigvalsh(P)[0] < margin:
        return None
    T = hinf_lmi_matrix(P, Y, 0.0, A_d, C_d, DtE)[: 2 * n, : 2 * n] - margin * np.eye(2 * n)
    try:
        cho = sla.cho_factor(T)
    except np.linalg.LinAlgError:
        return None
    W = sla.block_diag(np.hstack([Y, -P @ DtE]), np.eye(n))
    need = margin + np.linalg.eigvalsh(W.T @ sla.cho_solve(cho, W))[-1]
    # a relative pad absorbs the rounding in the final dense eigenvalue check
    candidate = max(float(beta), float(need) * (1.0 + 1e-9) + 1e-12)
    M = hinf_lmi_matrix(P, Y, candidate, A_d, C_d, DtE)
    if np.linalg.eigvalsh(M)[0] < margin - 1e-9 * max(1.0, np.abs(M).max()):
        return None
    return candidate


def detectable_channel(dec: NodeDecomposition, E: np.ndarray, K_d: np.ndarray):
    """(A, B) of e_d(k+1) = A e_d(k) + B [v(k); v(k+1)]."""
    A = dec.A_d - K_d @ dec.C_d
    B = np.hstack([K_d, -dec.D.T @ E])
    return A, B


def hinf_norm(A, B, C=None, grid: int = 4096) -> float:
    """Peak gain of C (zI - A)^-1 B over the unit circle (A must be stable).

    Dense frequency sweep followed by a bounded scalar refinement around the
    best grid points.
    """
    A = np.atleast_2d(np.asarray(A, float))
    B = np.atleast_2d(np.asarray(B, float))
    n = A.shape[0]
    C = np.eye(n) if C is None else np.atleast_2d(np.asarray(C, float))
    if n == 0 or B.size == 0:
        return 0.0
    if spectral_radius(A) >= 1.0:
        return float("inf")

    def gain(w):
        G = C @ np.linalg.solve(np.exp(1j * w) * np.eye(n) - A, B)
        return np.linalg.norm(G, 2)

    ws = np.linspace(0.0, np.pi, grid)
    gains = np.array([gain(w) for w in ws])
    best = float(gains.max())
    step = ws[1] - ws[0]
    for k in np.argsort(gains)[-3:]:
        lo, hi = max(0.0, ws[k] - step), min(np.pi, ws[k] + step)
        res = optimize.minimize_scalar(lambda w: -gain(w), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best


def default_poles(count: int, pole_range=DEFAULT_POLE_RANGE) -> np.ndarray:
    lo, hi = pole_range
    return np.linspace(lo, hi, count) if count > 1 else np.array([lo] * count)


def design_detectable_gain_poleplacement(
    dec: NodeDecomposition, desired_poles=None, E: np.ndarray | None = None,
    tol: Tolerance = DEFAULT_TOL,
) -> DetectableGainResult:
    """Place the eigenvalues of A_d - K_d C_d; beta is the resulting peak gain."""
    A_d, C_d = dec.A_d, dec.C_d
    n, ny = A_d.shape[0], C_d.shape[0]
    if n == 0:
        return DetectableGainResult(np.zeros((0, ny)), 0.0, method="poleplacement")
    poles = default_poles(n) if desired_poles is None else np.asarray(desired_poles, float)
    if poles.shape != (n,):
        raise SynthesisInfeasible(f"need {n} poles for the detectable block, got {poles.size}")
    if np.any(np.abs(poles) >= 1.0):
        raise SynthesisInfeasible("desired poles must lie strictly inside the unit circle")
    if not is_observable(A_d, C_d, tol):
        raise SynthesisInfeasible("pair (A_d, C_d) is not observable; poles cannot be placed")

    # place on the row space of C_d so the dual input matrix has full rank
    W, s, Vt = np.linalg.svd(C_d, full_matrices=False)
    r = int(np.sum(s > tol.rank_tol * s[0]))
    C_r = s[:r, None] * Vt[:r]
    with warnings.catch_warnings():
        # non-convergence here only concerns the robustness refinement; the
        # poles themselves are placed exactly (checked below)
        warnings.filterwarnings("ignore", message="Convergence was not reached")
        placed = signal.place_poles(A_d.T, C_r.T, poles, maxiter=100)
    K = placed.gain_matrix.T @ W[:, :r].T
    achieved = np.sort_complex(np.linalg.eigvals(A_d - K @ C_d))
    if np.max(np.abs(achieved - np.sort_complex(poles.astype(complex)))) > 1e-6 * max(
        1.0, np.abs(A_d).max()
    ):
        raise SynthesisInfeasible(f"pole placement missed its targets: {achieved}")
    if E is None:
        E = np.zeros((dec.D.shape[0], ny))
    beta = hinf_norm(*detectable_channel(dec, E, K))
    return DetectableGainResult(K, beta, method="poleplacement")


# ---------------------------------------------------------------------------
# undetectable subspace: diffusive coupling


@dataclass(eq=False)
class DiffusiveGainResult:
    g: np.ndarray
    beta_u: float
    solver: str | None = None


def _stack_undetectable(decs):
    U = sla.block_diag(*[d.U for d in decs])
    A_u = sla.block_diag(*[d.A_u for d in decs])
    return U, A_u


def coupling_matrix(decs, L_g, g) -> np.ndarray:
    """Theta(g) = U^T (diag(g) L_g kron I) U."""
    n = decs[0].D.shape[0]
    U, _ = _stack_undetectable(decs)
    return U.T @ np.kron(np.diag(np.asarray(g, float)) @ L_g, np.eye(n)) @ U


def diffusive_lmi_matrix(decs, L_g, g) -> np.ndarray:
    """The symmetric matrix M_g(g) whose largest eigenvalue bounds V decrease."""
    _, A_u = _stack_undetectable(decs)
    Th = coupling_matrix(decs, L_g, g)
    nu = A_u.shape[0]
    AT = A_u.T @ Th
    M11 = A_u.T @ A_u - AT - AT.T - np.eye(nu)
    return np.block([[M11, Th.T], [Th, -np.eye(nu)]])


def design_diffusive_gains(
    decs: list[NodeDecomposition], L_g, margin: float = LMI_MARGIN
) -> DiffusiveGainResult:
    """Minimize beta_u subject to M_g(g) <= beta_u I and beta_u <= -margin."""
    L_g = np.asarray(L_g, float)
    m = len(decs)
    if L_g.shape != (m, m):
        raise InvalidDesign(f"Laplacian is {L_g.shape}, expected {m}x{m}")
    active = [i for i, d in enumerate(decs) if d.nu > 0]
    if not active:
        return DiffusiveGainResult(np.zeros(m), -1.0)
    nvar = len(active) + 1

    def full_g(x):
        g = np.zeros(m)
        g[active] = x[:-1]
        return g

    def slack(x):
        M = diffusive_lmi_matrix(decs, L_g, full_g(x))
        return x[-1] * np.eye(M.shape[0]) - M

    main = AffineLmi.from_function(slack, nvar, 0.0, "beta_u I - M_g")
    bound = AffineLmi.from_function(lambda x: np.array([[-margin - x[-1]]]), nvar, 0.0, "beta_u")
    c = np.zeros(nvar)
    c[-1] = 1.0
    sol = solve_lmi_program(c, [main, bound])
    if sol.status == INFEASIBLE:
        raise ConsensusInfeasible(
            "no diffusive gains make the undetectable error decrease for this topology"
        )
    if sol.status == FAILED:
        raise ConsensusInfeasible(f"diffusive-gain LMI not solved: {sol.detail}")
    g = full_g(sol.x)
    # tightest level for these gains; also repairs a slightly inaccurate solve
    beta_u = float(np.linalg.eigvalsh(diffusive_lmi_matrix(decs, L_g, g))[-1])
    if beta_u > -margin:
        raise ConsensusInfeasible(
            f"diffusive gains reach only beta_u = {beta_u:.3e}, above -{margin:g}"
        )
    return DiffusiveGainResult(g, beta_u, sol.solver)


# ---------------------------------------------------------------------------
# assembly and certification


@dataclass(eq=False)
class NodeObserver:
    """Everything node i needs to run its update; matrices in plant coordinates."""

    node: NodeSpec
    decoupler: NodeDecoupler
    decomposition: NodeDecomposition
    gain: DetectableGainResult
    g: float
    K: np.ndarray
    L: np.ndarray
    G: np.ndarray
    PA: np.ndarray
    PB_known: np.ndarray

    @property
    def E(self) -> np.ndarray:
        return self.decoupler.E

    @property
    def P(self) -> np.ndarray:
        return self.decoupler.P

    @property
    def C(self) -> np.ndarray:
        return self.node.C


def assemble_observer(
    plant: PlantModel,
    node: NodeSpec,
    decoupler: NodeDecoupler,
    dec: NodeDecomposition,
    gain: DetectableGainResult,
    g: float,
    tol: Tolerance = DEFAULT_TOL,
) -> NodeObserver:
    """K_i = D_i K_d, G_i = g_i U_i U_i^T, L_i = K_i (I + C_i E_i) - P_i A E_i."""
    n, ny = plant.n_x, node.n_y
    K_d = np.asarray(gain.K_d, float)
    checks = {
        "E": (decoupler.E.shape, (n, ny)),
        "P": (decoupler.P.shape, (n, n)),
        "D": (dec.D.shape[0], n),
        "K_d": (K_d.shape, (dec.n_d, ny)),
    }
    for name, (got, want) in checks.items():
        if got != want:
            raise InvalidDesign(f"node {node.index + 1}: {name} has shape {got}, expected {want}")
    E, P, C = decoupler.E, decoupler.P, node.C
    K = dec.D @ K_d
    G = float(g) * dec.U @ dec.U.T
    L = K @ (np.eye(ny) + C @ E) - P @ plant.A @ E
    leak = np.linalg.norm(dec.U.T @ K) if dec.nu and K.size else 0.0
    if leak > tol.zero_tol * max(1.0, np.linalg.norm(K)):
        raise InvalidDesign(f"node {node.index + 1}: U_i^T K_i = {leak:.2e}, expected 0")
    return NodeObserver(
        node=node,
        decoupler=decoupler,
        decomposition=dec,
        gain=gain,
        g=float(g),
        K=K,
        L=L,
        G=G,
        PA=P @ plant.A,
        PB_known=P @ node.known_input_matrix(plant),
    )


@dataclass(eq=False)
class CertificationReport:
    rho_d: float
    rho_u: float
    rho: float
    beta_u: float
    stable: bool
    Phi_d: np.ndarray = field(repr=False)
    Phi_r: np.ndarray = field(repr=False)
    Phi_u: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)

    def transition_matrix(self) -> np.ndarray:
        """Stacked error map e(k) -> e(k+1) of the noiseless network."""
        T = np.hstack([self.D, self.U])
        nd, nu = self.Phi_d.shape[0], self.Phi_u.shape[0]
        Phi = np.block([[self.Phi_d, np.zeros((nd, nu))], [self.Phi_r, self.Phi_u]])
        return T @ Phi @ T.T


@dataclass(eq=False)
class ObserverNetworkDesign:
    plant: PlantModel
    graph: CommGraph
    observers: list[NodeObserver]
    diffusive: DiffusiveGainResult
    mode: str
    method: str
    certification: CertificationReport | None = None

    @property
    def g(self) -> np.ndarray:
        return self.diffusive.g

    @property
    def laplacian(self) -> np.ndarray:
        return laplacian(self.graph)


def verify_closed_loop(design: ObserverNetworkDesign) -> CertificationReport:
    """Build Phi_d, Phi_r, Phi_u of the aggregated error dynamics and certify."""
    obs = design.observers
    decs = [o.decomposition for o in obs]
    n = design.plant.n_x
    D = sla.block_diag(*[d.D for d in decs])
    U = sla.block_diag(*[d.U for d in decs])
    A_d = sla.block_diag(*[d.A_d for d in decs])
    C_d = sla.block_diag(*[d.C_d for d in decs])
    K_d = sla.block_diag(*[o.gain.K_d for o in obs])
    A_r = sla.block_diag(*[d.A_r for d in decs])
    A_u = sla.block_diag(*[d.A_u for d in decs])
    g_hat = np.diag(np.concatenate([np.full(d.nu, o.g) for d, o in zip(decs, obs)]))
    LI = np.kron(design.laplacian, np.eye(n))

    Phi_d = A_d - K_d @ C_d
    Phi_r = A_r - g_hat @ U.T @ LI @ D
    Phi_u = A_u - g_hat @ U.T @ LI @ U
    rho_d = spectral_radius(Phi_d)
    rho_u = spectral_radius(Phi_u)
    rho = max(rho_d, rho_u)
    return CertificationReport(
        rho_d=rho_d,
        rho_u=rho_u,
        rho=rho,
        beta_u=design.diffusive.beta_u,
        stable=rho < 1.0,
        Phi_d=Phi_d,
        Phi_r=Phi_r,
        Phi_u=Phi_u,
        D=D,
        U=U,
    )


def design_network(
    plant: PlantModel,
    nodes: list[NodeSpec],
    graph: CommGraph,
    mode: str = DETECTABILITY,
    hinf: bool = True,
    poles=None,
    tol: Tolerance = DEFAULT_TOL,
    margin: float = LMI_MARGIN,
) -> ObserverNetworkDesign:
    """Run the full per-node and global synthesis pipeline.

    ``poles`` forces pole placement. It may hold one pole per detectable
    state of a node, or any other list whose span ``[min, max]`` is then
    sampled uniformly for each node.
    """
    if graph.node_count != len(nodes):
        raise InvalidDesign(f"graph has {graph.node_count} nodes, scenario has {len(nodes)}")
    use_hinf = hinf and poles is None
    decouplers, decs = [], []
    for node in nodes:
        dcp = disturbance_decoupler(plant, node, tol)
        decouplers.append(dcp)
        decs.append(decompose(dcp.P @ plant.A, node.C, mode, tol))

    gains = []
    for node, dcp, dec in zip(nodes, decouplers, decs):
        if use_hinf:
            gains.append(design_detectable_gain_hinf(dec, dcp.E, margin))
        else:
            gains.append(
                design_detectable_gain_poleplacement(dec, _node_poles(poles, dec.n_d), dcp.E, tol)
            )
        log.debug("node %d: nu=%d beta=%.4g", node.index + 1, dec.nu, gains[-1].beta)

    diffusive = design_diffusive_gains(decs, laplacian(graph), margin)
    observers = [
        assemble_observer(plant, node, dcp, dec, gain, g, tol)
        for node, dcp, dec, gain, g in zip(nodes, decouplers, decs, gains, diffusive.g)
    ]
    design = ObserverNetworkDesign(
        plant=plant,
        graph=graph,
        observers=observers,
        diffusive=diffusive,
        mode=mode,
        method="hinf" if use_hinf else "poleplacement",
    )
    design.certification = verify_closed_loop(design)
    return design


def _node_poles(poles, count):
    if poles is None:
        return None
    poles = np.asarray(poles, float).ravel()
    if poles.size == count:
        return poles
    if poles.size == 0:
        return default_poles(count)
    return default_poles(count, (poles.min(), poles.max()))
