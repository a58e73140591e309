"""Per-node preparation: assumption checks, disturbance decoupler and the
node-wise detectability / observability decompositions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from duio.errors import DecouplingFailed, InvalidScenario, UioNotConstructible
from duio.linalg import (
    DEFAULT_TOL,
    Tolerance,
    as_matrix,
    left_pseudoinverse,
    observability_matrix,
    orthogonal_complement,
    orthonormal_image_basis,
    rank_with_tolerance,
    unit_circle_split,
    unobservable_subspace,
)

DETECTABILITY = "detectability"
OBSERVABILITY = "observability"
MODES = (DETECTABILITY, OBSERVABILITY)


@dataclass(eq=False)
class PlantModel:
    """x(k+1) = A x(k) + B u(k) + B_w w(k), sampled every ``step_time`` seconds."""

    A: np.ndarray
    B: np.ndarray
    B_w: np.ndarray
    step_time: float = 1.0

    def __post_init__(self):
        self.A = as_matrix(self.A, "plant.A")
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise InvalidScenario(f"plant.A must be square, got {self.A.shape}")
        self.B = _columns(self.B, n, "plant.B")
        self.B_w = _columns(self.B_w, n, "plant.B_w")
        self.step_time = float(self.step_time)
        if not self.step_time > 0:
            raise InvalidScenario("plant.t_c must be positive")

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_w(self) -> int:
        return self.B_w.shape[1]


def _columns(M, n, name):
    arr = np.asarray(M, dtype=float)
    if arr.size == 0:
        return np.zeros((n, 0))
    arr = as_matrix(arr, name)
    if arr.shape[0] != n:
        raise InvalidScenario(f"{name} has {arr.shape[0]} rows, expected {n}")
    return arr


@dataclass(eq=False)
class NodeSpec:
    """One sensor node: its output matrix and the plant inputs it can read.

    ``known_input_columns`` holds 0-based column indices of B.
    """

    index: int
    C: np.ndarray
    known_input_columns: tuple = ()

    def __post_init__(self):
        self.C = as_matrix(self.C, f"nodes[{self.index + 1}].C")
        cols = tuple(int(c) for c in self.known_input_columns)
        if len(set(cols)) != len(cols) or any(c < 0 for c in cols):
            raise InvalidScenario(
                f"nodes[{self.index + 1}].known_input_columns malformed: {cols}"
            )
        self.known_input_columns = tuple(sorted(cols))

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def validate(self, plant: PlantModel) -> None:
        if self.C.shape[1] != plant.n_x:
            raise InvalidScenario(
                f"nodes[{self.index + 1}].C has {self.C.shape[1]} columns, "
                f"plant has {plant.n_x} states"
            )
        bad = [c for c in self.known_input_columns if c >= plant.n_u]
        if bad:
            raise InvalidScenario(
                f"nodes[{self.index + 1}].known_input_columns {bad} exceed "
                f"plant input count {plant.n_u}"
            )

    def unknown_input_columns(self, plant: PlantModel) -> tuple:
        return tuple(c for c in range(plant.n_u) if c not in self.known_input_columns)

    def known_input_matrix(self, plant: PlantModel) -> np.ndarray:
        return plant.B[:, list(self.known_input_columns)]

    def unknown_input_matrix(self, plant: PlantModel) -> np.ndarray:
        return plant.B[:, list(self.unknown_input_columns(plant))]

    def disturbance_matrix(self, plant: PlantModel) -> np.ndarray:
        """[B_i^u, B_w] with identically zero input columns removed.

        A zero column of B cannot move the state, so hiding it from a node
        adds nothing to decouple.
        """
        Bu = self.unknown_input_matrix(plant)
        Bu = Bu[:, np.any(Bu != 0.0, axis=0)]
        return np.hstack([Bu, plant.B_w])


@dataclass
class AssumptionReport:
    node: int
    disturbance_full_rank: bool
    output_full_rank: bool
    output_disturbance_full_rank: bool
    ranks: dict = field(default_factory=dict)

    LABELS = {
        "disturbance_full_rank": "rank(B̄_iw) = n_w + n^u_iu",
        "output_full_rank": "rank(C_i) = n_iy",
        "output_disturbance_full_rank": "rank(C_i B̄_iw) = n_w + n^u_iu",
    }

    @property
    def passed(self) -> bool:
        return not self.failures()

    def failures(self) -> list[str]:
        return [label for key, label in self.LABELS.items() if not getattr(self, key)]


def check_assumptions(
    plant: PlantModel, node: NodeSpec, tol: Tolerance = DEFAULT_TOL
) -> AssumptionReport:
    node.validate(plant)
    Bbar = node.disturbance_matrix(plant)
    q = Bbar.shape[1]
    r_b = rank_with_tolerance(Bbar, tol)
    r_c = rank_with_tolerance(node.C, tol)
    r_cb = rank_with_tolerance(node.C @ Bbar, tol)
    return AssumptionReport(
        node=node.index,
        disturbance_full_rank=r_b == q,
        output_full_rank=r_c == node.n_y,
        output_disturbance_full_rank=r_cb == q,
        ranks={"B_bar": r_b, "C": r_c, "C_B_bar": r_cb, "required": q, "n_y": node.n_y},
    )


@dataclass(eq=False)
class NodeDecoupler:
    E: np.ndarray
    P: np.ndarray
    H: np.ndarray


def disturbance_decoupler(
    plant: PlantModel, node: NodeSpec, tol: Tolerance = DEFAULT_TOL
) -> NodeDecoupler:
    """E_i = -B̄(C B̄)^† with the free term H_i set to zero, P_i = I + E_i C_i."""
    report = check_assumptions(plant, node, tol)
    if not report.passed:
        raise UioNotConstructible(
            f"node {node.index + 1}: assumption violated: " + "; ".join(report.failures())
        )
    n = plant.n_x
    Bbar = node.disturbance_matrix(plant)
    if Bbar.shape[1] == 0:
        E = np.zeros((n, node.n_y))
    else:
        E = -Bbar @ left_pseudoinverse(node.C @ Bbar, tol)
    P = np.eye(n) + E @ node.C

    scale = max(1.0, np.linalg.norm(Bbar, 2)) if Bbar.size else 1.0
    residual = np.linalg.norm(P @ Bbar, 2) if Bbar.size else 0.0
    if residual > tol.zero_tol * scale:
        raise DecouplingFailed(f"node {node.index + 1}: ||P_i B̄_iw|| = {residual:.3e}")
    if Bbar.shape[1]:
        stacked = np.vstack([P, left_pseudoinverse(Bbar, tol)])
        if rank_with_tolerance(stacked, tol) != n:
            raise DecouplingFailed(f"node {node.index + 1}: ker(P_i) differs from im(B̄_iw)")
    return NodeDecoupler(E=E, P=P, H=np.zeros((n, node.n_y)))


@dataclass(eq=False)
class NodeDecomposition:
    """Orthogonal split [D U] of the state space for one node.

    ``D.T @ PA @ [D U] = [A_d, 0]``, ``U.T @ PA @ [D U] = [A_r, A_u]`` and
    ``C @ [D U] = [C_d, 0]``.
    """

    D: np.ndarray
    U: np.ndarray
    A_d: np.ndarray
    A_r: np.ndarray
    A_u: np.ndarray
    C_d: np.ndarray
    mode: str

    @property
    def nu(self) -> int:
        return self.U.shape[1]

    @property
    def n_d(self) -> int:
        return self.D.shape[1]

    @property
    def basis(self) -> np.ndarray:
        return np.hstack([self.D, self.U])

    def residuals(self, PA, C) -> dict[str, float]:
        """Norms that vanish for an exact decomposition."""
        PA = np.asarray(PA, float)
        C = np.asarray(C, float)
        T = self.basis
        n = PA.shape[0]
        blocks = np.block([[self.A_d, np.zeros((self.n_d, self.nu))], [self.A_r, self.A_u]])
        return {
            "upper_block": _norm(self.D.T @ PA @ self.U),
            "output_on_U": _norm(C @ self.U),
            "orthonormality": _norm(T.T @ T - np.eye(n)),
            "reconstruction": _norm(T @ blocks @ T.T - PA),
        }


def _norm(M) -> float:
    return float(np.linalg.norm(M, 2)) if np.size(M) else 0.0


def _from_bases(PA, C, D, U, mode) -> NodeDecomposition:
    return NodeDecomposition(
        D=D,
        U=U,
        A_d=D.T @ PA @ D,
        A_r=U.T @ PA @ D,
        A_u=U.T @ PA @ U,
        C_d=C @ D,
        mode=mode,
    )


def _check_pair(PA, C):
    PA = as_matrix(PA, "P_iA")
    C = as_matrix(C, "C_i")
    if PA.shape[0] != PA.shape[1]:
        raise InvalidScenario(f"P_iA must be square, got {PA.shape}")
    if C.shape[1] != PA.shape[0]:
        raise InvalidScenario(f"C_i has {C.shape[1]} columns, expected {PA.shape[0]}")
    return PA, C


def detectability_decomposition(
    PA, C, tol: Tolerance = DEFAULT_TOL, strict: bool = False
) -> NodeDecomposition:
    """U spans the unobservable modes of (PA, C) with |lambda| >= 1 - margin.

    The unobservable subspace is PA-invariant, so PA restricted to it is
    split at the unit circle and the nonstable part lifted back.
    """
    PA, C = _check_pair(PA, C)
    N = unobservable_subspace(PA, C, tol)
    if N.shape[1] == 0:
        U = N
    else:
        _, nonstable = unit_circle_split(N.T @ PA @ N, tol, strict=strict)
        U = N @ nonstable
        # re-orthonormalize against round-off in the lift
        U = np.linalg.qr(U)[0] if U.shape[1] else U
    return _from_bases(PA, C, orthogonal_complement(U, tol), U, DETECTABILITY)


def observability_decomposition(PA, C, tol: Tolerance = DEFAULT_TOL) -> NodeDecomposition:
    """D spans the row space of the observability matrix, U its complement."""
    PA, C = _check_pair(PA, C)
    D = orthonormal_image_basis(observability_matrix(PA, C).T, tol)
    return _from_bases(PA, C, D, orthogonal_complement(D, tol), OBSERVABILITY)


def decompose(PA, C, mode: str = DETECTABILITY, tol: Tolerance = DEFAULT_TOL) -> NodeDecomposition:
    if mode == DETECTABILITY:
        return detectability_decomposition(PA, C, tol)
    if mode == OBSERVABILITY:
        return observability_decomposition(PA, C, tol)
    raise InvalidScenario(f"unknown decomposition mode {mode!r}; expected one of {MODES}")
