"""Dense real-matrix primitives: rank, bases, pseudo-inverse, unit-circle split."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from duio.errors import (
    BoundaryAmbiguityWarning,
    BoundaryAmbiguous,
    InvalidMatrix,
    RankDeficient,
)


@dataclass(frozen=True)
class Tolerance:
    """Numerical thresholds shared by every rank and residual decision.

    rank_tol
        Singular values at or below ``rank_tol * sigma_max`` count as zero.
    stability_margin
        Eigenvalues with ``|lambda| < 1 - stability_margin`` are stable.
    zero_tol
        Absolute threshold for residuals that should vanish.
    """

    rank_tol: float = 1e-9
    stability_margin: float = 1e-6
    zero_tol: float = 1e-8

    def __post_init__(self):
        for name in ("rank_tol", "stability_margin", "zero_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


DEFAULT_TOL = Tolerance()


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float array or raise InvalidMatrix."""
    try:
        arr = np.asarray(M, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidMatrix(f"{name}: not a real matrix ({exc})") from None
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InvalidMatrix(f"{name}: expected 2-D array, got {arr.ndim}-D")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix(f"{name}: non-finite entries")
    return arr


def _square(M, name="matrix") -> np.ndarray:
    arr = as_matrix(M, name)
    if arr.shape[0] != arr.shape[1]:
        raise InvalidMatrix(f"{name}: expected square matrix, got {arr.shape}")
    return arr


def _svd_rank(s: np.ndarray, tol: Tolerance) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol.rank_tol * s[0]))


def rank_with_tolerance(M, tol: Tolerance = DEFAULT_TOL) -> int:
    M = as_matrix(M)
    if M.size == 0:
        return 0
    return _svd_rank(np.linalg.svd(M, compute_uv=False), tol)


def orthonormal_image_basis(M, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal columns spanning im(M); ``rows x 0`` when M vanishes."""
    M = as_matrix(M)
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    return u[:, : _svd_rank(s, tol)].copy()


def kernel_basis(M, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal columns spanning ker(M)."""
    M = as_matrix(M)
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n)
    if n == 0:
        return np.zeros((0, 0))
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    return vt[_svd_rank(s, tol):].T.copy()


def orthogonal_complement(Q, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the complement of span(Q) in R^rows."""
    Q = as_matrix(Q)
    if Q.shape[1] == 0:
        return np.eye(Q.shape[0])
    return kernel_basis(Q.T, tol)


def left_pseudoinverse(M, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """(M^T M)^-1 M^T for a full column rank M."""
    M = as_matrix(M)
    r = rank_with_tolerance(M, tol) if M.size else 0
    if r < M.shape[1]:
        raise RankDeficient(
            f"left inverse needs full column rank: rank {r} < {M.shape[1]} columns"
        )
    if M.shape[1] == 0:
        return np.zeros((0, M.shape[0]))
    # least-squares solve is better conditioned than forming (M^T M)^-1
    return np.linalg.lstsq(M, np.eye(M.shape[0]), rcond=None)[0]


def spectral_radius(M) -> float:
    M = _square(M)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


class UnitCircleSplit(NamedTuple):
    stable: np.ndarray
    nonstable: np.ndarray


def unit_circle_split(
    M, tol: Tolerance = DEFAULT_TOL, strict: bool = False
) -> UnitCircleSplit:
    """Split R^n into the stable and nonstable generalized eigenspaces of M.

    Stable means ``|lambda| < 1 - stability_margin``. Both returned bases are
    orthonormal and M-invariant; together they span R^n (a direct sum, not
    an orthogonal one).

    Eigenvalues within ``stability_margin`` of the unit circle are routed to
    the nonstable part. With ``strict=True`` they raise BoundaryAmbiguous,
    otherwise a BoundaryAmbiguityWarning is emitted.
    """
    M = _square(M)
    n = M.shape[0]
    if n == 0:
        return UnitCircleSplit(np.zeros((0, 0)), np.zeros((0, 0)))
    radius = 1.0 - tol.stability_margin
    eig = np.linalg.eigvals(M)
    ambiguous = eig[np.abs(np.abs(eig) - 1.0) <= tol.stability_margin]
    if ambiguous.size:
        msg = f"eigenvalues {ambiguous} lie within the stability margin of |z| = 1"
        if strict:
            raise BoundaryAmbiguous(msg, ambiguous)
        warnings.warn(msg + "; treated as nonstable", BoundaryAmbiguityWarning)

    def ordered(inside: bool):
        def select(re, im):
            return (np.hypot(re, im) < radius) == inside

        _, Z, k = sla.schur(M, output="real", sort=select)
        return Z[:, :k].copy()

    return UnitCircleSplit(ordered(True), ordered(False))


def observability_matrix(A, C) -> np.ndarray:
    """Stacked [C; CA; ...; CA^(n-1)]."""
    A = _square(A, "A")
    C = as_matrix(C, "C")
    if C.shape[1] != A.shape[0]:
        raise InvalidMatrix(f"C has {C.shape[1]} columns, A is {A.shape[0]}x{A.shape[0]}")
    blocks = [C]
    for _ in range(A.shape[0] - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks) if blocks else np.zeros((0, 0))


def is_observable(A, C, tol: Tolerance = DEFAULT_TOL) -> bool:
    A = _square(A, "A")
    if A.shape[0] == 0:
        return True
    return rank_with_tolerance(observability_matrix(A, C), tol) == A.shape[0]


def unobservable_subspace(A, C, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the largest A-invariant subspace inside ker(C)."""
    return kernel_basis(observability_matrix(A, C), tol)
