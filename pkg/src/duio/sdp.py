"""Solver adapter for linear matrix inequality programs.

A program is ``minimize c @ x`` subject to ``F_k(x) >= margin_k * I`` where
each ``F_k(x) = F0 + sum_j x_j F_j`` is symmetric and affine in the decision
vector ``x``. The adapter hands it to cvxpy and walks a list of conic
solvers until one reports an optimal point.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import cvxpy as cp
import numpy as np

log = logging.getLogger(__name__)

DEFAULT_SOLVERS = ("CLARABEL", "CVXOPT", "SCS")

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
INACCURATE = "inaccurate"
FAILED = "failed"


@dataclass(eq=False)
class AffineLmi:
    """F0 + sum_j x_j Fs[j] >= margin * I (all matrices symmetric)."""

    F0: np.ndarray
    Fs: np.ndarray  # shape (nvar, n, n)
    margin: float = 0.0
    name: str = ""

    @property
    def size(self) -> int:
        return self.F0.shape[0]

    def evaluate(self, x) -> np.ndarray:
        return self.F0 + np.tensordot(np.asarray(x, float), self.Fs, axes=1)

    def min_eigenvalue(self, x) -> float:
        """Smallest eigenvalue of F(x); the margin is not subtracted."""
        F = self.evaluate(x)
        return float(np.linalg.eigvalsh(0.5 * (F + F.T))[0])

    @classmethod
    def from_function(
        cls, fn: Callable[[np.ndarray], np.ndarray], nvar: int, margin: float = 0.0, name: str = ""
    ) -> "AffineLmi":
        """Recover the affine coefficients of ``fn`` by probing unit vectors."""
        F0 = np.asarray(fn(np.zeros(nvar)), float)
        Fs = np.empty((nvar,) + F0.shape)
        for j in range(nvar):
            e = np.zeros(nvar)
            e[j] = 1.0
            Fs[j] = np.asarray(fn(e), float) - F0
        return cls(0.5 * (F0 + F0.T), 0.5 * (Fs + Fs.transpose(0, 2, 1)), margin, name)


@dataclass
class SdpSolution:
    x: np.ndarray | None
    status: str
    solver: str | None
    objective: float | None = None
    violation: float = 0.0
    detail: str = ""


def lmi_violation(lmis: Sequence[AffineLmi], x) -> float:
    """Largest amount by which any F_k(x) falls short of its margin."""
    return max((lmi.margin - lmi.min_eigenvalue(x) for lmi in lmis), default=0.0)


def solve_lmi_program(
    c: Sequence[float],
    lmis: Sequence[AffineLmi],
    solvers: Sequence[str] = DEFAULT_SOLVERS,
    certificate_tol: float = 1e-7,
    repairable_tol: float = 1e-8,
) -> SdpSolution:
    """Minimize ``c @ x`` subject to every ``lmis[k]``.

    Solvers are tried in order. The first answer whose LMIs clear their
    margins within ``certificate_tol`` on a dense eigenvalue check is
    returned as OPTIMAL. Otherwise the least-violating answer comes back as
    INACCURATE so the caller may repair it; an answer whose shortfall is below
    ``repairable_tol`` relative to the size of the LMI entries ends the search
    early. FAILED means no solver produced a point at all. Infeasibility is
    reported as soon as a solver proves it.
    """
    c = np.asarray(c, float)
    x = cp.Variable(c.size)
    constraints = []
    for lmi in lmis:
        n = lmi.size
        flat = lmi.Fs.reshape(c.size, n * n)
        expr = cp.reshape(lmi.F0.reshape(-1) + flat.T @ x, (n, n), order="C")
        constraints.append(0.5 * (expr + expr.T) >> lmi.margin * np.eye(n))
    problem = cp.Problem(cp.Minimize(c @ x), constraints)

    available = set(cp.installed_solvers())
    notes = []
    best = None
    for solver in solvers:
        if solver not in available:
            continue
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                problem.solve(solver=solver)
        except cp.error.SolverError as exc:
            notes.append(f"{solver}: {exc}")
            continue
        status = problem.status
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SdpSolution(None, INFEASIBLE, solver, detail=status)
        if x.value is None:
            notes.append(f"{solver}: {status}")
            continue
        xv = np.array(x.value, dtype=float)
        gap = lmi_violation(lmis, xv)
        sol = SdpSolution(xv, OPTIMAL, solver, float(c @ xv), gap, status)
        if gap <= certificate_tol:
            return sol
        notes.append(f"{solver}: {status}, certificate short by {gap:.2e}")
        if best is None or gap < best.violation:
            best = sol
        scale = max(1.0, max(np.abs(lmi.evaluate(xv)).max() for lmi in lmis))
        if gap <= repairable_tol * scale:
            break
    if best is not None:
        best.status = INACCURATE
        best.detail = "; ".join(notes)
        return best
    log.debug("no SDP solver succeeded: %s", "; ".join(notes))
    return SdpSolution(None, FAILED, None, detail="; ".join(notes))
