"""Exact reference solutions for small QPs by active-set enumeration.

Every candidate active set ``S`` fixes the multipliers through the reduced
dual system ``K_SS mu_S = -c_S`` with ``K = A H^-1 A'`` and
``c = A H^-1 G + B``; the candidate is accepted when ``mu_S >= 0`` and the
recovered primal point is feasible. Subsets are visited depth first in
lexicographic order, and a subtree is pruned as soon as its rows become
linearly dependent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dual_pgm import primal_objective

__all__ = ["KktSolution", "OracleError", "active_set_solve", "kkt_residual", "MAX_CONSTRAINTS"]

MAX_CONSTRAINTS = 24
FEAS_TOL = 1e-8


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class KktSolution:
    xi: np.ndarray
    mu: np.ndarray
    active_set: tuple
    objective: float


def kkt_residual(problem, xi, mu):
    """Stationarity, primal feasibility and complementarity residuals (inf-norm)."""
    xi = np.asarray(xi, dtype=float)
    mu = np.asarray(mu, dtype=float)
    stat = np.abs(problem.H @ xi + problem.G + problem.A.T @ mu).max(initial=0.0)
    slack = problem.A @ xi - problem.B
    feas = np.maximum(slack, 0.0).max(initial=0.0)
    comp = np.abs(mu * slack).max(initial=0.0)
    return float(stat), float(feas), float(comp)


def active_set_solve(problem, max_constraints=MAX_CONSTRAINTS, tol=FEAS_TOL):
    """Exhaustively enumerate active sets and return the optimal KKT point.

    Raises
    ------
    OracleError
        If ``n_c`` exceeds the enumeration budget or no candidate is feasible.
    """
    n_c, n_v = problem.n_c, problem.n_v
    if n_c > max_constraints:
        raise OracleError(f"n_c={n_c} exceeds enumeration budget of {max_constraints}")
    A, B = problem.A, problem.B
    HinvAt = problem.solve_h(A.T)
    xi_free = problem.solve_h(-problem.G)
    K = A @ HinvAt
    c = A @ (-xi_free) + B
    scale = 1.0 + np.abs(problem.G).max(initial=0.0)
    row_scale = 1.0 + np.abs(A).sum(axis=1) if n_c else np.ones(0)

    best = None

    def consider(S, mu_S):
        nonlocal best
        if np.any(mu_S < -tol * scale):
            return
        mu = np.zeros(n_c)
        mu[list(S)] = np.maximum(mu_S, 0.0)
        xi = xi_free - HinvAt @ mu
        if n_c and np.any(A @ xi - B > tol * (row_scale + np.abs(B))):
            return
        obj = primal_objective(problem, xi)
        # strictly convex: candidates agree up to rounding, keep the first minimum
        if best is None or obj < best.objective - 1e-12 * (1.0 + abs(obj)):
            best = KktSolution(xi=xi, mu=mu, active_set=tuple(S), objective=obj)

    def visit(S, start):
        if S:
            idx = list(S)
            K_SS = K[np.ix_(idx, idx)]
            # rows dependent => every superset is singular as well
            if np.linalg.matrix_rank(A[idx]) < len(idx):
                return
            consider(S, np.linalg.solve(K_SS, -c[idx]))
        else:
            consider(S, np.zeros(0))
        if len(S) >= n_v:
            return
        for j in range(start, n_c):
            visit(S + (j,), j + 1)

    visit((), 0)
    if best is None:
        raise OracleError("no feasible KKT candidate: problem appears primal infeasible")
    return best
