"""Cholesky change of variables that turns the QP curvature into the identity.

With ``H = Z' Z`` (``Z`` upper triangular) and ``psi = Z xi`` the QP becomes

    minimize 0.5 psi' psi + (Z^-T G)' psi   s.t.  (A Z^-1) psi <= B,

so primal recovery inside the solver no longer needs triangular solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky as _cholesky, solve_triangular

from .dual_pgm import QpProblem

__all__ = ["CholeskyFactor", "cholesky", "transform", "recover"]


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """Upper-triangular ``Z`` with positive diagonal and ``H = Z' Z``."""

    Z: np.ndarray

    def __post_init__(self):
        Z = np.triu(np.array(self.Z, dtype=float))
        if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
            raise ValueError(f"Z must be square, got shape {Z.shape}")
        if np.any(np.diag(Z) <= 0.0):
            raise ValueError("Z must have a strictly positive diagonal")
        Z.flags.writeable = False
        object.__setattr__(self, "Z", Z)


def cholesky(H):
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"H must be square, got shape {H.shape}")
    if not np.allclose(H, H.T, rtol=1e-12, atol=0.0):
        raise ValueError("H is not symmetric")
    try:
        Z = _cholesky(H, lower=False)
    except LinAlgError as exc:
        raise ValueError("H is not positive definite (non-positive pivot)") from exc
    return CholeskyFactor(Z)


def transform(problem, stop_in_original=True):
    """Return ``(identity-curvature problem, factor)``.

    With ``stop_in_original`` the returned problem carries ``Z`` so the
    solver's step-length stop rule is evaluated on ``xi = Z^-1 psi``; the
    transformed solve then stops at the same iteration as the original one.
    """
    factor = cholesky(problem.H)
    Z = factor.Z
    G_t = solve_triangular(Z, problem.G, trans="T")
    # A Z^-1 = (Z^-T A')'
    A_t = solve_triangular(Z, problem.A.T, trans="T").T if problem.n_c else problem.A.copy()
    out = QpProblem(np.eye(problem.n_v), G_t, A_t, problem.B, identity_curvature=True,
                    step_factor=Z if stop_in_original else None)
    return out, factor


def recover(factor, psi):
    """Solve ``Z xi = psi`` by back substitution."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape[0] != factor.Z.shape[0]:
        raise ValueError(f"psi must have length {factor.Z.shape[0]}, got {psi.shape[0]}")
    return solve_triangular(factor.Z, psi, lower=False)
