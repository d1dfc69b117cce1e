"""Condensing a linear MPC problem into the dense QP ``(H, G, A, B)``.

Predicted states ``x_1 .. x_N`` are eliminated through

    x = A1 x_k + A2 u,

which leaves a QP in the stacked input trajectory ``u = (u_0, .., u_{N-1})``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .dual_pgm import QpProblem, slater_point

__all__ = [
    "MpcSpec",
    "PredictionMatrices",
    "SlaterViolation",
    "DareError",
    "prediction_matrices",
    "dare",
    "dare_residual",
    "condense",
    "constant_term",
    "simulate",
    "trajectory_cost",
    "first_input",
]


class SlaterViolation(ValueError):
    """Condensed constraints admit no strictly feasible input trajectory."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DareError(ArithmeticError):
    pass


def _as_matrix(name, value, rows=None, cols=None):
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if cols is not None and arr.size == cols and rows in (None, 1):
            arr = arr.reshape(1, cols)
        elif rows is not None and arr.size == rows:
            arr = arr.reshape(rows, 1)
        elif arr.size == 0:
            arr = arr.reshape(0, cols or 0)
        else:
            raise ValueError(f"{name}: cannot interpret shape {arr.shape}")
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a matrix, got ndim={arr.ndim}")
    if rows is not None and arr.shape[0] != rows:
        raise ValueError(f"{name}: expected {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise ValueError(f"{name}: expected {cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite entries")
    return arr


def _check_spd(name, M, tol=1e-10):
    scale = max(np.abs(M).max(initial=0.0), 1.0)
    if np.abs(M - M.T).max(initial=0.0) > tol * scale:
        raise ValueError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(0.5 * (M + M.T))[0] <= 0.0:
        raise ValueError(f"{name} is not positive definite")


@dataclass(frozen=True, eq=False)
class MpcSpec:
    """Linear plant, box-type constraint rows, weights and horizon.

    Constraints read ``F x <= 1`` on every predicted state, ``Gc u <= 1`` on
    every input and ``Phi x_N <= 1`` on the terminal state. ``P=None`` means
    the DARE solution; ``Phi=None`` means ``Phi = F``; pass an empty array for
    no terminal rows.
    """

    A: np.ndarray
    B: np.ndarray
    F: np.ndarray
    Gc: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    N: int
    P: np.ndarray | None = None
    Phi: np.ndarray | None = None
    P_from_dare: bool = field(init=False, default=False)

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {A.shape}")
        B = _as_matrix("B", self.B, rows=n)
        m = B.shape[1]
        F = _as_matrix("F", self.F, cols=n)
        Gc = _as_matrix("Gc", self.Gc, cols=m)
        Q = _as_matrix("Q", self.Q, rows=n, cols=n)
        R = _as_matrix("R", self.R, rows=m, cols=m)
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be an integer >= 1, got {self.N!r}")
        _check_spd("Q", Q)
        _check_spd("R", R)
        from_dare = self.P is None
        P = dare(A, B, Q, R) if from_dare else _as_matrix("P", self.P, rows=n, cols=n)
        _check_spd("P", P)
        Phi = F if self.Phi is None else _as_matrix("Phi", self.Phi, cols=n)
        for name, val in (("A", A), ("B", B), ("F", F), ("Gc", Gc), ("Q", Q),
                          ("R", R), ("P", P), ("Phi", Phi)):
            val.flags.writeable = False
            object.__setattr__(self, name, val)
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "P_from_dare", from_dare)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def n_v(self):
        return self.N * self.m

    @property
    def n_c(self):
        return self.N * self.F.shape[0] + self.Phi.shape[0] + self.N * self.Gc.shape[0]

    def to_dict(self):
        return {
            "A": self.A.tolist(), "B": self.B.tolist(), "F": self.F.tolist(),
            "Gc": self.Gc.tolist(), "Q": self.Q.tolist(), "R": self.R.tolist(),
            "N": self.N, "P": self.P.tolist(), "Phi": self.Phi.tolist(),
        }


@dataclass(frozen=True)
class PredictionMatrices:
    A1: np.ndarray
    A2: np.ndarray


def prediction_matrices(A, B, N):
    """Stacked free response ``A1`` (Nn x n) and forced response ``A2`` (Nn x Nm)."""
    A = _as_matrix("A", A)
    n = A.shape[0]
    B = _as_matrix("B", B, rows=n)
    m = B.shape[1]
    if int(N) != N or N < 1:
        raise ValueError(f"N must be an integer >= 1, got {N!r}")
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    A1 = np.vstack(powers[1:])
    A2 = np.zeros((N * n, N * m))
    for i in range(N):
        for j in range(i + 1):
            A2[i * n:(i + 1) * n, j * m:(j + 1) * m] = powers[i - j] @ B
    return PredictionMatrices(A1, A2)


def _riccati_map(A, B, Q, R, P):
    BtPA = B.T @ P @ A
    return Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA)


def dare_residual(A, B, Q, R, P):
    """Relative Frobenius residual of the Riccati fixed point."""
    A, B, Q, R, P = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R, P))
    return np.linalg.norm(P - _riccati_map(A, B, Q, R, P)) / np.linalg.norm(P)


def dare(A, B, Q, R, max_iter=10_000, tol=1e-12, seed=None):
    """Solve the discrete algebraic Riccati equation by fixed-point iteration.

    Starts from ``P = Q`` and iterates the Riccati map until the relative
    change drops below ``tol``.
    """
    A = _as_matrix("A", A)
    B = _as_matrix("B", B, rows=A.shape[0])
    Q = _as_matrix("Q", Q, rows=A.shape[0], cols=A.shape[0])
    R = _as_matrix("R", R, rows=B.shape[1], cols=B.shape[1])
    P = Q.copy()
    for _ in range(max_iter):
        P_new = _riccati_map(A, B, Q, R, P)
        P_new = 0.5 * (P_new + P_new.T)
        if not np.all(np.isfinite(P_new)):
            break
        if np.linalg.norm(P_new - P) <= tol * np.linalg.norm(P_new):
            P = P_new
            if dare_residual(A, B, Q, R, P) <= 1e-8:
                return P
            break
        P = P_new
    where = "" if seed is None else f" (plant seed {seed})"
    raise DareError(f"Riccati iteration did not converge in {max_iter} steps{where}")


def _stacked_constraint_rows(spec):
    N, n = spec.N, spec.n
    F_tilde = block_diag(*([spec.F] * N)) if spec.F.shape[0] else np.zeros((0, N * n))
    Phi_tilde = np.hstack([np.zeros((spec.Phi.shape[0], (N - 1) * n)), spec.Phi])
    F_bar = np.vstack([F_tilde, Phi_tilde])
    G_bar = block_diag(*([spec.Gc] * N)) if spec.Gc.shape[0] else np.zeros((0, N * spec.m))
    return F_bar, G_bar


def condense(spec, x, check_slater=True):
    """Dense QP in the input trajectory for current state ``x``.

    Returns a :class:`QpProblem` with ``H = A2' Q1 A2 + R1``,
    ``G = A2' Q1 A1 x``, ``A = [F_bar A2; G_bar]`` and
    ``B = [1 - F_bar A1 x; 1]``. The constant cost is available from
    :func:`constant_term`.

    Raises
    ------
    SlaterViolation
        When no input trajectory satisfies the constraints strictly.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (spec.n,):
        raise ValueError(f"x must have length {spec.n}, got {x.shape[0]}")
    pm = prediction_matrices(spec.A, spec.B, spec.N)
    Q1 = block_diag(*([spec.Q] * (spec.N - 1) + [spec.P]))
    R1 = block_diag(*([spec.R] * spec.N))
    H = pm.A2.T @ Q1 @ pm.A2 + R1
    H = 0.5 * (H + H.T)
    G = pm.A2.T @ Q1 @ pm.A1 @ x
    F_bar, G_bar = _stacked_constraint_rows(spec)
    A_qp = np.vstack([F_bar @ pm.A2, G_bar])
    B_qp = np.concatenate([1.0 - F_bar @ pm.A1 @ x, np.ones(G_bar.shape[0])])
    problem = QpProblem(H, G, A_qp, B_qp)
    if check_slater and np.any(B_qp <= 0.0) and slater_point(problem) is None:
        row = int(np.argmin(B_qp))
        raise SlaterViolation(
            f"condensed constraints have no strictly feasible point; row {row} "
            f"has bound {B_qp[row]:.6g} at u = 0", row=row)
    return problem


def constant_term(spec, x):
    """Input-independent part of the cost.

    Includes the stage-0 state cost ``0.5 x' Q x`` so that
    ``0.5 u'Hu + G'u + constant_term`` equals the simulated trajectory cost.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    pm = prediction_matrices(spec.A, spec.B, spec.N)
    Q1 = block_diag(*([spec.Q] * (spec.N - 1) + [spec.P]))
    free = pm.A1 @ x
    return float(0.5 * free @ Q1 @ free + 0.5 * x @ spec.Q @ x)


def simulate(spec, x, u):
    """Roll the plant forward; returns states ``x_0 .. x_N`` as rows."""
    u = np.asarray(u, dtype=float).reshape(spec.N, spec.m)
    xs = [np.asarray(x, dtype=float).reshape(-1)]
    for k in range(spec.N):
        xs.append(spec.A @ xs[-1] + spec.B @ u[k])
    return np.array(xs)


def trajectory_cost(spec, x, u):
    xs = simulate(spec, x, u)
    u = np.asarray(u, dtype=float).reshape(spec.N, spec.m)
    stage = sum(xs[k] @ spec.Q @ xs[k] + u[k] @ spec.R @ u[k] for k in range(spec.N))
    return float(0.5 * stage + 0.5 * xs[-1] @ spec.P @ xs[-1])


def first_input(result, m):
    """First ``m`` entries of the optimal input trajectory."""
    xi = np.asarray(getattr(result, "xi_star", result), dtype=float)
    if m < 1 or xi.size % m:
        raise ValueError(f"trajectory length {xi.size} is not a multiple of m={m}")
    return xi[:m].copy()
