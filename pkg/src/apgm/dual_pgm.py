"""Dual accelerated proximal gradient solver for inequality-constrained QPs.

Solves

    minimize    0.5 * xi' H xi + G' xi
    subject to  A xi <= B

through its dual ``min_{mu >= 0} f(mu)`` with

    f(mu) = 0.5 (A' mu + G)' H^-1 (A' mu + G) + B' mu,

using projected gradient steps of length ``1/L`` and the momentum weights
``(tau_p - 1) / tau_{p+1}`` taken from a :class:`~apgm.param_table.LookupTable`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .param_table import LookupTable, build_table

__all__ = [
    "QpProblem",
    "SolverOptions",
    "SolveResult",
    "StopReason",
    "dual_objective",
    "dual_gradient",
    "lipschitz_constant",
    "min_eigenvalue",
    "primal_from_dual",
    "primal_objective",
    "project_nonneg",
    "solve",
    "theoretical_primal_bound",
    "theoretical_dual_gap_bound",
]


class StopReason:
    CONVERGED = "converged"
    ITERATION_CAP = "iteration-cap"
    DIVERGENCE = "divergence-guard"


def _power_iteration(apply, n, tol=1e-8, max_iter=10_000):
    """Largest eigenvalue of a symmetric PSD operator given as a callable."""
    # ramped seed: a plain ones vector is annihilated by operators built from
    # mirrored constraint pairs (rows a and -a)
    v = 1.0 + np.arange(n, dtype=float) / max(n, 1)
    v /= np.linalg.norm(v)
    lam = 0.0
    delta_prev = np.inf
    for _ in range(max_iter):
        w = apply(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        lam_new = float(v @ w)
        v = w / nw
        delta = abs(lam_new - lam)
        # Rayleigh increments shrink geometrically; the remaining error is
        # about delta * q / (1 - q) for contraction ratio q
        q = min(delta / delta_prev, 0.999) if delta_prev > 0 else 0.0
        if delta <= tol * lam_new and delta * q / (1.0 - q) <= 0.1 * tol * lam_new:
            return lam_new
        lam, delta_prev = lam_new, delta
    return lam


@dataclass(frozen=True, eq=False)
class QpProblem:
    """Dense QP data ``(H, G, A, B)`` with a cached Cholesky factor of ``H``.

    Parameters
    ----------
    H : (n_v, n_v) array_like
        Symmetric positive definite curvature.
    G : (n_v,) array_like
        Linear objective term.
    A : (n_c, n_v) array_like
        Constraint rows.
    B : (n_c,) array_like
        Constraint bounds.
    check_slater : bool, optional
        Verify that a strictly feasible point exists.
    identity_curvature : bool, optional
        Declare ``H = I`` so that primal recovery skips the triangular solves.
    step_factor : (n_v, n_v) array_like, optional
        Upper-triangular ``Z`` of a change of variables ``psi = Z xi``. When
        set, the solver's stop rule measures steps as ``||Z^-1 (psi^p -
        psi^{p-1})||`` so that it acts on the original variable.
    """

    H: np.ndarray
    G: np.ndarray
    A: np.ndarray
    B: np.ndarray
    check_slater: bool = False
    identity_curvature: bool = False
    step_factor: np.ndarray | None = None
    _chol: tuple = field(init=False, repr=False)
    _cache: dict = field(init=False, repr=False)

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        G = np.array(self.G, dtype=float).reshape(-1)
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float).reshape(-1)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError(f"H must be square, got shape {H.shape}")
        n_v = H.shape[0]
        if G.shape != (n_v,):
            raise ValueError(f"G must have length {n_v}, got {G.shape[0]}")
        if A.ndim == 1 and A.size == 0:
            A = A.reshape(0, n_v)
        if A.ndim != 2 or A.shape[1] != n_v:
            raise ValueError(f"A must have {n_v} columns, got shape {A.shape}")
        if B.shape != (A.shape[0],):
            raise ValueError(f"B must have length {A.shape[0]}, got {B.shape[0]}")
        scale = max(np.abs(H).max(initial=0.0), 1e-300)
        if np.abs(H - H.T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("H is not symmetric")
        H = 0.5 * (H + H.T)
        if self.identity_curvature and not np.array_equal(H, np.eye(n_v)):
            raise ValueError("identity_curvature set but H is not the identity")
        try:
            chol = cho_factor(H, lower=False)
        except np.linalg.LinAlgError as exc:
            raise ValueError("H is not positive definite") from exc
        if np.any(np.diag(chol[0]) <= 0.0):
            raise ValueError("H is not positive definite")
        for name, val in (("H", H), ("G", G), ("A", A), ("B", B)):
            if not np.all(np.isfinite(val)):
                raise ValueError(f"{name} contains non-finite entries")
            val.flags.writeable = False
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if self.step_factor is not None:
            Z = np.triu(np.array(self.step_factor, dtype=float))
            if Z.shape != (n_v, n_v) or np.any(np.diag(Z) <= 0.0):
                raise ValueError("step_factor must be upper triangular with positive diagonal")
            Z.flags.writeable = False
            object.__setattr__(self, "step_factor", Z)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_cache", {})
        if self.check_slater:
            witness = slater_point(self)
            if witness is None:
                raise ValueError("no strictly feasible point: Slater condition fails")

    @property
    def n_v(self):
        return self.H.shape[0]

    @property
    def n_c(self):
        return self.A.shape[0]

    def step_norm(self, d):
        """Length of a primal step, in original coordinates if transformed."""
        if self.step_factor is not None:
            d = solve_triangular(self.step_factor, d, lower=False)
        return float(np.linalg.norm(d))

    def solve_h(self, rhs):
        """Apply ``H^-1`` through the cached factorization."""
        if self.identity_curvature:
            return np.array(rhs, dtype=float)
        return cho_solve(self._chol, rhs)

    @property
    def upper_factor(self):
        """Upper-triangular ``Z`` with ``H = Z' Z``."""
        return np.triu(self._chol[0])

    @property
    def L(self):
        if "L" not in self._cache:
            self._cache["L"] = lipschitz_constant(self)
        return self._cache["L"]

    @property
    def sigma_min(self):
        if "sigma_min" not in self._cache:
            self._cache["sigma_min"] = min_eigenvalue(self)
        return self._cache["sigma_min"]


def slater_point(problem):
    """Return a strictly feasible point or ``None``.

    Maximizes the uniform slack ``s`` in ``A xi + s <= B`` by linear
    programming (slack capped at 1 to keep the LP bounded).
    """
    from scipy.optimize import linprog

    n_v, n_c = problem.n_v, problem.n_c
    if n_c == 0:
        return np.zeros(n_v)
    c = np.zeros(n_v + 1)
    c[-1] = -1.0
    A_ub = np.hstack([problem.A, np.ones((n_c, 1))])
    bounds = [(None, None)] * n_v + [(None, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=problem.B, bounds=bounds, method="highs")
    if res.status != 0 or res.x[-1] <= 1e-9:
        return None
    return res.x[:n_v]


def lipschitz_constant(problem, tol=1e-8, max_iter=10_000):
    """Largest eigenvalue of ``A H^-1 A'`` by power iteration."""
    A = problem.A
    if problem.n_c == 0:
        return 0.0
    return _power_iteration(lambda v: A @ problem.solve_h(A.T @ v), problem.n_c, tol, max_iter)


def min_eigenvalue(problem, tol=1e-8, max_iter=10_000):
    """Smallest eigenvalue of ``H`` by inverse power iteration."""
    if problem.identity_curvature:
        return 1.0
    lam_inv = _power_iteration(problem.solve_h, problem.n_v, tol, max_iter)
    return 1.0 / lam_inv


def _check_mu(problem, mu):
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if mu.shape != (problem.n_c,):
        raise ValueError(f"mu must have length {problem.n_c}, got {mu.shape[0]}")
    return mu


def primal_from_dual(problem, mu):
    """Primal minimizer of the Lagrangian, ``H^-1 (-A' mu - G)``."""
    mu = _check_mu(problem, mu)
    return problem.solve_h(-problem.A.T @ mu - problem.G)


def dual_objective(problem, mu):
    mu = _check_mu(problem, mu)
    r = problem.A.T @ mu + problem.G
    return float(0.5 * r @ problem.solve_h(r) + problem.B @ mu)


def dual_gradient(problem, mu):
    mu = _check_mu(problem, mu)
    return problem.A @ problem.solve_h(problem.A.T @ mu + problem.G) + problem.B


def primal_objective(problem, xi):
    xi = np.asarray(xi, dtype=float)
    return float(0.5 * xi @ problem.H @ xi + problem.G @ xi)


def project_nonneg(v):
    """Componentwise ``max(0, v)``; ``-0.0`` comes out as ``+0.0``."""
    out = np.maximum(np.asarray(v, dtype=float), 0.0)
    out += 0.0
    return out


@dataclass
class SolverOptions:
    alpha: int = 2
    stop_tol: float = 1e-3
    max_iters: int = 100_000
    record_history: bool = False
    mu0: np.ndarray | None = None

    def __post_init__(self):
        if int(self.alpha) != self.alpha or self.alpha < 2:
            raise ValueError(f"alpha must be an integer >= 2, got {self.alpha!r}")
        if not self.stop_tol > 0:
            raise ValueError(f"stop_tol must be positive, got {self.stop_tol!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters!r}")
        if self.mu0 is not None:
            self.mu0 = np.asarray(self.mu0, dtype=float).reshape(-1)
            if np.any(self.mu0 < 0) or not np.all(np.isfinite(self.mu0)):
                raise ValueError("mu0 must be finite and componentwise nonnegative")


@dataclass
class SolveResult:
    xi_star: np.ndarray
    mu_star: np.ndarray
    iterations: int
    stop_reason: str
    elapsed: float
    history: dict | None = None
    diagnostics: str = ""

    @property
    def converged(self):
        return self.stop_reason == StopReason.CONVERGED

    def to_dict(self):
        out = {
            "xi": self.xi_star.tolist(),
            "mu": self.mu_star.tolist(),
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "elapsed_s": self.elapsed,
        }
        if self.history is not None:
            out["history"] = {k: np.asarray(v).tolist() for k, v in self.history.items()}
        if self.diagnostics:
            out["diagnostics"] = self.diagnostics
        return out


_TABLE_CHUNK = 1024


def solve(problem, table=None, opts=None):
    """Run the accelerated dual projected gradient iteration.

    Parameters
    ----------
    problem : QpProblem
    table : LookupTable, optional
        Momentum parameters; built on demand for ``opts.alpha`` when omitted
        and extended in place of the caller's copy if too short.
    opts : SolverOptions, optional

    Returns
    -------
    SolveResult
        With ``record_history`` the history holds ``xi`` (iterates
        ``xi^0 .. xi^p``), ``mu`` (``mu^0 .. mu^p``) and ``dual_obj``
        (``f(mu^1) .. f(mu^p)``).
    """
    opts = opts or SolverOptions()
    if table is None:
        table = build_table(opts.alpha, min(opts.max_iters + 1, _TABLE_CHUNK))
    if table.alpha != opts.alpha:
        raise ValueError(f"table order {table.alpha} does not match alpha={opts.alpha}")
    L = problem.L
    if not L > 0.0:
        raise ValueError("Lipschitz constant is zero (A = 0); step size 1/L undefined")
    inv_L = 1.0 / L
    A, B = problem.A, problem.B
    if opts.mu0 is None:
        mu0 = np.zeros(problem.n_c)
    else:
        mu0 = _check_mu(problem, opts.mu0)

    taus = table.taus
    t_start = time.perf_counter()

    mu_prev = mu0.copy()
    xi_prev = primal_from_dual(problem, mu0)
    zeta = mu0.copy()
    xi_bar = xi_prev.copy()
    hist = None
    if opts.record_history:
        hist = {"xi": [xi_prev.copy()], "mu": [mu_prev.copy()], "dual_obj": []}

    stop = StopReason.ITERATION_CAP
    diagnostics = ""
    p = 0
    mu, xi = mu_prev, xi_prev
    while p < opts.max_iters:
        p += 1
        mu = zeta + inv_L * (A @ xi_bar - B)
        np.maximum(mu, 0.0, out=mu)
        mu += 0.0
        xi = problem.solve_h(-A.T @ mu - problem.G)
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(xi))):
            stop = StopReason.DIVERGENCE
            diagnostics = f"non-finite iterate at p={p}"
            mu, xi = mu_prev, xi_prev
            break
        if hist is not None:
            hist["xi"].append(xi.copy())
            hist["mu"].append(mu.copy())
            hist["dual_obj"].append(dual_objective(problem, mu))
        if problem.step_norm(xi - xi_prev) <= opts.stop_tol:
            stop = StopReason.CONVERGED
            break
        if p + 1 > table.length:
            table = table.extended(min(2 * table.length, opts.max_iters + 1))
            taus = table.taus
        beta = (taus[p - 1] - 1.0) / taus[p]
        zeta = mu + beta * (mu - mu_prev)
        xi_bar = xi + beta * (xi - xi_prev)
        mu_prev, xi_prev = mu, xi

    elapsed = time.perf_counter() - t_start
    if hist is not None:
        hist = {k: np.array(v) for k, v in hist.items()}
    return SolveResult(
        xi_star=np.array(xi),
        mu_star=np.array(mu),
        iterations=p,
        stop_reason=stop,
        elapsed=elapsed,
        history=hist,
        diagnostics=diagnostics,
    )


def _check_positive(**kwargs):
    for name, val in kwargs.items():
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val!r}")


def theoretical_primal_bound(alpha, L, dist0, sigma_min, p):
    """Right-hand side of the primal convergence-rate bound.

    ``alpha^alpha L dist0 / (sigma_min (p + alpha - 1)^alpha)`` where
    ``dist0 = ||mu^0 - mu*||^2``.
    """
    _check_positive(alpha=alpha, L=L, dist0=dist0, sigma_min=sigma_min, p=p)
    return (alpha / (p + alpha - 1)) ** alpha * L * dist0 / sigma_min


def theoretical_dual_gap_bound(alpha, L, dist0, p):
    _check_positive(alpha=alpha, L=L, dist0=dist0, p=p)
    return (alpha / (p + alpha - 1)) ** alpha * L * dist0 / 2.0
