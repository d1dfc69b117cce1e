"""Random stable, controllable MPC instances with random box constraints."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mpc_condense import (
    MpcSpec,
    SlaterViolation,
    _stacked_constraint_rows,
    condense,
    dare,
    prediction_matrices,
)

__all__ = [
    "GenerationError",
    "InstanceConfig",
    "instance_seed",
    "random_plant",
    "random_bounds",
    "random_instance",
]

MAX_ATTEMPTS = 100
STABLE_RADIUS = 0.95
X0_SHRINK = 0.5
SLATER_MODES = ("zero-input", "lp")


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class InstanceConfig:
    n: int
    m: int
    N: int = 5
    q_scale: float = 1.0
    r_scale: float = 10.0
    seed: int = 0
    upper_range: tuple = (1.0, 10.0)
    lower_range: tuple = (-10.0, -1.0)
    terminal: bool = True  # Phi = F when True, no terminal rows otherwise
    x0_radius: float = X0_SHRINK
    slater: str = "zero-input"  # or "lp": any strictly feasible input trajectory

    def __post_init__(self):
        for name in ("n", "m", "N"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not (self.q_scale > 0 and self.r_scale > 0):
            raise ValueError("weight scales must be positive")
        if not self.x0_radius > 0:
            raise ValueError("x0_radius must be positive")
        if self.slater not in SLATER_MODES:
            raise ValueError(f"slater must be one of {SLATER_MODES}, got {self.slater!r}")


def instance_seed(seed, *keys):
    """Derive a 64-bit per-instance seed from a base seed and integer keys."""
    ss = np.random.SeedSequence([int(seed), *map(int, keys)])
    return int(ss.generate_state(1, np.uint64)[0])


def _controllable(A, B):
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.linalg.matrix_rank(np.hstack(blocks)) == n


def random_plant(n, m, rng, seed=None):
    """Draw ``(A, B)`` with entries uniform on [-1, 1], rescaled to be stable.

    ``A`` is rescaled to spectral radius 0.95 whenever the draw is not
    already strictly stable. Raises :class:`GenerationError` after
    100 uncontrollable draws.
    """
    for _ in range(MAX_ATTEMPTS):
        A = rng.uniform(-1.0, 1.0, size=(n, n))
        B = rng.uniform(-1.0, 1.0, size=(n, m))
        rho = np.max(np.abs(np.linalg.eigvals(A)))
        if rho >= 1.0:
            A = STABLE_RADIUS * A / rho
        if _controllable(A, B):
            return A, B
    raise GenerationError(f"no controllable plant after {MAX_ATTEMPTS} draws (seed {seed})")


def _box_rows(upper, lower):
    # rows x_i/u_i <= 1 and x_i/l_i <= 1 (l_i < 0) encode l_i <= x_i <= u_i
    return np.vstack([np.diag(1.0 / upper), np.diag(1.0 / lower)])


def random_bounds(n, m, rng, upper_range=(1.0, 10.0), lower_range=(-10.0, -1.0)):
    """Normalized box rows ``F`` (2n x n) and ``Gc`` (2m x m).

    Returns ``(F, Gc, x_upper, x_lower)`` so callers can sample inside the
    state box.
    """
    xu = rng.uniform(*upper_range, size=n)
    xl = rng.uniform(*lower_range, size=n)
    uu = rng.uniform(*upper_range, size=m)
    ul = rng.uniform(*lower_range, size=m)
    return _box_rows(xu, xl), _box_rows(uu, ul), xu, xl


def random_instance(config):
    """Random ``(MpcSpec, x0)`` pair whose condensed QP satisfies Slater's condition.

    ``x0`` is uniform on the state box scaled by ``config.x0_radius``. With
    ``slater="zero-input"`` a draw is accepted only if ``u = 0`` is strictly
    feasible; ``slater="lp"`` accepts any draw admitting some strictly
    feasible input trajectory.
    """
    rng = np.random.default_rng(config.seed)
    A, B = random_plant(config.n, config.m, rng, seed=config.seed)
    F, Gc, xu, xl = random_bounds(config.n, config.m, rng, config.upper_range, config.lower_range)
    Q = config.q_scale * np.eye(config.n)
    R = config.r_scale * np.eye(config.m)
    P = dare(A, B, Q, R, seed=config.seed)
    Phi = F if config.terminal else np.zeros((0, config.n))
    spec = MpcSpec(A=A, B=B, F=F, Gc=Gc, Q=Q, R=R, N=config.N, P=P, Phi=Phi)

    pm = prediction_matrices(A, B, config.N)
    F_bar, _ = _stacked_constraint_rows(spec)
    free_rows = F_bar @ pm.A1
    for _ in range(MAX_ATTEMPTS):
        x0 = rng.uniform(config.x0_radius * xl, config.x0_radius * xu)
        if np.all(free_rows @ x0 < 1.0):
            return spec, x0
        if config.slater == "lp":
            try:
                condense(spec, x0, check_slater=True)
            except SlaterViolation:
                continue
            return spec, x0
    raise GenerationError(
        f"no Slater-feasible initial state after {MAX_ATTEMPTS} draws (seed {config.seed})")
