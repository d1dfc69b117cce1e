"""Momentum-parameter tables for the order-alpha accelerated gradient scheme.

Each table holds the sequence ``tau_1 = 1, tau_2, ...`` where ``tau_{p+1}`` is
the unique positive root of

    tau**alpha - tau**(alpha - 1) - tau_p**alpha = 0.

For ``alpha = 2`` this reproduces the classical FISTA recurrence
``tau_{p+1} = (1 + sqrt(1 + 4 tau_p**2)) / 2``.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DEFAULT_LENGTH",
    "LookupTable",
    "next_tau",
    "build_table",
    "lower_bound",
    "momentum_coeff",
    "envelope",
    "residual",
    "save_table",
    "load_table",
    "export_csv",
]

DEFAULT_LENGTH = 100_000
MAGIC = b"APGMTBL1"
_HEADER = struct.Struct("<8sIQ")


def _check_alpha(alpha):
    if isinstance(alpha, bool) or int(alpha) != alpha or alpha < 2:
        raise ValueError(f"alpha must be an integer >= 2, got {alpha!r}")
    return int(alpha)


def residual(alpha, tau_prev, tau):
    """Relative residual of the defining polynomial at ``tau``."""
    num = abs(tau**alpha - tau ** (alpha - 1) - tau_prev**alpha)
    return num / max(1.0, tau**alpha)


def next_tau(alpha, tau_prev):
    """Return the positive root ``tau`` of ``tau^a - tau^(a-1) - tau_prev^a``.

    The root is bracketed in ``(tau_prev, tau_prev + 1]`` and refined by a
    safeguarded Newton iteration on the relative increment
    ``d = tau / tau_prev - 1``. Working with the increment (and ``expm1`` /
    ``log1p``) avoids cancellation, so the only rounding left in
    ``tau = tau_prev + d tau_prev`` is the final addition and long tables do
    not drift.
    """
    alpha = _check_alpha(alpha)
    tau_prev = float(tau_prev)
    if not np.isfinite(tau_prev) or tau_prev <= 0.0:
        raise ValueError(f"tau_prev must be a positive finite number, got {tau_prev!r}")

    # h(d) = (1+d)^a - 1 - (1+d)^(a-1)/tau_prev, increasing on the bracket
    inv = 1.0 / tau_prev
    am1 = alpha - 1

    def h(d):
        lg = math.log1p(d)
        return math.expm1(alpha * lg) - math.exp(am1 * lg) * inv

    def dh(d):
        r = 1.0 + d
        return r ** (alpha - 2) * (alpha * r - am1 * inv)

    # for tau_prev < 1 the root can sit below tau_prev, but always above 1
    lo = max(1.0, tau_prev) * inv - 1.0
    hi = inv
    if h(hi) < 0.0:  # pragma: no cover - excluded analytically
        raise ArithmeticError(f"root bracket failed for alpha={alpha}, tau_prev={tau_prev}")

    d = 0.5 * (lo + hi)
    for _ in range(200):
        hd = h(d)
        if hd == 0.0:
            break
        if hd < 0.0:
            lo = d
        else:
            hi = d
        slope = dh(d)
        cand = d - hd / slope if slope > 0.0 else 0.5 * (lo + hi)
        if not (lo <= cand <= hi):
            cand = 0.5 * (lo + hi)
        if abs(cand - d) <= 2e-16 * abs(d) or hi - lo <= 2e-16 * abs(d):
            d = cand
            break
        d = cand
    tau = tau_prev + d * tau_prev
    if residual(alpha, tau_prev, tau) > 1e-10:  # pragma: no cover
        raise ArithmeticError(f"root refinement stalled for alpha={alpha}, tau_prev={tau_prev}")
    return tau


@dataclass(frozen=True, eq=False)
class LookupTable:
    """Immutable sequence of momentum parameters for a fixed order.

    ``taus[0]`` stores ``tau_1``; the public accessors use 1-based ``p``.
    """

    alpha: int
    taus: np.ndarray

    def __post_init__(self):
        taus = np.array(self.taus, dtype=np.float64)
        if taus.ndim != 1 or taus.size < 1:
            raise ValueError("taus must be a non-empty 1-d sequence")
        taus.flags.writeable = False
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))
        object.__setattr__(self, "taus", taus)

    @property
    def length(self):
        return int(self.taus.size)

    def __len__(self):
        return self.length

    def tau(self, p):
        """``tau_p`` for 1-based ``p``."""
        if p < 1 or p > self.length:
            raise IndexError(f"p={p} outside table of length {self.length}")
        return float(self.taus[p - 1])

    def extended(self, length):
        """Return a table of at least ``length`` entries sharing this prefix."""
        if length <= self.length:
            return self
        out = np.empty(length)
        out[: self.length] = self.taus
        t = float(self.taus[-1])
        for i in range(self.length, length):
            t = next_tau(self.alpha, t)
            out[i] = t
        return LookupTable(self.alpha, out)

    def __eq__(self, other):
        if not isinstance(other, LookupTable):
            return NotImplemented
        return self.alpha == other.alpha and np.array_equal(self.taus, other.taus)

    __hash__ = None


def build_table(alpha, length=DEFAULT_LENGTH):
    """Generate ``length`` momentum parameters starting from ``tau_1 = 1``."""
    alpha = _check_alpha(alpha)
    if int(length) != length or length < 1:
        raise ValueError(f"length must be a positive integer, got {length!r}")
    return LookupTable(alpha, [1.0]).extended(int(length))


def lower_bound(alpha, p):
    """Lower bound ``(p + alpha - 1) / alpha`` on ``tau_p``."""
    alpha = _check_alpha(alpha)
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    return (p + alpha - 1) / alpha


def momentum_coeff(table, p):
    """Extrapolation weight ``(tau_p - 1) / tau_{p+1}``."""
    if p < 1 or p + 1 > table.length:
        raise IndexError(f"momentum_coeff needs p + 1 <= {table.length}, got p={p}")
    return (table.taus[p - 1] - 1.0) / table.taus[p]


def envelope(alpha, p, C=1.0):
    """Bound envelope ``alpha^alpha / (p + alpha - 1)^alpha * C``.

    Evaluated as ``(alpha / (p + alpha - 1))**alpha`` to stay finite for
    large orders.
    """
    alpha = _check_alpha(alpha)
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p!r}")
    return C * (alpha / (p + alpha - 1)) ** alpha


def save_table(table, path):
    """Write ``table`` in the binary ``APGMTBL1`` format."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, table.alpha, table.length))
        fh.write(table.taus.astype("<f8").tobytes())
    return path


def load_table(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated table header")
    magic, alpha, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = data[_HEADER.size:]
    if len(body) != 8 * length:
        raise ValueError(f"{path}: expected {length} entries, found {len(body) / 8:g}")
    return LookupTable(alpha, np.frombuffer(body, dtype="<f8"))


def export_csv(table, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "tau"])
        for p, t in enumerate(table.taus, start=1):
            writer.writerow([p, f"{t:.17g}"])
    return Path(path)
