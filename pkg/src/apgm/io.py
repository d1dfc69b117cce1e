"""JSON interchange for QP problems, solver results and MPC specs."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dual_pgm import QpProblem
from .mpc_condense import MpcSpec

__all__ = [
    "SchemaError",
    "problem_from_dict",
    "problem_to_dict",
    "read_problem",
    "write_problem",
    "mpc_from_dict",
    "read_mpc",
    "write_json",
]


class SchemaError(ValueError):
    """Malformed interchange data; ``field`` names the offending entry."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def _matrix(data, field, rows, cols):
    try:
        arr = np.array(data[field], dtype=float)
    except KeyError:
        raise SchemaError(field, "missing") from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(field, f"not numeric ({exc})") from None
    if arr.size != rows * cols:
        raise SchemaError(field, f"expected {rows}x{cols} = {rows * cols} entries, got {arr.size}")
    if arr.ndim == 2 and arr.shape != (rows, cols):
        raise SchemaError(field, f"expected shape {rows}x{cols}, got {arr.shape[0]}x{arr.shape[1]}")
    return arr.reshape(rows, cols)


def _vector(data, field, size):
    try:
        arr = np.array(data[field], dtype=float)
    except KeyError:
        raise SchemaError(field, "missing") from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(field, f"not numeric ({exc})") from None
    if arr.ndim != 1 or arr.size != size:
        raise SchemaError(field, f"expected a vector of length {size}, got shape {arr.shape}")
    return arr


def _count(data, field):
    val = data.get(field)
    if not isinstance(val, int) or isinstance(val, bool) or val < 0:
        raise SchemaError(field, f"expected a non-negative integer, got {val!r}")
    return val


def problem_from_dict(data, check_slater=False):
    """Build a :class:`QpProblem` from the ``n_v, n_c, H, G, A, B`` layout.

    Matrices may be nested lists or flat row-major arrays.
    """
    if not isinstance(data, dict):
        raise SchemaError("<root>", "expected a JSON object")
    n_v = _count(data, "n_v")
    n_c = _count(data, "n_c")
    if n_v == 0:
        raise SchemaError("n_v", "must be positive")
    H = _matrix(data, "H", n_v, n_v)
    G = _vector(data, "G", n_v)
    A = _matrix(data, "A", n_c, n_v)
    B = _vector(data, "B", n_c)
    try:
        return QpProblem(H, G, A, B, check_slater=check_slater)
    except ValueError as exc:
        msg = str(exc)
        field = "H" if msg.startswith("H") else "A/B" if "Slater" in msg else "<root>"
        raise SchemaError(field, msg) from None


def problem_to_dict(problem):
    return {
        "n_v": problem.n_v,
        "n_c": problem.n_c,
        "H": problem.H.ravel().tolist(),
        "G": problem.G.tolist(),
        "A": problem.A.ravel().tolist(),
        "B": problem.B.tolist(),
    }


def read_problem(path, check_slater=False):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError("<root>", f"invalid JSON ({exc})") from None
    return problem_from_dict(data, check_slater=check_slater)


def write_problem(problem, path, **extra):
    data = problem_to_dict(problem)
    data.update(extra)
    return write_json(data, path)


def mpc_from_dict(data):
    if not isinstance(data, dict):
        raise SchemaError("<root>", "expected a JSON object")
    for key in ("A", "B", "F", "Gc", "Q", "R", "N"):
        if key not in data:
            raise SchemaError(key, "missing")
    N = data["N"]
    if not isinstance(N, int) or isinstance(N, bool) or N < 1:
        raise SchemaError("N", f"expected a positive integer, got {N!r}")
    kwargs = {}
    for key in ("A", "B", "F", "Gc", "Q", "R", "P", "Phi"):
        if key in data and data[key] is not None:
            try:
                kwargs[key] = np.array(data[key], dtype=float)
            except (TypeError, ValueError) as exc:
                raise SchemaError(key, f"not numeric ({exc})") from None
    n = np.atleast_2d(kwargs["A"]).shape[0]
    if "Phi" in kwargs and kwargs["Phi"].size == 0:
        kwargs["Phi"] = np.zeros((0, n))
    try:
        return MpcSpec(N=N, **kwargs)
    except ValueError as exc:
        field = str(exc).split(":")[0].split(" ")[0]
        raise SchemaError(field, str(exc)) from None


def read_mpc(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError("<root>", f"invalid JSON ({exc})") from None
    return mpc_from_dict(data)


def write_json(data, path):
    text = json.dumps(data, indent=2)
    if path is None or str(path) == "-":
        print(text)
        return None
    path = Path(path)
    path.write_text(text + "\n")
    return path
