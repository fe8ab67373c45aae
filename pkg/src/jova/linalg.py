"""Dense matrix helpers and seeded random streams.

Matrices are plain 2-D numpy arrays. The helpers here only add shape checks
with readable errors and a single place to create reproducible generators.
"""
from __future__ import annotations

import numpy as np

_OPS = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_matrix(a, dtype=np.float64) -> np.ndarray:
    m = np.asarray(a, dtype=dtype)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got array of shape {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def elementwise(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    if op not in _OPS:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_OPS)}")
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch for {op}: {a.shape} vs {b.shape}")
    return _OPS[op](a, b)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def spawn(seed: int, names: list[str]) -> dict[str, np.random.Generator]:
    """Independent named streams derived from one seed.

    Streams are keyed by position in ``names``, so adding a new name at the
    end never perturbs the existing ones.
    """
    children = np.random.SeedSequence(int(seed)).spawn(len(names))
    return {n: np.random.Generator(np.random.PCG64(s)) for n, s in zip(names, children)}


def sample_standard_normal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError(f"rows and cols must be >= 1, got ({rows}, {cols})")
    return rng.standard_normal((rows, cols))
