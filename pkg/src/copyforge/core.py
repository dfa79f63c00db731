"""Shared types and the seeding contract."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CopyforgeError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(CopyforgeError, ValueError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    # all randomness flows through explicit seeds; never the global numpy state
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def as_points(points, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim in (None, 1) else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"points must be 2-D, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionError(f"expected {dim} features, got {arr.shape[1]}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``X`` (M x d) with integer labels ``y`` in ``[0, k)``."""

    X: np.ndarray
    y: np.ndarray
    k: int
    class_names: tuple[str, ...] | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "X", np.array(self.X, dtype=float))
        object.__setattr__(self, "y", np.array(self.y, dtype=np.int64))
        self.X.setflags(write=False)
        self.y.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]

    def subset(self, idx) -> Dataset:
        return Dataset(self.X[idx], self.y[idx], self.k, self.class_names, self.feature_names)


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box, one closed interval per feature."""

    lo: np.ndarray
    hi: np.ndarray = field(default=None)

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size < 1:
            raise ValueError("domain bounds must be two equal-length 1-D vectors")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)) or np.any(lo >= hi):
            raise ValueError("domain requires finite lo < hi in every dimension")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, dim: int, half_width: float = 3.5) -> Domain:
        return cls(np.full(dim, -half_width), np.full(dim, half_width))

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, points) -> np.ndarray:
        P = as_points(points, self.dim)
        return np.all((P >= self.lo) & (P <= self.hi), axis=1)


def validate_dataset(dataset: Dataset) -> list[str]:
    """Return one message per violated Dataset invariant (empty when clean)."""
    problems = []
    X, y = np.asarray(dataset.X), np.asarray(dataset.y)
    if X.ndim != 2:
        return [f"feature matrix must be 2-D, got {X.ndim}-D"]
    if X.shape[0] == 0:
        problems.append("empty dataset")
    if X.shape[0] != y.shape[0]:
        problems.append("length mismatch")
    bad = np.argwhere(~np.isfinite(X))
    for i, j in bad[:10]:
        problems.append(f"non-finite coordinate at ({i},{j})")
    if len(bad) > 10:
        problems.append(f"... {len(bad) - 10} more non-finite coordinates")
    if dataset.k < 1:
        problems.append("class count must be >= 1")
    if y.size and (y.min() < 0 or y.max() >= dataset.k):
        problems.append(f"label outside [0, {dataset.k})")
    if dataset.class_names is not None and len(dataset.class_names) != dataset.k:
        problems.append("class_names length differs from k")
    return problems
