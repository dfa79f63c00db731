"""Fidelity and accuracy measures for copies, plus aggregation over runs."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .core import DimensionError


def _labels(a):
    a = np.asarray(a)
    if a.ndim != 1:
        a = a.ravel()
    return a


def empirical_fidelity_error(copy_labels, oracle_labels) -> float:
    """Fraction of points on which copy and oracle disagree."""
    c, o = _labels(copy_labels), _labels(oracle_labels)
    if c.size != o.size:
        raise DimensionError(f"length mismatch: {c.size} vs {o.size}")
    if c.size == 0:
        raise ValueError("empty label lists")
    return float(np.count_nonzero(c != o)) / c.size


def signed_fidelity_form(copy_pm, oracle_pm) -> float:
    """1/2 - (1/2N) * sum(copy * oracle) for +-1 encoded binary labels.

    Computed with an integer sum so it is exactly equal to the disagreement
    fraction on the 0/1 recoding.
    """
    c = _labels(copy_pm).astype(np.int64)
    o = _labels(oracle_pm).astype(np.int64)
    if c.size != o.size:
        raise DimensionError(f"length mismatch: {c.size} vs {o.size}")
    if c.size == 0:
        raise ValueError("empty label lists")
    if not (np.all(np.abs(c) == 1) and np.all(np.abs(o) == 1)):
        raise ValueError("signed form expects values in {-1, +1}")
    n = c.size
    agree = int(np.dot(c, o))
    # 1/2 - agree/(2n) == (n - agree) / (2n), an exact multiple of 1/n
    return ((n - agree) // 2) / n


def copy_accuracy(copy, data) -> float:
    """Accuracy of ``copy`` against the true labels of ``data``."""
    pred = copy.predict(data.X)
    return float(np.mean(pred == data.y))


def estimated_copy_accuracy(acc_original: float, r_emp_synthetic: float) -> float:
    for name, v in (("acc_original", acc_original), ("r_emp_synthetic", r_emp_synthetic)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0, 1]")
    return acc_original * (1.0 - r_emp_synthetic)


@dataclass(frozen=True)
class FidelityReport:
    r_emp_synthetic: float
    acc_original: float | None = None
    r_emp_original: float | None = None
    acc_copy: float | None = None
    acc_copy_estimated: float | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{f.name}={v} outside [0, 1]")
        if self.acc_original is None:
            if self.acc_copy_estimated is not None:
                raise ValueError("acc_copy_estimated requires acc_original")
            return
        expected = estimated_copy_accuracy(self.acc_original, self.r_emp_synthetic)
        if self.acc_copy_estimated is None:
            object.__setattr__(self, "acc_copy_estimated", expected)
        elif self.acc_copy_estimated != expected:
            raise ValueError("acc_copy_estimated must equal acc_original * (1 - r_emp_synthetic)")

    def to_dict(self) -> dict:
        return asdict(self)


METRIC_FIELDS = ("acc_original", "acc_copy", "acc_copy_estimated", "r_emp_original", "r_emp_synthetic")


@dataclass(frozen=True)
class RunSummary:
    """Mean and population std of each metric over ``count`` repetitions.
    Metrics missing from every report are absent from ``mean``/``std``."""

    mean: dict
    std: dict
    count: int


def summarize_runs(reports) -> RunSummary:
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to summarise")
    mean, std = {}, {}
    for name in METRIC_FIELDS:
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if not vals:
            continue
        arr = np.asarray(vals, dtype=float)
        mean[name] = float(arr.mean())
        std[name] = float(arr.std())
    return RunSummary(mean, std, len(reports))
