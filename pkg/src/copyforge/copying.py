"""Single-pass copying: sample and label synthetic points (step 1), then fit
a copy hypothesis to them without regularisation (step 2). Also the
capacity sweep that trades model capacity for fidelity, and feature masking."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import models as M
from .core import CopyforgeError, Dataset, make_rng
from .metrics import FidelityReport, empirical_fidelity_error
from .oracle import Oracle
from .sampling import (
    SamplingDistribution,
    SyntheticSet,
    VolumeReport,
    generate_balanced,
    generate_raw,
    save_synthetic_csv,
    volume_report,
)

log = logging.getLogger(__name__)

CAPACITY_KNOB = {"rbf": "gamma", "tree": "max_depth"}


@dataclass(frozen=True)
class CapacityConfig:
    """Grid of capacity values, largest first (gamma for rbf, max_depth for tree).

    ``monitor`` picks the error compared against the reference: ``"train"``
    uses the copy's error on the synthetic points it was fitted to,
    ``"validation"`` its error on the held-out synthetic split.
    """

    capacity_grid: tuple
    epsilon: float = 1e-4
    monitor: str = "train"
    validation_fraction: float = 0.2
    split_seed: int = 0

    def __post_init__(self):
        grid = tuple(self.capacity_grid)
        if not grid:
            raise ValueError("capacity grid is empty")
        if any(b >= a for a, b in zip(grid, grid[1:])):
            raise ValueError("capacity grid must be strictly decreasing")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.monitor not in ("train", "validation"):
            raise ValueError("monitor must be 'train' or 'validation'")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        object.__setattr__(self, "capacity_grid", grid)

    @classmethod
    def log_grid(cls, hi: float, lo: float, n: int, **kw) -> CapacityConfig:
        return cls(tuple(float(g) for g in np.logspace(math.log10(hi), math.log10(lo), n)), **kw)


@dataclass(frozen=True)
class CopyConfig:
    hypothesis: str = "tree"
    params: dict = field(default_factory=dict)
    sampler: SamplingDistribution | None = None
    n_samples: int = 100_000
    balanced: bool = True
    per_class: int | None = None
    max_draws: int | None = None
    seed: int = 0
    excluded_features: tuple[int, ...] = ()
    capacity: CapacityConfig | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.hypothesis not in M.MODEL_KINDS:
            raise ValueError(f"unknown copy family {self.hypothesis!r}; expected one of {sorted(M.MODEL_KINDS)}")
        object.__setattr__(self, "excluded_features", tuple(int(j) for j in self.excluded_features))


@dataclass(frozen=True)
class CapacityPoint:
    capacity: float
    r_train: float
    r_validation: float
    r_holdout: float | None = None
    feasible: bool = True
    diverged: bool = False


@dataclass(frozen=True)
class SweepResult:
    selected: float
    model: object
    trace: tuple[CapacityPoint, ...]
    reference_error: float
    monitor: str = "train"

    @property
    def pairs(self) -> list[tuple[float, float]]:
        """(capacity, monitored error) per trace entry."""
        return [(p.capacity, p.r_train if self.monitor == "train" else p.r_validation) for p in self.trace]


@dataclass(frozen=True)
class CopyResult:
    model: M.CopyModel
    synthetic: SyntheticSet
    fidelity: FidelityReport
    volume: VolumeReport
    capacity_trace: tuple[CapacityPoint, ...] | None = None
    n_samples: int = 0
    seed: int = 0

    def metrics_dict(self) -> dict:
        out = self.fidelity.to_dict()
        out.update(n_samples=int(self.n_samples), seed=int(self.seed))
        return out


def mask_features(synth: SyntheticSet, excluded) -> SyntheticSet:
    """Drop the listed feature columns; labels are untouched."""
    excluded = [int(j) for j in excluded]
    if len(set(excluded)) != len(excluded):
        raise ValueError(f"duplicate feature indices in {excluded}")
    bad = [j for j in excluded if not 0 <= j < synth.dim]
    if bad:
        raise IndexError(f"feature indices {bad} out of range for {synth.dim} features")
    if len(excluded) == synth.dim:
        raise ValueError("excluding every feature leaves an empty feature space")
    if not excluded:
        return synth
    keep = [j for j in range(synth.dim) if j not in set(excluded)]
    prov = dict(synth.provenance, excluded_features=sorted(excluded))
    return SyntheticSet(synth.X[:, keep], synth.y, synth.k, prov)


def _kept(dim, excluded):
    if not excluded:
        return None
    ex = set(excluded)
    return tuple(j for j in range(dim) if j not in ex)


def _train(family, X, y, k, seed, params, capacity=None):
    params = dict(params)
    if capacity is not None:
        knob = CAPACITY_KNOB[family]
        params[knob] = int(capacity) if knob == "max_depth" else float(capacity)
    return M.train_model(family, X, y, k=k, seed=seed, **params)


def capacity_sweep(
    oracle: Oracle | None,
    synthetic: SyntheticSet,
    cap: CapacityConfig,
    hypothesis: str = "rbf",
    params: dict | None = None,
    seed: int = 0,
    holdout=None,
) -> SweepResult:
    """Walk the capacity grid downwards and keep the smallest capacity whose
    monitored fidelity error stays within ``cap.epsilon`` of the error at the
    largest capacity.

    The walk stops at the first grid point that leaves the tolerance; that
    point is still recorded in the trace. Grid points whose training diverges
    are recorded with ``diverged=True`` and skipped. ``holdout`` is an
    optional ``(X, labels)`` pair on which each model's error is also
    reported. ``oracle`` is unused when ``synthetic`` is already labelled; it
    is accepted so callers can pass the same arguments as for copying.
    """
    if hypothesis not in CAPACITY_KNOB:
        raise ValueError(f"capacity sweep supports {sorted(CAPACITY_KNOB)}, not {hypothesis!r}")
    params = dict(params or {})
    rng = make_rng(cap.split_seed)
    order = rng.permutation(len(synthetic))
    n_val = max(1, int(round(cap.validation_fraction * len(synthetic))))
    if n_val >= len(synthetic):
        raise ValueError("synthetic set too small to hold out a validation split")
    val_idx, tr_idx = np.sort(order[:n_val]), np.sort(order[n_val:])
    cap_n = params.get("max_train", 6000) if hypothesis == "rbf" else None
    if cap_n is not None and tr_idx.size > cap_n:
        # fix the kernel machine's subsample once so every grid point fits,
        # and is scored on, the same training points
        tr_idx = np.sort(rng.choice(tr_idx, size=cap_n, replace=False))
    Xtr, ytr = synthetic.X[tr_idx], synthetic.y[tr_idx]
    Xva, yva = synthetic.X[val_idx], synthetic.y[val_idx]

    trace = []
    reference = None
    selected, selected_model = None, None
    for capacity in cap.capacity_grid:
        try:
            model = _train(hypothesis, Xtr, ytr, synthetic.k, seed, params, capacity)
        except M.TrainingDivergence as exc:
            log.warning("training diverged at capacity %s: %s", capacity, exc)
            trace.append(CapacityPoint(capacity, math.nan, math.nan, None, False, True))
            continue
        r_train = empirical_fidelity_error(model.predict(Xtr), ytr)
        r_val = empirical_fidelity_error(model.predict(Xva), yva)
        r_hold = None
        if holdout is not None:
            hx, hy = holdout
            r_hold = empirical_fidelity_error(model.predict(hx), hy)
        monitored = r_train if cap.monitor == "train" else r_val
        if reference is None:
            reference = monitored
        feasible = abs(monitored - reference) < cap.epsilon
        trace.append(CapacityPoint(capacity, r_train, r_val, r_hold, feasible, False))
        if not feasible:
            break
        selected, selected_model = capacity, model
    if selected is None:
        raise CopyforgeError("no grid point could be trained")
    return SweepResult(selected, selected_model, tuple(trace), reference, cap.monitor)


def single_pass_copy(
    oracle: Oracle,
    cfg: CopyConfig,
    reference: Dataset | None = None,
    acc_original: float | None = None,
) -> CopyResult:
    """Copy ``oracle`` in one pass: generate a synthetic set, fit the copy.

    When ``reference`` data with true labels is given, the fidelity report
    also carries the original's accuracy, the copy's accuracy and the
    disagreement between the two on those points.
    """
    dist = cfg.sampler or SamplingDistribution.uniform(oracle.dim)
    if dist.dim != oracle.dim:
        raise ValueError(f"sampler has {dist.dim} dimensions but the oracle expects {oracle.dim}")
    bad = [j for j in cfg.excluded_features if not 0 <= j < oracle.dim]
    if bad:
        raise IndexError(f"excluded features {bad} out of range")
    k = oracle.n_classes

    # step 1
    if cfg.balanced:
        if k is None:
            raise ValueError("balanced sampling needs the oracle's class count")
        per_class = cfg.per_class or -(-cfg.n_samples // k)
        max_draws = cfg.max_draws or max(100 * per_class * k, 10 * cfg.n_samples)
        synth = generate_balanced(oracle, dist, per_class, max_draws, cfg.seed, k=k)
    else:
        synth = generate_raw(oracle, dist, cfg.n_samples, cfg.seed, k=k)
    k = synth.k
    train_set = mask_features(synth, cfg.excluded_features)

    # step 2
    trace = None
    if cfg.capacity is not None:
        sweep = capacity_sweep(oracle, train_set, cfg.capacity, cfg.hypothesis, cfg.params, seed=cfg.seed)
        inner, trace = sweep.model, sweep.trace
    else:
        inner = _train(cfg.hypothesis, train_set.X, train_set.y, k, cfg.seed, cfg.params)
    r_syn = empirical_fidelity_error(inner.predict(train_set.X), train_set.y)
    copy = M.CopyModel(
        model=inner,
        n_features=oracle.dim,
        kept_features=_kept(oracle.dim, cfg.excluded_features),
        provenance=dict(synth.provenance, hypothesis=cfg.hypothesis, params=dict(cfg.params)),
        train_error=r_syn,
    )

    if reference is not None:
        oracle_pred = oracle.query(reference.X)
        copy_pred = copy.predict(reference.X)
        if acc_original is None:
            acc_original = float(np.mean(oracle_pred == reference.y))
        fidelity = FidelityReport(
            r_emp_synthetic=r_syn,
            acc_original=acc_original,
            r_emp_original=empirical_fidelity_error(copy_pred, oracle_pred),
            acc_copy=float(np.mean(copy_pred == reference.y)),
        )
    else:
        fidelity = FidelityReport(r_emp_synthetic=r_syn, acc_original=acc_original)
    return CopyResult(copy, synth, fidelity, volume_report(synth), trace, len(synth), cfg.seed)


def save_copy_result(result: CopyResult, directory) -> Path:
    """Write model.json, synthetic.csv and metrics.json into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    M.save_model(result.model, directory / "model.json")
    save_synthetic_csv(result.synthetic, directory / "synthetic.csv")
    (directory / "metrics.json").write_text(json.dumps(result.metrics_dict(), indent=2, sort_keys=True))
    return directory
