"""Synthetic query generation: draw points, label them through the oracle,
optionally balance the labels, and report per-class volume estimates."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CopyforgeError, Domain, as_points, make_rng
from .oracle import Oracle

RAW_BATCH = 1024


class QuotaUnreachable(CopyforgeError):
    """Balanced generation ran out of raw draws before every class filled up."""

    def __init__(self, starving, counts, draws):
        self.starving = tuple(int(c) for c in starving)
        self.counts = tuple(int(c) for c in counts)
        self.draws = int(draws)
        super().__init__(
            f"class(es) {list(self.starving)} not filled after {self.draws} raw draws "
            f"(per-class counts {list(self.counts)})"
        )


@dataclass(frozen=True)
class SamplingDistribution:
    """``uniform`` over a Domain box, or ``normal`` (standard normal in ``dim`` dimensions)."""

    kind: str
    domain: Domain | None = None
    dim: int | None = None

    def __post_init__(self):
        if self.kind == "uniform":
            if self.domain is None:
                raise ValueError("uniform sampling needs a domain")
            object.__setattr__(self, "dim", self.domain.dim)
        elif self.kind == "normal":
            if self.dim is None or self.dim < 1:
                raise ValueError("normal sampling needs dim >= 1")
        else:
            raise ValueError(f"unknown sampling distribution {self.kind!r}")

    @classmethod
    def uniform(cls, domain_or_dim) -> SamplingDistribution:
        dom = domain_or_dim if isinstance(domain_or_dim, Domain) else Domain.cube(int(domain_or_dim))
        return cls("uniform", domain=dom)

    @classmethod
    def standard_normal(cls, dim: int) -> SamplingDistribution:
        return cls("normal", dim=int(dim))

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return rng.uniform(self.domain.lo, self.domain.hi, size=(n, self.dim))
        return rng.standard_normal(size=(n, self.dim))

    def describe(self) -> dict:
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.domain.lo.tolist(), "hi": self.domain.hi.tolist()}
        return {"kind": "normal", "dim": self.dim}

    @classmethod
    def from_dict(cls, d, dim: int | None = None) -> SamplingDistribution:
        kind = d.get("kind", "uniform")
        if kind == "uniform":
            if "lo" in d:
                return cls.uniform(Domain(d["lo"], d["hi"]))
            half = float(d.get("half_width", 3.5))
            return cls.uniform(Domain.cube(int(d.get("dim", dim)), half))
        return cls.standard_normal(int(d.get("dim", dim)))


@dataclass(frozen=True)
class SyntheticSet:
    X: np.ndarray
    y: np.ndarray
    k: int
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[0] != y.shape[0]:
            raise ValueError("synthetic set needs N >= 1 points with one label each")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> SyntheticSet:
        return SyntheticSet(self.X[idx], self.y[idx], self.k, dict(self.provenance))


@dataclass(frozen=True)
class VolumeReport:
    """Per-class counts and volume fractions. ``stderr_bound`` is only defined
    for k == 2 with both classes present; ``flagged`` lists empty classes."""

    counts: tuple[int, ...]
    fractions: tuple[float, ...]
    stderr_bound: float | None
    flagged: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return sum(self.counts)


def sample(dist: SamplingDistribution, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return dist.draw(make_rng(seed), n)


def label_points(oracle: Oracle, points, k: int | None = None, provenance: dict | None = None) -> SyntheticSet:
    P = as_points(points, oracle.dim)
    if P.shape[0] == 0:
        raise ValueError("cannot label an empty point set")
    y = oracle.query(P)
    k = k or oracle.n_classes or int(y.max()) + 1
    return SyntheticSet(P, y, int(k), provenance or {})


def generate_raw(oracle: Oracle, dist: SamplingDistribution, n: int, seed: int, k: int | None = None) -> SyntheticSet:
    """Draw ``n`` points (no balancing) and label them in RAW_BATCH chunks."""
    P = sample(dist, n, seed)
    labels = np.concatenate([oracle.query(P[s : s + RAW_BATCH]) for s in range(0, n, RAW_BATCH)])
    k = k or oracle.n_classes or int(labels.max()) + 1
    prov = {"distribution": dist.describe(), "seed": int(seed), "balanced": False, "raw_draws": int(n)}
    return SyntheticSet(P, labels, int(k), prov)


def generate_balanced(
    oracle: Oracle,
    dist: SamplingDistribution,
    per_class: int,
    max_draws: int,
    seed: int,
    k: int | None = None,
) -> SyntheticSet:
    """Rejection-balance the oracle labels: keep a drawn point only while its
    class quota is unfilled, stopping when every class holds ``per_class``
    points. Kept points stay in draw order."""
    k = k or oracle.n_classes
    if k is None:
        raise ValueError("class count unknown: pass k or give the oracle n_classes")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if max_draws < k * per_class:
        raise ValueError(f"max_draws must be >= k * per_class = {k * per_class}")
    rng = make_rng(seed)
    counts = np.zeros(k, dtype=np.int64)
    kept_X, kept_y = [], []
    draws = 0
    effective = 0
    while counts.min() < per_class and draws < max_draws:
        m = min(RAW_BATCH, max_draws - draws)
        P = dist.draw(rng, m)
        labels = oracle.query(P)
        draws += m
        if labels.size and labels.max() >= k:
            raise CopyforgeError(f"oracle returned label {labels.max()} >= k = {k}")
        keep = np.zeros(m, dtype=bool)
        for c in range(k):
            room = per_class - counts[c]
            if room <= 0:
                continue
            hits = np.flatnonzero(labels == c)[:room]
            keep[hits] = True
            counts[c] += hits.size
        if keep.any():
            effective = draws - m + int(np.flatnonzero(keep)[-1]) + 1
        kept_X.append(P[keep])
        kept_y.append(labels[keep])
        if counts.min() >= per_class:
            break
    if counts.min() < per_class:
        raise QuotaUnreachable(np.flatnonzero(counts < per_class), counts, draws)
    prov = {
        "distribution": dist.describe(),
        "seed": int(seed),
        "balanced": True,
        "per_class": int(per_class),
        # position in the raw stream of the point that filled the last quota
        "raw_draws": int(effective),
        "raw_draws_labelled": int(draws),
    }
    return SyntheticSet(np.vstack(kept_X), np.concatenate(kept_y), int(k), prov)


def volume_report(synth: SyntheticSet) -> VolumeReport:
    n = len(synth)
    counts = np.bincount(synth.y, minlength=synth.k)
    fractions = tuple(float(c) / n for c in counts)
    flagged = tuple(int(c) for c in np.flatnonzero(counts == 0))
    bound = None
    if synth.k == 2 and not flagged:
        bound = 1.0 / math.sqrt(n * fractions[1]) + 1.0 / math.sqrt(n * fractions[0])
    return VolumeReport(tuple(int(c) for c in counts), fractions, bound, flagged)


def save_synthetic_csv(synth: SyntheticSet, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(synth.dim)] + ["label"])
        for row, label in zip(synth.X, synth.y):
            w.writerow([repr(float(v)) for v in row] + [int(label)])
    return path


def load_synthetic_csv(path, k: int | None = None) -> SyntheticSet:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "label":
            raise ValueError(f"{path}: last column must be 'label'")
        rows = [r for r in reader if r]
    X = np.array([[float(v) for v in r[:-1]] for r in rows], dtype=float).reshape(len(rows), len(header) - 1)
    y = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    return SyntheticSet(X, y, int(k or y.max() + 1), {"source": str(path)})
