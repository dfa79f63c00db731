"""Dataset loading, preprocessing, splitting and toy generators."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .core import CopyforgeError, Dataset, Domain, make_rng

log = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "?", "na", "nan", "null", "none"})


class SchemaError(CopyforgeError, ValueError):
    pass


class DataParseError(CopyforgeError, ValueError):
    pass


@dataclass
class ColumnSchema:
    """Column roles for a CSV file.

    ``kinds`` maps column name to ``"numeric"``, ``"nominal"`` or ``"target"``;
    columns not listed are ignored. ``categories`` maps every nominal column
    (and the target) to its ordered category list; the list position is the
    integer code. A target without a category list gets its categories in
    sorted order of the values seen.
    """

    kinds: dict[str, str]
    categories: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        bad = {v for v in self.kinds.values()} - {"numeric", "nominal", "target"}
        if bad:
            raise SchemaError(f"unknown column kinds {sorted(bad)}")
        targets = [c for c, kind in self.kinds.items() if kind == "target"]
        if len(targets) != 1:
            raise SchemaError(f"schema needs exactly one target column, got {len(targets)}")
        for col, cats in self.categories.items():
            if len(set(cats)) != len(cats):
                raise SchemaError(f"category map for {col!r} is not one-to-one")
        for col, kind in self.kinds.items():
            if kind == "nominal" and col not in self.categories:
                raise SchemaError(f"nominal column {col!r} has no category map")

    @property
    def target(self) -> str:
        return next(c for c, kind in self.kinds.items() if kind == "target")

    @property
    def features(self) -> list[str]:
        return [c for c, kind in self.kinds.items() if kind != "target"]

    @classmethod
    def from_dict(cls, d) -> ColumnSchema:
        return cls(kinds=dict(d["kinds"]), categories={k: list(v) for k, v in d.get("categories", {}).items()})


@dataclass(frozen=True)
class LoadReport:
    rows_read: int
    rows_dropped: int
    dropped_lines: tuple[int, ...]


def load_csv(path, schema: ColumnSchema, return_report: bool = False):
    """Read a headed CSV into a Dataset.

    Rows with a missing or unparseable numeric value are dropped and counted.
    An unseen nominal category is an error, since it means the schema is wrong.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataParseError(f"{path}: empty file") from None
        missing = [c for c in schema.kinds if c not in header]
        if missing:
            raise SchemaError(f"{path}: columns missing from header: {missing}")
        pos = {c: header.index(c) for c in schema.kinds}
        target = schema.target
        target_cats = schema.categories.get(target)
        rows, raw_targets, dropped = [], [], []
        n_read = 0
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not v.strip() for v in rec):
                continue
            n_read += 1
            if len(rec) != len(header):
                raise DataParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            values = []
            ok = True
            for col in schema.features:
                cell = rec[pos[col]].strip()
                if cell.lower() in MISSING_TOKENS:
                    ok = False
                    break
                if schema.kinds[col] == "nominal":
                    cats = schema.categories[col]
                    if cell not in cats:
                        raise DataParseError(f"{path}:{lineno}: unknown category {cell!r} in column {col!r}")
                    values.append(float(cats.index(cell)))
                else:
                    try:
                        v = float(cell)
                    except ValueError:
                        ok = False
                        break
                    if not math.isfinite(v):
                        ok = False
                        break
                    values.append(v)
            tcell = rec[pos[target]].strip()
            if ok and tcell.lower() in MISSING_TOKENS:
                ok = False
            if not ok:
                dropped.append(lineno)
                continue
            if target_cats is not None and tcell not in target_cats:
                raise DataParseError(f"{path}:{lineno}: unknown target class {tcell!r}")
            rows.append(values)
            raw_targets.append(tcell)
    if not rows:
        raise DataParseError(f"{path}: every row was dropped ({len(dropped)} of {n_read})")
    if target_cats is None:
        target_cats = sorted(set(raw_targets))
    codes = {c: i for i, c in enumerate(target_cats)}
    y = np.array([codes[t] for t in raw_targets], dtype=np.int64)
    if dropped:
        log.info("%s: dropped %d rows with missing values", path, len(dropped))
    ds = Dataset(
        np.array(rows, dtype=float).reshape(len(rows), len(schema.features)),
        y,
        len(target_cats),
        class_names=tuple(target_cats),
        feature_names=tuple(schema.features),
    )
    if return_report:
        return ds, LoadReport(n_read, len(dropped), tuple(dropped))
    return ds


# ---------------------------------------------------------------------------
# standardisation


@dataclass(frozen=True)
class Scaler:
    """Per-feature mean and population std fitted on a training split.

    ``kept`` indexes the input columns that survive (zero-variance columns are
    dropped and listed in ``dropped``).
    """

    mean: np.ndarray
    std: np.ndarray
    kept: tuple[int, ...]
    dropped: tuple[int, ...] = ()

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        cols = list(self.kept)
        return (X[:, cols] - self.mean) / self.std

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.std + self.mean


def _renamed(data: Dataset, X, kept) -> Dataset:
    names = None if data.feature_names is None else tuple(data.feature_names[i] for i in kept)
    return Dataset(X, data.y, data.k, data.class_names, names)


def fit_standardize(train: Dataset) -> tuple[Scaler, Dataset]:
    if len(train) == 0:
        raise ValueError("cannot standardise an empty dataset")
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    kept = tuple(int(j) for j in np.flatnonzero(std > 0))
    dropped = tuple(int(j) for j in np.flatnonzero(~(std > 0)))
    if dropped:
        log.warning("dropping zero-variance feature columns %s", list(dropped))
    if not kept:
        raise ValueError("every feature column has zero variance")
    scaler = Scaler(mean[list(kept)], std[list(kept)], kept, dropped)
    return scaler, _renamed(train, scaler.transform(train.X), kept)


def apply_standardize(scaler: Scaler, data: Dataset) -> Dataset:
    return _renamed(data, scaler.transform(data.X), scaler.kept)


# ---------------------------------------------------------------------------
# splitting


def stratified_split(data: Dataset, test_fraction: float = 0.2, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Per-class shuffle, then move round(n_c * test_fraction) of each class to test."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    rng = make_rng(seed)
    train_idx, test_idx = [], []
    for c in range(data.k):
        members = np.flatnonzero(data.y == c)
        if members.size == 0:
            continue
        if members.size < 2:
            raise ValueError(f"class {c} has {members.size} member(s); need >= 2 to stratify")
        members = rng.permutation(members)
        n_test = int(round(members.size * test_fraction))
        n_test = min(max(n_test, 1), members.size - 1)
        test_idx.append(members[:n_test])
        train_idx.append(members[n_test:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return data.subset(train_idx), data.subset(test_idx)


# ---------------------------------------------------------------------------
# generators


def make_moons(n: int, noise_std: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaved half circles: class 0 on the upper unit arc, class 1
    on the lower arc shifted to (1, -0.5). Points are shuffled."""
    if n < 4:
        raise ValueError("make_moons needs n >= 4")
    rng = make_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    X = np.vstack(
        [
            np.column_stack([np.cos(t0), np.sin(t0)]),
            np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)]),
        ]
    )
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    if noise_std > 0:
        X = X + rng.normal(0.0, noise_std, size=X.shape)
    order = rng.permutation(n)
    return Dataset(X[order], y[order], 2, ("upper", "lower"))


def volume_imbalance_radius(domain: Domain | None = None, fraction: float = 0.05) -> float:
    domain = domain or Domain.cube(2)
    area = float(np.prod(domain.hi - domain.lo))
    return math.sqrt(fraction * area / math.pi)


def make_volume_imbalance(n: int, seed: int = 0, fraction: float = 0.05) -> Dataset:
    """Balanced binary labels with very unequal class volumes.

    Class 1 is uniform in a disc at the origin whose area is ``fraction`` of
    the default 2-D domain; class 0 is uniform over the rest of the domain.
    """
    if n < 4:
        raise ValueError("make_volume_imbalance needs n >= 4")
    rng = make_rng(seed)
    domain = Domain.cube(2)
    r = volume_imbalance_radius(domain, fraction)
    n1 = n // 2
    n0 = n - n1
    radius = r * np.sqrt(rng.uniform(0.0, 1.0, n1))
    angle = rng.uniform(0.0, 2 * np.pi, n1)
    inner = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    outer = np.empty((0, 2))
    while outer.shape[0] < n0:
        cand = rng.uniform(domain.lo, domain.hi, size=(2 * n0, 2))
        cand = cand[np.hypot(cand[:, 0], cand[:, 1]) > r]
        outer = np.vstack([outer, cand])
    X = np.vstack([outer[:n0], inner])
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    order = rng.permutation(n)
    return Dataset(X[order], y[order], 2, ("broad", "disc"))


# ---------------------------------------------------------------------------
# bundled datasets

IRIS_SCHEMA = ColumnSchema(
    kinds={
        "sepal_length": "numeric",
        "sepal_width": "numeric",
        "petal_length": "numeric",
        "petal_width": "numeric",
        "species": "target",
    },
    categories={"species": ["setosa", "versicolor", "virginica"]},
)

BREAST_CANCER_WISC_SCHEMA = ColumnSchema(
    kinds={
        **{
            c: "numeric"
            for c in (
                "clump_thickness",
                "cell_size",
                "cell_shape",
                "adhesion",
                "epithelial_size",
                "bare_nuclei",
                "chromatin",
                "nucleoli",
                "mitoses",
            )
        },
        "class": "target",
    },
    categories={"class": ["benign", "malignant"]},
)

BUNDLED = {
    "iris": ("iris.csv", IRIS_SCHEMA),
    "breast-cancer-wisc": ("breast_cancer_wisc.csv", BREAST_CANCER_WISC_SCHEMA),
}


def bundled_path(name: str) -> Path:
    fname, _ = BUNDLED[name]
    return Path(str(resources.files("copyforge.datasets").joinpath(fname)))


def load_bundled(name: str) -> Dataset:
    try:
        fname, schema = BUNDLED[name]
    except KeyError:
        raise ValueError(f"no bundled dataset {name!r}; have {sorted(BUNDLED)}") from None
    return load_csv(bundled_path(name), schema)


GENERATORS = {"moons": make_moons, "volume_imbalance": make_volume_imbalance}
