"""Config-driven copy study: train an original, copy it R times per copy
family, aggregate, and write per-run JSON plus summary tables."""
from __future__ import annotations

import csv
import json
import logging
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import models as M
from .copying import CapacityConfig, CopyConfig, single_pass_copy
from .core import CopyforgeError, Dataset
from .data import (
    GENERATORS,
    ColumnSchema,
    apply_standardize,
    fit_standardize,
    load_bundled,
    load_csv,
    stratified_split,
)
from .metrics import FidelityReport, summarize_runs
from .oracle import Oracle
from .sampling import SamplingDistribution

log = logging.getLogger(__name__)


class ConfigError(CopyforgeError, ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One study. ``dataset`` is ``{"bundled": name}``, ``{"path": ..., "schema": ...}``
    or ``{"generator": name, ...kwargs}``; model entries are
    ``{"family": ..., "params": {...}}``."""

    dataset: dict
    original: dict = field(default_factory=lambda: {"family": "forest"})
    copies: list = field(default_factory=lambda: [{"family": "tree"}])
    n_samples: int = 100_000
    balanced: bool = True
    distribution: dict = field(default_factory=lambda: {"kind": "uniform", "half_width": 3.5})
    repetitions: int = 10
    seed: int = 0
    test_fraction: float = 0.2
    standardize: bool = True
    excluded_features: list = field(default_factory=list)
    capacity: dict | None = None
    output_dir: str | None = None
    name: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" not in d:
            raise ConfigError("config needs a 'dataset' entry")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def validate(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        for entry in [self.original, *self.copies]:
            fam = entry.get("family")
            if fam not in M.MODEL_KINDS:
                raise ConfigError(f"model family {fam!r} is not implemented; choose from {sorted(M.MODEL_KINDS)}")
        if not self.copies:
            raise ConfigError("at least one copy family is required")
        ds = self.dataset
        if not any(key in ds for key in ("bundled", "path", "generator")):
            raise ConfigError("dataset needs one of 'bundled', 'path' or 'generator'")
        if "generator" in ds and ds["generator"] not in GENERATORS:
            raise ConfigError(f"unknown generator {ds['generator']!r}")
        if "path" in ds and "schema" not in ds:
            raise ConfigError("a dataset path needs a schema")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        ds = self.dataset
        return ds.get("bundled") or ds.get("generator") or Path(ds["path"]).stem


def load_dataset(spec: dict) -> Dataset:
    if "bundled" in spec:
        return load_bundled(spec["bundled"])
    if "path" in spec:
        return load_csv(spec["path"], ColumnSchema.from_dict(spec["schema"]))
    kwargs = {k: v for k, v in spec.items() if k != "generator"}
    return GENERATORS[spec["generator"]](**kwargs)


def distribution_for(spec: dict, dim: int) -> SamplingDistribution:
    return SamplingDistribution.from_dict(spec or {}, dim=dim)


def capacity_for(spec: dict | None) -> CapacityConfig | None:
    if not spec:
        return None
    grid = spec["grid"]
    kw = {k: spec[k] for k in ("epsilon", "monitor", "validation_fraction", "split_seed") if k in spec}
    if isinstance(grid, dict):
        return CapacityConfig.log_grid(grid["hi"], grid["lo"], int(grid["n"]), **kw)
    return CapacityConfig(tuple(grid), **kw)


@dataclass
class PreparedStudy:
    train: Dataset
    test: Dataset
    original: object
    oracle: Oracle
    acc_original: float


def prepare(cfg: ExperimentConfig) -> PreparedStudy:
    data = load_dataset(cfg.dataset)
    train, test = stratified_split(data, cfg.test_fraction, cfg.seed)
    if cfg.standardize:
        scaler, train = fit_standardize(train)
        test = apply_standardize(scaler, test)
    orig_entry = cfg.original
    original = M.train_model(
        orig_entry["family"], train.X, train.y, k=data.k, seed=orig_entry.get("seed", cfg.seed), **orig_entry.get("params", {})
    )
    acc = float(np.mean(original.predict(test.X) == test.y))
    oracle = Oracle(original, train.dim, n_classes=data.k)
    return PreparedStudy(train, test, original, oracle, acc)


@dataclass
class ExperimentReport:
    rows: list
    runs: list
    out_dir: Path | None


SUMMARY_COLUMNS = [
    "dataset",
    "original",
    "copy",
    "repetitions",
    "acc_original",
    "acc_copy_mean",
    "acc_copy_std",
    "acc_copy_estimated_mean",
    "acc_copy_estimated_std",
    "r_emp_original_mean",
    "r_emp_original_std",
    "r_emp_synthetic_mean",
    "r_emp_synthetic_std",
]


def _summary_row(cfg, family, acc_original, reports):
    s = summarize_runs(reports)
    return {
        "dataset": cfg.label,
        "original": cfg.original["family"],
        "copy": family,
        "repetitions": s.count,
        "acc_original": acc_original,
        "acc_copy_mean": s.mean["acc_copy"],
        "acc_copy_std": s.std["acc_copy"],
        "acc_copy_estimated_mean": s.mean["acc_copy_estimated"],
        "acc_copy_estimated_std": s.std["acc_copy_estimated"],
        "r_emp_original_mean": s.mean["r_emp_original"],
        "r_emp_original_std": s.std["r_emp_original"],
        "r_emp_synthetic_mean": s.mean["r_emp_synthetic"],
        "r_emp_synthetic_std": s.std["r_emp_synthetic"],
    }


def format_table(rows) -> str:
    """Aligned text table, one line per (dataset, copy family)."""
    head = ["dataset", "original", "copy", "A_O", "A_C", "est. A_C", "R_F(D)", "R_F(Z)"]
    body = [
        [
            r["dataset"],
            r["original"],
            r["copy"],
            f"{r['acc_original']:.4f}",
            f"{r['acc_copy_mean']:.4f} ± {r['acc_copy_std']:.4f}",
            f"{r['acc_copy_estimated_mean']:.4f} ± {r['acc_copy_estimated_std']:.4f}",
            f"{r['r_emp_original_mean']:.4f} ± {r['r_emp_original_std']:.4f}",
            f"{r['r_emp_synthetic_mean']:.4f} ± {r['r_emp_synthetic_std']:.4f}",
        ]
        for r in rows
    ]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip() for line in [head, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir=None, save_models: bool = True) -> ExperimentReport:
    """Run the study; if ``out_dir`` (or ``cfg.output_dir``) is set, write
    ``runs/run_<r>.json``, ``summary.csv``, ``summary.txt``, ``summary.json``
    and model files there. A failing stage leaves ``FAILED.json`` behind."""
    cfg.validate()
    out = Path(out_dir or cfg.output_dir) if (out_dir or cfg.output_dir) else None
    if out is not None:
        (out / "runs").mkdir(parents=True, exist_ok=True)
        (out / "FAILED.json").unlink(missing_ok=True)
    stage = "prepare"
    try:
        study = prepare(cfg)
        log.info("%s: original %s accuracy %.4f", cfg.label, cfg.original["family"], study.acc_original)
        if out is not None and save_models:
            (out / "models").mkdir(exist_ok=True)
            M.save_model(study.original, out / "models" / "original.json")
        dist = distribution_for(cfg.distribution, study.train.dim)
        capacity = capacity_for(cfg.capacity)
        capacity_family = (cfg.capacity or {}).get("family", "rbf")
        per_family = {c["family"]: [] for c in cfg.copies}
        runs = []
        for r in range(cfg.repetitions):
            seed = cfg.seed + r
            record = {"dataset": cfg.label, "repetition": r, "seed": seed, "copies": {}}
            for entry in cfg.copies:
                family = entry["family"]
                stage = f"repetition {r} copy {family}"
                t0 = time.perf_counter()
                copy_cfg = CopyConfig(
                    hypothesis=family,
                    params=entry.get("params", {}),
                    sampler=dist,
                    n_samples=cfg.n_samples,
                    balanced=cfg.balanced,
                    seed=seed,
                    excluded_features=tuple(cfg.excluded_features),
                    capacity=capacity if family == capacity_family else None,
                )
                result = single_pass_copy(study.oracle, copy_cfg, reference=study.test, acc_original=study.acc_original)
                per_family[family].append(result.fidelity)
                record["copies"][family] = result.metrics_dict()
                log.info("%s r=%d %s: A_C=%.4f (%.1fs)", cfg.label, r, family, result.fidelity.acc_copy, time.perf_counter() - t0)
                if out is not None and save_models and r == 0:
                    M.save_model(result.model, out / "models" / f"copy_{family}_r0.json")
            runs.append(record)
            if out is not None:
                (out / "runs" / f"run_{r}.json").write_text(json.dumps(record, indent=2, sort_keys=True))
        stage = "summary"
        rows = [_summary_row(cfg, fam, study.acc_original, reps) for fam, reps in per_family.items()]
        if out is not None:
            write_summary(rows, out)
        return ExperimentReport(rows, runs, out)
    except Exception as exc:
        if out is not None:
            (out / "FAILED.json").write_text(
                json.dumps(
                    {"stage": stage, "error": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()},
                    indent=2,
                )
            )
        raise


def write_summary(rows, out: Path):
    with (out / "summary.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    (out / "summary.txt").write_text(format_table(rows))
    (out / "summary.json").write_text(json.dumps(rows, indent=2))


def reports_from_runs(run_dir) -> dict:
    """Reload per-run JSON files as {family: [FidelityReport, ...]}."""
    out = {}
    for path in sorted(Path(run_dir).glob("run_*.json"), key=lambda p: int(p.stem.split("_")[1])):
        record = json.loads(path.read_text())
        for fam, m in record["copies"].items():
            fields = {k: m[k] for k in FidelityReport.__dataclass_fields__}
            out.setdefault(fam, []).append(FidelityReport(**fields))
    return out
