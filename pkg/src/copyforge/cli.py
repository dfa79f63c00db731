"""``copyforge`` command line: run | copy | sample | evaluate | sweep | serve.

Every subcommand reads a JSON config (``--config``). On failure the process
exits non-zero and writes ``{"error": ..., "message": ...}`` to stderr.
Set ``COPYFORGE_LOG`` (e.g. ``INFO``) to control logging.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import threading
from pathlib import Path

import numpy as np

from . import models as M
from .copying import CopyConfig, capacity_sweep, save_copy_result, single_pass_copy
from .core import CopyforgeError
from .experiment import (
    ConfigError,
    ExperimentConfig,
    capacity_for,
    distribution_for,
    format_table,
    load_dataset,
    prepare,
    run_experiment,
)
from .metrics import empirical_fidelity_error
from .oracle import Oracle, RemoteEndpoint, serve, server_url
from .sampling import generate_balanced, generate_raw, save_synthetic_csv, volume_report

log = logging.getLogger("copyforge")


class UsageError(CopyforgeError):
    pass


def _read_config(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _remote_oracle(spec: dict) -> Oracle:
    for key in ("url", "dim"):
        if key not in spec:
            raise ConfigError(f"oracle config needs {key!r}")
    ep = RemoteEndpoint(spec["url"], int(spec.get("timeout_ms", 10_000)), int(spec.get("batch_size", 1024)))
    return Oracle(ep, int(spec["dim"]), n_classes=spec.get("k"), cache=bool(spec.get("cache", False)))


def _oracle_from(cfg: dict):
    """Remote oracle from ``cfg["oracle"]``, or an in-process original trained
    per an experiment-style config. Returns (oracle, test set or None)."""
    if "oracle" in cfg:
        return _remote_oracle(cfg["oracle"]), None
    if "dataset" in cfg:
        keys = {k: cfg[k] for k in ("dataset", "original", "seed", "test_fraction", "standardize") if k in cfg}
        study = prepare(ExperimentConfig.from_dict(keys))
        return study.oracle, study.test
    raise UsageError("config needs an 'oracle' (remote) or a 'dataset' + 'original' entry")


def _synthetic(oracle, cfg, seed):
    dist = distribution_for(cfg.get("distribution", {}), oracle.dim)
    n = int(cfg.get("n_samples", 1000))
    if cfg.get("balanced", False):
        k = cfg.get("k") or oracle.n_classes
        if k is None:
            raise ConfigError("balanced sampling needs the class count 'k'")
        per_class = int(cfg.get("per_class") or -(-n // k))
        max_draws = int(cfg.get("max_draws") or max(100 * per_class * k, 10 * n))
        return generate_balanced(oracle, dist, per_class, max_draws, seed, k=k)
    return generate_raw(oracle, dist, n, seed)


def cmd_run(args):
    cfg = ExperimentConfig.from_dict(_read_config(args.config))
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out or cfg.output_dir or "copyforge-out"
    report = run_experiment(cfg, out_dir=out)
    sys.stdout.write(format_table(report.rows))
    return 0


def cmd_copy(args):
    cfg = _read_config(args.config)
    oracle, test = _oracle_from(cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    copy_spec = cfg.get("copy", {"family": "tree"})
    copy_cfg = CopyConfig(
        hypothesis=copy_spec.get("family", "tree"),
        params=copy_spec.get("params", {}),
        sampler=distribution_for(cfg.get("distribution", {}), oracle.dim),
        n_samples=int(cfg.get("n_samples", 100_000)),
        balanced=bool(cfg.get("balanced", True)),
        per_class=cfg.get("per_class"),
        max_draws=cfg.get("max_draws"),
        seed=seed,
        excluded_features=tuple(cfg.get("excluded_features", ())),
        capacity=capacity_for(cfg.get("capacity")),
    )
    result = single_pass_copy(oracle, copy_cfg, reference=test)
    out = Path(args.out or "copy-out")
    save_copy_result(result, out)
    print(json.dumps({**result.metrics_dict(), "queries": oracle.query_count, "out": str(out)}, sort_keys=True))
    return 0


def cmd_sample(args):
    cfg = _read_config(args.config)
    oracle, _ = _oracle_from(cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    synth = _synthetic(oracle, cfg, seed)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = save_synthetic_csv(synth, out / "synthetic.csv")
    vr = volume_report(synth)
    print(json.dumps({"path": str(path), "n": len(synth), "counts": list(vr.counts), "stderr_bound": vr.stderr_bound}))
    return 0


def cmd_evaluate(args):
    cfg = _read_config(args.config)
    if "model" not in cfg:
        raise UsageError("evaluate needs a 'model' path")
    if "dataset" not in cfg and "oracle" not in cfg:
        raise UsageError("evaluate needs a 'dataset' and/or an 'oracle' to score against")
    model = M.load_model(cfg["model"])
    result = {"model": cfg["model"]}
    if "dataset" in cfg:
        data = load_dataset(cfg["dataset"])
        pred = model.predict(data.X)
        result["acc_copy"] = float(np.mean(pred == data.y))
        result["n_points"] = len(data)
    if "oracle" in cfg:
        oracle = _remote_oracle(cfg["oracle"])
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        synth = _synthetic(oracle, cfg, seed)
        result["r_emp_synthetic"] = empirical_fidelity_error(model.predict(synth.X), synth.y)
        result["n_samples"] = len(synth)
        if "dataset" in cfg:
            result["r_emp_original"] = empirical_fidelity_error(pred, oracle.query(data.X))
    text = json.dumps(result, sort_keys=True)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "evaluation.json").write_text(text)
    print(text)
    return 0


def cmd_sweep(args):
    cfg = _read_config(args.config)
    if "capacity" not in cfg:
        raise ConfigError("sweep needs a 'capacity' entry")
    oracle, test = _oracle_from(cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    synth = _synthetic(oracle, cfg, seed)
    cap = capacity_for(cfg["capacity"])
    family = cfg.get("hypothesis", cfg["capacity"].get("family", "rbf"))
    holdout = None if test is None else (test.X, test.y)
    res = capacity_sweep(oracle, synth, cap, family, cfg.get("params", {}), seed=seed, holdout=holdout)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    with (out / "trace.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["capacity", "r_train", "r_validation", "r_holdout", "feasible", "diverged"])
        for p in res.trace:
            w.writerow([repr(p.capacity), repr(p.r_train), repr(p.r_validation), "" if p.r_holdout is None else repr(p.r_holdout), int(p.feasible), int(p.diverged)])
    M.save_model(res.model, out / "model.json")
    print(json.dumps({"selected": res.selected, "reference_error": res.reference_error, "monitor": res.monitor, "trace": str(out / "trace.csv")}))
    return 0


def cmd_serve(args):
    model = M.load_model(args.model)
    server = serve(model, args.host, args.port)
    print(json.dumps({"url": server_url(server)}), flush=True)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="copyforge", description="Copy hard-label classifiers through membership queries.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("run", cmd_run, "run a full copy study from an experiment config"),
        ("copy", cmd_copy, "copy an oracle once and save the model"),
        ("sample", cmd_sample, "write a labelled synthetic CSV"),
        ("evaluate", cmd_evaluate, "score a saved copy against a dataset and/or oracle"),
        ("sweep", cmd_sweep, "run a capacity sweep and write its trace"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
        sp.set_defaults(func=fn)
    sp = sub.add_parser("serve", help="expose a saved model as a remote oracle")
    sp.add_argument("--model", required=True)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8080)
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("COPYFORGE_LOG", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code:
            sys.stderr.write(json.dumps({"error": "UsageError", "message": "invalid command line"}) + "\n")
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (CopyforgeError, ValueError, OSError, KeyError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2 if isinstance(exc, (UsageError, ConfigError)) else 1


if __name__ == "__main__":
    sys.exit(main())
