import csv
import json

import numpy as np
import pytest

from copyforge import models as M
from copyforge.cli import main
from copyforge.experiment import ConfigError, ExperimentConfig, reports_from_runs
from copyforge.oracle import serve, server_url

from conftest import Threshold

SMALL_RUN = {
    "dataset": {"bundled": "iris"},
    "original": {"family": "forest", "params": {"trees_count": 5}},
    "copies": [{"family": "tree"}, {"family": "logistic", "params": {"epochs": 50}}],
    "n_samples": 600,
    "repetitions": 2,
    "seed": 0,
}


@pytest.fixture
def remote():
    srv = serve(Threshold(0.0))
    yield {"url": server_url(srv), "dim": 2, "k": 2}
    srv.shutdown()


def _config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_sample_balanced_against_remote(tmp_path, remote):
    cfg = _config(tmp_path, {"oracle": remote, "n_samples": 100, "balanced": True, "per_class": 50})
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    with open(tmp_path / "o" / "synthetic.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["f0", "f1", "label"]
    labels = [int(r[-1]) for r in rows[1:]]
    assert len(labels) == 100 and labels.count(0) == 50


def test_copy_then_evaluate_remote(tmp_path, remote):
    cfg = _config(tmp_path, {"oracle": remote, "n_samples": 500, "balanced": False, "copy": {"family": "tree"}})
    assert main(["copy", "--config", cfg, "--out", str(tmp_path / "c")]) == 0
    metrics = json.loads((tmp_path / "c" / "metrics.json").read_text())
    assert metrics["r_emp_synthetic"] == 0.0
    ev = _config(tmp_path, {"model": str(tmp_path / "c" / "model.json"), "oracle": remote, "n_samples": 2000}, "ev.json")
    assert main(["evaluate", "--config", ev, "--seed", "9", "--out", str(tmp_path / "e")]) == 0
    result = json.loads((tmp_path / "e" / "evaluation.json").read_text())
    assert result["r_emp_synthetic"] < 0.02


def test_evaluate_needs_a_target(tmp_path, capsys):
    cfg = _config(tmp_path, {"model": "m.json"})
    assert main(["evaluate", "--config", cfg]) == 2
    assert _error(capsys)["error"] == "UsageError"


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "none.json")]) == 2
    assert "not found" in _error(capsys)["message"]


def test_unreachable_remote_exits_nonzero(tmp_path, capsys):
    cfg = _config(tmp_path, {"oracle": {"url": "http://127.0.0.1:9", "dim": 1, "k": 2, "timeout_ms": 200}, "n_samples": 5})
    assert main(["sample", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert _error(capsys)["error"] == "OracleTransportError"


def test_sweep_trace_is_strictly_decreasing(tmp_path):
    cfg = _config(
        tmp_path,
        {
            "dataset": {"generator": "moons", "n": 300, "noise_std": 0.1, "seed": 0},
            "original": {"family": "rbf", "params": {"gamma": 1.0}},
            "standardize": False,
            "n_samples": 800,
            "balanced": False,
            "capacity": {"grid": {"hi": 1e3, "lo": 1e-2, "n": 8}},
        },
    )
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    with open(tmp_path / "s" / "trace.csv") as fh:
        caps = [float(r["capacity"]) for r in csv.DictReader(fh)]
    assert caps and all(b < a for a, b in zip(caps, caps[1:]))
    assert isinstance(M.load_model(tmp_path / "s" / "model.json"), M.KernelModel)


def test_unknown_family_rejected_before_work(tmp_path, capsys):
    cfg = _config(tmp_path, dict(SMALL_RUN, copies=[{"family": "boosting"}]))
    out = tmp_path / "never"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 2
    assert _error(capsys)["error"] == "ConfigError"
    assert not out.exists()


def test_unknown_config_key():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(dict(SMALL_RUN, repetitons=3))


def test_single_repetition_has_zero_std(tmp_path):
    cfg = _config(tmp_path, dict(SMALL_RUN, repetitions=1))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "r" / "summary.csv")))
    for row in rows:
        for col, val in row.items():
            if col.endswith("_std"):
                assert float(val) == 0.0


def test_run_is_byte_reproducible_and_estimate_consistent(tmp_path):
    cfg = _config(tmp_path, SMALL_RUN)
    for name in ("a", "b"):
        assert main(["run", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel

    rows = {r["copy"]: r for r in csv.DictReader(open(tmp_path / "a" / "summary.csv"))}
    for family, reports in reports_from_runs(tmp_path / "a" / "runs").items():
        a_o = reports[0].acc_original
        r_mean = float(np.mean([r.r_emp_synthetic for r in reports]))
        assert abs(float(rows[family]["acc_copy_estimated_mean"]) - a_o * (1 - r_mean)) <= 1e-12


def test_failed_run_leaves_marker(tmp_path):
    cfg = _config(tmp_path, dict(SMALL_RUN, dataset={"path": str(tmp_path / "missing.csv"), "schema": {"kinds": {"a": "numeric", "t": "target"}}}))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "f")]) == 1
    marker = json.loads((tmp_path / "f" / "FAILED.json").read_text())
    assert marker["stage"] == "prepare"
