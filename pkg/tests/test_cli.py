import csv
import json
import os

import numpy as np
import pytest

from telegas import analytic as an
from telegas.cli import main
from telegas.core import APPROACH, SEPARATION, Params
from telegas.experiments import (
    DEFAULTS,
    EXPERIMENTS,
    ExperimentConfig,
    emit_density_grid,
    run,
    run_experiment,
    verdict_from_report,
)


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_every_experiment_has_defaults():
    assert set(DEFAULTS) == set(EXPERIMENTS)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig("nope", 1)
    with pytest.raises(ValueError):
        ExperimentConfig("kac", None)
    with pytest.raises(ValueError):
        ExperimentConfig("kac", 1, pattern="21")
    with pytest.raises(ValueError):
        ExperimentConfig("kac", 1, replicas=0)
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"experiment": "kac", "seed": 1, "colour": 3})
    cfg = ExperimentConfig.from_dict({"experiment": "kac", "seed": 1, "lambda": 2.0, "eps": [1, 0.5]})
    assert cfg.lam == 2.0 and cfg.eps == (1.0, 0.5)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    r = cfg.resolved()
    assert r.eps == (1.0, 0.5) and r.replicas == DEFAULTS["kac"]["replicas"]


def test_exit_code_pass(tmp_path):
    assert main(["levy-identity", "--seed", "1", "--out", str(tmp_path), "-q"]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] and verdict_from_report(report) == 0
    assert (tmp_path / "levy.csv").exists() and (tmp_path / "config.json").exists()


def test_exit_code_fail_in_literal_mode(tmp_path):
    assert main(["levy-identity", "--seed", "1", "--paper-literal", "--out", str(tmp_path), "-q"]) == 2
    report = json.loads((tmp_path / "report.json").read_text())
    assert verdict_from_report(report) == 2


def test_exit_code_error(tmp_path):
    assert main(["levy-identity", "--out", str(tmp_path), "-q"]) == 1  # no seed
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"seed": 1, "speed": 2}))
    assert main(["levy-identity", "--config", str(bad), "--out", str(tmp_path), "-q"]) == 1
    with pytest.raises(SystemExit):
        main(["no-such-experiment", "--seed", "1"])


def test_flags_override_config_file(tmp_path):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"seed": 5, "z": 2.0, "replicas": 300, "T": 20.0}))
    out = tmp_path / "o"
    assert main(["first-meeting", "--config", str(cfgfile), "--z", "1.5", "--out", str(out), "-q"]) in (0, 2)
    saved = json.loads((out / "config.json").read_text())
    assert saved["z"] == 1.5 and saved["seed"] == 5 and saved["replicas"] == 300


def test_analytic_grid_output(tmp_path):
    assert main(["analytic-grid", "--seed", "0", "--grid", "0,0.5,1,2", "--out", str(tmp_path), "-q"]) == 0
    rows = _read(tmp_path / "density_grid.csv")
    assert rows[0] == ["t", "density", "cdf", "atom"]
    atoms = [r for r in rows[1:] if r[3] == "1"]
    assert len(atoms) == 1 and float(atoms[0][0]) == 0.5
    assert float(atoms[0][1]) == pytest.approx(np.exp(-1.0))


def test_emit_density_grid_cases(tmp_path):
    P = Params(1, 1)
    sep = an.first_meeting_distribution(SEPARATION, 1.0, P)
    path = emit_density_grid(sep, [0.0, 1.0], str(tmp_path / "a.csv"))
    rows = _read(path)
    assert len(rows) == 3 and all(r[3] == "0" for r in rows[1:])
    app = an.first_meeting_distribution(APPROACH, 1.0, P)
    rows = _read(emit_density_grid(app, [], str(tmp_path / "b.csv")))
    assert len(rows) == 2 and rows[1][3] == "1"
    with pytest.raises(ValueError):
        emit_density_grid(app, [1.0, 0.5], str(tmp_path / "c.csv"))
    with pytest.raises(OSError):
        emit_density_grid(app, [1.0], str(tmp_path / "missing" / "d.csv"))


def test_run_cleans_up_on_error(tmp_path, monkeypatch):
    import telegas.experiments as ex

    def boom(cfg, rep):
        raise RuntimeError("boom")

    monkeypatch.setitem(ex.EXPERIMENTS, "levy-identity", boom)
    with pytest.raises(RuntimeError):
        run(ExperimentConfig("levy-identity", 1, out_dir=str(tmp_path)))
    assert os.listdir(tmp_path) == []


def test_same_seed_same_bytes_any_worker_count(tmp_path):
    outs = []
    for w in (1, 2):
        d = tmp_path / f"w{w}"
        run(ExperimentConfig("first-meeting", 42, replicas=400, T=20.0, ks_samples=400, workers=w, out_dir=str(d)))
        outs.append(d)
    for name in ("samples.csv", "cdf.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_different_seed_different_sample(tmp_path):
    a = run_experiment(ExperimentConfig("first-meeting", 1, replicas=200, T=20.0, ks_samples=200))
    b = run_experiment(ExperimentConfig("first-meeting", 2, replicas=200, T=20.0, ks_samples=200))
    assert a.tables["samples"][1] != b.tables["samples"][1]


@pytest.mark.parametrize("name", ["ergodic", "reflect-density", "levy-identity", "analytic-grid"])
def test_cheap_experiments_run(name):
    rep = run_experiment(ExperimentConfig(name, 3))
    assert rep.checks or rep.density_grid is not None
    assert rep.to_dict()["experiment"] == name
