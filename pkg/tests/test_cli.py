import json

import pytest

from probrobust.cli import main
from probrobust.data import read_csv
from probrobust.model import load_model


def run(tmp_path, command, cfg=None, *extra):
    argv = [command]
    if cfg is not None:
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps(cfg))
        argv += ["--config", str(path)]
    return main(argv + list(extra))


def report(path):
    return json.loads(path.read_text())


def strip_runtime(obj):
    if isinstance(obj, dict):
        return {k: strip_runtime(v) for k, v in obj.items() if k != "runtime_ms"}
    if isinstance(obj, list):
        return [strip_runtime(v) for v in obj]
    return obj


@pytest.fixture
def moons_csv(tmp_path):
    out = tmp_path / "moons.csv"
    assert main(["gen-data", "moons", "--n", "60", "--seed", "2", "--out", str(out)]) == 0
    return out


def test_gen_data(moons_csv, tmp_path, capsys):
    ds = read_csv(moons_csv)
    assert len(ds) == 60 and ds.class_count == 2
    assert main(["gen-data", "blobs", "--n", "10", "--out", str(tmp_path / "b.csv")]) == 0
    assert "wrote 10 blobs" in capsys.readouterr().out


def test_train_writes_model_log_and_report(tmp_path, moons_csv):
    cfg = {"data": str(moons_csv), "hidden": [8], "train": {"mode": "at_pr", "epochs": 2, "restarts": 2,
                                                            "check_n": 10},
           "probe": str(moons_csv), "probe_points": 3, "probe_n": 50,
           "model_out": str(tmp_path / "m.json"), "log_out": str(tmp_path / "log.jsonl"),
           "out": str(tmp_path / "r.json")}
    assert run(tmp_path, "train", cfg) == 0
    net = load_model(tmp_path / "m.json")
    assert net.input_dim == 2 and net.class_count == 2
    lines = [json.loads(s) for s in (tmp_path / "log.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in lines] == [0, 1] and "mean_pr" in lines[0]
    rep = report(tmp_path / "r.json")
    assert rep["command"] == "train" and rep["results"]["train_config"]["pgd_step_size"] == 0.025


def test_eval_pr_constant_fixture(tmp_path, capsys):
    cfg = {"model": "builtin:constant", "perturb": {"center": [0.0, 0.0], "radius": 1.0},
           "estimator": {"kind": "mc", "n": 500}, "out": str(tmp_path / "r.json")}
    assert run(tmp_path, "eval-pr", cfg) == 0
    rep = report(tmp_path / "r.json")
    assert rep["schema_version"] == "1.0" and rep["command"] == "eval-pr"
    assert rep["results"][0]["pr_point"] == 1.0
    assert rep["seeds"] == [0]
    assert "PR 1" in capsys.readouterr().out


def test_eval_pr_stdout_is_pure_json(tmp_path, capsys):
    cfg = {"model": "builtin:constant", "perturb": {"center": [0.0, 0.0], "radius": 1.0}}
    assert run(tmp_path, "eval-pr", cfg) == 0
    captured = capsys.readouterr()
    assert json.loads(captured.out)["results"][0]["pr_point"] == 1.0
    assert "PR 1" in captured.err


@pytest.mark.parametrize("estimator", [
    {"kind": "mc", "n": 2000, "bound": "hoeffding"},
    {"kind": "seq", "threshold": 0.9, "max_samples": 5000},
    {"kind": "amls", "n_particles": 200},
    {"kind": "last_particle", "n_particles": 50, "mh_steps": 5},
])
def test_eval_pr_estimators_on_sign_fixture(tmp_path, estimator):
    cfg = {"model": "builtin:sign_025", "perturb": {"center": [0.0], "radius": 1.0},
           "estimator": estimator, "seed": 4, "out": str(tmp_path / "r.json")}
    assert run(tmp_path, "eval-pr", cfg) == 0
    r = report(tmp_path / "r.json")["results"][0]
    if estimator["kind"] == "seq":
        assert r["verdict"] == "pr_below_threshold"
    else:
        assert abs(r["pr_point"] - 0.625) < 0.1


def test_eval_pr_every_row(tmp_path, moons_csv):
    cfg = {"model": "builtin:constant", "data": str(moons_csv), "perturb": {"radius": 0.1},
           "estimator": {"kind": "mc", "n": 20}, "seed": 10, "out": str(tmp_path / "r.json")}
    assert run(tmp_path, "eval-pr", cfg) == 0
    rep = report(tmp_path / "r.json")
    assert rep["seeds"] == list(range(10, 70))
    assert len(rep["results"]) == 60


def test_eval_risk(tmp_path):
    cfg = {"model": "builtin:sign_025", "perturb": {"center": [0.0], "radius": 1.0}, "n": 5000,
           "measures": [{"measure": "cvar", "level": 0.1}, {"measure": "ess_sup", "level": 0.5}],
           "out": str(tmp_path / "r.json")}
    assert run(tmp_path, "eval-risk", cfg) == 0
    res = report(tmp_path / "r.json")["results"]
    assert [r["measure"] for r in res] == ["cvar", "ess_sup"]
    # margin of class 1 over class 0 is x - 0.25; top decile of U(-1, 1) averages 0.9
    assert res[0]["value"] == pytest.approx(0.65, abs=0.02)


def _partition(tmp_path):
    p = tmp_path / "part.json"
    p.write_text(json.dumps({"cells": [{"box": [[2.0, 3.0]], "weight": 0.7},
                                       {"box": [[0.2499999, 0.2500001]], "weight": 0.3}]}))
    return p


def test_tsr_and_lipschitz(tmp_path):
    part = _partition(tmp_path)
    cfg = {"model": "builtin:sign_025", "partition": str(part), "perturb": {"radius": 0.5},
           "n": 20000, "out": str(tmp_path / "t.json")}
    assert run(tmp_path, "tsr", cfg) == 0
    r = report(tmp_path / "t.json")["results"]
    assert r["ci_low"] <= 0.85 <= r["ci_high"]
    cfg = {"model": "builtin:sign_025", "partition": str(part), "gamma": 0.5, "k": 1.5,
           "pair_budget": 500, "out": str(tmp_path / "l.json")}
    assert run(tmp_path, "lipschitz", cfg) == 0
    assert report(tmp_path / "l.json")["results"]["verdict"] == "pass"


def test_oracle_sign_fixture(tmp_path):
    cfg = {"model": "builtin:sign_025", "perturb": {"center": [0.0], "radius": 1.0},
           "points_per_dim": 10001, "out": str(tmp_path / "g.json")}
    assert run(tmp_path, "oracle", cfg) == 0
    assert report(tmp_path / "g.json")["results"]["pr_exact"] == pytest.approx(0.625, abs=2e-4)
    cfg.update(method="linear_analytic", out=str(tmp_path / "a.json"))
    assert run(tmp_path, "oracle", cfg) == 0
    assert report(tmp_path / "a.json")["results"]["pr_exact"] == pytest.approx(0.625, abs=1e-12)


def test_bench_small(tmp_path):
    cfg = {"decades": [0.25, 0.01], "mc_budgets": [100, 1000], "reps": 5, "amls_particles": 100,
           "lp_particles": 20, "mh_steps": 5, "lp_reps": 2, "out": str(tmp_path / "b.json")}
    assert run(tmp_path, "bench", cfg) == 0
    res = report(tmp_path / "b.json")["results"]
    assert {r["method"] for r in res["table"]} == {"mc", "amls", "last_particle"}
    assert res["oracle"][0]["oracle_pr"] == pytest.approx(0.75, abs=1e-9)


def test_exit_codes(tmp_path):
    base = {"model": "builtin:constant", "perturb": {"center": [0.0, 0.0], "radius": 1.0}}
    assert run(tmp_path, "eval-pr", {**base, "unknown_key": 1}) == 1
    assert run(tmp_path, "eval-pr", {**base, "model": str(tmp_path / "missing.json")}) == 1
    assert run(tmp_path, "eval-pr", {**base, "perturb": {"center": [0.0, 0.0], "radius": -1}}) == 1
    assert main(["eval-pr"]) == 1
    assert main(["no-such-command"]) == 1
    assert main(["eval-pr", "--config", str(tmp_path / "nope.json")]) == 1
    rare = {**base, "estimator": {"kind": "amls", "n_particles": 50, "max_levels": 3}}
    assert run(tmp_path, "eval-pr", rare) == 3
    big = tmp_path / "big.json"
    big.write_text(json.dumps({"input_dim": 1, "class_count": 2, "layers": [
        {"weights": [[1e308], [-1e308]], "bias": [0.0, 0.0], "activation": "identity"}]}))
    fault = {"model": str(big), "perturb": {"center": [10.0], "radius": 1.0}, "estimator": {"kind": "mc", "n": 10}}
    assert run(tmp_path, "eval-pr", fault) == 2


def test_config_error_leaves_no_output(tmp_path):
    out = tmp_path / "r.json"
    cfg = {"model": "builtin:constant", "perturb": {"center": [0.0, 0.0], "radius": 1.0},
           "estimator": {"kind": "mc", "n": 0}, "out": str(out)}
    assert run(tmp_path, "eval-pr", cfg) == 1
    assert not out.exists()


def test_seed_and_out_overrides(tmp_path):
    cfg = {"model": "builtin:sign_025", "perturb": {"center": [0.0], "radius": 1.0},
           "estimator": {"kind": "mc", "n": 100}}
    assert run(tmp_path, "eval-pr", cfg, "--seed", "9", "--out", str(tmp_path / "o.json")) == 0
    assert report(tmp_path / "o.json")["seeds"] == [9]


def test_threads_do_not_change_reports(tmp_path):
    cfg = {"model": "builtin:sign_025", "perturb": {"center": [0.1], "radius": 1.0},
           "estimator": {"kind": "mc", "n": 50_000}, "seed": 3}
    assert run(tmp_path, "eval-pr", cfg, "--threads", "1", "--out", str(tmp_path / "a.json")) == 0
    assert run(tmp_path, "eval-pr", cfg, "--threads", "8", "--out", str(tmp_path / "b.json")) == 0
    a = report(tmp_path / "a.json")
    b = report(tmp_path / "b.json")
    a.pop("config"), b.pop("config")
    assert strip_runtime(a) == strip_runtime(b)
