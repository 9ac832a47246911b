import json

import pandas as pd
import pytest

from biasnet.cli import main

FAST = {"seed": 2, "experiment": {"networks": 2, "waves": 3, "inference": {"chains": 2, "iterations": 120,
                                                                          "warmup": 60}},
        "fit": {"chains": 2, "iterations": 200, "warmup": 100},
        "stationary": {"beta_step": 0.5},
        "power": {"n_sims": 2, "hypotheses": "directional"}}


@pytest.fixture
def config(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(FAST))
    return str(path)


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_stationary(tmp_path, config):
    out = tmp_path / "st"
    assert main(["stationary", "--config", config, "--out-dir", str(out)]) == 0
    curve = pd.read_csv(out / "curve.csv")
    assert len(curve) == 4 * 13
    manifest = json.loads((out / "manifest.json").read_text())
    listed = {o["path"] for o in manifest["outputs"]}
    assert listed == {p.name for p in out.iterdir()} - {"manifest.json"}


def test_pipeline_is_deterministic(tmp_path, config):
    for run in ("a", "b"):
        d = tmp_path / run
        assert main(["--seed", "5", "simulate", "--config", config, "--out-dir", str(d / "sim")]) == 0
        assert main(["analyze", str(d / "sim" / "trace.csv"), "--config", config,
                     "--out-dir", str(d / "an")]) == 0
    for sub in ("sim", "an"):
        assert _files(tmp_path / "a" / sub) == _files(tmp_path / "b" / sub)
    tests = pd.read_csv(tmp_path / "a" / "an" / "tests.csv")
    assert set(tests.columns) == {"condition_a", "condition_b", "metric", "chi_square", "df", "p_value", "stars"}
    manifest = json.loads((tmp_path / "a" / "sim" / "manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["sub_seeds"]["fit"]
    assert {o["path"] for o in manifest["outputs"]} == {"trace.csv", "weights.csv", "agents.csv",
                                                         "trace_meta.json"}


def test_fit_command(tmp_path, config):
    sim = tmp_path / "sim"
    main(["simulate", "--config", config, "--out-dir", str(sim)])
    out = tmp_path / "fit"
    code = main(["fit", str(sim / "trace.csv"), "--config", config, "--out-dir", str(out),
                 "--variant", "exp1_social", "--condition", "social_motivated"])
    assert code == 0
    summary = pd.read_csv(out / "posterior_summary.csv")
    assert {"mu_b", "sigma_b", "alpha"} <= set(summary["parameter"])


def test_resample_command(tmp_path, config):
    rows = pd.DataFrame({"set_id": ["s1"] * 4 + ["s2"] * 4, "participant_id": list("abcdabcd"),
                         "chose_green": [1, 0, 1, 1, 0, 0, 1, 0], "bias": [0.5, -0.5, 1.0, 0.0] * 2,
                         "gamma": [0.4] * 4 + [-0.4] * 4})
    rows.to_csv(tmp_path / "j.csv", index=False)
    out = tmp_path / "rs"
    assert main(["resample", str(tmp_path / "j.csv"), "--config", config, "--out-dir", str(out),
                 "--recipients", "3"]) == 0
    w = pd.read_csv(out / "weights.csv")
    assert w.groupby("set_id")["normalized"].sum().round(12).eq(1.0).all()
    assert len(pd.read_csv(out / "resamples.csv")) == 6


def test_power_command_thread_independent(tmp_path, config):
    for threads in ("1", "2"):
        assert main(["power", "--config", config, "--threads", threads, "--out-dir", str(tmp_path / threads)]) == 0
    a, b = (tmp_path / "1" / "power.csv").read_bytes(), (tmp_path / "2" / "power.csv").read_bytes()
    assert a == b
    assert a.decode().splitlines()[0] == "simulation_id,hypothesis_id,statistic,p_value,confirmed"


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": {"waves": 0}}))
    assert main(["simulate", "--config", str(bad), "--out-dir", str(tmp_path)]) == 2
    assert "experiment.waves" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 4
    (tmp_path / "t.csv").write_text("nope\n")
    assert main(["analyze", str(tmp_path / "t.csv"), "--out-dir", str(tmp_path)]) == 4


def test_runtime_error_exit_code(tmp_path, config, monkeypatch):
    from biasnet import cli
    from biasnet.errors import ConvergenceError

    def boom(*a, **k):
        raise ConvergenceError("did not converge", 1.0)

    monkeypatch.setattr(cli, "amplification_curve", boom)
    assert main(["stationary", "--config", config, "--out-dir", str(tmp_path)]) == 3


def test_fit_from_dataset_csv(tmp_path, config):
    rows = []
    for j in range(6):
        color = "green" if j < 3 else "blue"
        for lev in (48, 52):
            for t in range(4):
                rows.append((f"p{j}", lev, int((t + j + lev) % 3 == 0), color, t * 2))
    pd.DataFrame(rows, columns=["participant_id", "stimulus_level", "chose_green", "motivated_color",
                                "social_k"]).to_csv(tmp_path / "d.csv", index=False)
    out = tmp_path / "fit"
    assert main(["fit", str(tmp_path / "d.csv"), "--variant", "exp1_social", "--config", config,
                 "--out-dir", str(out)]) == 0
    post = json.loads((out / "posterior.json").read_text())
    assert post["participants"] == 6 and post["stimuli"] == 2
    assert {"mean", "sd", "hdi_lower", "hdi_upper", "rhat"} <= set(post["parameters"][0])
    pd.DataFrame({"participant_id": ["a"]}).to_csv(tmp_path / "bad.csv", index=False)
    assert main(["fit", str(tmp_path / "bad.csv"), "--config", config, "--out-dir", str(out)]) == 2
