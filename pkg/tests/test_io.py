import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from biasnet.chain import amplification_curve
from biasnet.errors import ConfigError, ContractError, TraceParseError
from biasnet.io import (
    PLOT_COLUMNS,
    RunManifest,
    config_digest,
    emit_plot_data,
    load_config,
    load_trace,
    persist_trace,
    plot_data,
    resolve_config,
    serialize_config,
)
from biasnet.sim import TRACE_COLUMNS, build_experiment, exp2_config, run_experiment
from biasnet.sim.engine import ExperimentTrace, trace_frame
from biasnet.inference.fit import McmcConfig


def _random_records(rng, n):
    conds = np.array(["asocial_motivated", "social_motivated", "social_resampling"])
    out = []
    for i in range(n):
        social = i % 3 != 0
        k = int(rng.integers(0, 9)) if social else None
        out.append((0, str(conds[i % 3]), int(rng.integers(0, 14)), 1 + i % 8, i % 16, 48 + i % 5,
                    f"a{i}", "green" if i % 2 else "blue", k, ("green" if i % 4 < 2 else "blue") if social else None,
                    max(k, 8 - k) if social else None, bool(i % 5), bool(i % 7), bool(i % 3),
                    "1;2;3;4;5;6;7;0" if i % 3 == 2 else ""))
    return out


@pytest.fixture(scope="module")
def small_trace():
    cfg = exp2_config(networks=2, waves=3, inference=McmcConfig(2, 120, 60))
    return run_experiment(build_experiment(cfg))


def test_minimal_config_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{}")
    cfg = load_config(path)
    assert cfg.experiment.waves == 8
    assert cfg.experiment.agents_per_wave == 8
    assert cfg.stationary.n == 8
    assert cfg.experiment.conditions == {c: 14 for c in ("asocial_motivated", "social_motivated",
                                                          "social_resampling")}
    assert cfg.fit.chains == 8 and cfg.fit.iterations == 2500


def test_constraint_violation_names_field():
    with pytest.raises(ConfigError) as info:
        resolve_config({"experiment": {"waves": 0}})
    assert info.value.path == "experiment.waves"
    assert "experiment.waves" in str(info.value)


@pytest.mark.parametrize("raw,path", [
    ({"experiment": {"trials": "16"}}, "experiment.trials"),
    ({"bogus": 1}, "<root>"),
    ({"fit": {"chains": 1}}, "fit.chains"),
    ({"experiment": {"oracles": {"social_motivated": {"mu_b": 0, "sigma_b": -1, "gamma_levels": {}}}}},
     "experiment.oracles.social_motivated.sigma_b"),
    ({"fit": {"iterations": 100, "warmup": 200}}, "fit"),
    ({"experiment": {"trials": 6}}, "experiment.trials"),
])
def test_config_errors(raw, path):
    with pytest.raises(ConfigError) as info:
        resolve_config(raw)
    assert info.value.path == path


def test_config_round_trip(tmp_path):
    raw = {"seed": 9, "experiment": {"networks": 4, "waves": 5}, "stationary": {"alphas": [0.5]}}
    first = resolve_config(raw)
    (tmp_path / "c.json").write_text(serialize_config(first))
    second = load_config(tmp_path / "c.json")
    assert second.document == first.document
    assert serialize_config(second) == serialize_config(first)
    assert second.digest == first.digest


def test_seed_override_changes_digest():
    a, b = resolve_config({}), load_config(None, seed=3)
    assert b.seed == 3 and b.experiment.seed == 3
    assert a.digest != b.digest
    assert config_digest(a.document) == a.digest


def test_invalid_json(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json")


def test_empty_trace_round_trip(tmp_path):
    path = tmp_path / "t.csv"
    persist_trace(ExperimentTrace(), path)
    assert path.read_text() == ",".join(TRACE_COLUMNS) + "\n"
    assert len(load_trace(path)) == 0


def test_one_row_byte_stable(tmp_path, rng):
    trace = ExperimentTrace(trace_frame(_random_records(rng, 2)[1:]))
    persist_trace(trace, tmp_path / "a.csv")
    persist_trace(load_trace(tmp_path / "a.csv"), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_large_round_trip(tmp_path, rng):
    trace = ExperimentTrace(trace_frame(_random_records(rng, 100_000)))
    persist_trace(trace, tmp_path / "t.csv")
    pd.testing.assert_frame_equal(load_trace(tmp_path / "t.csv").rows, trace.rows)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 8), st.booleans(), st.text(alphabet="ab,;\"x ", max_size=6)),
                max_size=20))
def test_round_trip_property(tmp_path_factory, cells):
    records = [(0, "social_motivated", 1, 2, i, 52, f"id,{i}", "green", k, "green", max(k, 8 - k), g, g, not g, s)
               for i, (k, g, s) in enumerate(cells)]
    trace = ExperimentTrace(trace_frame(records))
    path = tmp_path_factory.mktemp("p") / "t.csv"
    persist_trace(trace, path)
    pd.testing.assert_frame_equal(load_trace(path).rows, trace.rows)


def test_simulated_trace_round_trip(tmp_path, small_trace):
    persist_trace(small_trace, tmp_path / "t.csv")
    pd.testing.assert_frame_equal(load_trace(tmp_path / "t.csv").rows, small_trace.rows)


@pytest.mark.parametrize("body,line", [
    ("0,c,1,1,0,48,a,green,,,,maybe,true,true,\n", 2),
    ("0,c,1,1,0,48,a,green,,,,true,true,true,\n0,c,1\n", 3),
    ("0,c,x,1,0,48,a,green,,,,true,true,true,\n", 2),
])
def test_malformed_rows_report_line(tmp_path, body, line):
    path = tmp_path / "t.csv"
    path.write_text(",".join(TRACE_COLUMNS) + "\n" + body)
    with pytest.raises(TraceParseError) as info:
        load_trace(path)
    assert info.value.line == line


def test_bad_header(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("a,b\n")
    with pytest.raises(TraceParseError):
        load_trace(path)


def test_fig2_schema(tmp_path):
    curve = amplification_curve((0.0, 0.5), (-1.0, 0.0, 1.0))
    out = pd.read_csv(emit_plot_data(curve, "fig2_stationary", tmp_path / "f.csv"))
    assert list(out.columns) == ["alpha", "beta", "mean_green", "individual_green"]
    assert len(out) == 6


def test_bar_schema(small_trace):
    bars = plot_data(small_trace, "fig4_bars")
    assert list(bars.columns) == PLOT_COLUMNS["fig4_bars"]
    assert len(bars) == 3 * 2
    assert not bars.duplicated(["condition", "metric"]).any()
    with pytest.raises(ContractError):
        plot_data(small_trace, "fig3_bars")


def test_wave_average_equals_pooled(small_trace):
    waves = plot_data(small_trace, "figS4_waves")
    bars = plot_data(small_trace, "fig4_bars").set_index(["condition", "metric"])
    for (cond, metric), g in waves.groupby(["condition", "metric"]):
        avg = float(np.dot(g["value"], g["n"]) / g["n"].sum())
        assert abs(avg - bars.loc[(cond, metric), "value"]) < 1e-12


def test_plot_kind_mismatch(small_trace):
    with pytest.raises(ContractError):
        plot_data(small_trace, "fig2_stationary")
    with pytest.raises(ContractError):
        plot_data(amplification_curve((0.5,), (0.0,)), "fig3_bars")
    with pytest.raises(ContractError):
        plot_data(small_trace, "fig9")


def test_manifest(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    cfg = resolve_config({})
    (tmp_path / "x.csv").write_text("a\n1\n")
    m = RunManifest("simulate", cfg.seed, cfg.digest, cfg.document)
    m.add_output(tmp_path / "x.csv", tmp_path)
    doc = json.loads(m.write(tmp_path).read_text())
    assert doc["config_digest"] == cfg.digest
    assert doc["outputs"][0]["path"] == "x.csv"
    assert doc["timestamps"]["started"] == "1970-01-01T00:00:00+00:00"
