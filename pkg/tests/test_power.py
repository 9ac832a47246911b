import pandas as pd
import pytest

from biasnet.errors import SamplingError
from biasnet.inference.fit import McmcConfig
from biasnet.sim import (
    DEFAULT_HYPOTHESES,
    DIRECTIONAL_HYPOTHESES,
    ExperimentConfig,
    Hypothesis,
    OracleParams,
    exp2_config,
    run_power_analysis,
)
from biasnet.sim import power as power_mod

GAMMA = {48: -0.45, 49: -0.23, 51: 0.40, 52: 0.70}


def _null_config(**kw):
    oracles = {"asocial_motivated": OracleParams(0.0, 0.1, GAMMA),
               "social_motivated": OracleParams(0.0, 0.1, GAMMA, vote_weight=0.0)}
    return ExperimentConfig({"asocial_motivated": 2, "social_motivated": 2}, waves=3, trials=16,
                            oracles=oracles, **kw)


def test_zero_simulations():
    res = run_power_analysis(_null_config(), 0, DEFAULT_HYPOTHESES)
    assert res.table.empty
    assert list(res.table.columns) == ["simulation_id", "hypothesis_id", "statistic", "p_value", "confirmed"]


def test_table_layout_and_worker_independence():
    cfg = exp2_config(networks=2, waves=3, inference=McmcConfig(2, 120, 60))
    a = run_power_analysis(cfg, 2, DIRECTIONAL_HYPOTHESES)
    b = run_power_analysis(cfg, 2, DIRECTIONAL_HYPOTHESES, workers=2)
    assert len(a.table) == 2 * len(DIRECTIONAL_HYPOTHESES)
    pd.testing.assert_frame_equal(a.table, b.table)
    assert a.table["p_value"].between(0, 1).all()
    assert 0.0 <= a.fraction_all_confirmed <= 1.0


def test_null_oracle_false_positive_rate():
    hyp = (Hypothesis("social_increases_bias", "bias", "asocial_motivated", "social_motivated"),)
    res = run_power_analysis(_null_config(), 60, hyp)
    # one-sided test at 0.05 confirms about 2.5% of null simulations
    assert res.table["confirmed"].mean() < 0.12


def test_failures_are_recorded(monkeypatch):
    real = power_mod.run_experiment

    def flaky(plan, simulation_id=0, **kw):
        if simulation_id == 1:
            raise SamplingError("non-finite log density")
        return real(plan, simulation_id=simulation_id, **kw)

    monkeypatch.setattr(power_mod, "run_experiment", flaky)
    hyp = (Hypothesis("h", "bias", "asocial_motivated", "social_motivated", require_significance=False),)
    res = run_power_analysis(_null_config(), 3, hyp)
    assert sorted(res.table["simulation_id"]) == [0, 2]
    assert list(res.failures["simulation_id"]) == [1]
    assert res.fraction_all_confirmed <= 2 / 3


def test_allow_equal():
    rows = pd.DataFrame({"condition": ["a", "a", "b", "b"] * 5, "chose_motivated": [True, False] * 10,
                         "chose_correct": [True, False] * 10, "motivated_color": ["green"] * 20,
                         "network": [0] * 20})
    strict = Hypothesis("s", "accuracy", "a", "b", require_significance=False)
    loose = Hypothesis("l", "accuracy", "a", "b", require_significance=False, allow_equal=True)
    assert not strict.evaluate(rows)[2]
    assert loose.evaluate(rows)[2]


def test_negative_sims_rejected():
    with pytest.raises(ValueError):
        run_power_analysis(_null_config(), -1)
