"""Simulation-based power analysis over repeated experiments."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from biasnet.errors import BiasnetError
from biasnet.sim.config import ExperimentConfig
from biasnet.sim.engine import run_experiment
from biasnet.sim.plan import build_experiment
from biasnet.stats import METRICS, compare_conditions

log = logging.getLogger(__name__)

POWER_COLUMNS = ["simulation_id", "hypothesis_id", "statistic", "p_value", "confirmed"]


@dataclass(frozen=True)
class Hypothesis:
    """Claim that ``metric`` is higher in condition ``high`` than in ``low``.

    With ``require_significance`` the LR test must also reject pooling at
    level ``alpha``. ``allow_equal`` accepts ties in the observed rates.
    """

    id: str
    metric: str
    low: str
    high: str
    require_significance: bool = True
    allow_equal: bool = False
    alpha: float = 0.05

    def evaluate(self, rows: pd.DataFrame):
        col = METRICS[self.metric]
        rate_low = rows.loc[rows["condition"] == self.low, col].mean()
        rate_high = rows.loc[rows["condition"] == self.high, col].mean()
        test = compare_conditions(rows, self.low, self.high, self.metric)
        diff = rate_high - rate_low
        ok = diff >= 0 if self.allow_equal else diff > 0
        if self.require_significance:
            ok = ok and test.p_value < self.alpha
        return test.chi_square, test.p_value, bool(ok)


DEFAULT_HYPOTHESES = (
    Hypothesis("social_increases_bias", "bias", "asocial_motivated", "social_motivated"),
    Hypothesis("social_lowers_accuracy", "accuracy", "social_motivated", "asocial_motivated"),
    Hypothesis("resampling_reduces_bias", "bias", "social_resampling", "social_motivated"),
    Hypothesis("resampling_restores_accuracy", "accuracy", "asocial_motivated", "social_resampling"),
)

DIRECTIONAL_HYPOTHESES = (
    Hypothesis("social_increases_bias", "bias", "asocial_motivated", "social_motivated",
               require_significance=False),
    Hypothesis("resampling_reduces_bias", "bias", "social_resampling", "social_motivated",
               require_significance=False),
    Hypothesis("resampling_keeps_accuracy", "accuracy", "asocial_motivated", "social_resampling",
               require_significance=False, allow_equal=True),
)


@dataclass
class PowerResult:
    table: pd.DataFrame
    failures: pd.DataFrame

    @property
    def n_sims(self) -> int:
        return int(self.table["simulation_id"].nunique()) if len(self.table) else 0

    def confirmation_rates(self) -> pd.Series:
        return self.table.groupby("hypothesis_id", sort=False)["confirmed"].mean()

    @property
    def fraction_all_confirmed(self) -> float:
        if not len(self.table):
            return float("nan")
        per_sim = self.table.groupby("simulation_id")["confirmed"].all()
        return float(per_sim.sum() / (per_sim.size + len(self.failures)))


def _one_simulation(args):
    config, sim_id, hypotheses = args
    plan = build_experiment(config)
    try:
        trace = run_experiment(plan, simulation_id=sim_id)
        out = []
        for h in hypotheses:
            stat, p, ok = h.evaluate(trace.rows)
            out.append((sim_id, h.id, stat, p, ok))
        return out, None
    except BiasnetError as exc:
        return [], (sim_id, type(exc).__name__, str(exc))


def run_power_analysis(config: ExperimentConfig, n_sims: int,
                       hypothesis_suite: Sequence[Hypothesis] = DEFAULT_HYPOTHESES,
                       workers: int = 1) -> PowerResult:
    """Simulate ``n_sims`` independent experiments and test every hypothesis in each.

    Simulation ``i`` uses the master seed with ``simulation_id=i``, so
    results do not depend on ``workers``. Failed simulations are listed in
    ``failures`` and excluded from the table.
    """
    if n_sims < 0:
        raise ValueError("n_sims must be non-negative")
    config.validate()
    jobs = [(config, i, tuple(hypothesis_suite)) for i in range(n_sims)]
    if workers > 1 and n_sims > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_one_simulation, jobs))
    else:
        results = [_one_simulation(j) for j in jobs]
    rows, failures = [], []
    for out, fail in results:
        rows.extend(out)
        if fail is not None:
            log.warning("simulation %d failed: %s", fail[0], fail[2])
            failures.append(fail)
    table = pd.DataFrame(rows, columns=POWER_COLUMNS)
    table["confirmed"] = table["confirmed"].astype(bool)
    return PowerResult(table, pd.DataFrame(failures, columns=["simulation_id", "error", "message"]))
