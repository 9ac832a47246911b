"""Wave-by-wave simulation with in-loop model fitting and resampling."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np
import pandas as pd

from biasnet.errors import BiasnetError, SequencingError
from biasnet.inference.fit import McmcConfig, fit_posterior
from biasnet.inference.model import InferenceDataset, ModelSpec
from biasnet.judgment import inv_logit
from biasnet.resample import (
    JudgmentRecord,
    JudgmentSet,
    normalize_weights,
    presented_signal,
    resample_indices,
)
from biasnet.sim.config import RESAMPLING, SOCIAL, OracleParams
from biasnet.sim.plan import ExperimentPlan, Key

log = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "simulation_id", "condition", "network", "wave", "trial", "stimulus_level", "agent_id",
    "motivated_color", "observed_k", "presented_color", "presented_count", "chose_green",
    "chose_motivated", "chose_correct", "resampled",
]
WEIGHT_COLUMNS = [
    "simulation_id", "condition", "network", "wave", "trial", "agent_id", "chose_green",
    "q_green", "p_green", "weight", "normalized", "floored", "uniform_fallback",
]

AGENT_COLUMNS = ["simulation_id", "agent_id", "condition", "network", "wave", "marked_color",
                 "motivated_color", "bias_b"]

# spawn-key stage tags for named random streams
_BIAS, _CHOICE, _TIE, _RESAMPLE, _FIT = range(1, 6)
_COND_INDEX = {c: i for i, c in enumerate(
    ("asocial_motivated", "asocial_control", "social_motivated", "social_control", "social_resampling"))}


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator named by ``key`` under the master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def sub_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)).generate_state(1, np.uint32)[0])


@dataclass
class GroupJudgments:
    """Choices of one (condition, network, wave) group, agents x trials."""

    chose_green: np.ndarray
    chose_marked: np.ndarray
    weights: Optional[list] = None  # per-trial WeightVector once fitted


TRACE_DTYPES = {
    "simulation_id": "int64", "condition": "object", "network": "int64", "wave": "int64", "trial": "int64",
    "stimulus_level": "int64", "agent_id": "object", "motivated_color": "object", "observed_k": "Int64",
    "presented_color": "object", "presented_count": "Int64", "chose_green": "bool", "chose_motivated": "bool",
    "chose_correct": "bool", "resampled": "object",
}


def trace_frame(records, total_dots: int = 100) -> pd.DataFrame:
    """Trace rows as a frame with the canonical column order and dtypes."""
    rows = pd.DataFrame(list(records), columns=TRACE_COLUMNS).astype(TRACE_DTYPES)
    rows["presented_color"] = rows["presented_color"].where(rows["presented_color"].notna(), None)
    rows.attrs["total_dots"] = total_dots
    return rows


@dataclass
class ExperimentTrace:
    rows: pd.DataFrame = field(default_factory=lambda: trace_frame([]))
    weights: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=WEIGHT_COLUMNS))
    agents: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=AGENT_COLUMNS))
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)


@dataclass
class WaveState:
    judgments: Dict[Key, GroupJudgments] = field(default_factory=dict)
    rows: list = field(default_factory=list)
    weight_rows: list = field(default_factory=list)
    agent_rows: list = field(default_factory=list)
    fits: list = field(default_factory=list)


def simulate_wave(plan: ExperimentPlan, state: WaveState, wave: int, oracles: Mapping[str, OracleParams],
                  seed: int, simulation_id: int = 0) -> Dict[Key, GroupJudgments]:
    """Simulate every group in ``wave`` and append their rows to ``state``."""
    cfg = plan.config
    N = cfg.agents_per_wave
    produced = {}
    for key in plan.groups_in_wave(wave):
        cond, r, t = key
        agents = plan.groups[key]
        oracle = oracles[cond]
        ci = _COND_INDEX[cond]
        biases = stream(seed, simulation_id, _BIAS, t, ci, r).normal(oracle.mu_b, oracle.sigma_b, size=len(agents))
        u = stream(seed, simulation_id, _CHOICE, t, ci, r).random((len(agents), cfg.trials))
        tie_rng = stream(seed, simulation_id, _TIE, t, ci, r)
        source = None
        if cond in SOCIAL:
            src_key = plan.sources[key]
            source = state.judgments.get(src_key)
            if source is None:
                raise SequencingError(f"group {key} needs judgments of {src_key}, which are not simulated yet")
            if cond in RESAMPLING and source.weights is None:
                raise SequencingError(f"group {key} needs resampling weights for {src_key}")
        chose_green = np.zeros((len(agents), cfg.trials), dtype=bool)
        chose_marked = np.zeros_like(chose_green)
        for i, agent in enumerate(agents):
            state.agent_rows.append((simulation_id, agent.id, cond, r, t, agent.marked_color,
                                     agent.motivated_color or "", float(biases[i])))
            sign = 1.0 if agent.marked_color == "green" else -1.0
            resample_rng = stream(seed, simulation_id, _RESAMPLE, t, ci, r, i) if cond in RESAMPLING else None
            for d in range(cfg.trials):
                green_dots = plan.green_dots(agent, d)
                x = oracle.constant_c + oracle.gamma_levels[green_dots]
                observed_k = presented_color = presented_count = None
                resampled = ""
                if source is not None:
                    if resample_rng is not None:
                        idx = resample_indices(source.weights[d].normalized, N, resample_rng)
                        resampled = ";".join(str(j) for j in idx)
                        flags = source.chose_marked[idx, d]
                    else:
                        flags = source.chose_marked[:, d]
                    k_marked = int(flags.sum())
                    observed_k = k_marked if sign > 0 else N - k_marked
                    presented_color, presented_count = presented_signal(flags, agent.marked_color, tie_rng)
                    x = x + oracle.vote_weight * (observed_k - N / 2)
                # log-odds toward the marked colour; bias is toward the coding colour
                p_marked = inv_logit(sign * x + biases[i])
                marked = bool(u[i, d] < p_marked)
                green = marked if sign > 0 else not marked
                chose_marked[i, d] = marked
                chose_green[i, d] = green
                state.rows.append((
                    simulation_id, cond, r, t, d, green_dots, agent.id, agent.frame_color,
                    observed_k, presented_color, presented_count, green, marked,
                    green == (2 * green_dots > cfg.total_dots), resampled,
                ))
        produced[key] = GroupJudgments(chose_green, chose_marked)
    state.judgments.update(produced)
    return produced


def _stimulus_key(plan: ExperimentPlan, agent, trial: int):
    if plan.config.composition == "mixed":
        return f"s{trial}:{plan.green_dots(agent, trial)}"
    return f"s{trial}"


def _fit_and_weight(plan: ExperimentPlan, state: WaveState, wave: int, inference: McmcConfig,
                    seed: int, simulation_id: int):
    """Fit the resampling model to this wave and weight the judgments feeding resampled groups."""
    cfg = plan.config
    if wave == 1:
        targets = sorted({plan.sources[k] for k in plan.sources if k[0] in RESAMPLING and k[2] == 2})
        pool = targets
    else:
        targets = sorted(k for k in plan.groups_in_wave(wave) if k[0] in RESAMPLING)
        pool = sorted(k for k in plan.groups_in_wave(wave) if k[0] in cfg.fit_pool or k[0] in RESAMPLING)
    if not targets:
        return
    pid, stim, green, color = [], [], [], []
    for key in pool:
        g = state.judgments[key]
        for i, agent in enumerate(plan.groups[key]):
            for d in range(cfg.trials):
                pid.append(agent.id)
                stim.append(_stimulus_key(plan, agent, d))
                green.append(bool(g.chose_green[i, d]))
                color.append(agent.marked_color)
    data = InferenceDataset.from_rows(pid, stim, green, color, group_size=cfg.agents_per_wave)
    mcmc = McmcConfig(inference.chains, inference.iterations, inference.warmup,
                      sub_seed(seed, simulation_id, _FIT, wave), inference.target_accept, inference.max_tree_depth)
    try:
        draws = fit_posterior(ModelSpec.resampling(), data, mcmc)
    except BiasnetError as exc:
        raise type(exc)(f"wave {wave}: {exc}") from exc
    bias, gamma = draws.point_estimates()
    target = float(np.mean(list(bias.values()))) if cfg.resampling_target == "population_mean" else 0.0
    state.fits.append({
        "wave": wave, "participants": data.n_participants, "rows": len(data),
        "max_rhat": float(max(draws.rhat.values())), "warnings": len(draws.warnings), "target_bias": target,
    })
    for key in targets:
        cond, r, t = key
        g = state.judgments[key]
        agents = plan.groups[key]
        weights = []
        for d in range(cfg.trials):
            records = [JudgmentRecord.from_fit(a.id, f"s{d}", g.chose_green[i, d], bias[a.id],
                                               gamma[_stimulus_key(plan, a, d)], target)
                       for i, a in enumerate(agents)]
            w = normalize_weights(JudgmentSet(records, len(records)), cfg.weight_floor)
            weights.append(w)
            for i, rec in enumerate(records):
                state.weight_rows.append((
                    simulation_id, cond, r, t, d, rec.participant_id, rec.chose_green, rec.q_green,
                    rec.p_green, float(w.unnormalized[i]), float(w.normalized[i]), bool(w.floored[i]),
                    w.uniform_fallback,
                ))
        g.weights = weights


def run_experiment(plan: ExperimentPlan, oracles: Optional[Mapping[str, OracleParams]] = None,
                   inference: Optional[McmcConfig] = None, seed: Optional[int] = None,
                   simulation_id: int = 0) -> ExperimentTrace:
    """Simulate all waves in order, refitting and resampling between waves."""
    cfg = plan.config
    oracles = dict(cfg.oracles if oracles is None else oracles)
    inference = inference or cfg.inference
    seed = cfg.seed if seed is None else seed
    state = WaveState()
    has_resampling = any(c in RESAMPLING for c in cfg.conditions)
    for wave in range(1, cfg.waves + 1):
        simulate_wave(plan, state, wave, oracles, seed, simulation_id)
        if has_resampling and wave < cfg.waves:
            _fit_and_weight(plan, state, wave, inference, seed, simulation_id)
    rows = trace_frame(state.rows, cfg.total_dots)
    weights = pd.DataFrame(state.weight_rows, columns=WEIGHT_COLUMNS)
    meta = {
        "simulation_id": simulation_id, "seed": seed, "group_size": cfg.agents_per_wave,
        "total_dots": cfg.total_dots, "inference": inference.to_dict() if has_resampling else None,
        "fits": state.fits,
    }
    agents = pd.DataFrame(state.agent_rows, columns=AGENT_COLUMNS)
    return ExperimentTrace(rows, weights, agents, meta)


def stage_seeds(config, simulation_id: int = 0) -> dict:
    """Seeds of the between-wave model fits, for run manifests."""
    return {"fit": {str(w): sub_seed(config.seed, simulation_id, _FIT, w) for w in range(1, config.waves)}}
