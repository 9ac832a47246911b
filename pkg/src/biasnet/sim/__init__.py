from biasnet.sim.config import (
    CONDITIONS,
    TABLE_S3_ASOCIAL,
    TABLE_S3_SOCIAL,
    ExperimentConfig,
    OracleParams,
    exp1_config,
    exp2_config,
)
from biasnet.sim.engine import ExperimentTrace, TRACE_COLUMNS, run_experiment, simulate_wave
from biasnet.sim.plan import AgentProfile, ExperimentPlan, build_experiment
from biasnet.sim.power import DEFAULT_HYPOTHESES, DIRECTIONAL_HYPOTHESES, Hypothesis, run_power_analysis

__all__ = [
    "AgentProfile", "CONDITIONS", "DEFAULT_HYPOTHESES", "DIRECTIONAL_HYPOTHESES", "ExperimentConfig",
    "ExperimentPlan", "ExperimentTrace", "Hypothesis", "OracleParams", "TABLE_S3_ASOCIAL", "TABLE_S3_SOCIAL",
    "TRACE_COLUMNS", "build_experiment", "exp1_config", "exp2_config", "run_experiment", "run_power_analysis",
    "simulate_wave",
]
