"""Bias amplification in transmission chains: simulation, inference and debiased resampling."""

__version__ = "0.1.0"

from biasnet.judgment import (
    ModelParams,
    SocialSignal,
    Stimulus,
    alpha_from_epsilon,
    green_probability,
    inv_logit,
    log_odds,
)

__all__ = [
    "ModelParams",
    "SocialSignal",
    "Stimulus",
    "alpha_from_epsilon",
    "green_probability",
    "inv_logit",
    "log_odds",
]
