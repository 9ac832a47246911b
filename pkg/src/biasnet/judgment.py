"""Logistic decision model for a single green/blue judgment.

The log-odds of endorsing green decompose additively into a social term
``alpha * (k - n/2)``, a stimulus term ``gamma`` and a prior bias ``beta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from biasnet.errors import DomainError


@dataclass(frozen=True)
class ModelParams:
    alpha: float = 0.0
    gamma: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "gamma", "beta"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")


@dataclass(frozen=True)
class SocialSignal:
    """``k`` of ``n`` observed judgments endorsed green."""

    k: int
    n: int = 8

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.k <= self.n:
            raise DomainError(f"invalid social signal k={self.k}, n={self.n}")

    @property
    def centered(self) -> float:
        return self.k - self.n / 2


@dataclass(frozen=True)
class Stimulus:
    id: str
    green_dots: int
    total_dots: int = 100

    def __post_init__(self):
        if not 0 < self.green_dots < self.total_dots:
            raise DomainError("green_dots must lie strictly between 0 and total_dots")

    @property
    def majority_green(self) -> bool:
        return 2 * self.green_dots > self.total_dots


def inv_logit(x):
    """Overflow-free logistic function for scalars or arrays."""
    if np.ndim(x) == 0:
        x = float(x)
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        z = math.exp(x)
        return z / (1.0 + z)
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    z = np.exp(x[~pos])
    out[~pos] = z / (1.0 + z)
    return out


def log_odds(params: ModelParams, signal: Optional[SocialSignal] = None) -> float:
    """Log-odds of endorsing green. An absent signal drops the social term."""
    social = params.alpha * signal.centered if signal is not None else 0.0
    return social + params.gamma + params.beta


def green_probability(params: ModelParams, signal: Optional[SocialSignal] = None) -> float:
    return inv_logit(log_odds(params, signal))


def alpha_from_epsilon(epsilon: float) -> float:
    """Social weight implied by endorsements that are wrong with probability ``epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    return 2.0 * (math.log1p(-epsilon) - math.log(epsilon))
