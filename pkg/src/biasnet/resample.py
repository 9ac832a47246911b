"""Importance-weighted resampling of judgment sets.

Each judgment is weighted by how much more likely it is under an unbiased
target model than under the model of the person who made it. Weights are
normalised within a judgment set and every recipient draws its own sample of
``N`` judgments, with replacement, from that set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from biasnet.errors import ContractError, DomainError
from biasnet.judgment import inv_logit

WEIGHT_FLOOR = 1e-9
SET_SIZE = 8


@dataclass(frozen=True)
class JudgmentRecord:
    participant_id: str
    stimulus_id: str
    chose_green: bool
    q_green: float  # probability under the participant's fitted model
    p_green: float  # probability under the target model

    def __post_init__(self):
        for name in ("q_green", "p_green"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise DomainError(f"{name} must lie strictly in (0, 1), got {v!r}")

    @classmethod
    def from_fit(cls, participant_id, stimulus_id, chose_green, bias, gamma, target_bias=0.0):
        """Build a record from a fitted green-axis bias and stimulus effect."""
        return cls(participant_id, stimulus_id, bool(chose_green),
                   _interior(inv_logit(gamma + bias)), _interior(inv_logit(gamma + target_bias)))


def _interior(p):
    # logistic of a finite value can round to exactly 0 or 1
    return min(max(p, 1e-300), 1.0 - 1e-16)


@dataclass
class JudgmentSet:
    records: list
    size: int = SET_SIZE

    def __post_init__(self):
        if len(self.records) != self.size:
            raise ContractError(f"judgment set holds {len(self.records)} records, expected {self.size}")
        if len({r.stimulus_id for r in self.records}) > 1:
            raise ContractError("judgment set mixes stimuli")

    @property
    def chose_green(self) -> np.ndarray:
        return np.array([r.chose_green for r in self.records], dtype=bool)


@dataclass
class WeightVector:
    unnormalized: np.ndarray
    normalized: np.ndarray
    floored: np.ndarray = field(default=None)  # per-record floor flags
    uniform_fallback: bool = False


def judgment_weight(record: JudgmentRecord, floor: float = WEIGHT_FLOOR):
    """Return ``(weight, floored)`` for the judgment actually made."""
    if record.chose_green:
        p, q = record.p_green, record.q_green
    else:
        p, q = 1.0 - record.p_green, 1.0 - record.q_green
    floored = q < floor
    return p / max(q, floor), floored


def normalize_weights(judgments: JudgmentSet, floor: float = WEIGHT_FLOOR) -> WeightVector:
    pairs = [judgment_weight(r, floor) for r in judgments.records]
    w = np.array([p[0] for p in pairs])
    flags = np.array([p[1] for p in pairs])
    total = w.sum()
    if not math.isfinite(total) or total <= 0.0:
        n = len(w)
        return WeightVector(w, np.full(n, 1.0 / n), flags, True)
    return WeightVector(w, w / total, flags, False)


def resample_indices(weights: Sequence[float], size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` i.i.d. indices drawn by inverse CDF from normalised ``weights``."""
    cdf = np.cumsum(np.asarray(weights, dtype=float))
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    return np.minimum(idx, len(cdf) - 1)


def resample_for_recipient(judgments: JudgmentSet, weights: WeightVector, rng: np.random.Generator) -> list:
    if len(weights.normalized) != len(judgments.records):
        raise ContractError("weights are not aligned with the judgment set")
    idx = resample_indices(weights.normalized, judgments.size, rng)
    return [judgments.records[i] for i in idx]


def presented_signal(judgments: Sequence[bool], viewer_marked_color: str,
                     rng: Optional[np.random.Generator] = None):
    """Majority summary shown to a viewer.

    ``judgments`` flag whether each observed judgment endorsed the viewer's
    marked color. Returns ``(color, count)`` with ``count = max(k, N - k)``.
    An exact tie shows ``N/2`` for a color chosen by a fair coin from ``rng``.
    """
    if viewer_marked_color not in ("green", "blue"):
        raise ContractError(f"unknown marked color {viewer_marked_color!r}")
    other = "blue" if viewer_marked_color == "green" else "green"
    n = len(judgments)
    if n == 0:
        raise ContractError("cannot summarise an empty judgment list")
    k = int(sum(bool(j) for j in judgments))
    if 2 * k > n:
        return viewer_marked_color, k
    if 2 * k < n:
        return other, n - k
    if rng is None:
        raise ContractError("a tie needs a random stream to pick the presented color")
    return (viewer_marked_color if rng.random() < 0.5 else other), k


def expected_green_count(judgments: JudgmentSet, weights: WeightVector) -> float:
    """Exact expectation of the number of green judgments in one resample."""
    return judgments.size * float(np.dot(weights.normalized, judgments.chose_green))
