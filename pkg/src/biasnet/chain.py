"""Markov chain on the number of green endorsements per wave.

Each of ``n`` agents in wave ``t`` independently endorses green with the
probability given by the judgment model evaluated at the previous wave's
count, so ``k_t | k_{t-1}`` is binomial.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from biasnet.errors import ConvergenceError, DomainError
from biasnet.judgment import ModelParams, SocialSignal, green_probability

DEFAULT_ALPHAS = (0.0, 0.25, 0.5, 1.0)
DEFAULT_BETAS = tuple(round(b / 10, 1) for b in range(-30, 31))


@dataclass(frozen=True)
class TransitionMatrix:
    n: int
    entries: np.ndarray  # rows: previous count, columns: next count

    def __post_init__(self):
        if self.entries.shape != (self.n + 1, self.n + 1):
            raise DomainError("transition matrix must be (n+1) x (n+1)")


@dataclass(frozen=True)
class StationaryDistribution:
    probs: np.ndarray
    residual: float = 0.0
    iterations: int = 0

    @property
    def n(self) -> int:
        return len(self.probs) - 1

    def mean_proportion(self) -> float:
        k = np.arange(self.n + 1)
        return float(np.dot(k, self.probs) / self.n)


def binomial_pmf(n: int, p: float) -> np.ndarray:
    c = np.arange(n + 1)
    coeffs = np.array([comb(n, int(i)) for i in c], dtype=float)
    return coeffs * p**c * (1.0 - p) ** (n - c)


def transition_matrix(params: ModelParams, n: int) -> TransitionMatrix:
    if n < 1:
        raise DomainError(f"group size must be positive, got {n}")
    rows = [binomial_pmf(n, green_probability(params, SocialSignal(r, n))) for r in range(n + 1)]
    return TransitionMatrix(n, np.vstack(rows))


def stationary_distribution(
    matrix: TransitionMatrix, tol: float = 1e-12, max_iter: int = 100_000
) -> StationaryDistribution:
    """Power iteration from the uniform distribution.

    The propagator is squared after every step, so step ``m`` applies
    ``P**(2**m - 1)`` in total. Strongly bistable chains (large alpha) would
    otherwise need hundreds of thousands of plain steps.
    """
    P = matrix.entries
    pi = np.full(matrix.n + 1, 1.0 / (matrix.n + 1))
    Q = P.copy()
    residual = np.inf
    for it in range(1, max_iter + 1):
        pi = pi @ Q
        pi /= pi.sum()
        residual = float(np.max(np.abs(pi @ P - pi)))
        if residual <= tol:
            return StationaryDistribution(pi, residual, it)
        Q = Q @ Q
        Q /= Q.sum(axis=1, keepdims=True)
    raise ConvergenceError(
        f"stationary distribution did not converge in {max_iter} iterations", residual
    )


def amplification_curve(
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    beta_grid: Sequence[float] = DEFAULT_BETAS,
    gamma: float = 0.0,
    n: int = 8,
    with_distributions: bool = False,
):
    """Mean stationary green proportion against single-agent green probability.

    Returns a long-form frame with one row per ``(alpha, beta)``. With
    ``with_distributions`` also returns the per-state table
    ``alpha, beta, gamma, n, k, pi_k``.
    """
    if len(alphas) == 0 or len(beta_grid) == 0:
        raise DomainError("alpha and beta grids must be non-empty")
    summary, dists = [], []
    for alpha in alphas:
        for beta in beta_grid:
            params = ModelParams(float(alpha), float(gamma), float(beta))
            pi = stationary_distribution(transition_matrix(params, n))
            summary.append(
                (float(alpha), float(beta), float(gamma), n, pi.mean_proportion(), green_probability(params))
            )
            if with_distributions:
                dists.extend(
                    (float(alpha), float(beta), float(gamma), n, k, float(p)) for k, p in enumerate(pi.probs)
                )
    table = pd.DataFrame(
        summary, columns=["alpha", "beta", "gamma", "n", "mean_green", "individual_green"]
    )
    if not with_distributions:
        return table
    return table, pd.DataFrame(dists, columns=["alpha", "beta", "gamma", "n", "k", "pi_k"])


def iter_grid(alphas: Iterable[float], betas: Iterable[float]):
    for a in alphas:
        for b in betas:
            yield a, b
