"""Convergence diagnostics and interval summaries for MCMC draws."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from biasnet.errors import ContractError


class Rhat(NamedTuple):
    value: float
    degenerate: bool = False


def split_rhat(draws) -> Rhat:
    """Split-chain potential scale reduction factor.

    ``draws`` has shape ``(chains, iterations)``. Each chain is cut in half
    and the halves are treated as separate chains. Zero within-chain variance
    gives ``Rhat(inf, degenerate=True)``.
    """
    x = np.asarray(draws, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 4:
        raise ContractError("split R-hat needs at least 2 chains of 4 draws")
    half = x.shape[1] // 2
    x = np.concatenate([x[:, :half], x[:, -half:]], axis=0)
    n = x.shape[1]
    chain_means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = n * chain_means.var(ddof=1)
    if not np.isfinite(W) or W <= 0.0:
        return Rhat(float("inf"), True)
    var_plus = (n - 1) / n * W + B / n
    return Rhat(float(np.sqrt(var_plus / W)), False)


def _autocorr(x):
    n = len(x)
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov


def effective_sample_size(draws) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence truncation."""
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    m, n = x.shape
    if n < 4:
        return float(m * n)
    acov = np.array([_autocorr(c) for c in x])
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    if W <= 0:
        return float("nan")
    var_plus = W * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Sum autocorrelation pairs while they stay positive and decreasing.
    total = 0.0
    prev = np.inf
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def hdi(samples, mass: float = 0.9):
    """Shortest interval containing ``mass`` of the sorted samples."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = len(x)
    if n == 0:
        raise ContractError("hdi of an empty sample")
    width = int(np.ceil(mass * n))
    if width >= n:
        return float(x[0]), float(x[-1])
    spans = x[width - 1:] - x[: n - width + 1]
    i = int(np.argmin(spans))
    return float(x[i]), float(x[i + width - 1])
