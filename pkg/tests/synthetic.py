"""Synthetic psychometric data drawn from the hierarchical generative model."""
import numpy as np

from biasnet.inference.model import InferenceDataset
from biasnet.judgment import inv_logit

LEVELS = {48: -0.45, 49: -0.23, 51: 0.40, 52: 0.70}


def hierarchical_data(rng, participants=64, trials=16, mu_b=0.4, sigma_b=0.3, alpha=None, group_size=8):
    """Half green- and half blue-motivated participants, ``trials/4`` trials per level.

    With ``alpha`` set, each trial also shows a uniformly drawn green count.
    """
    pid, stim, y, col, ks = [], [], [], [], []
    levels = np.repeat(list(LEVELS), trials // len(LEVELS))
    for j in range(participants):
        color = "green" if j < participants // 2 else "blue"
        beta = rng.normal(mu_b, sigma_b) * (1 if color == "green" else -1)
        for lev in levels:
            k = int(rng.integers(0, group_size + 1)) if alpha is not None else None
            eta = LEVELS[lev] + beta + (alpha * (k - group_size / 2) if alpha is not None else 0.0)
            pid.append(f"p{j}")
            stim.append(int(lev))
            y.append(bool(rng.random() < inv_logit(eta)))
            col.append(color)
            ks.append(k)
    return InferenceDataset.from_rows(pid, stim, y, col, social_k=ks if alpha is not None else None,
                                      group_size=group_size)
