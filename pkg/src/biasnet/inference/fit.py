"""Posterior sampling for the judgment models and a quadrature cross-check."""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from biasnet.errors import ContractError, SamplingError
from biasnet.inference.diagnostics import effective_sample_size, hdi, split_rhat
from biasnet.inference.model import InferenceDataset, ModelSpec, Posterior
from biasnet.inference.nuts import NutsSampler

log = logging.getLogger(__name__)

RHAT_WARNING = 1.05


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 8
    iterations: int = 2500
    warmup: int = 1250
    seed: int = 0
    target_accept: float = 0.8
    max_tree_depth: int = 10

    def __post_init__(self):
        if self.chains < 2:
            raise ContractError("at least two chains are needed for R-hat")
        if not 0 <= self.warmup < self.iterations:
            raise ContractError("warmup must be non-negative and smaller than iterations")
        if not 0 < self.target_accept < 1:
            raise ContractError("target_accept must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)


@dataclass
class PosteriorDraws:
    """Post-warmup draws with shape ``(chains, iterations - warmup, ...)``."""

    spec: ModelSpec
    config: McmcConfig
    names: list  # flat parameter names in theta order
    theta: np.ndarray  # (chains, draws, dim); log_sigma_b kept on the log scale
    participant_ids: list
    stimulus_labels: list
    rhat: dict = field(default_factory=dict)
    ess: dict = field(default_factory=dict)
    degenerate: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    sampler_stats: dict = field(default_factory=dict)

    @property
    def _index(self):
        return {n: i for i, n in enumerate(self.names)}

    def __getitem__(self, name):
        """Draw array for a flat name, or a group: ``b``, ``gamma``, ``sigma_b``."""
        if name == "sigma_b":
            return np.exp(self.theta[..., self._index["log_sigma_b"]])
        if name in ("b", "gamma"):
            cols = [i for i, n in enumerate(self.names) if n.startswith(name + "[")]
            return self.theta[..., cols]
        return self.theta[..., self._index[name]]

    def mean(self, name):
        return np.asarray(self[name]).reshape(-1, *np.shape(self[name])[2:]).mean(axis=0)

    def point_estimates(self):
        """Posterior means of participant biases and stimulus effects keyed by label."""
        b = self.mean("b")
        g = self.mean("gamma")
        return (dict(zip(self.participant_ids, map(float, b))),
                dict(zip(self.stimulus_labels, map(float, g))))

    def summary(self, mass: float = 0.9) -> pd.DataFrame:
        rows = []
        for name in self._summary_names():
            x = self[name]
            lo, hi = hdi(x, mass)
            rows.append({
                "parameter": name,
                "mean": float(np.mean(x)),
                "sd": float(np.std(x, ddof=1)),
                "hdi_lower": lo,
                "hdi_upper": hi,
                "rhat": self.rhat.get(name, float("nan")),
                "ess": self.ess.get(name, float("nan")),
            })
        return pd.DataFrame(rows)

    def _summary_names(self):
        return ["sigma_b" if n == "log_sigma_b" else n for n in self.names]


def _chain_seeds(config: McmcConfig):
    return np.random.SeedSequence(config.seed).spawn(config.chains)


def _run_chain(args):
    spec, data, config, seed_seq = args
    post = Posterior(spec, data)
    rng = np.random.default_rng(seed_seq)
    u0 = rng.uniform(-2.0, 2.0, size=post.dim)
    if spec.hierarchical:
        u0[1] = rng.uniform(-1.0, 1.0)
    sampler = NutsSampler(post.logp_grad_unconstrained, post.dim, rng,
                          config.target_accept, config.max_tree_depth)
    result = sampler.sample(u0, config.iterations, config.warmup)
    return post.to_theta(result.draws), result


def fit_posterior(
    spec: ModelSpec, data: InferenceDataset, config: McmcConfig = McmcConfig(), workers: int = 1
) -> PosteriorDraws:
    """Run ``config.chains`` independent NUTS chains and collect diagnostics.

    Chains use sub-seeds spawned from ``config.seed`` and are merged in chain
    order, so the result does not depend on ``workers``.
    """
    post = Posterior(spec, data)  # validates spec/data compatibility
    jobs = [(spec, data, config, s) for s in _chain_seeds(config)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chain, jobs))
    else:
        results = [_run_chain(j) for j in jobs]
    theta = np.stack([r[0] for r in results])
    if not np.all(np.isfinite(theta)):
        raise SamplingError("sampler produced non-finite draws")
    names = post.layout.names()
    draws = PosteriorDraws(spec, config, names, theta, list(data.participant_ids), list(data.stimulus_labels))
    for i, name in enumerate(draws._summary_names()):
        x = draws[name]
        r = split_rhat(x) if x.shape[1] >= 4 else None
        if r is None:
            continue
        draws.rhat[name] = r.value
        draws.ess[name] = effective_sample_size(x)
        if r.degenerate:
            draws.degenerate.append(name)
        elif r.value > RHAT_WARNING:
            draws.warnings.append(f"rhat {r.value:.3f} for {name}")
    if draws.warnings:
        log.warning("convergence warnings: %s", "; ".join(draws.warnings[:5]))
    draws.sampler_stats = {
        "step_size": [r[1].step_size for r in results],
        "mean_accept": [float(r[1].accept_stat.mean()) if len(r[1].accept_stat) else float("nan") for r in results],
        "divergences": [int(r[1].divergent.sum()) for r in results],
        "max_tree_depth": [int(r[1].tree_depth.max()) if len(r[1].tree_depth) else 0 for r in results],
    }
    return draws


@dataclass
class GridPosterior:
    names: list
    grids: list
    means: dict
    marginals: dict  # name -> normalised mass on the grid points


MAX_GRID_PARAMS = 4


def grid_posterior_oracle(
    spec: ModelSpec, data: InferenceDataset, grids, chunk: int = 200_000
) -> GridPosterior:
    """Posterior means and marginals by brute-force summation on a tensor grid.

    ``grids`` is a sequence of 1-d arrays in theta order, or a mapping from
    parameter name to grid. Grids should be uniform for the sums to be
    Riemann approximations of the integrals.
    """
    post = Posterior(spec, data)
    names = post.layout.names()
    if len(names) > MAX_GRID_PARAMS:
        raise ContractError(f"grid oracle handles at most {MAX_GRID_PARAMS} parameters, model has {len(names)}")
    if isinstance(grids, Mapping):
        grids = [grids[n] for n in names]
    grids = [np.asarray(g, dtype=float) for g in grids]
    if len(grids) != len(names):
        raise ContractError("one grid per parameter is required")
    shape = tuple(len(g) for g in grids)
    total = int(np.prod(shape))
    logp = np.empty(total)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        coords = np.unravel_index(idx, shape)
        theta = np.stack([g[c] for g, c in zip(grids, coords)], axis=-1)
        logp[start:start + len(idx)] = post.log_posterior(theta)
    w = np.exp(logp - logp.max()).reshape(shape)
    w /= w.sum()
    means, marginals = {}, {}
    for axis, (name, g) in enumerate(zip(names, grids)):
        other = tuple(a for a in range(len(shape)) if a != axis)
        m = w.sum(axis=other) if other else w
        marginals[name] = m
        means[name] = float(np.dot(m, g))
    return GridPosterior(names, grids, means, marginals)


def grid_product(*axes: Sequence[float]):
    return itertools.product(*axes)
