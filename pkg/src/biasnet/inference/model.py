"""Hierarchical logistic (IRT-style) models of green/blue judgments.

Parameter vector layout (``theta``), in order:

* hierarchical variants: ``mu_b, log_sigma_b, b[1..J], gamma[1..D]`` and,
  for the social variant, a trailing ``alpha``;
* the resampling variant: ``b[1..J], gamma[1..D]`` where each ``b`` is a
  bias on the green axis with an independent normal prior.

The linear predictor for a row is
``alpha * (k - n/2) + gamma[stimulus] + sign * b[participant]`` with
``sign = +1`` for green-motivated and ``-1`` for blue-motivated participants
(hierarchical variants only).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from biasnet.errors import ContractError

VARIANTS = ("exp1_asocial", "exp1_social", "resampling")
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def recode_bias(b, motivated_color: str):
    """Map a bias toward the motivated color onto the green axis."""
    if motivated_color == "green":
        return b
    if motivated_color == "blue":
        return -b
    raise ContractError(f"unknown motivated color {motivated_color!r}")


def _normal_logpdf(x, loc, scale):
    z = (x - loc) / scale
    return -0.5 * z * z - np.log(scale) - _LOG_SQRT_2PI


@dataclass(frozen=True)
class ModelSpec:
    """Priors and structure of one model variant.

    Normal priors are parameterised by standard deviation. ``sigma_b`` has a
    lognormal prior, i.e. a normal prior with ``log_sigma_b_scale`` on
    ``log(sigma_b)``.
    """

    variant: str
    mu_b_scale: float = 3.0
    log_sigma_b_scale: float = 2.0
    gamma_scale: float = 20.0
    alpha_scale: float = 20.0
    bias_scale: float = 3.0  # resampling variant only

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown model variant {self.variant!r}")

    @classmethod
    def exp1_asocial(cls, **kw) -> "ModelSpec":
        return cls("exp1_asocial", **kw)

    @classmethod
    def exp1_social(cls, **kw) -> "ModelSpec":
        return cls("exp1_social", **kw)

    @classmethod
    def resampling(cls, **kw) -> "ModelSpec":
        kw.setdefault("gamma_scale", 3.0)
        return cls("resampling", **kw)

    @classmethod
    def for_variant(cls, variant: str, **kw) -> "ModelSpec":
        return {"exp1_asocial": cls.exp1_asocial, "exp1_social": cls.exp1_social,
                "resampling": cls.resampling}[variant](**kw)

    @property
    def include_social(self) -> bool:
        return self.variant == "exp1_social"

    @property
    def hierarchical(self) -> bool:
        return self.variant != "resampling"


@dataclass
class InferenceDataset:
    """Judgment rows coded for model fitting.

    ``stimulus`` values are categorical labels: a green-dot count for the
    psychometric models, or a stimulus identifier for the resampling model.
    """

    participant: np.ndarray  # integer codes into participant_ids
    stimulus: np.ndarray  # integer codes into stimulus_labels
    chose_green: np.ndarray
    color_sign: np.ndarray  # +1 green-motivated, -1 blue-motivated
    participant_ids: list
    stimulus_labels: list
    social_k: Optional[np.ndarray] = None
    group_size: int = 8

    @classmethod
    def from_rows(
        cls,
        participant_id: Sequence,
        stimulus_level: Sequence,
        chose_green: Sequence,
        motivated_color: Sequence,
        social_k: Optional[Sequence] = None,
        group_size: int = 8,
    ) -> "InferenceDataset":
        n = len(participant_id)
        if not (len(stimulus_level) == len(chose_green) == len(motivated_color) == n):
            raise ContractError("dataset columns differ in length")
        pids, pcodes = _codes(participant_id)
        labels, scodes = _codes(stimulus_level)
        colors = {}
        for p, c in zip(participant_id, motivated_color):
            if c not in ("green", "blue"):
                raise ContractError(f"unknown motivated color {c!r}")
            if colors.setdefault(p, c) != c:
                raise ContractError(f"participant {p!r} has more than one motivated color")
        sign = np.array([1.0 if c == "green" else -1.0 for c in motivated_color])
        k = None
        if social_k is not None and all(v is None for v in social_k) and n:
            social_k = None
        if social_k is not None:
            if any(v is None for v in social_k):
                raise ContractError("social_k must be present on every row or on none")
            k = np.asarray(social_k, dtype=int)
            if n and (k.min() < 0 or k.max() > group_size):
                raise ContractError("social_k outside [0, group_size]")
        return cls(pcodes, scodes, np.asarray(chose_green, dtype=bool), sign, pids, labels, k, group_size)

    @classmethod
    def empty(cls, social: bool = False) -> "InferenceDataset":
        z = np.zeros(0, dtype=int)
        return cls(z, z, z.astype(bool), z.astype(float), [], [], z if social else None)

    def __len__(self):
        return len(self.chose_green)

    @property
    def n_participants(self) -> int:
        return len(self.participant_ids)

    @property
    def n_stimuli(self) -> int:
        return len(self.stimulus_labels)

    def participant_color_sign(self) -> np.ndarray:
        out = np.ones(self.n_participants)
        out[self.participant] = self.color_sign
        return out


def _codes(values):
    labels = sorted(set(values), key=lambda v: (str(type(v)), v))
    index = {v: i for i, v in enumerate(labels)}
    return labels, np.array([index[v] for v in values], dtype=int)


@dataclass
class ParamLayout:
    spec: ModelSpec
    n_participants: int
    n_stimuli: int
    participant_ids: list = field(default_factory=list)
    stimulus_labels: list = field(default_factory=list)

    @classmethod
    def of(cls, spec: ModelSpec, data: InferenceDataset) -> "ParamLayout":
        return cls(spec, data.n_participants, data.n_stimuli, data.participant_ids, data.stimulus_labels)

    @property
    def offset(self) -> int:
        return 2 if self.spec.hierarchical else 0

    @property
    def b(self) -> slice:
        return slice(self.offset, self.offset + self.n_participants)

    @property
    def gamma(self) -> slice:
        start = self.offset + self.n_participants
        return slice(start, start + self.n_stimuli)

    @property
    def dim(self) -> int:
        return self.offset + self.n_participants + self.n_stimuli + int(self.spec.include_social)

    def names(self) -> list:
        head = ["mu_b", "log_sigma_b"] if self.spec.hierarchical else []
        names = head + [f"b[{p}]" for p in self.participant_ids]
        names += [f"gamma[{s}]" for s in self.stimulus_labels]
        if self.spec.include_social:
            names.append("alpha")
        return names


class Posterior:
    """Log posterior density and gradient for one (spec, dataset) pair.

    Rows sharing participant, stimulus and social count are collapsed into
    binomial cells before any evaluation.
    """

    def __init__(self, spec: ModelSpec, data: InferenceDataset):
        if spec.include_social and data.social_k is None:
            raise ContractError("social model requires social_k on every row")
        if not spec.include_social and data.social_k is not None:
            raise ContractError("social_k supplied to a model without a social term")
        self.spec = spec
        self.data = data
        self.layout = ParamLayout.of(spec, data)
        J, D = data.n_participants, data.n_stimuli
        k = data.social_k if data.social_k is not None else np.zeros(len(data), dtype=int)
        if len(data):
            keys = np.stack([data.participant, data.stimulus, k], axis=1)
            cells, inverse = np.unique(keys, axis=0, return_inverse=True)
            inverse = inverse.ravel()
            self.successes = np.bincount(inverse, weights=data.chose_green.astype(float), minlength=len(cells))
            self.trials = np.bincount(inverse, minlength=len(cells)).astype(float)
        else:
            cells = np.zeros((0, 3), dtype=int)
            self.successes = self.trials = np.zeros(0)
        self.cell_p = cells[:, 0]
        self.cell_d = cells[:, 1]
        self.cell_kc = cells[:, 2] - data.group_size / 2.0
        sign = data.participant_color_sign() if spec.hierarchical else np.ones(J)
        self.sign = sign
        self.cell_sign = sign[self.cell_p]
        self.J, self.D = J, D

    @property
    def dim(self) -> int:
        return self.layout.dim

    # theta space ------------------------------------------------------------
    def _unpack(self, theta):
        L = self.layout
        b = theta[..., L.b]
        gamma = theta[..., L.gamma]
        alpha = theta[..., -1] if self.spec.include_social else None
        return b, gamma, alpha

    def _eta(self, b, gamma, alpha):
        eta = self.cell_sign * b[..., self.cell_p] + gamma[..., self.cell_d]
        if alpha is not None:
            eta = eta + alpha[..., None] * self.cell_kc
        return eta

    def log_prior(self, theta):
        theta = np.asarray(theta, dtype=float)
        s = self.spec
        b, gamma, alpha = self._unpack(theta)
        if s.hierarchical:
            mu, log_sigma = theta[..., 0], theta[..., 1]
            lp = _normal_logpdf(mu, 0.0, s.mu_b_scale) + _normal_logpdf(log_sigma, 0.0, s.log_sigma_b_scale)
            sigma = np.exp(log_sigma)[..., None]
            lp = lp + _normal_logpdf(b, mu[..., None], sigma).sum(axis=-1)
        else:
            lp = _normal_logpdf(b, 0.0, s.bias_scale).sum(axis=-1)
        lp = lp + _normal_logpdf(gamma, 0.0, s.gamma_scale).sum(axis=-1)
        if alpha is not None:
            lp = lp + _normal_logpdf(alpha, 0.0, s.alpha_scale)
        return lp

    def log_likelihood(self, theta):
        theta = np.asarray(theta, dtype=float)
        eta = self._eta(*self._unpack(theta))
        return (self.successes * eta - self.trials * np.logaddexp(0.0, eta)).sum(axis=-1)

    def log_posterior(self, theta):
        """Vectorised over any leading axes of ``theta``."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.dim:
            raise ContractError(f"theta has {theta.shape[-1]} entries, model expects {self.dim}")
        return self.log_prior(theta) + self.log_likelihood(theta)

    def _loglik_grad(self, b, gamma, alpha):
        eta = self.cell_sign * b[self.cell_p] + gamma[self.cell_d]
        if alpha is not None:
            eta = eta + alpha * self.cell_kc
        resid = self.successes - self.trials * _expit(eta)
        ll = float(np.dot(self.successes, eta) - np.dot(self.trials, np.logaddexp(0.0, eta)))
        gb = np.bincount(self.cell_p, weights=resid * self.cell_sign, minlength=self.J)
        gg = np.bincount(self.cell_d, weights=resid, minlength=self.D)
        ga = float(np.dot(resid, self.cell_kc)) if alpha is not None else 0.0
        return ll, gb, gg, ga

    def log_posterior_grad(self, theta):
        """Log posterior and its gradient at a single point."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ContractError(f"theta must have shape ({self.dim},)")
        s, L = self.spec, self.layout
        b, gamma, alpha = self._unpack(theta)
        ll, gb, gg, ga = self._loglik_grad(b, gamma, alpha)
        grad = np.zeros(self.dim)
        grad[L.b] = gb
        grad[L.gamma] = gg - gamma / s.gamma_scale**2
        if alpha is not None:
            grad[-1] = ga - alpha / s.alpha_scale**2
        lp = ll + float(self.log_prior(theta))
        if s.hierarchical:
            mu, log_sigma = theta[0], theta[1]
            sigma = math.exp(log_sigma)
            dev = b - mu
            grad[0] = -mu / s.mu_b_scale**2 + dev.sum() / sigma**2
            grad[1] = -log_sigma / s.log_sigma_b_scale**2 - self.J + np.dot(dev, dev) / sigma**2
            grad[L.b] += -dev / sigma**2
        else:
            grad[L.b] += -b / s.bias_scale**2
        return lp, grad

    # sampler space ----------------------------------------------------------
    # Hierarchical variants are sampled non-centred: b = mu + sigma * z.
    def to_theta(self, u):
        u = np.asarray(u, dtype=float)
        if not self.spec.hierarchical:
            return u.copy()
        theta = u.copy()
        sigma = np.exp(u[..., 1])[..., None]
        theta[..., self.layout.b] = u[..., 0:1] + sigma * u[..., self.layout.b]
        return theta

    def from_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        if not self.spec.hierarchical:
            return theta.copy()
        u = theta.copy()
        sigma = np.exp(theta[..., 1])[..., None]
        u[..., self.layout.b] = (theta[..., self.layout.b] - theta[..., 0:1]) / sigma
        return u

    def logp_grad_unconstrained(self, u):
        """Log density and gradient in sampler coordinates (Jacobian included).

        Evaluated directly in ``(mu, log_sigma, z)`` so that a vanishing
        ``sigma_b`` does not cancel the standard-normal prior on ``z``.
        """
        if not self.spec.hierarchical:
            return self.log_posterior_grad(u)
        s, L = self.spec, self.layout
        mu, log_sigma = u[0], u[1]
        sigma = math.exp(log_sigma)
        z = u[L.b]
        gamma = u[L.gamma]
        alpha = u[-1] if s.include_social else None
        ll, gb, gg, ga = self._loglik_grad(mu + sigma * z, gamma, alpha)
        lp = (ll - 0.5 * (mu / s.mu_b_scale) ** 2 - 0.5 * (log_sigma / s.log_sigma_b_scale) ** 2
              - 0.5 * float(np.dot(z, z)) - 0.5 * float(np.dot(gamma, gamma)) / s.gamma_scale**2
              - self._log_norm_const)
        g = np.empty(self.dim)
        g[0] = gb.sum() - mu / s.mu_b_scale**2
        g[1] = sigma * float(np.dot(gb, z)) - log_sigma / s.log_sigma_b_scale**2
        g[L.b] = sigma * gb - z
        g[L.gamma] = gg - gamma / s.gamma_scale**2
        if alpha is not None:
            lp -= 0.5 * (alpha / s.alpha_scale) ** 2
            g[-1] = ga - alpha / s.alpha_scale**2
        return lp, g

    @property
    def _log_norm_const(self):
        s = self.spec
        c = (2 + self.J + self.D + int(s.include_social)) * _LOG_SQRT_2PI
        c += math.log(s.mu_b_scale) + math.log(s.log_sigma_b_scale) + self.D * math.log(s.gamma_scale)
        if s.include_social:
            c += math.log(s.alpha_scale)
        return c


def _expit(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def log_posterior(spec: ModelSpec, data: InferenceDataset, theta) -> float:
    return Posterior(spec, data).log_posterior(theta)


def iter_names(spec: ModelSpec, data: InferenceDataset) -> Iterable[str]:
    return iter(ParamLayout.of(spec, data).names())
