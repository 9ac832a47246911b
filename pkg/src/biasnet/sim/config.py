"""Experiment configuration, generative oracle parameters and presets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

from biasnet.errors import ConfigError
from biasnet.inference.fit import McmcConfig

CONDITIONS = (
    "asocial_motivated",
    "asocial_control",
    "social_motivated",
    "social_control",
    "social_resampling",
)
SOCIAL = frozenset({"social_motivated", "social_control", "social_resampling"})
RESAMPLING = frozenset({"social_resampling"})
MOTIVATED = frozenset({"asocial_motivated", "social_motivated", "social_resampling"})
COMPOSITIONS = ("homogeneous", "mixed")
RESAMPLING_TARGETS = ("zero", "population_mean")


@dataclass(frozen=True)
class OracleParams:
    """Generative model for simulated judgments.

    Log-odds of green are ``c + gamma[green_dots] + beta_j`` plus, for a
    social oracle, ``v * (k - n/2)``. The social term is centred so that
    coefficients estimated without an intercept can be used with ``c = 0``.
    """

    mu_b: float
    sigma_b: float
    gamma_levels: Mapping[int, float]
    constant_c: float = 0.0
    vote_weight: Optional[float] = None

    def __post_init__(self):
        if not self.sigma_b > 0:
            raise ConfigError("sigma_b must be positive", "sigma_b")
        for name in ("mu_b", "sigma_b", "constant_c"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError("must be finite", name)
        object.__setattr__(self, "gamma_levels", {int(k): float(v) for k, v in self.gamma_levels.items()})

    @property
    def social(self) -> bool:
        return self.vote_weight is not None

    def mirrored(self, total_dots: int = 100) -> "OracleParams":
        """Same oracle with green and blue exchanged."""
        return replace(self, constant_c=-self.constant_c,
                       gamma_levels={total_dots - k: -v for k, v in self.gamma_levels.items()})

    def to_dict(self):
        d = {"mu_b": self.mu_b, "sigma_b": self.sigma_b,
             "gamma_levels": {str(k): v for k, v in sorted(self.gamma_levels.items())},
             "constant_c": self.constant_c}
        if self.vote_weight is not None:
            d["vote_weight"] = self.vote_weight
        return d


# Posterior means of the Experiment 1 psychometric models.
TABLE_S3_ASOCIAL = OracleParams(0.26, 0.075, {48: -0.447, 49: -0.229, 51: 0.401, 52: 0.703})
TABLE_S3_SOCIAL = OracleParams(0.371, 0.465, {48: -0.482, 49: -0.14, 51: 0.518, 52: 0.613}, vote_weight=0.232)

DEFAULT_ORACLES = {
    "asocial_motivated": TABLE_S3_ASOCIAL,
    "social_motivated": TABLE_S3_SOCIAL,
    "social_resampling": TABLE_S3_SOCIAL,
}
DEFAULT_YOKING = {
    "social_motivated": "asocial_motivated",
    "social_control": "asocial_control",
    "social_resampling": "asocial_motivated",
}


@dataclass(frozen=True)
class ExperimentConfig:
    conditions: Mapping[str, int]
    waves: int = 8
    agents_per_wave: int = 8
    trials: int = 16
    stimulus_levels: tuple = (48, 49, 51, 52)
    total_dots: int = 100
    composition: str = "homogeneous"
    yoking: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_YOKING))
    seed: int = 0
    oracles: Mapping[str, OracleParams] = field(default_factory=lambda: dict(DEFAULT_ORACLES))
    inference: McmcConfig = McmcConfig(chains=4, iterations=600, warmup=300)
    resampling_target: str = "zero"
    weight_floor: float = 1e-9
    fit_pool: tuple = ("social_motivated", "social_resampling")
    swap_colors: bool = False  # exchange every agent's marked colour

    def __post_init__(self):
        object.__setattr__(self, "conditions", dict(self.conditions))
        object.__setattr__(self, "yoking", dict(self.yoking))
        object.__setattr__(self, "oracles", dict(self.oracles))
        object.__setattr__(self, "stimulus_levels", tuple(int(v) for v in self.stimulus_levels))
        object.__setattr__(self, "fit_pool", tuple(self.fit_pool))
        self.validate()

    @property
    def group_size(self) -> int:
        return self.agents_per_wave

    def validate(self):
        if not self.conditions:
            raise ConfigError("at least one condition is required", "conditions")
        for cond, n in self.conditions.items():
            if cond not in CONDITIONS:
                raise ConfigError(f"unknown condition {cond!r}", "conditions")
            if int(n) < 1:
                raise ConfigError("network count must be at least 1", f"conditions.{cond}")
        for name in ("waves", "agents_per_wave", "trials", "total_dots"):
            if int(getattr(self, name)) < 1:
                raise ConfigError("must be at least 1", name)
        if self.composition not in COMPOSITIONS:
            raise ConfigError(f"must be one of {COMPOSITIONS}", "composition")
        if self.composition == "mixed" and self.agents_per_wave % 2:
            raise ConfigError("mixed composition needs an even number of agents per wave", "agents_per_wave")
        if not self.stimulus_levels:
            raise ConfigError("at least one level is required", "stimulus_levels")
        if self.trials % len(self.stimulus_levels):
            raise ConfigError("trials must be a multiple of the number of stimulus levels", "trials")
        for lev in self.stimulus_levels:
            if not 0 < lev < self.total_dots:
                raise ConfigError("levels must lie strictly between 0 and total_dots", "stimulus_levels")
        if self.resampling_target not in RESAMPLING_TARGETS:
            raise ConfigError(f"must be one of {RESAMPLING_TARGETS}", "resampling_target")
        if not 0 < self.weight_floor < 1:
            raise ConfigError("must lie in (0, 1)", "weight_floor")
        for cond in self.conditions:
            if cond in SOCIAL and self.waves >= 2:
                src = self.yoking.get(cond)
                if src is None:
                    raise ConfigError(f"social condition {cond} has no yoking source", f"yoking.{cond}")
                if src not in self.conditions or src in SOCIAL:
                    raise ConfigError(f"yoking source {src!r} is not an asocial condition in this design",
                                      f"yoking.{cond}")
                if self.conditions[src] < self.conditions[cond] or (
                        self.composition == "homogeneous" and self.conditions[src] != self.conditions[cond]):
                    raise ConfigError(f"yoking source {src} has incompatible network count", f"yoking.{cond}")
            oracle = self.oracles.get(cond)
            if oracle is None:
                raise ConfigError(f"no oracle parameters for condition {cond}", f"oracles.{cond}")
            if (cond in SOCIAL) != oracle.social:
                raise ConfigError("vote_weight must be present exactly for social conditions",
                                  f"oracles.{cond}.vote_weight")
            needed = set(self.stimulus_levels)
            if self.composition == "mixed":
                needed |= {self.total_dots - v for v in self.stimulus_levels}
            missing = needed - set(oracle.gamma_levels)
            if missing:
                raise ConfigError(f"missing gamma for levels {sorted(missing)}", f"oracles.{cond}.gamma_levels")

    def mirrored(self) -> "ExperimentConfig":
        """Colour-exchanged design.

        Every agent's marked colour is swapped and stimuli and oracles are
        relabelled green <-> blue. Under the same seed, responses coded in each
        agent's own frame are unchanged.
        """
        levels = self.stimulus_levels
        if self.composition == "homogeneous":
            levels = tuple(self.total_dots - v for v in levels)
        return replace(self, stimulus_levels=levels, swap_colors=not self.swap_colors,
                       oracles={c: o.mirrored(self.total_dots) for c, o in self.oracles.items()})


def exp2_config(networks: int = 14, **overrides) -> ExperimentConfig:
    """Asocial/Motivated, Social/Motivated and Social/Resampling with single-colour networks."""
    base = dict(conditions={c: networks for c in ("asocial_motivated", "social_motivated", "social_resampling")},
                trials=16, composition="homogeneous")
    base.update(overrides)
    return ExperimentConfig(**base)


def exp1_config(networks: int = 10, control_oracles: Optional[Mapping[str, OracleParams]] = None,
                **overrides) -> ExperimentConfig:
    """2x2 social-by-motivation design with half green, half blue marked agents per wave.

    Control-condition oracles have no published values and must be supplied
    whenever control conditions are included.
    """
    conds = ("asocial_motivated", "asocial_control", "social_motivated", "social_control")
    oracles = dict(DEFAULT_ORACLES)
    if control_oracles:
        oracles.update(control_oracles)
    oracles.pop("social_resampling", None)
    base = dict(conditions={c: networks for c in conds}, trials=8, composition="mixed", oracles=oracles)
    base.update(overrides)
    return ExperimentConfig(**base)
