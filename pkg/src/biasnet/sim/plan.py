"""Materialised experiment layout: networks, wave schedule, yoking and colours."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from biasnet.errors import ConfigError
from biasnet.sim.config import MOTIVATED, SOCIAL, ExperimentConfig

Key = Tuple[str, int, int]  # (condition, network, wave)


@dataclass(frozen=True)
class AgentProfile:
    id: str
    condition: str
    network: int
    wave: int
    index: int
    marked_color: str
    motivated_color: Optional[str]  # None in control conditions

    @property
    def frame_color(self) -> str:
        """Colour in which this agent's responses are coded."""
        return self.motivated_color or self.marked_color


@dataclass
class ExperimentPlan:
    config: ExperimentConfig
    groups: Dict[Key, List[AgentProfile]]  # one entry per (condition, network, wave)
    sources: Dict[Key, Key]  # social group -> group whose judgments it observes
    stimulus_schedule: List[int]  # level per trial; marked-colour dots when composition is mixed

    @property
    def n_slots(self) -> int:
        return sum(len(g) for g in self.groups.values())

    def waves_of(self, condition: str) -> range:
        first = 2 if condition in SOCIAL else 1
        return range(first, self.config.waves + 1)

    def groups_in_wave(self, wave: int) -> List[Key]:
        return [k for k in self.groups if k[2] == wave]

    def green_dots(self, agent: AgentProfile, trial: int) -> int:
        level = self.stimulus_schedule[trial]
        if self.config.composition == "mixed" and agent.marked_color == "blue":
            return self.config.total_dots - level
        return level

    def agents(self):
        for g in self.groups.values():
            yield from g


def _network_color(config: ExperimentConfig, condition: str, network: int) -> str:
    n = config.conditions[condition]
    return "green" if (network < n / 2) != config.swap_colors else "blue"


def build_experiment(config: ExperimentConfig) -> ExperimentPlan:
    A = config.agents_per_wave
    per_level = config.trials // len(config.stimulus_levels)
    schedule = [config.stimulus_levels[t // per_level] for t in range(config.trials)]
    groups, sources = {}, {}
    for cond in sorted(config.conditions, key=lambda c: (c in SOCIAL, c)):
        first = 2 if cond in SOCIAL else 1
        for r in range(config.conditions[cond]):
            for t in range(first, config.waves + 1):
                agents = []
                for i in range(A):
                    if config.composition == "mixed":
                        marked = "green" if (i < A // 2) != config.swap_colors else "blue"
                    else:
                        marked = _network_color(config, cond, r)
                    motivated = marked if cond in MOTIVATED else None
                    agents.append(AgentProfile(f"{cond}/n{r}/w{t}/a{i}", cond, r, t, i, marked, motivated))
                groups[(cond, r, t)] = agents
                if cond in SOCIAL:
                    src = (config.yoking[cond], r, 1) if t == 2 else (cond, r, t - 1)
                    sources[(cond, r, t)] = src
    for key, src in sources.items():
        if src not in groups:
            raise ConfigError(f"group {key} observes missing group {src}", "yoking")
        if config.composition == "homogeneous" and groups[src][0].marked_color != groups[key][0].marked_color:
            raise ConfigError(f"group {key} is yoked to a network of the other colour", "yoking")
    return ExperimentPlan(config, groups, sources, schedule)
