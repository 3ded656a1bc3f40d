"""Ablation wiring: which rules, heuristics and critic inputs each variant uses."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..env import EnvConfig
from ..mappo.train import TrainConfig


@dataclass(frozen=True)
class Variant:
    name: str
    rules: bool
    heuristic: bool
    share_critic: bool

    def env_config(self, base: EnvConfig = EnvConfig()) -> EnvConfig:
        return dataclasses.replace(base, rules=self.rules, heuristic=self.heuristic)

    def train_config(self, base: TrainConfig = TrainConfig()) -> TrainConfig:
        return dataclasses.replace(base, share_critic=self.share_critic)


VARIANTS = {
    "MAPPOHR": Variant("MAPPOHR", rules=True, heuristic=True, share_critic=True),
    "MAPPOH": Variant("MAPPOH", rules=False, heuristic=True, share_critic=True),
    "MAPPO": Variant("MAPPO", rules=False, heuristic=False, share_critic=True),
    "PPOHR": Variant("PPOHR", rules=True, heuristic=True, share_critic=False),
}


def get_variant(name: str) -> Variant:
    try:
        return VARIANTS[name.upper()]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}") from None
