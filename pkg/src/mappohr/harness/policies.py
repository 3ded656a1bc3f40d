"""Joint policies for evaluation: the learned actor and two scripted baselines.

A policy sees the environment only through ``observations`` and
``env.masks()`` (the learned policy) or through agent states (baselines).
"""
from __future__ import annotations

import numpy as np

from ..agents import Action
from ..env import MultiRobotEnv, Observation
from ..mappo.policy import Actor
from ..rules import next_step_conflict


class LearnedPolicy:
    """Decentralised execution: each agent's action comes from the shared actor on its own observation.

    By default actions are sampled; episode ``k`` after construction draws
    from ``default_rng([seed, k])`` so a suite run is reproducible.
    """

    name = "learned"

    def __init__(self, actor: Actor, greedy: bool = False, seed: int = 0):
        self.actor = actor
        self.greedy = greedy
        self.seed = seed
        self.episodes = 0
        self.rng = None
        self.hidden = None

    def reset(self, env: MultiRobotEnv) -> None:
        self.hidden = self.actor.initial_state(env.num_agents)
        self.rng = np.random.default_rng([self.seed, self.episodes])
        self.episodes += 1

    def act(self, env: MultiRobotEnv, observations: list[Observation]) -> list[Action]:
        x = np.stack([o.as_array() for o in observations])
        masks = np.stack([m.as_array() for m in env.masks()])
        actions, _, self.hidden = self.actor.act(x, masks, self.hidden, self.rng, greedy=self.greedy)
        return [Action(int(a)) for a in actions]


class PureReplanner:
    """Baseline that only ever moves along its guidance or replans around the others."""

    name = "replanner"

    def reset(self, env: MultiRobotEnv) -> None:
        pass

    def act(self, env: MultiRobotEnv, observations) -> list[Action]:
        out = []
        for agent in env.agents:
            if agent.done:
                out.append(Action.WAIT)
            elif next_step_conflict(agent, env.others(agent), env.d):
                out.append(Action.REPLAN)
            else:
                out.append(Action.MOVE)
        return out


class RuleOnlyPolicy:
    """Scripted choice inside the rule masks: Move, else Replan once the other side has yielded, else Wait."""

    name = "rules"

    def reset(self, env: MultiRobotEnv) -> None:
        pass

    def act(self, env: MultiRobotEnv, observations) -> list[Action]:
        out = []
        for agent, mask in zip(env.agents, env.masks()):
            others_waited = all(o.done or o.last_action == Action.WAIT for o in env.others(agent))
            if Action.MOVE in mask:
                out.append(Action.MOVE)
            elif Action.REPLAN in mask and (others_waited or Action.WAIT not in mask):
                out.append(Action.REPLAN)
            elif Action.WAIT in mask:
                out.append(Action.WAIT)
            else:
                out.append(mask.actions[0])
        return out
