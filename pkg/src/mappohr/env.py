"""Partially observable multi-robot environment.

Each joint step runs act, resolve, check, reward in that order: every agent
applies its action against the start-of-step world, then all end-of-step
(and mid-step) placements are checked pairwise, then rewards are assigned.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .agents import Action, AgentState, ReplanRecord
from .collision import Placement, check_collision, check_static_collision, covered_cells, placement_distance
from .dstar import DStarLite, GuidancePath, PlanningError, Unreachable, path_length
from .gridmap import Scenario
from .rules import MASK_RULES, SHAPING_RULES, ActionMask, RuleConfig, action_mask, conflict_pairs, shaping_penalty


class ScenarioRejected(ValueError):
    """A scenario whose global guidance cannot be planned."""


@dataclass(frozen=True)
class EnvConfig:
    lookahead: int = 23
    connectivity: int = 4
    metric: str = "euclidean"
    step_cost: str = "remaining"  # or "initial"
    goal_reward: float = 200.0
    collision_penalty: float = -100.0
    rules: bool = True
    heuristic: bool = True
    rule_penalty: float = -5.0
    replan_budget: float = 3.0
    deterministic_timing: bool = False
    seconds_per_expansion: float = 1e-3
    step_limit: int | None = None
    mask_rules: frozenset = MASK_RULES
    shaping_rules: frozenset = SHAPING_RULES

    @property
    def rule_config(self) -> RuleConfig:
        return RuleConfig(self.rules, self.heuristic, self.rule_penalty, frozenset(self.mask_rules), frozenset(self.shaping_rules))

    def obs_dim(self, num_agents: int) -> int:
        return observation_dim(num_agents, self.lookahead)


def observation_dim(num_agents: int, lookahead: int) -> int:
    return 1 + (num_agents - 1) + 3 * lookahead


@dataclass(frozen=True)
class Observation:
    goal_distance: float
    agent_distances: tuple[float, ...]
    path_occupancy: tuple[float, ...]
    lateral_occupancy: tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.array(
            (self.goal_distance, *self.agent_distances, *self.path_occupancy, *self.lateral_occupancy), dtype=np.float64
        )

    def __len__(self) -> int:
        return 1 + len(self.agent_distances) + len(self.path_occupancy) + len(self.lateral_occupancy)


@dataclass
class JointStep:
    actions: tuple[Action, ...]
    executed: tuple[Action, ...]
    rewards: np.ndarray
    shared_reward: float
    terminated: bool
    timestep: int
    collided: tuple[bool, ...]
    reached: tuple[bool, ...]
    shaping: np.ndarray
    planning_time: tuple[float, ...]
    info: dict = field(default_factory=dict)


class MultiRobotEnv:
    def __init__(self, scenario: Scenario, config: EnvConfig = EnvConfig()):
        self.scenario = scenario
        self.config = config
        self.grid = scenario.map
        self.d = scenario.safety_distance
        self.step_limit = config.step_limit if config.step_limit is not None else scenario.step_limit
        self.agents: list[AgentState] = []
        self.t = 0
        self.terminated = True
        self.trace: list[dict] = []
        self._masks: list[ActionMask] | None = None

    @property
    def num_agents(self) -> int:
        return len(self.scenario.agents)

    @property
    def obs_dim(self) -> int:
        return self.config.obs_dim(self.num_agents)

    # ---------------------------------------------------------------- reset

    def _planner(self, spec) -> DStarLite:
        c = self.config
        return DStarLite(self.grid, spec.model, spec.goal, self.d, c.connectivity, c.metric)

    def reset(self) -> list[Observation]:
        """Plan each agent's global guidance against static obstacles and return first observations."""
        agents = []
        for i, spec in enumerate(self.scenario.agents):
            planner = self._planner(spec)
            try:
                path = planner.plan(spec.start)
            except Unreachable as exc:
                raise ScenarioRejected(f"agent {spec.agent_id}: {exc}") from None
            agents.append(
                AgentState(
                    index=i,
                    agent_id=spec.agent_id,
                    model=spec.model,
                    goal=spec.goal,
                    cell=spec.start,
                    guidance=path,
                    global_guidance=path,
                    planner=planner,
                    done=spec.start == spec.goal,
                    reached_at=0 if spec.start == spec.goal else None,
                )
            )
        self.agents = agents
        self.t = 0
        self.terminated = False
        self.trace = [
            {
                "header": True,
                "agents": [a.agent_id for a in agents],
                "global_length": [a.global_guidance.total_length for a in agents],
                "cells": [list(a.cell) for a in agents],
                "done": [a.done for a in agents],
                "metric": self.config.metric,
            }
        ]
        return self.observe_all()

    # ---------------------------------------------------------------- observation

    def others(self, agent: AgentState) -> list[AgentState]:
        return [o for o in self.agents if o.index != agent.index]

    def observe(self, agent: AgentState) -> Observation:
        n = self.config.lookahead
        others = self.others(agent)
        init = agent.initial_guidance_length
        goal_dist = agent.remaining_length(self.config.metric) / init if init > 0 else 0.0
        diag = self.grid.diagonal
        dists = tuple(
            placement_distance(agent.model, o.model, o.cell[0] - agent.cell[0], o.cell[1] - agent.cell[1]) / diag
            for o in others
        )
        path = [0.0] * n
        for k, cell in enumerate(agent.lookahead(n)):
            here = Placement(agent.model, cell)
            if check_static_collision(here, self.grid, self.d) or any(
                check_collision(here, o.placement, self.d) for o in others
            ):
                path[k] = 1.0
        occupied = set()
        for o in others:
            occupied |= covered_cells(o.model, o.cell)
        dr, dc = agent.heading
        lateral = []
        for side in ((-dc, dr), (dc, -dr)):
            for j in range(1, n + 1):
                cell = (agent.cell[0] + side[0] * j, agent.cell[1] + side[1] * j)
                lateral.append(1.0 if (not self.grid.is_free(cell) or cell in occupied) else 0.0)
        return Observation(goal_dist, dists, tuple(path), tuple(lateral))

    def observe_all(self) -> list[Observation]:
        self._last_obs = [self.observe(a) for a in self.agents]
        self._masks = None
        return self._last_obs

    def masks(self) -> list[ActionMask]:
        """Rule masks for the current state (cached until the next step)."""
        if self._masks is None:
            rc = self.config.rule_config
            self._masks = [
                action_mask(a, self.others(a), self._last_obs[a.index].path_occupancy, self.d, rc, self.config.metric)
                for a in self.agents
            ]
        return self._masks

    def critic_features(self, observations: Sequence[Observation]) -> np.ndarray:
        """Centralised critic input per agent: joint obs, agent one-hot, relative distances."""
        joint = np.concatenate([o.as_array() for o in observations])
        n = self.num_agents
        rows = []
        for i, agent in enumerate(self.agents):
            onehot = np.zeros(n)
            onehot[i] = 1.0
            rows.append(np.concatenate([joint, onehot, np.array(observations[i].agent_distances)]))
        return np.stack(rows)

    # ---------------------------------------------------------------- step

    def _planning_time(self, expansions: int, elapsed: float) -> float:
        if self.config.deterministic_timing:
            return expansions * self.config.seconds_per_expansion
        return elapsed

    def _replan(self, agent: AgentState, others) -> tuple[bool, float]:
        # others: (model, cell) of every other agent as it stood at the start of the step
        c = self.config
        dynamic = set()
        for model, cell in others:
            dynamic |= covered_cells(model, cell)
        dynamic -= covered_cells(agent.model, agent.cell)
        planner = agent.planner
        old_len = agent.remaining_length(c.metric)
        before = planner.expansions
        budget = None if c.deterministic_timing else c.replan_budget
        max_exp = int(c.replan_budget / c.seconds_per_expansion) if c.deterministic_timing else None
        t0 = time.perf_counter()
        try:
            planner.set_dynamic(dynamic)
            path = planner.plan(agent.cell, budget=budget, planned_at=self.t, max_expansions=max_exp)
        except PlanningError:
            expansions = planner.expansions - before
            tp = self._planning_time(expansions, time.perf_counter() - t0)
            agent.replans.append(ReplanRecord(self.t, tp, old_len, old_len, expansions, False))
            return False, tp
        expansions = planner.expansions - before
        tp = self._planning_time(expansions, time.perf_counter() - t0)
        if path.waypoints != agent.guidance.waypoints[agent.guidance_index :]:
            agent.guidance = path
            agent.guidance_index = 0
        agent.replans.append(ReplanRecord(self.t, tp, old_len, path.total_length, expansions, True))
        return True, tp

    def step(self, actions: Sequence[int | Action]) -> tuple[list[Observation], JointStep]:
        if self.terminated:
            raise RuntimeError("step() called on a terminated episode; call reset()")
        if len(actions) != self.num_agents:
            raise ValueError(f"expected {self.num_agents} actions, got {len(actions)}")
        actions = tuple(Action(int(a)) for a in actions)
        c = self.config
        masks = self.masks()
        for a, act, mask in zip(self.agents, actions, masks):
            if act not in mask:
                raise ValueError(f"agent {a.agent_id}: action {act.name} is masked out ({[x.name for x in mask.actions]})")

        active = [not a.done for a in self.agents]
        pairs = conflict_pairs(self.agents, c.lookahead, self.d) if c.rules else []
        step_len_before = [a.remaining_length(c.metric) for a in self.agents]
        prev_cells = [a.cell for a in self.agents]
        snapshot = [(a.model, a.cell) for a in self.agents]
        all_others_done = [all(o.done for o in self.others(a)) for a in self.agents]

        executed = []
        planning = [0.0] * self.num_agents
        replan_failed = [False] * self.num_agents
        for a, act in zip(self.agents, actions):
            if a.done:
                executed.append(Action.WAIT)
                continue
            if act == Action.MOVE:
                nxt = a.next_cell
                a.history.append(a.cell)
                a.travelled += path_length((a.cell, nxt), c.metric)
                a.cell = nxt
                a.guidance_index += 1
                executed.append(Action.MOVE)
            elif act == Action.WAIT:
                a.waits += 1
                executed.append(Action.WAIT)
            elif act == Action.BACK:
                if not a.history:
                    a.waits += 1
                    executed.append(Action.WAIT)
                    continue
                prev = a.history.pop()
                a.travelled += path_length((a.cell, prev), c.metric)
                idx = a.guidance_index
                if idx > 0 and a.guidance.waypoints[idx - 1] == prev:
                    a.guidance_index = idx - 1
                else:
                    wps = (prev,) + a.guidance.waypoints[idx:]
                    a.guidance = GuidancePath(wps, path_length(wps, c.metric), self.t)
                    a.guidance_index = 0
                a.cell = prev
                executed.append(Action.BACK)
            else:
                ok, tp = self._replan(a, [s for k, s in enumerate(snapshot) if k != a.index])
                planning[a.index] = tp
                if all_others_done[a.index]:
                    a.rule2_replanned = True
                if ok:
                    executed.append(Action.REPLAN)
                else:
                    replan_failed[a.index] = True
                    executed.append(Action.WAIT)
        for a, act in zip(self.agents, actions):
            a.last_action = act

        collided = self._collisions(prev_cells, active)
        self.t += 1
        reached = [False] * self.num_agents
        rewards = np.zeros(self.num_agents)
        for i, a in enumerate(self.agents):
            if not active[i]:
                continue
            if collided[i]:
                a.collided = True
                a.done = True
                rewards[i] = c.collision_penalty
            elif a.at_goal:
                a.done = True
                a.reached_at = self.t
                reached[i] = True
                rewards[i] = c.goal_reward
            else:
                length = step_len_before[i] if c.step_cost == "remaining" else a.initial_guidance_length
                rewards[i] = -1.0 / length if length > 0 else 0.0
        shaping = (
            shaping_penalty(executed, pairs, active, c.rule_penalty, frozenset(c.shaping_rules)) if c.rules else np.zeros(self.num_agents)
        )
        rewards = rewards + shaping
        shared = float(np.mean(rewards))
        terminated = all(a.done for a in self.agents) or any(collided) or self.t >= self.step_limit
        self.terminated = terminated
        step = JointStep(
            actions=actions,
            executed=tuple(executed),
            rewards=rewards,
            shared_reward=shared,
            terminated=terminated,
            timestep=self.t,
            collided=tuple(collided),
            reached=tuple(reached),
            shaping=shaping,
            planning_time=tuple(planning),
            info={"replan_failed": tuple(replan_failed), "conflict_pairs": tuple(pairs)},
        )
        self.trace.append(
            {
                "t": self.t,
                "cells": [list(a.cell) for a in self.agents],
                "actions": [act.name for act in actions],
                "executed": [act.name for act in executed],
                "rewards": [float(r) for r in rewards],
                "collided": list(collided),
                "reached": reached,
                "done": [a.done for a in self.agents],
                "planning_time": list(planning),
                "replan_failed": replan_failed,
            }
        )
        return self.observe_all(), step

    def _collisions(self, prev_cells, active) -> list[bool]:
        n = self.num_agents
        hit = [False] * n
        for i, a in enumerate(self.agents):
            if active[i] and check_static_collision(a.placement, self.grid, self.d):
                hit[i] = True
        for i in range(n):
            for j in range(i + 1, n):
                if not (active[i] or active[j]):
                    continue
                a, b = self.agents[i], self.agents[j]
                end = check_collision(a.placement, b.placement, self.d)
                mid = check_collision(
                    Placement(a.model, _mid(prev_cells[i], a.cell)), Placement(b.model, _mid(prev_cells[j], b.cell)), self.d
                )
                if end or mid:
                    hit[i] = hit[i] or active[i]
                    hit[j] = hit[j] or active[j]
        return hit

    # ---------------------------------------------------------------- trace

    def write_trace(self, path: str) -> None:
        with open(path, "w") as fh:
            for row in self.trace:
                fh.write(json.dumps(row) + "\n")


def _mid(a, b) -> tuple[float, float]:
    return (a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0


def read_trace(path: str) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
