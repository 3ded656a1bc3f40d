"""Domain-knowledge rules: action masks at the policy output and shaping penalties.

Mask rules, highest priority first:

1. a finished (arrived or collided) agent may only Wait;
2. once every other agent is finished, the agent either replans (when its
   projected trip is longer than its global guide and it has not replanned
   for this yet, or when its next step is blocked) or moves on;
3. a lookahead that is conflict-free for ``n`` steps forces Move;
4. a conflicted next step forbids Move;
5. Back right after Back, with the next step still conflicted, is forbidden;
6. when all other active agents waited on the previous step, Back is forbidden.

Shaping penalties go to every active agent when all of them Wait, when all
of them Replan, and to both members of a conflict-risk pair in which one
moves (Move or Back) while the other replans.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .agents import NUM_ACTIONS, Action, AgentState
from .collision import check_collision, Placement


MASK_RULES = frozenset({1, 2, 3, 4, 5, 6})
SHAPING_RULES = frozenset({"all_wait", "all_replan", "move_vs_replan"})


@dataclass(frozen=True)
class RuleConfig:
    """``enabled`` switches every rule; the two sets switch rules one at a time."""

    enabled: bool = True
    heuristic: bool = True
    penalty: float = -5.0
    mask_rules: frozenset = MASK_RULES
    shaping_rules: frozenset = SHAPING_RULES


@dataclass(frozen=True)
class ActionMask:
    allowed: tuple[bool, bool, bool, bool]

    def __post_init__(self):
        if not any(self.allowed):
            raise AssertionError("action mask must allow at least one action")

    @classmethod
    def only(cls, *actions: Action) -> "ActionMask":
        return cls(tuple(a in actions for a in Action))

    @classmethod
    def all(cls) -> "ActionMask":
        return cls((True,) * NUM_ACTIONS)

    def __contains__(self, action) -> bool:
        return self.allowed[int(action)]

    @property
    def actions(self) -> tuple[Action, ...]:
        return tuple(a for a in Action if self.allowed[a])

    def as_array(self) -> np.ndarray:
        return np.array(self.allowed, dtype=bool)


def next_step_conflict(agent: AgentState, others: Sequence[AgentState], d: float) -> bool:
    """Collision risk on the agent's next guidance step.

    Checks the next placement against each other agent where it stands now
    and where it would stand after moving on its own guidance, plus the
    mid-step placements of both moves.
    """
    nxt = agent.next_cell
    if nxt is None:
        return False
    mine = Placement(agent.model, nxt)
    mid = Placement(agent.model, ((agent.cell[0] + nxt[0]) / 2.0, (agent.cell[1] + nxt[1]) / 2.0))
    for other in others:
        if check_collision(mine, other.placement, d):
            return True
        if other.done:
            continue
        onxt = other.next_cell
        if onxt is None:
            continue
        if check_collision(mine, Placement(other.model, onxt), d):
            return True
        omid = Placement(other.model, ((other.cell[0] + onxt[0]) / 2.0, (other.cell[1] + onxt[1]) / 2.0))
        if check_collision(mid, omid, d):
            return True
    return False


def lookahead_conflict(agent: AgentState, other: AgentState, n: int, d: float) -> bool:
    """Any of the agent's next ``n`` guidance placements collides with ``other`` as it stands."""
    there = other.placement
    return any(check_collision(Placement(agent.model, c), there, d) for c in agent.lookahead(n))


def conflict_pairs(agents: Sequence[AgentState], n: int, d: float) -> list[tuple[int, int]]:
    """Index pairs of active agents at risk of conflicting with each other."""
    out = []
    for a, b in combinations(agents, 2):
        if a.done or b.done:
            continue
        if (
            lookahead_conflict(a, b, n, d)
            or lookahead_conflict(b, a, n, d)
            or next_step_conflict(a, [b], d)
            or next_step_conflict(b, [a], d)
        ):
            out.append((a.index, b.index))
    return out


def action_mask(
    agent: AgentState,
    others: Sequence[AgentState],
    path_flags: Sequence[float],
    d: float,
    config: RuleConfig = RuleConfig(),
    metric: str = "euclidean",
) -> ActionMask:
    """Feasible actions for ``agent``; ``path_flags`` is its lookahead occupancy."""
    on = config.mask_rules if config.enabled else frozenset()
    if agent.done and (1 in on or not config.enabled):
        # a finished agent has nothing else to do even with the rules off
        return ActionMask.only(Action.WAIT)
    if not on:
        allowed = [True] * NUM_ACTIONS
        allowed[Action.REPLAN] = config.heuristic
        return ActionMask(tuple(allowed))

    blocked = next_step_conflict(agent, others, d)
    active = [o for o in others if not o.done]
    if not active and 2 in on:
        if blocked:
            return ActionMask.only(Action.REPLAN if config.heuristic else Action.WAIT)
        longer = agent.travelled + agent.remaining_length(metric) > agent.global_guidance.total_length + 1e-9
        if longer and not agent.rule2_replanned and config.heuristic:
            return ActionMask.only(Action.REPLAN)
        return ActionMask.only(Action.MOVE)

    if 3 in on and not blocked and not any(path_flags) and agent.next_cell is not None:
        return ActionMask.only(Action.MOVE)

    allowed = [True] * NUM_ACTIONS
    if agent.next_cell is None:
        allowed[Action.MOVE] = False
    if blocked and 4 in on:
        allowed[Action.MOVE] = False
    if 5 in on and blocked and agent.last_action == Action.BACK:
        allowed[Action.BACK] = False
    if 6 in on and active and all(o.last_action == Action.WAIT for o in active):
        allowed[Action.BACK] = False
    if not config.heuristic:
        allowed[Action.REPLAN] = False
    allowed[Action.WAIT] = True
    return ActionMask(tuple(allowed))


def shaping_penalty(
    actions: Sequence[Action],
    pairs: Sequence[tuple[int, int]],
    active: Sequence[bool],
    penalty: float = -5.0,
    rules: frozenset = SHAPING_RULES,
) -> np.ndarray:
    """Per-agent shaping penalty for one resolved joint step."""
    out = np.zeros(len(actions))
    live = [i for i, a in enumerate(active) if a]
    if not live:
        return out
    if "all_wait" in rules and all(actions[i] == Action.WAIT for i in live):
        out[live] += penalty
    if "all_replan" in rules and all(actions[i] == Action.REPLAN for i in live):
        out[live] += penalty
    moving = (Action.MOVE, Action.BACK)
    for i, j in pairs if "move_vs_replan" in rules else ():
        if (actions[i] in moving and actions[j] == Action.REPLAN) or (actions[j] in moving and actions[i] == Action.REPLAN):
            out[i] += penalty
            out[j] += penalty
    return out
