"""Per-agent state shared by the environment, the rules and the baselines."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from .collision import Placement, PolygonModel
from .dstar import DStarLite, GuidancePath, path_length
from .gridmap import Cell


class Action(IntEnum):
    MOVE = 0
    WAIT = 1
    BACK = 2
    REPLAN = 3


NUM_ACTIONS = len(Action)


@dataclass(frozen=True)
class ReplanRecord:
    timestep: int
    planning_time: float
    old_length: float
    new_length: float
    expansions: int
    succeeded: bool = True


@dataclass
class AgentState:
    index: int
    agent_id: str
    model: PolygonModel
    goal: Cell
    cell: Cell
    guidance: GuidancePath
    global_guidance: GuidancePath
    planner: DStarLite | None = field(default=None, repr=False)
    guidance_index: int = 0
    history: list[Cell] = field(default_factory=list)
    done: bool = False
    collided: bool = False
    reached_at: int | None = None
    waits: int = 0
    travelled: float = 0.0
    replans: list[ReplanRecord] = field(default_factory=list)
    last_action: Action | None = None
    rule2_replanned: bool = False

    @property
    def placement(self) -> Placement:
        return Placement(self.model, self.cell)

    @property
    def initial_guidance_length(self) -> float:
        return self.global_guidance.total_length

    @property
    def at_goal(self) -> bool:
        return self.cell == self.goal

    @property
    def next_cell(self) -> Cell | None:
        i = self.guidance_index + 1
        return self.guidance.waypoints[i] if i < len(self.guidance.waypoints) else None

    def lookahead(self, n: int) -> tuple[Cell, ...]:
        i = self.guidance_index + 1
        return self.guidance.waypoints[i : i + n]

    def remaining_length(self, metric: str = "euclidean") -> float:
        return path_length(self.guidance.waypoints[self.guidance_index :], metric)

    @property
    def heading(self) -> tuple[int, int]:
        nxt = self.next_cell
        if nxt is not None:
            return nxt[0] - self.cell[0], nxt[1] - self.cell[1]
        if self.history:
            prev = self.history[-1]
            return self.cell[0] - prev[0], self.cell[1] - prev[1]
        return 0, 1
