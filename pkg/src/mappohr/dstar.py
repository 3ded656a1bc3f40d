"""Footprint-aware D* Lite.

Edge ``s -> g`` costs the step length unless the agent's detection model,
placed at ``g`` or at the midpoint of the move, reaches an obstacle cell
(static or dynamic) or the map edge, in which case the cost is infinite.
The occupant's own cell ``s`` is not re-checked: the agent is already there.

The search runs backwards from the goal, so one planner instance serves
both the global plan at reset and every later local replan toward the
same goal; obstacle changes only touch the vertices whose edges changed.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

from .collision import PolygonModel, detection_cells
from .gridmap import Cell, GridMap, distance, offsets, step_length

INF = math.inf


class PlanningError(RuntimeError):
    pass


class Unreachable(PlanningError):
    """No finite-cost path exists."""


class PlannerTimeout(PlanningError):
    """The search ran past its time budget."""


@dataclass(frozen=True)
class ObstacleSnapshot:
    static: frozenset[Cell]
    dynamic: frozenset[Cell] = frozenset()

    @property
    def cells(self) -> frozenset[Cell]:
        return self.static | self.dynamic


@dataclass(frozen=True)
class GuidancePath:
    waypoints: tuple[Cell, ...]
    total_length: float
    planned_at: int = 0
    expansions: int = 0
    elapsed: float = 0.0

    @property
    def start(self) -> Cell:
        return self.waypoints[0]

    @property
    def goal(self) -> Cell:
        return self.waypoints[-1]

    def __len__(self) -> int:
        return len(self.waypoints)


def path_length(path: GuidancePath | Sequence[Cell], metric: str = "euclidean") -> float:
    cells = path.waypoints if isinstance(path, GuidancePath) else tuple(path)
    return sum(step_length(b[0] - a[0], b[1] - a[1], metric) for a, b in zip(cells, cells[1:]))


def remaining_length(path: GuidancePath, index: int, metric: str = "euclidean") -> float:
    return path_length(path.waypoints[index:], metric)


class CostModel:
    """Edge cost: infinity on collision of the swept detection model."""

    def __init__(self, grid: GridMap, model: PolygonModel, d: float, connectivity: int = 4, metric: str = "euclidean"):
        self.grid = grid
        self.model = model
        self.d = float(d)
        self.connectivity = connectivity
        self.metric = metric
        self.moves = offsets(connectivity)
        self.place_offsets = tuple(sorted(detection_cells(model, (0, 0), self.d)))
        self.mid_offsets = {
            mv: tuple(sorted(detection_cells(model, (mv[0] / 2.0, mv[1] / 2.0), self.d))) for mv in self.moves
        }

    def _hits(self, base: Cell, offs: Iterable[Cell], blocked: frozenset[Cell] | set[Cell]) -> bool:
        h, w = self.grid.height, self.grid.width
        r0, c0 = base
        for dr, dc in offs:
            r, c = r0 + dr, c0 + dc
            if r < 0 or c < 0 or r >= h or c >= w or (r, c) in blocked:
                return True
        return False

    def placement_blocked(self, cell: Cell, blocked) -> bool:
        return self._hits(cell, self.place_offsets, blocked)

    def midpoint_blocked(self, s: Cell, g: Cell, blocked) -> bool:
        return self._hits(s, self.mid_offsets[(g[0] - s[0], g[1] - s[1])], blocked)

    def __call__(self, s: Cell, g: Cell, blocked) -> float:
        if s == g:
            return INF if self.placement_blocked(g, blocked) else 0.0
        if self.placement_blocked(g, blocked) or self.midpoint_blocked(s, g, blocked):
            return INF
        return step_length(g[0] - s[0], g[1] - s[1], self.metric)


def cost(
    s: Cell,
    g: Cell,
    model: PolygonModel,
    obs: ObstacleSnapshot,
    d: float,
    grid: GridMap,
    connectivity: int = 4,
    metric: str = "euclidean",
) -> float:
    """Cost of the single move ``s -> g`` (``s == g`` allowed)."""
    return CostModel(grid, model, d, connectivity, metric)(s, g, obs.cells)


class DStarLite:
    """Planner state for one agent and one goal.

    ``g`` and ``rhs`` map cells to path costs-to-goal; the queue holds the
    locally inconsistent cells keyed by ``(k1, k2)`` with the cell's row-major
    index as the final tie-break.
    """

    def __init__(
        self,
        grid: GridMap,
        model: PolygonModel,
        goal: Cell,
        d: float = 0.0,
        connectivity: int = 4,
        metric: str = "euclidean",
        dynamic: Iterable[Cell] = (),
        trace: TextIO | None = None,
    ):
        self.grid = grid
        self.goal = tuple(goal)
        self.costs = CostModel(grid, model, d, connectivity, metric)
        self.metric = metric
        self.dynamic: frozenset[Cell] = frozenset(dynamic)
        self.blocked: set[Cell] = set(grid.obstacles) | set(self.dynamic)
        self.trace = trace
        self.g: dict[Cell, float] = {}
        self.rhs: dict[Cell, float] = {self.goal: 0.0}
        self.km = 0.0
        self.start: Cell | None = None
        self._queue: list[tuple[float, float, int, Cell]] = []
        self._queued: dict[Cell, tuple[float, float]] = {}
        self.expansions = 0
        self._push(self.goal, (0.0, 0.0))

    # -- bookkeeping

    def _index(self, cell: Cell) -> int:
        return cell[0] * self.grid.width + cell[1]

    def _push(self, cell: Cell, key: tuple[float, float]) -> None:
        self._queued[cell] = key
        heapq.heappush(self._queue, (key[0], key[1], self._index(cell), cell))

    def _top(self):
        while self._queue:
            k1, k2, _, cell = self._queue[0]
            if self._queued.get(cell) == (k1, k2):
                return (k1, k2), cell
            heapq.heappop(self._queue)
        return (INF, INF), None

    def _h(self, a: Cell, b: Cell) -> float:
        return distance(a, b, self.metric)

    def key(self, cell: Cell) -> tuple[float, float]:
        m = min(self.g.get(cell, INF), self.rhs.get(cell, INF))
        return (m + self._h(self.start, cell) + self.km, m)

    def _adjacent(self, cell: Cell) -> list[Cell]:
        h, w = self.grid.height, self.grid.width
        out = []
        for dr, dc in self.costs.moves:
            r, c = cell[0] + dr, cell[1] + dc
            if 0 <= r < h and 0 <= c < w:
                out.append((r, c))
        return out

    def _update_vertex(self, u: Cell) -> None:
        if u != self.goal:
            best = INF
            for s in self._adjacent(u):
                gs = self.g.get(s, INF)
                if gs < INF:
                    c = self.costs(u, s, self.blocked)
                    if c + gs < best:
                        best = c + gs
            self.rhs[u] = best
        self._queued.pop(u, None)
        if self.g.get(u, INF) != self.rhs.get(u, INF):
            self._push(u, self.key(u))

    def _compute(self, deadline: float | None, max_expansions: int | None = None) -> None:
        start = self.start
        first = self.expansions
        while True:
            top_key, u = self._top()
            if u is None:
                break
            if not (top_key < self.key(start) or self.rhs.get(start, INF) != self.g.get(start, INF)):
                break
            self.expansions += 1
            if deadline is not None and self.expansions % 32 == 0 and time.perf_counter() > deadline:
                raise PlannerTimeout(f"replan exceeded budget after {self.expansions} expansions")
            if max_expansions is not None and self.expansions - first > max_expansions:
                raise PlannerTimeout(f"replan exceeded {max_expansions} expansions")
            new_key = self.key(u)
            if top_key < new_key:
                self._push(u, new_key)
                continue
            heapq.heappop(self._queue)
            del self._queued[u]
            gu, ru = self.g.get(u, INF), self.rhs.get(u, INF)
            if self.trace is not None:
                self.trace.write(f"{u[0]} {u[1]} {gu} {ru} {top_key[0]} {top_key[1]}\n")
            if gu > ru:
                self.g[u] = ru
                for s in self._adjacent(u):
                    self._update_vertex(s)
            else:
                self.g[u] = INF
                for s in self._adjacent(u) + [u]:
                    self._update_vertex(s)

    # -- obstacle changes

    def _affected(self, changed: Iterable[Cell]) -> set[Cell]:
        """Source cells of edges whose cost may have changed."""
        place = self.costs.place_offsets
        out: set[Cell] = set()
        targets: set[Cell] = set()
        for o in changed:
            targets.add(o)
            for dr, dc in place:
                targets.add((o[0] - dr, o[1] - dc))
            for (mr, mc), offs in self.costs.mid_offsets.items():
                for dr, dc in offs:
                    s = (o[0] - dr, o[1] - dc)
                    out.add(s)
                    out.add((s[0] + mr, s[1] + mc))
        for t in targets:
            out.update(self._adjacent(t))
        h, w = self.grid.height, self.grid.width
        return {c for c in out if 0 <= c[0] < h and 0 <= c[1] < w}

    def toggle(self, changed: Iterable[Cell]) -> None:
        """Flip the obstacle status of ``changed`` cells (static map cells included)."""
        changed = sorted(set(changed))
        if not changed:
            return
        for c in changed:
            if c in self.blocked:
                self.blocked.discard(c)
            else:
                self.blocked.add(c)
        self.dynamic = frozenset(self.blocked - self.grid.obstacles)
        if self.start is None:
            return
        for u in sorted(self._affected(changed)):
            self._update_vertex(u)

    def set_dynamic(self, cells: Iterable[Cell]) -> set[Cell]:
        """Replace the dynamic obstacle set; returns the cells that flipped."""
        cells = frozenset(cells) - self.grid.obstacles
        changed = set(cells ^ self.dynamic)
        self.toggle(changed)
        return changed

    # -- planning

    def _move_start(self, start: Cell) -> None:
        start = tuple(start)
        if self.start is None:
            self.start = start
            self._requeue()
        elif start != self.start:
            self.km += self._h(self.start, start)
            self.start = start

    def _requeue(self) -> None:
        entries = list(self._queued)
        self._queue.clear()
        self._queued.clear()
        for cell in entries:
            self._push(cell, self.key(cell))

    def plan(
        self,
        start: Cell,
        budget: float | None = None,
        planned_at: int = 0,
        max_expansions: int | None = None,
    ) -> GuidancePath:
        before = self.expansions
        t0 = time.perf_counter()
        self._move_start(start)
        deadline = None if budget is None else t0 + budget
        self._compute(deadline, max_expansions)
        path = self.extract_path()
        return GuidancePath(
            path,
            path_length(path, self.metric),
            planned_at,
            self.expansions - before,
            time.perf_counter() - t0,
        )

    def replan(
        self,
        changed: Iterable[Cell],
        new_start: Cell,
        budget: float | None = None,
        planned_at: int = 0,
    ) -> GuidancePath:
        if self.start is None:
            raise PlanningError("replan called before an initial plan")
        t0 = time.perf_counter()
        self.toggle(changed)
        path = self.plan(new_start, None if budget is None else max(0.0, budget - (time.perf_counter() - t0)), planned_at)
        return GuidancePath(path.waypoints, path.total_length, planned_at, path.expansions, time.perf_counter() - t0)

    def extract_path(self) -> tuple[Cell, ...]:
        start = self.start
        if self.rhs.get(start, INF) == INF:
            raise Unreachable(f"no collision-free path from {start} to {self.goal}")
        path = [start]
        cur = start
        limit = self.grid.height * self.grid.width
        while cur != self.goal:
            best, best_cell = INF, None
            for s in self._adjacent(cur):
                gs = self.g.get(s, INF)
                if gs == INF:
                    continue
                c = self.costs(cur, s, self.blocked)
                val = c + gs
                if val < best:
                    best, best_cell = val, s
            if best_cell is None or len(path) > limit:
                raise Unreachable(f"no collision-free path from {start} to {self.goal}")
            path.append(best_cell)
            cur = best_cell
        return tuple(path)

    def cost_to_goal(self, cell: Cell) -> float:
        return self.g.get(tuple(cell), INF)


def plan(
    grid: GridMap,
    model: PolygonModel,
    start: Cell,
    goal: Cell,
    obs: ObstacleSnapshot | None = None,
    d: float = 0.0,
    connectivity: int = 4,
    metric: str = "euclidean",
    budget: float | None = None,
) -> GuidancePath:
    """From-scratch plan; raises :class:`Unreachable` when no finite path exists."""
    if obs is not None and obs.static != grid.obstacles:
        grid = GridMap(grid.height, grid.width, obs.static)
    planner = DStarLite(grid, model, goal, d, connectivity, metric, dynamic=() if obs is None else obs.dynamic)
    return planner.plan(start, budget)


def replan(
    state: DStarLite,
    changed: Iterable[Cell],
    new_start: Cell,
    budget: float | None = None,
    planned_at: int = 0,
) -> GuidancePath:
    return state.replan(changed, new_start, budget, planned_at)
