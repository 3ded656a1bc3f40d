"""Grid world, roadmap connectivity and multi-agent scenarios.

Map files follow the usual ASCII benchmark layout::

    type octile
    height 3
    width 4
    map
    ....
    .@@.
    ....

Scenario files hold one agent per line,
``id footprint start_row start_col goal_row goal_col``, with optional
``safety_distance <float>`` and ``step_limit <int>`` directives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

from .collision import (
    OutOfBoundsError,
    Placement,
    PolygonModel,
    check_static_collision,
    covered_cells,
    detection_cells,
    load_footprints,
)

Cell = tuple[int, int]

FREE, OBSTACLE = ".", "@"
ORTHOGONAL = ((-1, 0), (0, 1), (1, 0), (0, -1))
DIAGONAL = ((-1, -1), (-1, 1), (1, 1), (1, -1))


class MapFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
        self.line = line
        self.column = column


class ScenarioError(ValueError):
    def __init__(self, message: str, cells=()):
        super().__init__(message)
        self.cells = tuple(cells)


@dataclass(frozen=True)
class GridMap:
    height: int
    width: int
    obstacles: frozenset[Cell] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise MapFormatError(f"map dimensions must be positive, got {self.height}x{self.width}")
        obstacles = frozenset((int(r), int(c)) for r, c in self.obstacles)
        bad = [c for c in obstacles if not self.in_bounds(c)]
        if bad:
            raise MapFormatError(f"obstacle cells out of bounds: {sorted(bad)[:5]}")
        object.__setattr__(self, "obstacles", obstacles)

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.obstacles

    @cached_property
    def free(self) -> frozenset[Cell]:
        return frozenset(
            (r, c) for r in range(self.height) for c in range(self.width) if (r, c) not in self.obstacles
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def diagonal(self) -> float:
        return math.hypot(self.height, self.width)


@dataclass(frozen=True)
class Edge:
    source: Cell
    target: Cell
    length: float


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    footprint: str
    model: PolygonModel
    start: Cell
    goal: Cell


@dataclass(frozen=True)
class Scenario:
    map: GridMap
    agents: tuple[AgentSpec, ...]
    safety_distance: float = 0.0
    step_limit: int = 60
    name: str = ""

    @property
    def num_agents(self) -> int:
        return len(self.agents)


def step_length(dr: int, dc: int, metric: str = "euclidean") -> float:
    if dr and dc:
        return math.sqrt(2.0) if metric == "euclidean" else 2.0
    return 1.0


def distance(a: tuple[float, float], b: tuple[float, float], metric: str = "euclidean") -> float:
    """Obstacle-free distance between two cells (also the planner heuristic)."""
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    if metric == "euclidean":
        return math.hypot(dr, dc)
    if metric == "manhattan":
        return dr + dc
    raise ValueError(f"unknown metric {metric!r}")


def offsets(connectivity: int = 4) -> tuple[tuple[int, int], ...]:
    if connectivity == 4:
        return ORTHOGONAL
    if connectivity == 8:
        return ORTHOGONAL + DIAGONAL
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def neighbors(grid: GridMap, cell: Cell, connectivity: int = 4, metric: str = "euclidean") -> list[tuple[Cell, float]]:
    """Free roadmap neighbours of a free cell with their edge lengths."""
    if not grid.in_bounds(cell):
        raise ValueError(f"cell {cell} is outside the {grid.height}x{grid.width} map")
    if cell in grid.obstacles:
        raise ValueError(f"cell {cell} is an obstacle")
    out = []
    for dr, dc in offsets(connectivity):
        nxt = (cell[0] + dr, cell[1] + dc)
        if grid.is_free(nxt):
            out.append((nxt, step_length(dr, dc, metric)))
    return out


def edges(grid: GridMap, connectivity: int = 4, metric: str = "euclidean") -> list[Edge]:
    return [Edge(cell, nxt, length) for cell in sorted(grid.free) for nxt, length in neighbors(grid, cell, connectivity, metric)]


# ---------------------------------------------------------------- map files


def parse_map(text: str) -> GridMap:
    lines = text.splitlines()
    header: dict[str, str] = {}
    i = 0
    while i < len(lines):
        stripped = lines[i].strip()
        i += 1
        if not stripped:
            continue
        if stripped == "map":
            break
        key, _, value = stripped.partition(" ")
        if key not in ("type", "height", "width"):
            raise MapFormatError(f"unexpected header line {stripped!r}", line=i)
        header[key] = value.strip()
    else:
        raise MapFormatError("missing 'map' line")
    try:
        height = int(header["height"])
        width = int(header["width"])
    except KeyError as exc:
        raise MapFormatError(f"missing header field {exc.args[0]!r}") from None
    except ValueError:
        raise MapFormatError("height/width must be integers") from None
    if height <= 0 or width <= 0:
        raise MapFormatError(f"zero or negative dimensions {height}x{width}")
    rows = [ln.rstrip() for ln in lines[i:]]
    while rows and not rows[-1]:
        rows.pop()
    if len(rows) != height:
        raise MapFormatError(f"expected {height} map rows, found {len(rows)}", line=i + min(len(rows), height) + 1)
    obstacles = set()
    for r, row in enumerate(rows):
        lineno = i + r + 1
        if len(row) != width:
            raise MapFormatError(f"row has {len(row)} cells, expected {width}", line=lineno, column=min(len(row), width) + 1)
        for c, glyph in enumerate(row):
            if glyph == OBSTACLE:
                obstacles.add((r, c))
            elif glyph != FREE:
                raise MapFormatError(f"unknown glyph {glyph!r}", line=lineno, column=c + 1)
    return GridMap(height, width, frozenset(obstacles))


def serialize_map(grid: GridMap) -> str:
    out = ["type octile", f"height {grid.height}", f"width {grid.width}", "map"]
    for r in range(grid.height):
        out.append("".join(OBSTACLE if (r, c) in grid.obstacles else FREE for c in range(grid.width)))
    return "\n".join(out) + "\n"


def load_map(path: str) -> GridMap:
    with open(path) as fh:
        return parse_map(fh.read())


# ---------------------------------------------------------------- scenarios


def validate_placement(grid: GridMap, model: PolygonModel, cell: Cell, d: float, what: str = "placement") -> None:
    """Raise ScenarioError unless the footprint at ``cell`` is clear of obstacles by ``d``."""
    try:
        covered_cells(model, cell, grid.shape)
    except OutOfBoundsError as exc:
        raise ScenarioError(f"{what}: {exc}", exc.cells) from None
    if check_static_collision(Placement(model, cell), grid, d):
        hits = sorted(
            c for c in detection_cells(model, cell, d) if not grid.in_bounds(c) or c in grid.obstacles
        )
        raise ScenarioError(f"{what} at {cell} collides with obstacle cells {hits}", hits)


def parse_scenario(
    text: str,
    grid: GridMap,
    footprints: dict[str, PolygonModel] | None = None,
    safety_distance: float | None = None,
    step_limit: int | None = None,
    name: str = "",
) -> Scenario:
    if footprints is None:
        footprints = load_footprints()
    agents: list[AgentSpec] = []
    d, limit = 0.0, 60
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if fields[0] == "safety_distance" and len(fields) == 2:
            d = float(fields[1])
            continue
        if fields[0] == "step_limit" and len(fields) == 2:
            limit = int(fields[1])
            continue
        if len(fields) != 6:
            raise ScenarioError(f"line {lineno}: expected 'id footprint start_row start_col goal_row goal_col'")
        agent_id, footprint = fields[0], fields[1]
        try:
            sr, sc, gr, gc = (int(v) for v in fields[2:])
        except ValueError:
            raise ScenarioError(f"line {lineno}: coordinates must be integers") from None
        if footprint not in footprints:
            raise ScenarioError(f"line {lineno}: unknown footprint {footprint!r}")
        if any(a.agent_id == agent_id for a in agents):
            raise ScenarioError(f"line {lineno}: duplicate agent id {agent_id!r}")
        agents.append(AgentSpec(agent_id, footprint, footprints[footprint], (sr, sc), (gr, gc)))
    if safety_distance is not None:
        d = float(safety_distance)
    if step_limit is not None:
        limit = int(step_limit)
    if d < 0:
        raise ScenarioError("safety distance must be non-negative")
    if not agents:
        raise ScenarioError("scenario lists no agents")
    for a in agents:
        validate_placement(grid, a.model, a.start, d, f"agent {a.agent_id} start")
        validate_placement(grid, a.model, a.goal, d, f"agent {a.agent_id} goal")
    return Scenario(grid, tuple(agents), d, limit, name)


def serialize_scenario(scenario: Scenario) -> str:
    out = [f"safety_distance {scenario.safety_distance:g}", f"step_limit {scenario.step_limit}"]
    for a in scenario.agents:
        out.append(f"{a.agent_id} {a.footprint} {a.start[0]} {a.start[1]} {a.goal[0]} {a.goal[1]}")
    return "\n".join(out) + "\n"
