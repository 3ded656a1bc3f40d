"""Convex footprints, covered cells and safety-distance collision tests.

Geometry uses ``x = column`` and ``y = row`` so that a cell ``(row, col)``
is the closed unit square centred on ``(col, row)``. A footprint is a convex
polygon given relative to the anchor, which sits on the centre of the
agent's current cell. Footprints translate but never rotate.

Two outlines collide when their interiors overlap, or when the shortest
distance between their boundary segments is below the safety distance
``d``. With ``d = 0`` this reduces to "interiors intersect", so footprints
that merely touch are not in collision. Covered cells use the same rule
against a unit square, i.e. a cell is covered when its square shares
positive area with the polygon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from importlib import resources
from typing import Iterator, Sequence

Point = tuple[float, float]
Cell = tuple[int, int]
Segment = tuple[Point, Point]

_EPS = 1e-12


class GeometryError(ValueError):
    """Invalid footprint geometry."""


class OutOfBoundsError(GeometryError):
    """A placement reaches outside the map."""

    def __init__(self, message: str, cells: Sequence[Cell] = ()):
        super().__init__(message)
        self.cells = tuple(cells)


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


@dataclass(frozen=True)
class PolygonModel:
    """Strictly convex outline in cell units, relative to the anchor.

    Vertices are stored counter-clockwise (positive signed area in x/y);
    clockwise input is reversed rather than rejected.
    """

    vertices: tuple[Point, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise GeometryError(f"footprint {self.name!r} needs at least 3 vertices")
        if any(not (math.isfinite(x) and math.isfinite(y)) for x, y in verts):
            raise GeometryError(f"footprint {self.name!r} has non-finite vertices")
        area2 = sum(
            verts[i][0] * verts[(i + 1) % len(verts)][1]
            - verts[(i + 1) % len(verts)][0] * verts[i][1]
            for i in range(len(verts))
        )
        if area2 < 0:
            verts = verts[::-1]
        n = len(verts)
        for i in range(n):
            if _cross(verts[i], verts[(i + 1) % n], verts[(i + 2) % n]) <= _EPS:
                raise GeometryError(f"footprint {self.name!r} is not strictly convex at vertex {(i + 1) % n}")
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def rectangle(cls, width: float, height: float, name: str = "") -> "PolygonModel":
        hw, hh = width / 2.0, height / 2.0
        return cls(((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)), name=name)

    def placed(self, row: float, col: float) -> tuple[Point, ...]:
        """Vertices translated so the anchor sits on cell ``(row, col)``."""
        return tuple((x + col, y + row) for x, y in self.vertices)

    def edges(self, row: float = 0.0, col: float = 0.0) -> Iterator[Segment]:
        pts = self.placed(row, col)
        for i in range(len(pts)):
            yield pts[i], pts[(i + 1) % len(pts)]

    @cached_property
    def bounds(self) -> tuple[float, float, float, float]:
        xs = [x for x, _ in self.vertices]
        ys = [y for _, y in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    @cached_property
    def area(self) -> float:
        v = self.vertices
        return 0.5 * sum(v[i][0] * v[(i + 1) % len(v)][1] - v[(i + 1) % len(v)][0] * v[i][1] for i in range(len(v)))

    def contains_point(self, point: Point) -> bool:
        """Closed point-in-polygon test (anchor-relative coordinates)."""
        v = self.vertices
        return all(_cross(v[i], v[(i + 1) % len(v)], point) >= -_EPS for i in range(len(v)))


UNIT_CELL = PolygonModel.rectangle(1.0, 1.0, name="cell")


@dataclass(frozen=True)
class Placement:
    """A footprint anchored on a cell.

    ``cell`` may hold half-integer coordinates for mid-step positions; only
    integer placements correspond to states an agent can rest in.
    """

    model: PolygonModel
    cell: tuple[float, float]

    @property
    def vertices(self) -> tuple[Point, ...]:
        return self.model.placed(*self.cell)

    @cached_property
    def covered(self) -> frozenset[Cell]:
        return frozenset(covered_cells(self.model, self.cell))


@dataclass(frozen=True)
class DetectionModel:
    """Footprint grown by the safety distance (rounded, Minkowski-style corners)."""

    base: PolygonModel
    safety_distance: float

    def __post_init__(self):
        if self.safety_distance < 0:
            raise GeometryError("safety distance must be non-negative")

    def distance_to_base(self, point: Point) -> float:
        if self.base.contains_point(point):
            return 0.0
        return min(_point_segment_distance(point, a, b) for a, b in self.base.edges())

    def contains(self, point: Point) -> bool:
        return self.distance_to_base(point) <= self.safety_distance + _EPS

    def boundary_gap(self, point: Point) -> float:
        """Distance from ``point`` (inside the model) out to the expanded boundary."""
        if self.base.contains_point(point):
            v = self.base.vertices
            inner = min(
                abs(_cross(v[i], v[(i + 1) % len(v)], point)) / math.dist(v[i], v[(i + 1) % len(v)])
                for i in range(len(v))
            )
            return inner + self.safety_distance
        return self.safety_distance - self.distance_to_base(point)

    def covered_cells(self, cell: tuple[float, float]) -> set[Cell]:
        return detection_cells(self.base, cell, self.safety_distance)


# ---------------------------------------------------------------- segments


def _point_segment_distance(p: Point, a: Point, b: Point) -> float:
    dx, dy = b[0] - a[0], b[1] - a[1]
    length2 = dx * dx + dy * dy
    if length2 == 0.0:
        return math.hypot(p[0] - a[0], p[1] - a[1])
    t = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / length2
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (a[0] + t * dx), p[1] - (a[1] + t * dy))


def _on_segment(p: Point, a: Point, b: Point) -> bool:
    return min(a[0], b[0]) - _EPS <= p[0] <= max(a[0], b[0]) + _EPS and min(a[1], b[1]) - _EPS <= p[1] <= max(
        a[1], b[1]
    ) + _EPS


def segments_intersect(a: Segment, b: Segment) -> bool:
    p1, p2 = a
    q1, q2 = b
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > _EPS and d2 < -_EPS) or (d1 < -_EPS and d2 > _EPS)) and (
        (d3 > _EPS and d4 < -_EPS) or (d3 < -_EPS and d4 > _EPS)
    ):
        return True
    if abs(d1) <= _EPS and _on_segment(p1, q1, q2):
        return True
    if abs(d2) <= _EPS and _on_segment(p2, q1, q2):
        return True
    if abs(d3) <= _EPS and _on_segment(q1, p1, p2):
        return True
    if abs(d4) <= _EPS and _on_segment(q2, p1, p2):
        return True
    return False


def min_segment_distance(a: Segment, b: Segment) -> float:
    """Exact Euclidean distance between two closed segments.

    Zero-length segments behave as points.
    """
    if segments_intersect(a, b):
        return 0.0
    return min(
        _point_segment_distance(a[0], *b),
        _point_segment_distance(a[1], *b),
        _point_segment_distance(b[0], *a),
        _point_segment_distance(b[1], *a),
    )


def outline_distance(p: Sequence[Point], q: Sequence[Point]) -> float:
    """Shortest distance between two closed polygon outlines."""
    best = math.inf
    np_, nq = len(p), len(q)
    for i in range(np_):
        s = (p[i], p[(i + 1) % np_])
        for j in range(nq):
            dist = min_segment_distance(s, (q[j], q[(j + 1) % nq]))
            if dist < best:
                best = dist
                if best == 0.0:
                    return 0.0
    return best


def interiors_overlap(p: Sequence[Point], q: Sequence[Point]) -> bool:
    """Separating-axis test; touching outlines count as separated."""
    for poly in (p, q):
        n = len(poly)
        for i in range(n):
            ex = poly[(i + 1) % n][0] - poly[i][0]
            ey = poly[(i + 1) % n][1] - poly[i][1]
            ax, ay = -ey, ex
            pmin = pmax = p[0][0] * ax + p[0][1] * ay
            for x, y in p[1:]:
                t = x * ax + y * ay
                pmin = min(pmin, t)
                pmax = max(pmax, t)
            qmin = qmax = q[0][0] * ax + q[0][1] * ay
            for x, y in q[1:]:
                t = x * ax + y * ay
                qmin = min(qmin, t)
                qmax = max(qmax, t)
            scale = math.hypot(ax, ay)
            if pmax <= qmin + _EPS * scale or qmax <= pmin + _EPS * scale:
                return False
    return True


# ---------------------------------------------------------------- predicates


@lru_cache(maxsize=None)
def collides_at_offset(a: PolygonModel, b: PolygonModel, drow: float, dcol: float, d: float) -> bool:
    """Collision between ``a`` at the origin and ``b`` shifted by ``(drow, dcol)``."""
    ax0, ay0, ax1, ay1 = a.bounds
    bx0, by0, bx1, by1 = b.bounds
    gap_x = max(bx0 + dcol - ax1, ax0 - (bx1 + dcol))
    gap_y = max(by0 + drow - ay1, ay0 - (by1 + drow))
    if max(gap_x, gap_y) >= d and max(gap_x, gap_y) >= 0:
        return False
    p = a.vertices
    q = b.placed(drow, dcol)
    if interiors_overlap(p, q):
        return True
    return d > 0 and outline_distance(p, q) < d


def check_collision(p: Placement, q: Placement, d: float) -> bool:
    """True iff the two placed outlines overlap or come closer than ``d``."""
    return collides_at_offset(p.model, q.model, q.cell[0] - p.cell[0], q.cell[1] - p.cell[1], float(d))


@lru_cache(maxsize=None)
def placement_distance(a: PolygonModel, b: PolygonModel, drow: float, dcol: float) -> float:
    """Outline-to-outline distance (0 when the interiors overlap)."""
    p = a.vertices
    q = b.placed(drow, dcol)
    if interiors_overlap(p, q):
        return 0.0
    return outline_distance(p, q)


@lru_cache(maxsize=None)
def _stencil(model: PolygonModel, d: float, frow: float, fcol: float) -> frozenset[Cell]:
    # cells relative to (floor(row), floor(col)) hit by the model anchored at (frow, fcol)
    x0, y0, x1, y1 = model.bounds
    reach = d + 1.0
    cells = set()
    for r in range(math.floor(y0 + frow - reach), math.ceil(y1 + frow + reach) + 1):
        for c in range(math.floor(x0 + fcol - reach), math.ceil(x1 + fcol + reach) + 1):
            if collides_at_offset(model, UNIT_CELL, r - frow, c - fcol, d):
                cells.add((r, c))
    return frozenset(cells)


def _split(cell: tuple[float, float]) -> tuple[int, int, float, float]:
    r0, c0 = math.floor(cell[0]), math.floor(cell[1])
    return r0, c0, float(cell[0] - r0), float(cell[1] - c0)


def detection_cells(model: PolygonModel, cell: tuple[float, float], d: float) -> set[Cell]:
    """Cells whose squares fall inside the detection model grown by ``d``."""
    r0, c0, fr, fc = _split(cell)
    return {(r0 + dr, c0 + dc) for dr, dc in _stencil(model, float(d), fr, fc)}


def covered_cells(model: PolygonModel, cell: tuple[float, float], shape: tuple[int, int] | None = None) -> set[Cell]:
    """Cells whose squares share positive area with the placed polygon.

    When ``shape = (height, width)`` is given, a placement that spills off the
    map raises :class:`OutOfBoundsError` listing the clipped cells.
    """
    cells = detection_cells(model, cell, 0.0)
    if shape is not None:
        h, w = shape
        outside = sorted(c for c in cells if not (0 <= c[0] < h and 0 <= c[1] < w))
        if outside:
            rows = [r for r, _ in outside]
            cols = [c for _, c in outside]
            raise OutOfBoundsError(
                f"placement at {cell} leaves the {h}x{w} map: rows {min(rows)}..{max(rows)}, "
                f"cols {min(cols)}..{max(cols)}",
                outside,
            )
    return cells


def check_static_collision(p: Placement, grid, d: float) -> bool:
    """True iff the grown footprint reaches an obstacle cell or the map edge."""
    h, w = grid.height, grid.width
    obstacles = grid.obstacles
    for r, c in detection_cells(p.model, p.cell, d):
        if not (0 <= r < h and 0 <= c < w) or (r, c) in obstacles:
            return True
    return False


# ---------------------------------------------------------------- library


def parse_footprints(text: str) -> dict[str, PolygonModel]:
    """Parse ``name x,y; x,y; ...`` lines. Blank lines and ``#`` comments are skipped."""
    library: dict[str, PolygonModel] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise GeometryError(f"line {lineno}: expected 'name x,y; x,y; ...'")
        name, spec = parts
        try:
            verts = [tuple(float(v) for v in pair.split(",")) for pair in spec.split(";") if pair.strip()]
        except ValueError as exc:
            raise GeometryError(f"line {lineno}: bad vertex list: {exc}") from None
        if any(len(v) != 2 for v in verts):
            raise GeometryError(f"line {lineno}: every vertex needs exactly two coordinates")
        if name in library:
            raise GeometryError(f"line {lineno}: duplicate footprint {name!r}")
        try:
            library[name] = PolygonModel(tuple(verts), name=name)
        except GeometryError as exc:
            raise GeometryError(f"line {lineno}: {exc}") from None
    return library


def format_footprints(library: dict[str, PolygonModel]) -> str:
    lines = []
    for name, model in library.items():
        verts = "; ".join(f"{x:g},{y:g}" for x, y in model.vertices)
        lines.append(f"{name} {verts}")
    return "\n".join(lines) + "\n"


def load_footprints(path: str | None = None) -> dict[str, PolygonModel]:
    """Load a footprint library; the packaged default when ``path`` is None."""
    if path is None:
        text = resources.files("mappohr.data").joinpath("footprints.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return parse_footprints(text)

