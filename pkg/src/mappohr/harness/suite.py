"""Scenario-suite generation: airport-like block maps with crossing traffic.

Cases are labelled by simulating naive traversal: every agent advances one
guidance waypoint per step (staying put once at its goal) and a case is
conflicted when any pair of end-of-step or mid-step placements collides.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from ..collision import Placement, check_collision, check_static_collision, covered_cells, load_footprints
from ..dstar import DStarLite, Unreachable
from ..gridmap import AgentSpec, GridMap, Scenario, load_map, parse_scenario, serialize_map, serialize_scenario


@dataclass(frozen=True)
class SuiteParams:
    height: int = 40
    width: int = 60
    blocks: int = 6
    footprints: tuple[str, ...] = ("square3", "tug")
    safety_distance: float = 0.5
    step_limit: int = 60
    min_length: int = 12
    max_length: int = 34
    max_attempts: int = 2000


@dataclass
class Suite:
    scenarios: list[Scenario]
    conflicted: list[bool]
    seed: int
    params: SuiteParams

    @property
    def conflict_rate(self) -> float:
        return sum(self.conflicted) / len(self.conflicted) if self.conflicted else 0.0

    def __len__(self) -> int:
        return len(self.scenarios)


def generate_map(rng: np.random.Generator, height: int = 40, width: int = 60, blocks: int = 6) -> GridMap:
    """Open apron with rectangular buildings, keeping a clear margin along the edges."""
    obstacles: set[tuple[int, int]] = set()
    margin = 6
    placed: list[tuple[int, int, int, int]] = []
    tries = 0
    while len(placed) < blocks and tries < 200 * blocks:
        tries += 1
        h = int(rng.integers(3, max(4, height // 6)))
        w = int(rng.integers(4, max(5, width // 6)))
        r0 = int(rng.integers(margin, max(margin + 1, height - margin - h)))
        c0 = int(rng.integers(margin, max(margin + 1, width - margin - w)))
        # keep wide lanes between buildings
        if any(r0 < r1 + h1 + 7 and r1 < r0 + h + 7 and c0 < c1 + w1 + 7 and c1 < c0 + w + 7 for r1, c1, h1, w1 in placed):
            continue
        placed.append((r0, c0, h, w))
        obstacles |= {(r, c) for r in range(r0, r0 + h) for c in range(c0, c0 + w)}
    return GridMap(height, width, frozenset(obstacles))


def naive_traversal_conflict(scenario: Scenario, paths: Sequence[Sequence[tuple[int, int]]]) -> bool:
    """True when simultaneous one-waypoint-per-step traversal brings any pair within ``d``."""
    d = scenario.safety_distance
    models = [a.model for a in scenario.agents]
    horizon = max(len(p) for p in paths)

    def at(i, t):
        p = paths[i]
        return p[min(t, len(p) - 1)]

    for t in range(horizon):
        for i, j in combinations(range(len(paths)), 2):
            if check_collision(Placement(models[i], at(i, t)), Placement(models[j], at(j, t)), d):
                return True
            if t + 1 < horizon:
                mi = _mid(at(i, t), at(i, t + 1))
                mj = _mid(at(j, t), at(j, t + 1))
                if check_collision(Placement(models[i], mi), Placement(models[j], mj), d):
                    return True
    return False


def _mid(a, b):
    return (a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0


def _valid(grid: GridMap, model, cell, d) -> bool:
    r, c = cell
    if not (0 <= r < grid.height and 0 <= c < grid.width):
        return False
    return not check_static_collision(Placement(model, cell), grid, d)


def _plan(grid, model, start, goal, d):
    try:
        return DStarLite(grid, model, goal, d).plan(start).waypoints
    except Unreachable:
        return None


def _random_cell(rng, grid, model, d):
    for _ in range(200):
        cell = (int(rng.integers(0, grid.height)), int(rng.integers(0, grid.width)))
        if _valid(grid, model, cell, d):
            return cell
    return None


def _propose(rng, grid, models, d, params: SuiteParams, crossing: bool):
    """One candidate pair; with ``crossing`` the second agent is aimed at the first one's path."""
    ma, mb = models
    sa, ga = _random_cell(rng, grid, ma, d), _random_cell(rng, grid, ma, d)
    if sa is None or ga is None:
        return None
    pa = _plan(grid, ma, sa, ga, d)
    if pa is None or not params.min_length <= len(pa) - 1 <= params.max_length:
        return None
    if crossing:
        k = int(rng.integers(3, len(pa) - 3))
        x = pa[k]
        dr, dc = pa[k + 1][0] - pa[k - 1][0], pa[k + 1][1] - pa[k - 1][1]
        perp = (dc, -dr) if rng.random() < 0.5 else (-dc, dr)
        norm = max(abs(perp[0]), abs(perp[1]), 1)
        perp = (perp[0] / norm, perp[1] / norm)
        lead = k + int(rng.integers(-2, 3))
        tail = int(rng.integers(5, 16))
        sb = (int(round(x[0] + perp[0] * lead)), int(round(x[1] + perp[1] * lead)))
        gb = (int(round(x[0] - perp[0] * tail)), int(round(x[1] - perp[1] * tail)))
        if not (_valid(grid, mb, sb, d) and _valid(grid, mb, gb, d)):
            return None
    else:
        sb, gb = _random_cell(rng, grid, mb, d), _random_cell(rng, grid, mb, d)
        if sb is None or gb is None:
            return None
    pb = _plan(grid, mb, sb, gb, d)
    if pb is None or not params.min_length <= len(pb) - 1 <= params.max_length:
        return None
    for cell_a in (sa, ga):
        for cell_b in (sb, gb):
            if check_collision(Placement(ma, cell_a), Placement(mb, cell_b), d):
                return None
    # an agent parked at its goal must not seal off the other's route
    if not (_reachable(grid, ma, sa, ga, d, covered_cells(mb, gb)) and _reachable(grid, mb, sb, gb, d, covered_cells(ma, ga))):
        return None
    return (sa, ga, pa), (sb, gb, pb)


def _reachable(grid, model, start, goal, d, parked) -> bool:
    try:
        DStarLite(grid, model, goal, d, dynamic=parked).plan(start)
    except Unreachable:
        return False
    return True


def generate_suite(
    seed: int,
    n_cases: int = 10,
    conflict_rate: float = 0.9,
    params: SuiteParams = SuiteParams(),
    grid: GridMap | None = None,
) -> Suite:
    """``round(rate * n)`` conflicted cases and the rest conflict-free, each on the shared map.

    If a label cannot be produced within ``max_attempts`` the case is filled
    with whatever the sampler finds, and the achieved rate is reported.
    """
    if n_cases <= 0:
        raise ValueError("n_cases must be positive")
    if not 0.0 <= conflict_rate <= 1.0:
        raise ValueError("conflict_rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    lib = load_footprints()
    names = params.footprints
    models = [lib[n] for n in names]
    d = params.safety_distance
    grid = grid if grid is not None else generate_map(rng, params.height, params.width, params.blocks)
    n_conf = int(round(conflict_rate * n_cases))
    wanted = [True] * n_conf + [False] * (n_cases - n_conf)
    rng.shuffle(wanted)
    scenarios, labels = [], []
    for case, want in enumerate(wanted):
        fallback = None
        for _ in range(params.max_attempts):
            prop = _propose(rng, grid, models, d, params, crossing=want)
            if prop is None:
                continue
            (sa, ga, pa), (sb, gb, pb) = prop
            sc = Scenario(
                grid,
                (AgentSpec("a", names[0], models[0], sa, ga), AgentSpec("b", names[1], models[1], sb, gb)),
                d,
                params.step_limit,
                f"case{case:02d}",
            )
            label = naive_traversal_conflict(sc, [pa, pb])
            if label == want:
                break
            fallback = fallback or (sc, label)
        else:
            if fallback is None:
                raise RuntimeError(f"could not place agents for case {case}")
            sc, label = fallback
        scenarios.append(sc)
        labels.append(label)
    return Suite(scenarios, labels, seed, params)


# ---------------------------------------------------------------- files


def write_suite(suite: Suite, directory: str) -> None:
    """One shared map file, one scenario file per case and a manifest."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "map.txt"), "w") as fh:
        fh.write(serialize_map(suite.scenarios[0].map))
    cases = []
    for sc, label in zip(suite.scenarios, suite.conflicted):
        fname = f"{sc.name}.scen"
        with open(os.path.join(directory, fname), "w") as fh:
            fh.write(serialize_scenario(sc))
        cases.append({"name": sc.name, "file": fname, "conflicted": label})
    manifest = {"seed": suite.seed, "params": suite.params.__dict__, "conflict_rate": suite.conflict_rate, "cases": cases}
    with open(os.path.join(directory, "suite.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def load_suite(directory: str) -> Suite:
    with open(os.path.join(directory, "suite.json")) as fh:
        manifest = json.load(fh)
    grid = load_map(os.path.join(directory, "map.txt"))
    scenarios, labels = [], []
    for case in manifest["cases"]:
        with open(os.path.join(directory, case["file"])) as fh:
            scenarios.append(parse_scenario(fh.read(), grid, name=case["name"]))
        labels.append(bool(case["conflicted"]))
    p = dict(manifest["params"])
    p["footprints"] = tuple(p["footprints"])
    return Suite(scenarios, labels, manifest["seed"], SuiteParams(**p))
