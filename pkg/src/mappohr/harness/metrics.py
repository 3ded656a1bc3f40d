"""Cost metrics for finished episodes and suite-level aggregation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

from ..dstar import path_length

COLUMNS = ("case", "added", "planning", "waiting", "total", "success")


@dataclass(frozen=True)
class EpisodeMetrics:
    added_moving_cost: float
    planning_cost: float
    waiting_cost: float
    success: bool
    case: str = ""

    def __post_init__(self):
        if min(self.added_moving_cost, self.planning_cost, self.waiting_cost) < 0:
            raise ValueError("cost components must be non-negative")

    @property
    def total(self) -> float:
        return self.added_moving_cost + self.planning_cost + self.waiting_cost

    def row(self) -> tuple:
        return (self.case, self.added_moving_cost, self.planning_cost, self.waiting_cost, self.total, int(self.success))


def metrics_from_trace(trace: Sequence[dict], speed: float = 1.0, case: str = "") -> EpisodeMetrics:
    """Recompute the three cost components from an environment trace.

    Added: per agent, distance actually driven minus its global guidance
    length, floored at zero for agents that stopped short of the goal.
    Planning: replanning time times ``speed``. Waiting: executed waits of
    active agents, excluding replans that failed and fell back to waiting.
    """
    header, rows = trace[0], list(trace[1:])
    metric = header.get("metric", "euclidean")
    n = len(header["agents"])
    cells = [tuple(c) for c in header["cells"]]
    done = list(header["done"])
    travelled = [0.0] * n
    waits = 0
    planning = 0.0
    reached = [bool(x) for x in header["done"]]
    collided = False
    for row in rows:
        for i in range(n):
            nxt = tuple(row["cells"][i])
            if nxt != cells[i]:
                travelled[i] += path_length((cells[i], nxt), metric)
            if not done[i] and row["executed"][i] == "WAIT" and not row["replan_failed"][i]:
                waits += 1
            planning += row["planning_time"][i] * speed
            reached[i] = reached[i] or bool(row["reached"][i])
            collided = collided or bool(row["collided"][i])
        cells = [tuple(c) for c in row["cells"]]
        done = list(row["done"])
    added = sum(max(0.0, travelled[i] - header["global_length"][i]) for i in range(n))
    return EpisodeMetrics(added, planning, float(waits), all(reached) and not collided, case)


@dataclass
class SuiteReport:
    rows: list[EpisodeMetrics] = field(default_factory=list)
    errors: dict[str, str] = field(default_factory=dict)

    def add(self, m: EpisodeMetrics) -> None:
        self.rows.append(m)

    def totals(self) -> tuple[float, float, float, float]:
        a = sum(r.added_moving_cost for r in self.rows)
        p = sum(r.planning_cost for r in self.rows)
        w = sum(r.waiting_cost for r in self.rows)
        return a, p, w, a + p + w

    def means(self) -> tuple[float, float, float, float]:
        k = max(len(self.rows), 1)
        return tuple(x / k for x in self.totals())

    @property
    def success_rate(self) -> float:
        return sum(r.success for r in self.rows) / len(self.rows) if self.rows else 0.0

    @property
    def total(self) -> float:
        return self.totals()[3]

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow(_fmt(r.row()))
        w.writerow(_fmt(("total", *self.totals(), sum(r.success for r in self.rows))))
        w.writerow(_fmt(("mean", *self.means(), self.success_rate)))

    def format_table(self) -> str:
        lines = [f"{'case':<10}{'added':>10}{'planning':>10}{'waiting':>10}{'total':>10}{'success':>9}"]
        for r in self.rows:
            lines.append(
                f"{r.case:<10}{r.added_moving_cost:>10.2f}{r.planning_cost:>10.2f}{r.waiting_cost:>10.0f}"
                f"{r.total:>10.2f}{int(r.success):>9d}"
            )
        a, p, w, t = self.totals()
        lines.append(f"{'total':<10}{a:>10.2f}{p:>10.2f}{w:>10.0f}{t:>10.2f}{sum(r.success for r in self.rows):>9d}")
        lines.append(f"{'success rate':<40}{self.success_rate:>29.2f}")
        return "\n".join(lines)


def _fmt(row):
    # repr keeps every bit, so two reports compare equal only if the numbers do
    return [repr(float(v)) if isinstance(v, float) else v for v in row]
