"""Episode and suite runners."""
from __future__ import annotations

import dataclasses
import logging
from typing import Sequence

from ..env import EnvConfig, MultiRobotEnv
from ..gridmap import Scenario
from .metrics import EpisodeMetrics, SuiteReport, metrics_from_trace

log = logging.getLogger(__name__)


def baseline_env_config(config: EnvConfig) -> EnvConfig:
    """The replanner needs Replan available whatever its mask would say."""
    return dataclasses.replace(config, rules=False, heuristic=True)


def run_episode(policy, scenario: Scenario, config: EnvConfig = EnvConfig(), speed: float = 1.0):
    """Roll one episode to termination; returns ``(metrics, trace, env)``."""
    env = MultiRobotEnv(scenario, config)
    obs = env.reset()
    policy.reset(env)
    while not env.terminated:
        obs, _ = env.step(policy.act(env, obs))
    metrics = metrics_from_trace(env.trace, speed, scenario.name)
    live = _live_metrics(env, speed, scenario.name)
    if live != metrics:
        raise AssertionError(f"trace metrics {metrics} disagree with live state {live}")
    return metrics, env.trace, env


def _live_metrics(env: MultiRobotEnv, speed: float, case: str) -> EpisodeMetrics:
    added = sum(max(0.0, a.travelled - a.initial_guidance_length) for a in env.agents)
    records = sorted((r.timestep, a.index, r.planning_time) for a in env.agents for r in a.replans)
    planning = 0.0
    for _, _, tp in records:  # same summation order as the trace
        planning += tp * speed
    waits = sum(a.waits for a in env.agents)
    success = all(a.reached_at is not None and not a.collided for a in env.agents)
    return EpisodeMetrics(added, planning, float(waits), success, case)


def run_suite(
    policy,
    suite: Sequence[Scenario],
    config: EnvConfig = EnvConfig(),
    speed: float = 1.0,
    csv_path: str | None = None,
) -> SuiteReport:
    """Evaluate every case; a case that raises is logged as a failure and the suite goes on."""
    if not suite:
        raise ValueError("suite is empty")
    report = SuiteReport()
    for sc in suite:
        try:
            m, _, _ = run_episode(policy, sc, config, speed)
        except Exception as exc:  # noqa: BLE001 - a broken case must not stop the suite
            log.warning("case %s failed: %s", sc.name, exc)
            report.errors[sc.name] = f"{type(exc).__name__}: {exc}"
            m = EpisodeMetrics(0.0, 0.0, 0.0, False, sc.name)
        report.add(m)
    if csv_path:
        report.to_csv(csv_path)
    return report
