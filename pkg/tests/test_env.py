import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mappohr.agents import Action
from mappohr.collision import Placement, check_collision, check_static_collision, load_footprints
from mappohr.dstar import plan
from mappohr.env import EnvConfig, MultiRobotEnv, ScenarioRejected, observation_dim, read_trace
from mappohr.gridmap import GridMap, parse_scenario

from episodes import EPISODES, hand_return, play

M, W, B, R = Action.MOVE, Action.WAIT, Action.BACK, Action.REPLAN
OPEN = GridMap(12, 12, frozenset())
LIB = load_footprints()


def env_for(text, grid=OPEN, **cfg):
    env = MultiRobotEnv(parse_scenario(text, grid), EnvConfig(**cfg))
    return env, env.reset()


# ---------------------------------------------------------------- reset


def test_reset_plans_static_shortest_paths():
    env, obs = env_for("a unit 2 1 2 10\nb unit 9 1 9 10\n")
    for a in env.agents:
        assert a.guidance.total_length == 9.0
        assert a.guidance.waypoints == plan(OPEN, a.model, a.cell, a.goal).waypoints
    assert len(obs) == 2 and not env.terminated


def test_reset_accepts_crossing_paths():
    env, _ = env_for("a unit 5 1 5 10\nb unit 1 5 10 5\n")
    assert set(env.agents[0].guidance.waypoints) & set(env.agents[1].guidance.waypoints)


def test_reset_rejects_walled_off_goal():
    walls = frozenset({(r, 8) for r in range(12)})
    sc = parse_scenario("a unit 5 1 5 10\nb unit 1 1 1 3\n", GridMap(12, 12, walls))
    with pytest.raises(ScenarioRejected):
        MultiRobotEnv(sc).reset()


# ---------------------------------------------------------------- step


def test_disjoint_moves_advance_both():
    env, _ = env_for("a unit 2 1 2 10\nb unit 9 1 9 10\n")
    _, step = env.step([M, M])
    assert [a.cell for a in env.agents] == [(2, 2), (9, 2)]
    assert not any(step.collided) and not step.terminated


def test_vertex_conflict_collides_and_terminates():
    steps, env = play(EPISODES["head_on"])
    last = steps[-1]
    assert last.collided == (True, True) and last.terminated
    assert last.rewards.tolist() == [-100.0, -100.0]


def test_swap_conflict_detected_mid_step():
    env, _ = env_for("a unit 5 4 5 9\nb unit 5 5 5 0\n", rules=False)
    _, step = env.step([M, M])
    assert step.collided == (True, True)


def test_wait_lets_other_pass():
    env, _ = env_for("a unit 1 5 9 5\nb unit 5 1 5 10\n", rules=False)
    for _ in range(3):
        env.step([W, M])
    env.step([W, M])  # b now past column 5
    env.step([W, M])
    assert env.agents[0].waits == 5
    for _ in range(8):
        if env.terminated:
            break
        acts = [M if not a.done else W for a in env.agents]
        _, step = env.step(acts)
        assert not any(step.collided)
    assert all(a.reached_at is not None for a in env.agents)


def test_back_on_empty_history_degrades_to_wait():
    env, _ = env_for("a unit 2 1 2 10\nb unit 9 1 9 10\n", rules=False)
    _, step = env.step([B, M])
    assert step.executed[0] == W and env.agents[0].cell == (2, 1) and env.agents[0].waits == 1


def test_masked_action_is_rejected():
    env, _ = env_for("a unit 2 1 2 10\nb unit 9 1 9 10\n")
    assert env.masks()[0].actions == (M,)
    with pytest.raises(ValueError, match="masked"):
        env.step([W, M])


def test_stepping_after_termination_is_an_error():
    steps, env = play(EPISODES["head_on"])
    with pytest.raises(RuntimeError):
        env.step([W, W])


def test_step_limit_terminates():
    env, _ = env_for("a unit 2 1 2 10\nb unit 9 1 9 10\n", rules=False, step_limit=3)
    for _ in range(3):
        _, step = env.step([W, W])
    assert step.terminated and env.t == 3


def test_replan_consumes_turn_and_avoids_other():
    env, _ = env_for("a square3 5 2 5 10\nb square3 5 6 1 6\n", rules=False)
    assert check_collision(Placement(LIB["square3"], env.agents[0].guidance.waypoints[2]), env.agents[1].placement, 0)
    _, step = env.step([R, W])
    a = env.agents[0]
    assert a.cell == (5, 2) and step.executed[0] == R
    assert a.guidance.total_length > 8
    for cell in a.guidance.waypoints:
        assert not check_collision(Placement(a.model, cell), env.agents[1].placement, 0.0)


def test_failed_replan_degrades_to_wait():
    # b sits in the only corridor, so a cannot find a way around it
    grid = GridMap(12, 12, frozenset({(r, c) for r in (4, 6) for c in range(12)}))
    env, _ = env_for("a unit 5 1 5 10\nb unit 5 6 5 8\n", grid=grid, rules=False, deterministic_timing=True)
    _, step = env.step([R, W])
    assert step.executed[0] == W and step.info["replan_failed"][0]
    assert env.agents[0].replans[-1].succeeded is False


# ---------------------------------------------------------------- rewards


@pytest.mark.parametrize("name", sorted(EPISODES))
def test_scripted_episode_rewards(name):
    ep = EPISODES[name]
    steps, env = play(ep)
    assert env.terminated
    assert [tuple(s.rewards.tolist()) for s in steps] == [tuple(r) for r in ep["rewards"]]
    assert sum(s.shared_reward for s in steps) == hand_return(ep)


def test_initial_length_step_cost():
    env, _ = env_for("a unit 2 1 2 5\nb unit 9 1 9 5\n", step_cost="initial", rules=False)
    env.step([M, M])
    _, step = env.step([M, M])
    assert step.rewards.tolist() == [-1 / 4, -1 / 4]


def test_initial_length_fifty_gives_minus_two_hundredths():
    grid = GridMap(3, 60, frozenset())
    env, _ = env_for("a unit 1 2 1 52\nb unit 0 0 0 1\n", grid=grid, step_cost="initial", rules=False)
    _, step = env.step([M, M])
    assert step.rewards[0] == -1 / 50 == -0.02


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(list(Action)), st.sampled_from(list(Action))), min_size=1, max_size=25))
def test_random_play_invariants(joint_actions):
    env, _ = env_for("a square3 5 2 5 9\nb tug 2 6 9 6\n", rules=False)
    for acts in joint_actions:
        if env.terminated:
            break
        before = [a.cell for a in env.agents]
        hist = [list(a.history) for a in env.agents]
        _, step = env.step([a if not ag.done else W for a, ag in zip(acts, env.agents)])
        assert step.shared_reward == np.mean(step.rewards)
        assert env.t <= 60
        for i, a in enumerate(env.agents):
            ex = step.executed[i]
            if ex in (W, R):
                assert a.cell == before[i]
            elif ex == M:
                assert abs(a.cell[0] - before[i][0]) + abs(a.cell[1] - before[i][1]) == 1
            else:
                assert a.cell == hist[i][-1]
        pa, pb = env.agents[0].placement, env.agents[1].placement
        if check_collision(pa, pb, env.d):
            assert any(step.collided)


# ---------------------------------------------------------------- observations


def test_observation_dimensions():
    env, obs = env_for("a unit 2 1 2 10\nb unit 9 1 9 10\n")
    assert len(obs[0]) == obs[0].as_array().size == 71
    assert env.critic_features(obs).shape == (2, 145)
    assert observation_dim(3, 10) == 1 + 2 + 30


def test_sole_agent_on_empty_map():
    env, obs = env_for("a unit 25 10 25 30\n", grid=GridMap(51, 51, frozenset()))
    o = obs[0]
    assert o.agent_distances == ()
    assert not any(o.path_occupancy) and not any(o.lateral_occupancy)
    assert o.goal_distance == 1.0
    assert len(o) == 70


def test_parked_agent_three_steps_ahead():
    env, obs = env_for("a unit 2 1 2 10\nb unit 2 4 8 4\n")
    flags = obs[0].path_occupancy
    a, b = env.agents
    oracle = [float(check_collision(Placement(a.model, c), b.placement, env.d)) for c in a.lookahead(23)]
    oracle += [0.0] * (23 - len(oracle))
    assert list(flags) == oracle
    assert flags[2] == 1.0 and sum(flags) == 1.0


def test_goal_adjacent_distance_is_last_edge():
    env, _ = env_for("a unit 2 1 2 5\nb unit 9 1 9 5\n", rules=False)
    for _ in range(3):
        obs, _ = env.step([M, M])
    assert obs[0].goal_distance * env.agents[0].initial_guidance_length == 1.0


def test_agent_distance_is_normalised_outline_gap():
    env, obs = env_for("a unit 2 1 2 10\nb unit 9 1 9 10\n")
    assert obs[0].agent_distances[0] == pytest.approx(6.0 / OPEN.diagonal)


def test_lateral_flags_see_walls_and_agents():
    env, obs = env_for("a unit 2 1 2 10\nb unit 5 1 5 10\n")
    lat = obs[0].lateral_occupancy
    assert len(lat) == 46 and set(lat) <= {0.0, 1.0}
    # heading east: one side runs into the map edge after 2 cells, the other meets b after 3
    assert sum(lat) > 0


# ---------------------------------------------------------------- trace


def test_trace_roundtrip(tmp_path):
    steps, env = play(EPISODES["backtrack"])
    path = tmp_path / "trace.jsonl"
    env.write_trace(str(path))
    rows = read_trace(str(path))
    assert rows[0]["header"] and len(rows) == 1 + len(steps)
    assert rows[-1]["cells"] == [list(a.cell) for a in env.agents]
    assert [r["rewards"] for r in rows[1:]] == [s.rewards.tolist() for s in steps]
