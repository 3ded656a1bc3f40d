"""Rollout collection, the training loop and checkpoint I/O."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..env import EnvConfig, MultiRobotEnv
from ..gridmap import Scenario
from .buffer import EpisodeRecord, RolloutBuffer
from .nn import RMSprop
from .policy import Actor, Critic, critic_input_dim
from .ppo import LossConfig, compute_advantages, ppo_update

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
CURVE_HEADER = ("update_index", "env_steps", "mean_episode_reward", "success_rate")


class CheckpointError(ValueError):
    """Unreadable checkpoint or one that does not fit the environment."""


class TrainingDiverged(FloatingPointError):
    """A non-finite loss stopped training; the last good parameters were kept."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    rms_alpha: float = 0.99
    rms_eps: float = 1e-5
    gamma: float = 0.99
    clip: float = 0.1
    value_clip: float | None = None
    value_coef: float = 0.5
    total_steps: int = 100_000
    episode_cap: int = 60
    gae_lambda: float = 0.95
    epochs: int = 4
    num_minibatches: int = 2
    entropy_coef: float = 0.01
    max_grad_norm: float = 10.0
    episodes_per_update: int = 8
    hidden: int = 128
    cell: str = "gru"
    share_critic: bool = True
    normalize_advantages: bool = True
    reward_scale: float = 1.0
    eval_interval: int = 10
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("lr", "gamma", "episode_cap", "epochs", "num_minibatches", "episodes_per_update", "hidden", "reward_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.clip < 1.0:
            raise ValueError("clip must lie in (0, 1)")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.total_steps < 0 or self.entropy_coef < 0 or self.value_coef < 0:
            raise ValueError("total_steps and loss coefficients must be non-negative")
        if self.cell not in ("gru", "rnn"):
            raise ValueError(f"unknown recurrent cell {self.cell!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    @property
    def loss(self) -> LossConfig:
        return LossConfig(self.clip, self.value_clip, self.value_coef, self.entropy_coef)


@dataclass
class TrainResult:
    actor: Actor
    critic: Critic
    best_actor_params: dict
    curve: list[tuple[int, int, float, float]] = field(default_factory=list)
    best_eval: float = float("-inf")
    env_steps: int = 0
    updates: int = 0


def make_networks(config: TrainConfig, obs_dim: int, num_agents: int) -> tuple[Actor, Critic]:
    rng = np.random.default_rng(config.seed)
    dtype = np.dtype(config.dtype).type
    actor = Actor(obs_dim, config.hidden, config.cell, rng, dtype)
    critic = Critic(critic_input_dim(num_agents, obs_dim, config.share_critic), config.hidden, config.cell, rng, dtype)
    return actor, critic


def critic_inputs(env: MultiRobotEnv, observations, share_critic: bool) -> np.ndarray:
    if share_critic:
        return env.critic_features(observations)
    return np.stack([o.as_array() for o in observations])


def collect_episode(
    env: MultiRobotEnv,
    actor: Actor,
    critic: Critic | None,
    rng: np.random.Generator | None,
    share_critic: bool = True,
    greedy: bool = False,
    reward_scale: float = 1.0,
) -> EpisodeRecord:
    """Run one episode with the shared actor; the critic, when given, records values."""
    obs = env.reset()
    n = env.num_agents
    ha, hc = actor.initial_state(n), critic.initial_state(n) if critic is not None else None
    ep = EpisodeRecord()
    done = False
    while not done:
        x = np.stack([o.as_array() for o in obs])
        masks = np.stack([m.as_array() for m in env.masks()])
        cin = critic_inputs(env, obs, share_critic) if critic is not None else np.zeros((n, 0))
        actions, logp, ha_next = actor.act(x, masks, ha, rng, greedy=greedy)
        if critic is not None:
            values, hc_next = critic.forward(cin, hc)
        else:
            values, hc_next = np.zeros(n), hc
        obs, step = env.step(actions)
        done = step.terminated
        rewards = np.full(n, step.shared_reward * reward_scale)
        ep.append(x, cin, masks, actions, logp, values, rewards, ha, hc if hc is not None else np.zeros((n, 0)), done)
        ha, hc = ha_next, hc_next
    success = all(a.reached_at is not None and not a.collided for a in env.agents)
    ep.finish(success)
    ep.trace = env.trace
    return ep


def evaluate(actor: Actor, suite: Sequence[Scenario], env_config: EnvConfig) -> tuple[float, float]:
    """Greedy decentralised rollouts: ``(mean episode return, success rate)``."""
    returns, wins = [], 0
    for sc in suite:
        ep = collect_episode(MultiRobotEnv(sc, env_config), actor, None, None, greedy=True)
        returns.append(ep.episode_return)
        wins += ep.success
    return float(np.mean(returns)), wins / len(suite)


def train(
    suite: Sequence[Scenario],
    config: TrainConfig = TrainConfig(),
    env_config: EnvConfig = EnvConfig(),
    curve_path: str | None = None,
    checkpoint_path: str | None = None,
    progress: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Alternate rollout collection and PPO updates until ``total_steps`` joint steps."""
    if not suite:
        raise ValueError("training suite is empty")
    num_agents = len(suite[0].agents)
    if any(len(sc.agents) != num_agents for sc in suite):
        raise ValueError("every training scenario must have the same number of agents")
    if env_config.step_limit is None:
        env_config = dataclasses.replace(env_config, step_limit=config.episode_cap)
    obs_dim = env_config.obs_dim(num_agents)
    actor, critic = make_networks(config, obs_dim, num_agents)
    aopt = RMSprop(actor.params, config.lr, config.rms_alpha, config.rms_eps)
    copt = RMSprop(critic.params, config.lr, config.rms_alpha, config.rms_eps)
    rng = np.random.default_rng(config.seed)
    envs = [MultiRobotEnv(sc, env_config) for sc in suite]
    result = TrainResult(actor, critic, actor.net.copy_params())
    meta = {"train": dataclasses.asdict(config), "env": dataclasses.asdict(env_config), "num_agents": num_agents}

    curve_fh = open(curve_path, "w", newline="") if curve_path else None
    writer = csv.writer(curve_fh) if curve_fh else None
    if writer:
        writer.writerow(CURVE_HEADER)
    try:
        update = 0
        while result.env_steps < config.total_steps:
            buffer = RolloutBuffer(config.episodes_per_update)
            while not buffer.full and result.env_steps < config.total_steps:
                env = envs[int(rng.integers(len(envs)))]
                ep = collect_episode(env, actor, critic, rng, config.share_critic, reward_scale=config.reward_scale)
                buffer.add(ep)
                result.env_steps += len(ep)
            compute_advantages(buffer, config.gamma, config.gae_lambda)
            good = (actor.net.copy_params(), critic.net.copy_params())
            try:
                stats = ppo_update(
                    actor, critic, aopt, copt, buffer, config.epochs, config.num_minibatches, config.loss,
                    config.max_grad_norm, config.normalize_advantages, rng,
                )
            except FloatingPointError as exc:
                actor.net.set_params(good[0])
                critic.net.set_params(good[1])
                if checkpoint_path:
                    save_checkpoint(checkpoint_path, actor, critic, meta)
                raise TrainingDiverged(str(exc)) from exc
            update += 1
            mean_ret = float(np.mean([e.episode_return for e in buffer.episodes])) / config.reward_scale
            success = float(np.mean([e.success for e in buffer.episodes]))
            row = (update, result.env_steps, mean_ret, success)
            result.curve.append(row)
            if writer:
                writer.writerow(row)
                curve_fh.flush()
            if config.eval_interval and (update % config.eval_interval == 0 or result.env_steps >= config.total_steps):
                score, _ = evaluate(actor, suite, env_config)
                if score > result.best_eval:
                    result.best_eval = score
                    result.best_actor_params = actor.net.copy_params()
            if progress:
                progress({"update": update, "env_steps": result.env_steps, "mean_reward": mean_ret, "success": success, **stats})
        result.updates = update
        if not config.eval_interval or result.best_eval == float("-inf"):
            result.best_actor_params = actor.net.copy_params()
    finally:
        if curve_fh:
            curve_fh.close()
    if checkpoint_path:
        best = Actor(obs_dim, config.hidden, config.cell, dtype=np.dtype(config.dtype).type)
        best.net.set_params(result.best_actor_params)
        save_checkpoint(checkpoint_path, best, critic, {**meta, "best_eval": result.best_eval})
    return result


# ---------------------------------------------------------------- checkpoints


def _jsonable(obj):
    return sorted(obj) if isinstance(obj, (set, frozenset)) else str(obj)


def save_checkpoint(path: str, actor: Actor, critic: Critic | None, meta: dict) -> None:
    arrays = {f"actor/{k}": v for k, v in actor.params.items()}
    if critic is not None:
        arrays.update({f"critic/{k}": v for k, v in critic.params.items()})
    header = {
        "version": CHECKPOINT_VERSION,
        "obs_dim": actor.obs_dim,
        "hidden": actor.net.hidden,
        "cell": actor.net.cell,
        "critic_dim": critic.in_dim if critic is not None else None,
        **meta,
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(header, default=_jsonable)), **arrays)


def load_checkpoint(path: str, obs_dim: int | None = None) -> tuple[Actor, Critic | None, dict]:
    try:
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    if obs_dim is not None and meta["obs_dim"] != obs_dim:
        raise CheckpointError(f"{path}: checkpoint expects {meta['obs_dim']}-dimensional observations, environment gives {obs_dim}")
    dtype = arrays["actor/w1"].dtype.type
    actor = Actor(meta["obs_dim"], meta["hidden"], meta["cell"], dtype=dtype)
    actor.net.set_params({k[6:]: v for k, v in arrays.items() if k.startswith("actor/")})
    critic = None
    if meta.get("critic_dim"):
        critic = Critic(meta["critic_dim"], meta["hidden"], meta["cell"], dtype=dtype)
        critic.net.set_params({k[7:]: v for k, v in arrays.items() if k.startswith("critic/")})
    return actor, critic, meta
