"""Episode storage for on-policy updates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class EpisodeRecord:
    """One episode, arrays shaped ``[T, N, ...]`` once finished."""

    obs: list = field(default_factory=list)
    critic_obs: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    actor_hidden: list = field(default_factory=list)
    critic_hidden: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    complete: bool = False
    success: bool = False
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    trace: list | None = field(default=None, repr=False)

    def append(self, obs, critic_obs, masks, actions, log_probs, values, rewards, actor_hidden, critic_hidden, done):
        if self.complete:
            raise RuntimeError("episode already finished")
        self.obs.append(np.asarray(obs))
        self.critic_obs.append(np.asarray(critic_obs))
        self.masks.append(np.asarray(masks, dtype=bool))
        self.actions.append(np.asarray(actions, dtype=np.int64))
        self.log_probs.append(np.asarray(log_probs, dtype=np.float64))
        self.values.append(np.asarray(values, dtype=np.float64))
        self.rewards.append(np.asarray(rewards, dtype=np.float64))
        self.actor_hidden.append(np.asarray(actor_hidden))
        self.critic_hidden.append(np.asarray(critic_hidden))
        self.dones.append(bool(done))

    def finish(self, success: bool = False) -> "EpisodeRecord":
        if not self.dones or not self.dones[-1]:
            raise RuntimeError("episode must end on a terminal step")
        for name in ("obs", "critic_obs", "masks", "actions", "log_probs", "values", "rewards", "actor_hidden", "critic_hidden"):
            setattr(self, name, np.stack(getattr(self, name)))
        self.dones = np.array(self.dones)
        self.complete = True
        self.success = success
        return self

    def __len__(self) -> int:
        return len(self.dones)

    @property
    def num_agents(self) -> int:
        return self.actions[0].shape[0] if len(self) else 0

    @property
    def episode_return(self) -> float:
        """Undiscounted sum of the shared reward."""
        return float(np.sum(np.mean(self.rewards, axis=1)))


class RolloutBuffer:
    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.episodes: list[EpisodeRecord] = []

    def add(self, episode: EpisodeRecord) -> None:
        if len(self.episodes) >= self.capacity:
            raise RuntimeError("rollout buffer is full")
        self.episodes.append(episode)

    @property
    def full(self) -> bool:
        return len(self.episodes) >= self.capacity

    @property
    def steps(self) -> int:
        return sum(len(e) for e in self.episodes)

    def clear(self) -> None:
        self.episodes = []

    def __len__(self) -> int:
        return len(self.episodes)

    def sequences(self, indices=None) -> dict[str, np.ndarray]:
        """Pad (episode, agent) sequences into ``[T, B, ...]`` arrays with a ``valid`` mask."""
        seqs = [(e, i) for e in self.episodes for i in range(e.num_agents)]
        if indices is not None:
            seqs = [seqs[k] for k in indices]
        T = max(len(e) for e, _ in seqs)
        B = len(seqs)
        first = seqs[0][0]
        out = {
            "obs": np.zeros((T, B, first.obs.shape[-1])),
            "critic_obs": np.zeros((T, B, first.critic_obs.shape[-1])),
            "masks": np.ones((T, B, first.masks.shape[-1]), dtype=bool),
            "actions": np.zeros((T, B), dtype=np.int64),
            "log_probs": np.zeros((T, B)),
            "values": np.zeros((T, B)),
            "advantages": np.zeros((T, B)),
            "returns": np.zeros((T, B)),
            "valid": np.zeros((T, B), dtype=bool),
        }
        for b, (e, i) in enumerate(seqs):
            n = len(e)
            out["obs"][:n, b] = e.obs[:, i]
            out["critic_obs"][:n, b] = e.critic_obs[:, i]
            out["masks"][:n, b] = e.masks[:, i]
            out["actions"][:n, b] = e.actions[:, i]
            out["log_probs"][:n, b] = e.log_probs[:, i]
            out["values"][:n, b] = e.values[:, i]
            if e.advantages is not None:
                out["advantages"][:n, b] = e.advantages[:, i]
                out["returns"][:n, b] = e.returns[:, i]
            out["valid"][:n, b] = True
        return out

    @property
    def num_sequences(self) -> int:
        return sum(e.num_agents for e in self.episodes)
