"""Actor and critic wrappers around :class:`RecurrentMLP`."""
from __future__ import annotations

import numpy as np

from ..agents import NUM_ACTIONS
from .nn import RecurrentMLP, masked_log_softmax, masked_softmax


def critic_input_dim(num_agents: int, obs_dim: int, shared: bool = True) -> int:
    """Joint observations + agent one-hot + relative distances, or the own observation only."""
    if not shared:
        return obs_dim
    return num_agents * obs_dim + num_agents + (num_agents - 1)


class Actor:
    """Shared-parameter policy: own observation and mask in, masked categorical out.

    One instance serves every agent, so parameter sharing holds by construction.
    """

    def __init__(self, obs_dim: int, hidden: int = 128, cell: str = "gru", rng=None, dtype=np.float32):
        self.net = RecurrentMLP(obs_dim, NUM_ACTIONS, hidden, cell, rng, dtype, out_gain=0.01)

    @property
    def obs_dim(self) -> int:
        return self.net.in_dim

    @property
    def params(self):
        return self.net.params

    def initial_state(self, batch: int) -> np.ndarray:
        return self.net.initial_state(batch)

    def forward(self, obs: np.ndarray, mask: np.ndarray, hidden: np.ndarray):
        """``obs [B, obs_dim]``, ``mask [B, 4]`` -> ``(probs [B, 4], hidden')``."""
        mask = np.asarray(mask, dtype=bool)
        if not mask.any(axis=-1).all():
            raise ValueError("every action mask must allow at least one action")
        logits, h = self.net.step(obs, hidden)
        return masked_softmax(logits.astype(np.float64), mask), h

    def act(self, obs, mask, hidden, rng: np.random.Generator | None = None, greedy: bool = False):
        """Sample (or argmax) actions; returns ``(actions, log_probs, hidden')``."""
        probs, h = self.forward(obs, mask, hidden)
        if greedy or rng is None:
            actions = np.argmax(probs, axis=-1)
        else:
            u = rng.random(len(probs))
            cdf = np.cumsum(probs, axis=-1)
            actions = np.minimum((u[:, None] >= cdf).sum(axis=-1), NUM_ACTIONS - 1)
            # never land on a masked action through rounding at the top of the cdf
            for i, a in enumerate(actions):
                if probs[i, a] == 0.0:
                    actions[i] = int(np.flatnonzero(probs[i])[-1])
        logp = np.log(probs[np.arange(len(actions)), actions])
        return actions, logp, h

    def log_probs(self, logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return masked_log_softmax(logits, mask)


class Critic:
    """Value network; with ``shared`` it reads the centralised feature vector."""

    def __init__(self, in_dim: int, hidden: int = 128, cell: str = "gru", rng=None, dtype=np.float32):
        self.net = RecurrentMLP(in_dim, 1, hidden, cell, rng, dtype, out_gain=1.0)

    @property
    def in_dim(self) -> int:
        return self.net.in_dim

    @property
    def params(self):
        return self.net.params

    def initial_state(self, batch: int) -> np.ndarray:
        return self.net.initial_state(batch)

    def forward(self, features: np.ndarray, hidden: np.ndarray):
        """``features [B, in_dim]`` -> ``(values [B], hidden')``."""
        out, h = self.net.step(features, hidden)
        return out[:, 0].astype(np.float64), h
