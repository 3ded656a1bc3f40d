"""Generalised advantage estimation and the clipped PPO update."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .buffer import RolloutBuffer
from .nn import RMSprop, clip_grad_norm, masked_log_softmax
from .policy import Actor, Critic


@dataclass(frozen=True)
class LossConfig:
    clip: float = 0.1
    value_clip: float | None = None  # defaults to ``clip``
    value_coef: float = 0.5
    entropy_coef: float = 0.01


def gae(rewards, values, gamma: float, lam: float, last_value: float = 0.0):
    """GAE over one sequence ending in a terminal step (``last_value`` bootstraps otherwise)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    adv = np.zeros_like(rewards)
    running = 0.0
    next_value = last_value
    for t in reversed(range(len(rewards))):
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def compute_advantages(buffer: RolloutBuffer, gamma: float = 0.99, lam: float = 0.95):
    """Fill ``advantages``/``returns`` on every episode; returns them flattened per episode."""
    out = []
    for ep in buffer.episodes:
        if not ep.complete:
            raise ValueError("buffer holds an incomplete episode")
        adv = np.zeros_like(ep.rewards)
        ret = np.zeros_like(ep.rewards)
        for i in range(ep.num_agents):
            adv[:, i], ret[:, i] = gae(ep.rewards[:, i], ep.values[:, i], gamma, lam)
        ep.advantages, ep.returns = adv, ret
        out.append((adv, ret))
    return out


def ppo_loss(actor: Actor, critic: Critic, batch: dict, cfg: LossConfig = LossConfig(), need_grads: bool = True):
    """Clipped-surrogate objective on a padded batch; returns ``(loss, stats, actor_grads, critic_grads)``.

    ``loss = -surrogate - entropy_coef * entropy + value_coef * clipped_value_loss``,
    each term averaged over valid samples.
    """
    valid = batch["valid"]
    count = max(int(valid.sum()), 1)
    w = valid / count

    logits, acache = actor.net.forward(batch["obs"])
    logits = logits.astype(np.promote_types(logits.dtype, np.float64))
    mask = batch["masks"]
    logp_all = masked_log_softmax(logits, mask)
    probs = np.where(mask, np.exp(np.where(mask, logp_all, 0.0)), 0.0)
    acts = batch["actions"]
    logp = np.take_along_axis(logp_all, acts[..., None], axis=-1)[..., 0]
    adv = batch["advantages"]
    ratio = np.exp(logp - batch["log_probs"])
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    s1, s2 = ratio * adv, clipped * adv
    surrogate = np.minimum(s1, s2)
    plogp = np.where(mask, probs * np.where(mask, logp_all, 0.0), 0.0)
    entropy = -plogp.sum(axis=-1)

    values, ccache = critic.net.forward(batch["critic_obs"])
    values = values[..., 0].astype(np.promote_types(values.dtype, np.float64))
    old_v, ret = batch["values"], batch["returns"]
    vclip = cfg.clip if cfg.value_clip is None else cfg.value_clip
    dv = values - old_v
    v_clipped = old_v + np.clip(dv, -vclip, vclip)
    l1, l2 = (values - ret) ** 2, (v_clipped - ret) ** 2
    vloss_el = np.maximum(l1, l2)

    policy_loss = -np.sum(w * surrogate)
    ent = np.sum(w * entropy)
    value_loss = np.sum(w * vloss_el)
    # kept at the network's precision so finite-difference oracles can run wider
    loss = policy_loss - cfg.entropy_coef * ent + cfg.value_coef * value_loss
    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(ent),
        "clip_fraction": float(np.sum(w * (np.abs(ratio - 1.0) > cfg.clip))),
    }
    if not need_grads:
        return loss, stats, None, None

    # d loss / d logp_a through the clipped surrogate
    use = s1 <= s2
    g_logp = np.where(use, -adv * ratio, 0.0) * w
    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, acts[..., None], 1.0, axis=-1)
    dlogits = g_logp[..., None] * (onehot - probs)
    # entropy: dH/dz_k = -p_k (log p_k + H)
    dH = -np.where(mask, probs * (np.where(mask, logp_all, 0.0) + entropy[..., None]), 0.0)
    dlogits -= cfg.entropy_coef * w[..., None] * dH
    actor_grads = actor.net.backward(dlogits.astype(actor.net.dtype), acache)

    dval = np.where(l1 >= l2, 2.0 * (values - ret), 2.0 * (v_clipped - ret) * (np.abs(dv) < vclip))
    dval = cfg.value_coef * w * dval
    critic_grads = critic.net.backward(dval[..., None].astype(critic.net.dtype), ccache)
    return loss, stats, actor_grads, critic_grads


def ppo_update(
    actor: Actor,
    critic: Critic,
    actor_opt: RMSprop,
    critic_opt: RMSprop,
    buffer: RolloutBuffer,
    epochs: int = 4,
    num_minibatches: int = 2,
    cfg: LossConfig = LossConfig(),
    max_grad_norm: float = 10.0,
    normalize_advantages: bool = True,
    rng: np.random.Generator | None = None,
) -> dict:
    """Several epochs of minibatch updates over whole (episode, agent) sequences."""
    if any(ep.advantages is None for ep in buffer.episodes):
        raise ValueError("compute_advantages must run before ppo_update")
    rng = rng if rng is not None else np.random.default_rng(0)
    n_seq = buffer.num_sequences
    full = buffer.sequences()
    if normalize_advantages:
        a = full["advantages"][full["valid"]]
        mean, std = float(a.mean()), float(a.std())
    totals: dict[str, float] = {}
    n = 0
    for _ in range(epochs):
        order = rng.permutation(n_seq)
        for chunk in np.array_split(order, min(num_minibatches, n_seq)):
            batch = buffer.sequences(sorted(chunk.tolist()))
            if normalize_advantages:
                batch["advantages"] = np.where(batch["valid"], (batch["advantages"] - mean) / (std + 1e-8), 0.0)
            loss, stats, ga, gc = ppo_loss(actor, critic, batch, cfg)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in (*ga.values(), *gc.values())):
                raise FloatingPointError(f"non-finite loss on minibatch of sequences {sorted(chunk.tolist())}")
            stats["actor_grad_norm"] = clip_grad_norm(ga, max_grad_norm)
            stats["critic_grad_norm"] = clip_grad_norm(gc, max_grad_norm)
            actor_opt.step(actor.params, ga)
            critic_opt.step(critic.params, gc)
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + v
            n += 1
    return {k: v / max(n, 1) for k, v in totals.items()}
