"""Multi-agent PPO with a shared recurrent actor and a centralised critic."""
from .buffer import EpisodeRecord, RolloutBuffer
from .nn import RMSprop, RecurrentMLP, masked_log_softmax, masked_softmax
from .policy import Actor, Critic, critic_input_dim
from .ppo import LossConfig, compute_advantages, gae, ppo_loss, ppo_update
from .train import (
    CheckpointError,
    TrainConfig,
    TrainingDiverged,
    TrainResult,
    collect_episode,
    evaluate,
    load_checkpoint,
    make_networks,
    save_checkpoint,
    train,
)
