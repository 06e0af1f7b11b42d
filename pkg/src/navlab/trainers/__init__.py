"""Training loops: PPO, behavior cloning and MAE pretraining."""
from .bc import (
    BcConfig,
    DemoEpisode,
    bc_epoch,
    bc_evaluate,
    bc_loss,
    bc_update,
    build_demo_dataset,
    collate_demos,
    demo_episode,
    make_bc_optimizer,
)
from .mae import build_frame_dataset, mae_evaluate, mae_pretrain_epoch, save_mae
from .metrics import MetricsLogger, read_metrics
from .ppo import (
    PpoConfig,
    RolloutBuffer,
    RolloutCollector,
    TrainingDivergedError,
    augment_obs,
    collect_rollouts,
    compute_gae,
    make_ppo_optimizer,
    obs_to_torch,
    ppo_loss,
    ppo_update,
)
