"""Navigation agent and augmentation pipeline."""
from .augment import (
    AUGMENT_PRESETS,
    IDENTITY_PARAMS,
    AugmentConfig,
    AugmentParams,
    apply_augment,
    augment_batch,
    color_jitter,
    draw_params,
    random_shift,
)
from .policy import (
    NavPolicy,
    PolicyConfig,
    PolicyState,
    action_log_probs,
    entropy,
    fuse_features,
    load_policy,
    load_pretrained_encoder,
    sample_actions,
    save_policy,
)
