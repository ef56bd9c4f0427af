"""Configuration management for epinet."""

from epinet.config.constants import (
    CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
    COLORS,
    DEBUG_CHECKS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_DATA_DIR,
    DEFAULT_DROPOUT,
    DEFAULT_INIT_STD,
    DEFAULT_LAMBDA,
    DEFAULT_LR,
    DEFAULT_LRN_ALPHA,
    DEFAULT_LRN_BETA,
    DEFAULT_LRN_K,
    DEFAULT_LRN_N,
    DEFAULT_MOMENTUM,
    DEFAULT_POOL_STRIDE,
    DEFAULT_SEED,
    DEFAULT_WEIGHT_DECAY,
    GRADCHECK_EPSILON,
    GRADCHECK_MARGIN_FACTOR,
    GRADCHECK_MAX_RESAMPLES,
    GRADCHECK_REL_FLOOR,
    GRADCHECK_TOLERANCE,
    MAX_DEBUG_VALUE_CHARS,
    MAX_EPITOME_OFFSET,
    RNG_STATE_BYTES,
    TERMINAL_WIDTH,
)
from epinet.config.env_config import get_env, load_env_config, run_setup

__all__ = [
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "COLORS",
    "DEBUG_CHECKS",
    "DEFAULT_BATCH_SIZE",
    "DEFAULT_DATA_DIR",
    "DEFAULT_DROPOUT",
    "DEFAULT_INIT_STD",
    "DEFAULT_LAMBDA",
    "DEFAULT_LR",
    "DEFAULT_LRN_ALPHA",
    "DEFAULT_LRN_BETA",
    "DEFAULT_LRN_K",
    "DEFAULT_LRN_N",
    "DEFAULT_MOMENTUM",
    "DEFAULT_POOL_STRIDE",
    "DEFAULT_SEED",
    "DEFAULT_WEIGHT_DECAY",
    "GRADCHECK_EPSILON",
    "GRADCHECK_MARGIN_FACTOR",
    "GRADCHECK_MAX_RESAMPLES",
    "GRADCHECK_REL_FLOOR",
    "GRADCHECK_TOLERANCE",
    "MAX_DEBUG_VALUE_CHARS",
    "MAX_EPITOME_OFFSET",
    "RNG_STATE_BYTES",
    "TERMINAL_WIDTH",
    "get_env",
    "load_env_config",
    "run_setup",
]
