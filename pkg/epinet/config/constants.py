"""Constants module for epinet configuration.

All tunable defaults live here, each overridable through an ``EPINET_*``
environment variable (or the user's ``~/.config/epinet/.env``).

Categories:
    - Paths: dataset location
    - Optimizer: SGD defaults used by training
    - Layers: initialization and per-layer defaults
    - Gradient check: finite-difference settings
    - Checkpoint: binary format identifiers
    - Formatting: terminal output settings
"""

from typing import Final

from epinet.config.env_config import get_env, load_env_config

# Load environment variables at module import
load_env_config()

# Path Configuration
DEFAULT_DATA_DIR: Final[str | None] = get_env("EPINET_DATA", None)

# Optimizer Configuration
DEFAULT_LR: Final[float] = get_env("EPINET_LR", 0.01, float)
DEFAULT_MOMENTUM: Final[float] = get_env("EPINET_MOMENTUM", 0.9, float)
DEFAULT_WEIGHT_DECAY: Final[float] = get_env("EPINET_WEIGHT_DECAY", 5e-4, float)
DEFAULT_BATCH_SIZE: Final[int] = get_env("EPINET_BATCH_SIZE", 128, int)
DEFAULT_SEED: Final[int] = get_env("EPINET_SEED", 0, int)

# Layer Configuration
DEFAULT_LAMBDA: Final[float] = get_env("EPINET_LAMBDA", 0.01, float)
DEFAULT_INIT_STD: Final[float] = get_env("EPINET_INIT_STD", 0.01, float)
DEFAULT_DROPOUT: Final[float] = get_env("EPINET_DROPOUT", 0.5, float)
DEFAULT_POOL_STRIDE: Final[int] = get_env("EPINET_POOL_STRIDE", 2, int)
DEFAULT_LRN_N: Final[int] = get_env("EPINET_LRN_N", 5, int)
DEFAULT_LRN_ALPHA: Final[float] = get_env("EPINET_LRN_ALPHA", 1e-4, float)
DEFAULT_LRN_BETA: Final[float] = get_env("EPINET_LRN_BETA", 0.75, float)
DEFAULT_LRN_K: Final[float] = get_env("EPINET_LRN_K", 2.0, float)
MAX_EPITOME_OFFSET: Final[int] = 255  # argmax offsets are stored as uint8

# Gradient Check Configuration
GRADCHECK_EPSILON: Final[float] = get_env("EPINET_GRADCHECK_EPSILON", 1e-5, float)
GRADCHECK_TOLERANCE: Final[float] = get_env("EPINET_GRADCHECK_TOLERANCE", 1e-4, float)
GRADCHECK_MARGIN_FACTOR: Final[float] = 10.0
GRADCHECK_MAX_RESAMPLES: Final[int] = 100
GRADCHECK_REL_FLOOR: Final[float] = 1e-8

# Checkpoint Configuration
CHECKPOINT_MAGIC: Final[bytes] = b"DEPN"
CHECKPOINT_VERSION: Final[int] = 1
RNG_STATE_BYTES: Final[int] = 32

# Debug Configuration
DEBUG_CHECKS: Final[bool] = get_env("EPINET_DEBUG", False, bool)

# Formatting Configuration
COLORS: Final[dict[str, str]] = {
    "debug_header": get_env("EPINET_DEBUG_HEADER_COLOR", "blue"),
    "debug_value": get_env("EPINET_DEBUG_VALUE_COLOR", "cyan"),
    "info": get_env("EPINET_INFO_COLOR", "cyan"),
    "success": get_env("EPINET_SUCCESS_COLOR", "green"),
    "warning": get_env("EPINET_WARNING_COLOR", "yellow"),
    "status": get_env("EPINET_STATUS_COLOR", "bold green"),
    "error": get_env("EPINET_ERROR_COLOR", "bold red"),
}

MAX_DEBUG_VALUE_CHARS: Final[int] = get_env(
    "EPINET_MAX_DEBUG_VALUE_CHARS", 1200, int
)  # Maximum length of debug values before truncation

# Terminal Configuration
TERMINAL_WIDTH: Final[int] = get_env(
    "EPINET_TERMINAL_WIDTH", 100, int
)  # Maximum width for formatted output
