"""Environment configuration module for the epinet package.

This module handles loading environment variables from the user config file
and provides typed access with fallback values from constants.
"""

import os
import sys
from pathlib import Path
from typing import Any

from dotenv import load_dotenv


def get_config_dir() -> Path:
    """Get the configuration directory path.

    Returns:
        Path: The path to the configuration directory.
    """
    return Path.home() / ".config" / "epinet"


def ensure_config_dir() -> None:
    """Ensure the configuration directory exists."""
    config_dir = get_config_dir()
    config_dir.mkdir(parents=True, exist_ok=True)


def load_env_config() -> None:
    """Load environment variables from the config file."""
    if os.getenv("EPINET_ALLOW_TEST_ENV_LOAD") == "1":
        pass
    # Tests must be hermetic; do not read user-local configuration files.
    elif os.getenv("PYTEST_CURRENT_TEST") is not None or "pytest" in sys.modules:
        return

    env_file = get_config_dir() / ".env"
    if env_file.exists():
        load_dotenv(env_file)


def get_env(key: str, default: Any = None, type_cast: type | None = None) -> Any:
    """Get an environment variable with optional type casting.

    Args:
        key: The environment variable key
        default: Default value if not found
        type_cast: Optional type to cast the value to

    Returns:
        The environment variable value or default
    """
    value = os.getenv(key, default)

    if value is not None and type_cast is not None:
        try:
            if type_cast is bool:
                return str(value).lower() in ("true", "1", "yes", "y")
            return type_cast(value)
        except (ValueError, TypeError):
            return default

    return value


def run_setup(*, force: bool = False) -> int:
    """Copy the bundled .env.example into the user config directory.

    Args:
        force: If True, overwrite an existing config file.

    Returns:
        Exit code: 0 on success, 1 on failure.
    """
    import importlib.resources as pkg_resources

    from epinet.utils.formatting import console, success, warning

    env_file = get_config_dir() / ".env"

    try:
        ref = pkg_resources.files("epinet") / ".env.example"
        with pkg_resources.as_file(ref) as example_path:
            if not example_path.exists():
                console.print("[bold red]ERROR:[/bold red] .env.example not found.")
                return 1
            source_content = example_path.read_text(encoding="utf-8")
    except Exception as e:
        console.print(f"[bold red]ERROR:[/bold red] Could not locate .env.example: {e}")
        return 1

    if env_file.exists() and not force:
        warning(f"Configuration file already exists at: {env_file}")
        console.print("Use `epinet setup --force` to overwrite it.")
        return 0

    try:
        ensure_config_dir()
        env_file.write_text(source_content, encoding="utf-8")
    except OSError as e:
        console.print(f"[bold red]ERROR:[/bold red] Failed to write configuration: {e}")
        return 1

    success(f"Configuration file created at: {env_file}")
    console.print("Edit it to change defaults such as EPINET_DATA or EPINET_LR.")
    return 0
