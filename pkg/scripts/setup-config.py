#!/usr/bin/env python
"""Write the epinet user configuration (~/.config/epinet/.env).

Run directly or via PDM: pdm run setup-config
"""

import sys


def main() -> None:
    """Copy the bundled .env.example unless a configuration already exists."""
    try:
        from epinet.config import run_setup
    except ImportError as e:
        print(f"❌ Error: Failed to import epinet: {e}")
        print("Install the package first, e.g. pdm install.")
        sys.exit(1)
    sys.exit(run_setup(force="--force" in sys.argv[1:]))


if __name__ == "__main__":
    main()
