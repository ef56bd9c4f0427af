"""Main entry point for the epinet package."""

from epinet.cli import main

if __name__ == "__main__":
    main()
