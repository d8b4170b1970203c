"""Main entry point for running switched_entropy as a module."""

from switched_entropy.cli import cli

if __name__ == "__main__":
    cli()
