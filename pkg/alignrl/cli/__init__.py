"""
Command-line interface.
"""
import argparse

from alignrl import __version__
from alignrl.cli.data import register as register_data
from alignrl.cli.evaluation import register as register_evaluation
from alignrl.cli.training import register as register_training


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alignrl",
        description="Target-aligned offline RL: datasets, training, aligned inference and evaluation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help="overrides ALIGNRL_LOG_LEVEL")
    parser.add_argument("--log-format", choices=["console", "json"], help="overrides ALIGNRL_LOG_FORMAT")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    register_data(subparsers)
    register_training(subparsers)
    register_evaluation(subparsers)
    return parser
