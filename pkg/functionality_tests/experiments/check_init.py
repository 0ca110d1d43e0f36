"""
Manual Initialization Check

Trains the initialization model if no checkpoint exists, evaluates it on
held-out poses against photometric refinement and prints the gates.

Usage:
    python check_init.py [config.yaml]
"""

import sys
from pathlib import Path

from colorama import Fore, Style

from map_vio.config_reader import load_experiment_config
from map_vio.core import ExperimentRunner
from map_vio.logging_setup import setup_logging

if __name__ == "__main__":
    config_file = sys.argv[1] if len(sys.argv) > 1 else None

    app_config = load_experiment_config(config_file)
    setup_logging(app_config)
    runner = ExperimentRunner(app_config, load_model=False)

    if not Path(app_config["InitModel"]["Checkpoint"]).is_file():
        print(Fore.CYAN + "🔍 No checkpoint found, training..." + Style.RESET_ALL)
        runner.train_init()

    summary = runner.eval_init()
    for gate in runner.check_init_acceptance(summary):
        color = Fore.GREEN if gate.passed else Fore.RED
        print(color + f"{gate.name}: {gate.detail}" + Style.RESET_ALL)
