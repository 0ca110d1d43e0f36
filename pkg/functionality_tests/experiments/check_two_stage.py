"""
Manual Two-Stage Benefit Check

Runs every seed with and without rendered updates and compares the position
and orientation ATE of both filters.

Usage:
    python check_two_stage.py [config.yaml] [seeds]
"""

import sys

from colorama import Fore, Style

from map_vio.config_reader import load_experiment_config
from map_vio.core import ExperimentRunner
from map_vio.logging_setup import setup_logging

if __name__ == "__main__":
    config_file = sys.argv[1] if len(sys.argv) > 1 else None
    seeds = range(int(sys.argv[2]) if len(sys.argv) > 2 else 10)

    app_config = load_experiment_config(config_file)
    setup_logging(app_config)
    runner = ExperimentRunner(app_config)

    captured, two_stage = [], []
    for seed in seeds:
        a = runner.run_experiment(seed, map_updates=False).report
        b = runner.run_experiment(seed, map_updates=True).report
        captured.append(a)
        two_stage.append(b)
        print(
            f"seed {seed}: {a.ate_pos_m:.4f} m -> {b.ate_pos_m:.4f} m, "
            f"{a.ate_rot_deg:.3f} deg -> {b.ate_rot_deg:.3f} deg"
        )

    failed = False
    for gate in runner.map_update_gates(two_stage, captured):
        if gate.passed:
            print(Fore.GREEN + f"✅ {gate.name}: {gate.detail}" + Style.RESET_ALL)
        else:
            failed = True
            print(Fore.RED + f"❌ {gate.name}: {gate.detail}" + Style.RESET_ALL)
    sys.exit(1 if failed else 0)
