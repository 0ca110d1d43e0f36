"""
Manual Filter Consistency Check

Runs the captured-only filter from a ground-truth start over many seeds and
checks that the average IMU NEES lies inside the two-sided 95% chi-square
band, then repeats one run without noise and checks its ATE.

Usage:
    python check_consistency.py [config.yaml] [runs]
"""

import copy
import sys

import numpy as np
from colorama import Fore, Style
from scipy.stats import chi2

from map_vio.config_reader import load_experiment_config
from map_vio.core import ExperimentRunner
from map_vio.logging_setup import setup_logging

IMU_DOF = 15

if __name__ == "__main__":
    config_file = sys.argv[1] if len(sys.argv) > 1 else None
    runs = int(sys.argv[2]) if len(sys.argv) > 2 else 50

    app_config = load_experiment_config(config_file)
    app_config["Filter"]["InitMode"] = "ground-truth"
    setup_logging(app_config)
    runner = ExperimentRunner(app_config)

    nees = np.array(
        [runner.run_experiment(seed, map_updates=False).nees for seed in range(runs)]
    )
    average = nees.mean(axis=0)
    lo, hi = chi2.ppf([0.025, 0.975], IMU_DOF * runs) / runs
    inside = np.mean((average >= lo) & (average <= hi))
    print(f"Average NEES {average.mean():.2f}, band [{lo:.2f}, {hi:.2f}]")
    color = Fore.GREEN if lo <= average.mean() <= hi else Fore.RED
    print(color + f"✅ {100.0 * inside:.0f}% of frames inside the band" + Style.RESET_ALL)

    exact = copy.deepcopy(app_config)
    exact["Noise"]["Enabled"] = False
    ate = ExperimentRunner(exact).run_experiment(0, map_updates=False).report.ate_pos_m
    color = Fore.GREEN if ate < 1e-3 else Fore.RED
    print(color + f"🔍 Noise-free position ATE {ate:.6f} m" + Style.RESET_ALL)
