"""
Manual Environment Change Check

Runs one seed against an unchanged scene and against a scene whose landmarks
were moved and partly covered after the map was built. Every grid cell covered
by a change must be rejected, no moved landmark may be used as a rendered
feature, and the ATE may degrade by less than half.

Usage:
    python check_environment_change.py [config.yaml] [seed]
"""

import copy
import sys

import numpy as np
from colorama import Fore, Style

from map_vio.config_reader import load_experiment_config
from map_vio.core import ExperimentRunner
from map_vio.logging_setup import setup_logging


def report(ok: bool, text: str) -> bool:
    color = Fore.GREEN if ok else Fore.RED
    print(color + ("✅ " if ok else "❌ ") + text + Style.RESET_ALL)
    return ok


if __name__ == "__main__":
    config_file = sys.argv[1] if len(sys.argv) > 1 else None
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0

    app_config = load_experiment_config(config_file)
    setup_logging(app_config)

    unchanged = copy.deepcopy(app_config)
    unchanged["Scenario"]["EnvironmentChange"] = False
    changed = copy.deepcopy(app_config)
    changed["Scenario"]["EnvironmentChange"] = True

    base = ExperimentRunner(unchanged).run_experiment(seed)
    runner = ExperimentRunner(changed)
    moved = runner.run_experiment(seed)
    print(
        f"Rejected cells: {base.report.n_rejected_cells} unchanged, "
        f"{moved.report.n_rejected_cells} changed"
    )

    altered = sum(int(d.altered.sum()) for d in moved.deliveries)
    leaked_cells = sum(int((d.altered & d.accepted).sum()) for d in moved.deliveries)
    map_model = runner.map_model
    moved_ids = set(np.asarray(map_model.ids)[map_model.altered_mask()])
    used_ids = {i for d in moved.deliveries for i in d.landmark_ids}

    results = [
        report(
            altered > 0 and leaked_cells == 0,
            f"{altered - leaked_cells}/{altered} changed cells rejected",
        ),
        report(
            not moved_ids & used_ids,
            f"{len(moved_ids & used_ids)} of {len(moved_ids)} moved landmarks used "
            f"as rendered features",
        ),
    ]
    ratio = moved.report.ate_pos_m / base.report.ate_pos_m
    results.append(
        report(
            ratio < 1.5,
            f"Position ATE {base.report.ate_pos_m:.4f} m -> "
            f"{moved.report.ate_pos_m:.4f} m ({ratio:.2f}x)",
        )
    )
    sys.exit(0 if all(results) else 1)
