import copy
import json
import math

import numpy as np
import pandas as pd
import pytest

from map_vio.core import ExperimentRunner, GateResult, InitEvalSummary, RefineTrial
from map_vio.exceptions import ModelError
from map_vio.metrics import InitEvaluation, MetricsReport
from map_vio.utils import read_trajectory


@pytest.fixture
def runner(short_config):
    """Fixture providing a runner over the short configuration."""
    return ExperimentRunner(short_config)


def test_run_is_deterministic(runner):
    """Two runs of one seed give identical metrics and trajectories."""
    a = runner.run_experiment(0)
    b = runner.run_experiment(0)
    assert json.dumps(a.report.as_row()) == json.dumps(b.report.as_row())
    np.testing.assert_array_equal(a.estimate.p, b.estimate.p)
    np.testing.assert_array_equal(a.estimate.R_GI, b.estimate.R_GI)
    np.testing.assert_array_equal(a.nees, b.nees)


def test_map_updates_off_is_captured_only(short_config):
    """Without map updates no rendered feature reaches the filter."""
    cfg = copy.deepcopy(short_config)
    cfg["Filter"]["MapUpdates"] = False
    off = ExperimentRunner(cfg).run_experiment(0)
    override = ExperimentRunner(short_config).run_experiment(0, map_updates=False)
    assert off.report.n_rendered_updates == 0
    assert off.report.n_rendered_features == 0
    assert off.report.n_rejected_cells == 0
    assert not any(row["source"] == "rendered" for row in off.updates)
    assert off.report == override.report
    np.testing.assert_array_equal(off.estimate.p, override.estimate.p)


def test_noise_free_ground_truth_run_is_accurate(short_config):
    """Exact readings and an exact start keep the trajectory within a millimeter."""
    cfg = copy.deepcopy(short_config)
    cfg["Noise"]["Enabled"] = False
    cfg["Scenario"]["ImuRate"] = 200.0
    result = ExperimentRunner(cfg).run_experiment(0, map_updates=False)
    assert result.report.ate_pos_m < 1e-3
    assert result.report.n_captured_updates > 0


def test_nees_only_with_truth_init(short_config):
    """Ground-truth runs report NEES; perturbed runs report NaN."""
    gt = ExperimentRunner(short_config).run_experiment(1, map_updates=False)
    assert math.isfinite(gt.report.mean_nees) and gt.report.mean_nees >= 0.0

    cfg = copy.deepcopy(short_config)
    cfg["Filter"]["InitMode"] = "perturbed"
    perturbed = ExperimentRunner(cfg).run_experiment(1, map_updates=False)
    assert math.isnan(perturbed.report.mean_nees)
    assert perturbed.report.init_rot_deg > 0.0


def test_write_outputs_layout(runner, short_config, tmp_path):
    """Per-seed trajectories and updates plus the metric tables are written."""
    results = runner.run([0, 1])
    out = tmp_path / "results"
    for seed in (0, 1):
        for name in ("trajectory_est", "trajectory_gt", "updates"):
            assert (out / f"{name}_seed{seed}.csv").is_file()
    rows = json.loads((out / "metrics.json").read_text())
    assert [r["seed"] for r in rows] == [0, 1]
    assert "init_latency_s" not in rows[0]
    assert list(pd.read_csv(out / "timing.csv").columns) == ["seed", "init_latency_s"]
    assert len(pd.read_csv(out / "metrics.csv")) == 2

    t, R, p = read_trajectory(out / "trajectory_est_seed0.csv")
    np.testing.assert_allclose(t, results[0].estimate.t)
    np.testing.assert_allclose(R, results[0].estimate.R_GI, atol=1e-9)
    np.testing.assert_allclose(p, results[0].estimate.p)
    assert "nees" in pd.read_csv(out / "trajectory_est_seed0.csv").columns
    assert "n_floored" in pd.read_csv(out / "updates_seed0.csv").columns


def test_gen_data_exports_streams(runner, tmp_path):
    """Synthetic streams and the map are written for a seed."""
    paths = runner.gen_data(2, tmp_path / "data")
    names = sorted(p.name for p in paths)
    assert names == ["features.csv", "ground_truth.csv", "imu.csv", "map.yaml"]
    imu = pd.read_csv(tmp_path / "data" / "imu.csv")
    assert list(imu.columns) == ["t", "wx", "wy", "wz", "ax", "ay", "az"]
    gt = pd.read_csv(tmp_path / "data" / "ground_truth.csv")
    assert len(gt) == len(imu)
    assert {"vx", "vy", "vz"} <= set(gt.columns)


def test_learned_mode_requires_checkpoint(short_config):
    """Learned mode refuses to start without a checkpoint."""
    cfg = copy.deepcopy(short_config)
    cfg["Filter"]["InitMode"] = "learned"
    with pytest.raises(ModelError):
        ExperimentRunner(cfg)


def test_train_eval_and_learned_run(short_config, tmp_path):
    """A trained checkpoint initializes runs and is evaluated against refinement."""
    history = []
    model = ExperimentRunner(short_config, load_model=False).train_init(history)
    assert (tmp_path / "init_model.npz").is_file()
    assert (tmp_path / "results" / "train_history.csv").is_file()
    assert min(history) <= history[0]
    assert np.all(model.val_variance > 0.0)

    cfg = copy.deepcopy(short_config)
    cfg["Filter"]["InitMode"] = "learned"
    runner = ExperimentRunner(cfg)
    result = runner.run_experiment(0, map_updates=False)
    assert result.report.init_mode == "learned"
    assert result.report.init_latency_s >= 0.0

    summary = runner.eval_init()
    assert len(summary.learned) == 2
    assert len(summary.trials("a")) == len(summary.trials("b")) == 2
    assert (tmp_path / "results" / "eval_init.csv").is_file()
    gates = runner.check_init_acceptance(summary)
    assert len(gates) == 5
    assert all(isinstance(g, GateResult) for g in gates)


def test_init_gates_from_known_numbers(runner):
    """Gates follow the configured limits."""
    summary = InitEvalSummary(
        learned=[InitEvaluation(1.0, 2.0, 0.01), InitEvaluation(2.0, 3.0, 0.02)],
        refined=[
            RefineTrial("a", 12.0, 30.0, 0.5, False),
            RefineTrial("a", 1.0, 1.0, 0.5, True),
            RefineTrial("b", 0.5, 0.5, 0.3, True),
        ],
    )
    gates = {g.name: g.passed for g in runner.check_init_acceptance(summary)}
    assert gates == {
        "learned rotation": True,
        "learned position": True,
        "learned latency": True,
        "speedup over refinement": True,
        "refinement fails from large errors": True,
    }

    slow = InitEvalSummary(
        learned=[InitEvaluation(9.0, 9.0, 0.6)],
        refined=[RefineTrial("a", 1.0, 1.0, 0.5, True), RefineTrial("b", 1.0, 1.0, 1.0, True)],
    )
    gates = {g.name: g.passed for g in runner.check_init_acceptance(slow)}
    assert not any(gates.values())


def _report(seed, rot_deg, pos_m, map_updates=True):
    return MetricsReport(seed, map_updates, "ground-truth", rot_deg, pos_m)


def test_map_update_gates_from_known_numbers(runner):
    """Position gain and orientation are gated against captured-only runs."""
    captured = [_report(0, 1.0, 0.10, False), _report(1, 2.0, 0.20, False)]

    better = [_report(0, 0.9, 0.05), _report(1, 1.5, 0.10)]
    gates = {g.name: g.passed for g in runner.map_update_gates(better, captured)}
    assert gates == {"map-update improvement": True, "map-update orientation": True}

    rot_worse = [_report(0, 1.4, 0.05), _report(1, 2.5, 0.10)]
    gates = {g.name: g.passed for g in runner.map_update_gates(rot_worse, captured)}
    assert gates == {"map-update improvement": True, "map-update orientation": False}

    one_seed_worse = [_report(0, 0.9, 0.11), _report(1, 1.5, 0.05)]
    gates = {g.name: g.passed for g in runner.map_update_gates(one_seed_worse, captured)}
    assert not gates["map-update improvement"]
