"""
Map VIO Core Module

This module contains the ExperimentRunner class that handles:

- Seeded two-stage filter runs and their metrics
- Training and evaluation of the initialization model
- The photometric refinement baseline
- Synthetic data export
- Acceptance gates over run and initialization results

The core module serves as the primary interface between the CLI and the
estimation, prior-map and learning packages.
"""

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .exceptions import ExperimentError, MapVioError
from .geometry import MetricParam, Pose, so3_exp
from .learning import (
    MlpModel,
    TrainConfig,
    build_dataset,
    load_checkpoint,
    nominal_camera_pose,
    pose_errors,
    sample_poses,
    save_checkpoint,
    train,
    validation_variance,
)
from .metrics import (
    InitEvaluation,
    MetricsReport,
    PoseTrajectory,
    compute_ate,
    eval_init,
)
from .pipeline import (
    GROUND_TRUTH,
    LEARNED,
    FilterSettings,
    RenderDelivery,
    TwoStageFilter,
    initialize_filter,
)
from .prior_map import MapModel, render, save_map
from .refinement import refine_pose_photometric
from .scenario import (
    build_map,
    build_scenario,
    calibration_from_config,
    trajectory_spec,
)
from .sim.world import STREAM_INIT
from .utils import (
    features_frame,
    imu_frame,
    trajectory_frame,
    write_table,
)

logger = logging.getLogger(__name__)

# Sub-streams of the initialization stream
TRAIN_POSES = 0
VALIDATION_POSES = 1
EVAL_POSES = 2
REFINE_GUESSES = 3

# Perturbation cases of the refinement baseline, (degrees, centimeters) per axis
REFINE_CASES = {"a": (10.0, 20.0), "b": (2.0, 5.0)}


def _init_rng(seed: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), STREAM_INIT, purpose])


@dataclass
class RunResult:
    """
    One seeded run.

    :ivar MetricsReport report: Metrics
    :ivar PoseTrajectory estimate: Estimated IMU trajectory at camera times
    :ivar PoseTrajectory truth: Ground truth at the same times
    :ivar np.ndarray nees: Per-frame IMU NEES, NaN outside ground-truth init
    :ivar List[Dict] updates: One row per measurement update
    :ivar List[RenderDelivery] deliveries: Consumed renders and their SSIM grids
    """

    report: MetricsReport
    estimate: PoseTrajectory
    truth: PoseTrajectory
    nees: np.ndarray
    updates: List[Dict[str, object]] = field(default_factory=list)
    deliveries: List[RenderDelivery] = field(default_factory=list)


@dataclass(frozen=True)
class RefineTrial:
    """Outcome of one photometric refinement."""

    case: str
    rot_deg: float
    pos_cm: float
    seconds: float
    converged: bool


@dataclass
class InitEvalSummary:
    """
    Learned initialization against the refinement baseline.

    :ivar List[InitEvaluation] learned: One entry per held-out image
    :ivar List[RefineTrial] refined: Refinement trials of every case
    """

    learned: List[InitEvaluation]
    refined: List[RefineTrial]

    def trials(self, case: str) -> List[RefineTrial]:
        return [t for t in self.refined if t.case == case]

    def rows(self) -> List[Dict[str, object]]:
        rows = [
            {"method": "learned", "rot_deg": e.rot_deg, "pos_cm": e.pos_cm}
            for e in self.learned
        ]
        rows += [
            {
                "method": f"refine-{t.case}",
                "rot_deg": t.rot_deg,
                "pos_cm": t.pos_cm,
                "converged": t.converged,
            }
            for t in self.refined
        ]
        return rows

    def timing_rows(self) -> List[Dict[str, object]]:
        rows = [{"method": "learned", "seconds": e.seconds} for e in self.learned]
        rows += [{"method": f"refine-{t.case}", "seconds": t.seconds} for t in self.refined]
        return rows


@dataclass(frozen=True)
class GateResult:
    """Outcome of one acceptance gate."""

    name: str
    passed: bool
    detail: str


def _median(values: Sequence[float]) -> float:
    return float(np.median(values)) if len(values) else float("nan")


class ExperimentRunner:
    """
    Main Map VIO class.

    Runs seeded experiments, trains and evaluates the initialization model and
    exports synthetic data. It holds the configuration, the preloaded model
    and the prior map; every run builds its own filter state.
    """

    def __init__(self, app_config: dict, load_model: bool = True):
        """
        Initialize the experiment runner.

        The initialization model is loaded here in learned mode, so no run
        pays for it.

        :param dict app_config: Canonical experiment configuration
        :param bool load_model: Preload the checkpoint in learned mode
        :raises ModelError: If learned mode is configured and the checkpoint
            cannot be read
        """
        logger.debug("Initializing experiment runner...")
        self.app_config = app_config
        self.output_dir = Path(app_config["General"]["OutputDirectory"])
        self.init_mode = app_config["Filter"]["InitMode"]
        self.model: Optional[MlpModel] = None
        self._map: Optional[MapModel] = None

        if load_model and self.init_mode == LEARNED:
            self.model = load_checkpoint(app_config["InitModel"]["Checkpoint"])

        logger.debug(
            f"Experiment runner initialized with output directory {self.output_dir}"
        )

    @property
    def map_model(self) -> MapModel:
        if self._map is None:
            self._map = build_map(self.app_config)
        return self._map

    def run_experiment(self, seed: int, map_updates: Optional[bool] = None) -> RunResult:
        """
        Run the filter for one seed and compute its metrics.

        :param int seed: Run seed
        :param map_updates: Override of ``Filter.MapUpdates``
        :type map_updates: Optional[bool]
        :return: Run result
        :rtype: RunResult
        :raises MapVioError: If the run fails; event-loop failures carry the
            virtual time of the failing event
        """
        try:
            scenario = build_scenario(self.app_config, seed, self.map_model)
            settings = FilterSettings.from_config(self.app_config, scenario, map_updates)
            logger.info(
                f"Running seed {seed} (init {self.init_mode}, "
                f"map updates {'on' if settings.map_updates else 'off'})"
            )

            init = initialize_filter(scenario, self.app_config, self.model)
            loop = TwoStageFilter(
                scenario, settings, init, record_nees=self.init_mode == GROUND_TRUTH
            )
            log = loop.run()

            estimate = log.trajectory()
            poses = [scenario.truth.trajectory.imu_pose(t) for t in estimate.t]
            truth = PoseTrajectory(
                estimate.t,
                np.array([R for R, _ in poses]).reshape(-1, 3, 3),
                np.array([p for _, p in poses]).reshape(-1, 3),
            )
            ate_rot, ate_pos = compute_ate(estimate, truth)
            report = self._report(seed, settings.map_updates, init, log, ate_rot, ate_pos)
            logger.info(
                f"Seed {seed}: ATE {ate_rot:.4f} deg / {ate_pos:.4f} m, "
                f"{report.n_captured_updates} captured and "
                f"{report.n_rendered_updates} rendered updates"
            )
            return RunResult(
                report,
                estimate,
                truth,
                np.array(log.nees),
                [r.as_row() for r in log.reports],
                log.deliveries,
            )

        except MapVioError:
            logger.error(f"Experiment failed for seed {seed}")
            raise

        except Exception as e:
            logger.exception(f"Unexpected error running seed {seed}")
            raise ExperimentError(f"Unexpected error running seed {seed}") from e

    def _report(self, seed, map_updates, init, log, ate_rot, ate_pos) -> MetricsReport:
        def chi2_mean(source: str) -> float:
            values = [r.chi2 for r in log.reports if r.source == source and r.accepted]
            return float(np.mean(values)) if values else 0.0

        def accepted(source: str) -> int:
            return sum(1 for r in log.reports if r.source == source and r.accepted)

        nees_values = np.array(log.nees)
        return MetricsReport(
            seed=seed,
            map_updates=map_updates,
            init_mode=self.init_mode,
            ate_rot_deg=ate_rot,
            ate_pos_m=ate_pos,
            init_rot_deg=init.rot_deg,
            init_pos_cm=init.pos_cm,
            n_captured_updates=accepted("captured"),
            n_rendered_updates=accepted("rendered"),
            n_rendered_features=log.n_rendered_features,
            n_rejected_cells=log.n_rejected_cells,
            mean_captured_chi2=chi2_mean("captured"),
            mean_rendered_chi2=chi2_mean("rendered"),
            mean_nees=(
                float(np.mean(nees_values))
                if nees_values.size and np.all(np.isfinite(nees_values))
                else float("nan")
            ),
            init_latency_s=init.seconds,
        )

    def run(self, seeds: Optional[Sequence[int]] = None) -> List[RunResult]:
        """
        Run every configured seed and write the result files.

        :param seeds: Seeds to run, ``General.Seeds`` if omitted
        :type seeds: Optional[Sequence[int]]
        :return: One result per seed
        :rtype: List[RunResult]
        """
        seeds = list(seeds if seeds is not None else self.app_config["General"]["Seeds"])
        results = [self.run_experiment(seed) for seed in seeds]
        self.write_outputs(results)
        return results

    def write_outputs(
        self, results: Sequence[RunResult], directory: Optional[Path] = None
    ) -> List[Path]:
        """
        Write trajectories, update logs and metrics.

        Per seed: ``trajectory_est_seed<N>.csv`` (with a ``nees`` column),
        ``trajectory_gt_seed<N>.csv`` and ``updates_seed<N>.csv``. For the set:
        ``metrics.csv``, ``metrics.json`` and the wall-clock ``timing.csv``.

        :param results: Run results
        :type results: Sequence[RunResult]
        :param directory: Output directory, ``General.OutputDirectory`` if omitted
        :type directory: Optional[Path]
        :return: Written files
        :rtype: List[Path]
        """
        out = Path(directory) if directory is not None else self.output_dir
        paths = []
        for result in results:
            seed = result.report.seed
            est, gt = result.estimate, result.truth
            paths.append(
                write_table(
                    trajectory_frame(est.t, est.R_GI, est.p, {"nees": result.nees}),
                    out / f"trajectory_est_seed{seed}.csv",
                )
            )
            paths.append(
                write_table(
                    trajectory_frame(gt.t, gt.R_GI, gt.p),
                    out / f"trajectory_gt_seed{seed}.csv",
                )
            )
            paths.append(write_table(result.updates, out / f"updates_seed{seed}.csv"))

        rows = [r.report.as_row() for r in results]
        paths.append(write_table(rows, out / "metrics.csv"))
        metrics_json = out / "metrics.json"
        metrics_json.write_text(json.dumps(rows, indent=2) + "\n")
        paths.append(metrics_json)
        paths.append(
            write_table([r.report.timing_row() for r in results], out / "timing.csv")
        )
        logger.info(f"Wrote {len(paths)} result files to {out}")
        return paths

    def check_run_acceptance(self, results: Sequence[RunResult]) -> List[GateResult]:
        """
        Acceptance gates of a set of runs.

        The position ATE of every seed must stay under ``MaxPositionAte``. With
        map updates on, every seed is rerun captured-only: the median position
        ATE must drop by ``MinMapImprovement``, no seed may get worse and the
        median orientation ATE may not grow (:meth:`map_update_gates`). The
        first seed is rerun to check that results are reproducible.

        :param results: Results of :meth:`run`
        :type results: Sequence[RunResult]
        :return: Gate outcomes
        :rtype: List[GateResult]
        """
        try:
            acc = self.app_config["Acceptance"]
            gates = []
            worst = max(r.report.ate_pos_m for r in results)
            gates.append(
                GateResult(
                    "position ATE",
                    worst <= acc["MaxPositionAte"],
                    f"worst {worst:.4f} m, limit {acc['MaxPositionAte']} m",
                )
            )

            if all(r.report.map_updates for r in results):
                captured = [
                    self.run_experiment(r.report.seed, map_updates=False).report
                    for r in results
                ]
                gates += self.map_update_gates([r.report for r in results], captured)

            first = results[0]
            again = self.run_experiment(first.report.seed, first.report.map_updates)
            same = json.dumps(again.report.as_row()) == json.dumps(
                first.report.as_row()
            ) and all(
                np.array_equal(a, b)
                for a, b in (
                    (again.estimate.R_GI, first.estimate.R_GI),
                    (again.estimate.p, first.estimate.p),
                )
            )
            gates.append(
                GateResult("determinism", same, f"rerun of seed {first.report.seed}")
            )
            return gates

        except MapVioError:
            logger.error("Failed to evaluate run acceptance")
            raise

        except Exception as e:
            logger.exception("Unexpected error evaluating run acceptance")
            raise ExperimentError("Unexpected error evaluating run acceptance") from e

    def map_update_gates(
        self, two_stage: Sequence[MetricsReport], captured: Sequence[MetricsReport]
    ) -> List[GateResult]:
        """
        Compare two-stage runs with captured-only runs of the same seeds.

        :param two_stage: Reports with map updates on
        :type two_stage: Sequence[MetricsReport]
        :param captured: Reports of the same seeds, in the same order, without
            map updates
        :type captured: Sequence[MetricsReport]
        :return: Position improvement and orientation gates
        :rtype: List[GateResult]
        """
        acc = self.app_config["Acceptance"]
        pos = np.array([r.ate_pos_m for r in two_stage])
        pos_captured = np.array([r.ate_pos_m for r in captured])
        rot = np.median([r.ate_rot_deg for r in two_stage])
        rot_captured = np.median([r.ate_rot_deg for r in captured])

        gain = 1.0 - np.median(pos) / np.median(pos_captured)
        worse = int(np.sum(pos > pos_captured))
        return [
            GateResult(
                "map-update improvement",
                gain >= acc["MinMapImprovement"] and worse == 0,
                f"median {np.median(pos_captured):.4f} -> {np.median(pos):.4f} m "
                f"({100.0 * gain:.1f}%), {worse} seeds worse",
            ),
            GateResult(
                "map-update orientation",
                rot <= rot_captured,
                f"median {rot_captured:.4f} -> {rot:.4f} deg",
            ),
        ]


    def train_init(self, history: Optional[List[float]] = None) -> MlpModel:
        """
        Train the initialization model and write its checkpoint.

        Training and validation images are rendered from the prior map at
        poses drawn around the start of the orbit. The twist is expressed
        against the nominal start pose, and the validation error variance is
        stored with the model.

        :param history: If given, receives the loss per epoch
        :type history: Optional[List[float]]
        :return: Trained model
        :rtype: MlpModel
        :raises MapVioError: If training fails
        """
        try:
            init_cfg = self.app_config["InitModel"]
            seed = init_cfg["Seed"]
            spec = trajectory_spec(self.app_config, seed)
            calib = calibration_from_config(self.app_config)
            input_size = tuple(init_cfg["InputSize"])

            def dataset(n: int, purpose: int):
                poses = sample_poses(
                    spec,
                    calib,
                    n,
                    init_cfg["TrainSector"],
                    init_cfg["PositionJitter"],
                    math.radians(init_cfg["RotationJitterDeg"]),
                    _init_rng(seed, purpose),
                )
                return build_dataset(self.map_model, poses, input_size)

            train_set = dataset(init_cfg["TrainSamples"], TRAIN_POSES)
            val_set = dataset(init_cfg["ValidationSamples"], VALIDATION_POSES)

            cfg = TrainConfig(
                epochs=init_cfg["Epochs"],
                learning_rate=init_cfg["LearningRate"],
                batch_size=init_cfg["BatchSize"],
                seed=seed,
                hidden_width=init_cfg["HiddenWidth"],
                n_layers=init_cfg["Layers"],
                metric=MetricParam(init_cfg["MetricA"]),
                anchor=nominal_camera_pose(spec, spec.start_azimuth, calib),
            )
            losses = [] if history is None else history
            model = train(train_set, cfg, history=losses)
            model.val_variance = validation_variance(model, val_set)
            logger.info(f"Validation error variance {model.val_variance}")

            save_checkpoint(model, init_cfg["Checkpoint"])
            write_table(
                [{"epoch": k, "loss": loss} for k, loss in enumerate(losses)],
                self.output_dir / "train_history.csv",
            )
            self.model = model
            return model

        except MapVioError:
            logger.error("Failed to train the initialization model")
            raise

        except Exception as e:
            logger.exception("Unexpected error training the initialization model")
            raise ExperimentError("Unexpected error training the model") from e

    def _refine_trial(self, case: str, T_true: Pose, rng: np.random.Generator):
        deg, cm = REFINE_CASES[case]
        center = -T_true.rotation.T @ T_true.translation
        center = center + rng.normal(scale=0.01 * cm, size=3)
        R = so3_exp(rng.normal(scale=math.radians(deg), size=3)) @ T_true.rotation
        image = render(self.map_model, T_true)

        start = time.perf_counter()
        result = refine_pose_photometric(
            self.map_model,
            image,
            Pose(R, -R @ center),
            iters=self.app_config["Acceptance"]["RefineIterations"],
        )
        seconds = time.perf_counter() - start
        rot_deg, pos_m = pose_errors(result.pose, T_true)
        return RefineTrial(case, rot_deg, 100.0 * pos_m, seconds, result.converged)

    def eval_init(self) -> InitEvalSummary:
        """
        Evaluate the initialization model against photometric refinement.

        Held-out poses are drawn from the training region with their own
        random stream. The learned model relocalizes each image without a
        guess; refinement starts from perturbed guesses of both cases. Result
        files ``eval_init.csv`` and ``eval_init_timing.csv`` are written.

        :return: Errors and latencies of both methods
        :rtype: InitEvalSummary
        :raises MapVioError: If the checkpoint or a refinement fails
        """
        try:
            init_cfg = self.app_config["InitModel"]
            if self.model is None:
                self.model = load_checkpoint(init_cfg["Checkpoint"])
            seed = init_cfg["Seed"]
            spec = trajectory_spec(self.app_config, seed)
            calib = calibration_from_config(self.app_config)

            poses = sample_poses(
                spec,
                calib,
                self.app_config["Acceptance"]["EvalSamples"],
                init_cfg["TrainSector"],
                init_cfg["PositionJitter"],
                math.radians(init_cfg["RotationJitterDeg"]),
                _init_rng(seed, EVAL_POSES),
            )
            learned = eval_init(
                self.model, build_dataset(self.map_model, poses, self.model.input_size)
            )

            rng = _init_rng(seed, REFINE_GUESSES)
            refined = [
                self._refine_trial(case, T, rng) for case in sorted(REFINE_CASES) for T in poses
            ]
            summary = InitEvalSummary(learned, refined)
            write_table(summary.rows(), self.output_dir / "eval_init.csv")
            write_table(summary.timing_rows(), self.output_dir / "eval_init_timing.csv")
            return summary

        except MapVioError:
            logger.error("Failed to evaluate the initialization model")
            raise

        except Exception as e:
            logger.exception("Unexpected error evaluating the initialization model")
            raise ExperimentError("Unexpected error evaluating the model") from e

    def check_init_acceptance(self, summary: InitEvalSummary) -> List[GateResult]:
        """
        Acceptance gates of an initialization evaluation.

        Median learned errors, worst learned latency, speedup over case (b)
        refinement and the failure rate of case (a) refinement.

        :param InitEvalSummary summary: Result of :meth:`eval_init`
        :return: Gate outcomes
        :rtype: List[GateResult]
        """
        acc = self.app_config["Acceptance"]
        rot = _median([e.rot_deg for e in summary.learned])
        pos = _median([e.pos_cm for e in summary.learned])
        latency = max((e.seconds for e in summary.learned), default=float("nan"))
        learned_time = _median([e.seconds for e in summary.learned])
        refine_time = _median([t.seconds for t in summary.trials("b")])
        speedup = refine_time / learned_time if learned_time > 0 else float("inf")

        def failed(t: RefineTrial) -> bool:
            return t.rot_deg > REFINE_CASES["b"][0] or t.pos_cm > REFINE_CASES["b"][1]

        case_a = summary.trials("a")
        failure_rate = sum(failed(t) for t in case_a) / len(case_a) if case_a else 0.0
        return [
            GateResult(
                "learned rotation",
                rot < acc["MaxInitRotationDeg"],
                f"median {rot:.3f} deg, limit {acc['MaxInitRotationDeg']} deg",
            ),
            GateResult(
                "learned position",
                pos < acc["MaxInitPositionCm"],
                f"median {pos:.3f} cm, limit {acc['MaxInitPositionCm']} cm",
            ),
            GateResult(
                "learned latency",
                latency < acc["MaxInitLatency"],
                f"worst {latency:.4f} s, limit {acc['MaxInitLatency']} s",
            ),
            GateResult(
                "speedup over refinement",
                speedup >= acc["MinSpeedup"],
                f"{speedup:.1f}x, required {acc['MinSpeedup']}x",
            ),
            GateResult(
                "refinement fails from large errors",
                failure_rate >= 0.5,
                f"{100.0 * failure_rate:.0f}% of case (a) trials failed",
            ),
        ]

    def gen_data(self, seed: int, directory: Optional[Path] = None) -> List[Path]:
        """
        Export the synthetic streams and the prior map of one seed.

        Writes ``imu.csv``, ``features.csv``, ``ground_truth.csv`` (IMU poses
        with JPL quaternions and velocities at the IMU rate) and ``map.yaml``.

        :param int seed: Run seed
        :param directory: Output directory, ``<OutputDirectory>/data_seed<N>``
            if omitted
        :type directory: Optional[Path]
        :return: Written files
        :rtype: List[Path]
        :raises MapVioError: If the scenario cannot be built or written
        """
        try:
            out = Path(directory) if directory else self.output_dir / f"data_seed{seed}"
            scenario = build_scenario(self.app_config, seed, self.map_model)
            truth = scenario.truth
            paths = [
                write_table(imu_frame(scenario.imu), out / "imu.csv"),
                write_table(features_frame(scenario.frames), out / "features.csv"),
                write_table(
                    trajectory_frame(
                        truth.t,
                        truth.R_GI,
                        truth.p,
                        {"vx": truth.v[:, 0], "vy": truth.v[:, 1], "vz": truth.v[:, 2]},
                    ),
                    out / "ground_truth.csv",
                ),
            ]
            save_map(scenario.map_model, out / "map.yaml")
            paths.append(out / "map.yaml")
            logger.info(f"Wrote synthetic data for seed {seed} to {out}")
            return paths

        except MapVioError:
            logger.error(f"Failed to generate data for seed {seed}")
            raise

        except Exception as e:
            logger.exception(f"Unexpected error generating data for seed {seed}")
            raise ExperimentError(f"Unexpected error generating data for seed {seed}") from e
