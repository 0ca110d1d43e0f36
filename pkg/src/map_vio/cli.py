"""
Map VIO CLI

Command-line interface for running map-aided visual-inertial experiments.

This module provides a CLI for:

- Running seeded filter experiments and their acceptance gates
- Training and evaluating the learned initialization model
- Exporting synthetic sensor data and the prior map
- Configuration display

Every command loads the experiment configuration once, sets up logging and
exits non-zero on failure.
"""

import json
import logging
import sys
from typing import Dict, Iterable, Optional, Tuple

import click
import yaml
from colorama import Fore, Style

from . import __version__
from .config_reader import load_experiment_config
from .core import ExperimentRunner, GateResult
from .definitions import DEFAULT_CONFIG_FILE
from .exceptions import ConfigValidationError, MapVioError
from .logging_setup import setup_logging

logger = logging.getLogger(__name__)


def _parse_overrides(items: Iterable[str]) -> Dict[str, object]:
    parsed = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigValidationError(f"Override '{item}' must be SECTION.KEY=VALUE")
        try:
            parsed[key.strip()] = yaml.safe_load(value)
        except yaml.YAMLError as e:
            raise ConfigValidationError(f"Cannot parse override '{item}'") from e
    return parsed


def _print_gates(gates: Iterable[GateResult]) -> bool:
    passed = True
    click.echo("Acceptance")
    click.echo("=" * 40)
    for gate in gates:
        color = Fore.GREEN if gate.passed else Fore.RED
        mark = "PASS" if gate.passed else "FAIL"
        click.echo(f"{color}{mark}{Style.RESET_ALL} {gate.name}: {gate.detail}")
        passed = passed and gate.passed
    click.echo("=" * 40)
    return passed


@click.group()
@click.version_option(__version__, "--version", "-V", prog_name="mvio")
@click.option(
    "--config",
    "-c",
    "config_file",
    type=click.Path(exists=True, dir_okay=False),
    help=f"Experiment configuration file (YAML), {DEFAULT_CONFIG_FILE} if present",
)
@click.option(
    "--set",
    "-o",
    "overrides",
    multiple=True,
    metavar="SECTION.KEY=VALUE",
    help="Override a configuration value, parsed as YAML",
)
@click.pass_context
def cli(ctx, config_file: Optional[str], overrides: Tuple[str, ...]):
    """
    Map VIO - Visual-inertial odometry aided by a rendered prior map.

    Example usage:
        mvio --version
        mvio -c conf/experiment.yaml run
        mvio -o Filter.MapUpdates=false run -s 0
    """
    if config_file is None and DEFAULT_CONFIG_FILE.is_file():
        config_file = str(DEFAULT_CONFIG_FILE)

    try:
        app_config = load_experiment_config(config_file, _parse_overrides(overrides))
    except MapVioError as e:
        click.echo(f"✗ Invalid configuration: {e}", err=True)
        sys.exit(1)

    setup_logging(app_config)

    ctx.ensure_object(dict)
    ctx.obj["app_config"] = app_config


@cli.command()
@click.option("--seed", "-s", "seeds", type=int, multiple=True, help="Seed to run")
@click.option("--check", is_flag=True, help="Evaluate the acceptance gates")
@click.pass_context
def run(ctx, seeds: Tuple[int, ...], check: bool):
    """
    Run the filter for every seed and write the result files.

    Example usage:
        mvio run
        mvio run -s 3 -s 4 --check

    :param ctx: Click context object
    :param seeds: Seeds, ``General.Seeds`` if none are given
    :param bool check: Evaluate the acceptance gates after the runs
    """
    logger.info("Running experiments...")
    app_config = ctx.obj.get("app_config")

    result = False
    try:
        runner = ExperimentRunner(app_config)
        results = runner.run(seeds or None)

        for r in results:
            rep = r.report
            click.echo(
                f"seed {rep.seed}: ATE {rep.ate_rot_deg:.3f} deg / {rep.ate_pos_m:.4f} m, "
                f"{rep.n_captured_updates} captured, {rep.n_rendered_updates} rendered"
            )

        result = _print_gates(runner.check_run_acceptance(results)) if check else True

    except MapVioError as e:
        logger.error(f"Experiment failed: {e}")

    except Exception:
        logger.exception("Unexpected error running experiments")
        raise

    finally:
        if result:
            click.echo(f"✓ Results written to {app_config['General']['OutputDirectory']}")
        else:
            click.echo("✗ Experiment failed", err=True)
            sys.exit(1)


@cli.command()
@click.pass_context
def train_init(ctx):
    """
    Train the initialization model on images rendered from the prior map.

    Example usage:
        mvio train-init

    :param ctx: Click context object
    """
    logger.info("Training the initialization model...")
    app_config = ctx.obj.get("app_config")

    result = False
    try:
        runner = ExperimentRunner(app_config, load_model=False)
        history = []
        runner.train_init(history)
        click.echo(f"Loss {history[0]:.6f} -> {min(history):.6f}")
        result = True

    except MapVioError as e:
        logger.error(f"Training failed: {e}")

    except Exception:
        logger.exception("Unexpected error training the initialization model")
        raise

    finally:
        if result:
            click.echo(f"✓ Checkpoint written to {app_config['InitModel']['Checkpoint']}")
        else:
            click.echo("✗ Training failed", err=True)
            sys.exit(1)


@cli.command()
@click.option("--check", is_flag=True, help="Evaluate the acceptance gates")
@click.pass_context
def eval_init(ctx, check: bool):
    """
    Compare the initialization model with photometric refinement.

    Example usage:
        mvio eval-init --check

    :param ctx: Click context object
    :param bool check: Evaluate the acceptance gates
    """
    logger.info("Evaluating the initialization model...")
    app_config = ctx.obj.get("app_config")

    result = False
    try:
        runner = ExperimentRunner(app_config)
        summary = runner.eval_init()
        click.echo(f"{len(summary.learned)} learned, {len(summary.refined)} refinement trials")
        result = _print_gates(runner.check_init_acceptance(summary)) if check else True

    except MapVioError as e:
        logger.error(f"Evaluation failed: {e}")

    except Exception:
        logger.exception("Unexpected error evaluating the initialization model")
        raise

    finally:
        if result:
            click.echo("✓ Evaluation finished")
        else:
            click.echo("✗ Evaluation failed", err=True)
            sys.exit(1)


@cli.command()
@click.option("--seed", "-s", type=int, default=0, show_default=True, help="Run seed")
@click.option(
    "--output",
    "-o",
    type=click.Path(file_okay=False),
    help="Output directory, <OutputDirectory>/data_seed<N> by default",
)
@click.pass_context
def gen_data(ctx, seed: int, output: Optional[str]):
    """
    Export the synthetic IMU, features, ground truth and prior map of a seed.

    Example usage:
        mvio gen-data -s 1 -o data/

    :param ctx: Click context object
    :param int seed: Run seed
    :param Optional[str] output: Output directory
    """
    logger.info(f"Generating data for seed {seed}...")
    app_config = ctx.obj.get("app_config")

    result = False
    try:
        runner = ExperimentRunner(app_config, load_model=False)
        for path in runner.gen_data(seed, output):
            click.echo(f"  - {path}")
        result = True

    except MapVioError as e:
        logger.error(f"Data generation failed: {e}")

    except Exception:
        logger.exception("Unexpected error generating data")
        raise

    finally:
        if result:
            click.echo("✓ Data generated successfully")
        else:
            click.echo("✗ Data generation failed", err=True)
            sys.exit(1)


@cli.command()
@click.option(
    "--format",
    "-f",
    type=click.Choice(["table", "yaml", "json"]),
    default="table",
    help="Output format",
)
@click.pass_context
def config_show(ctx, format: str):
    """
    Show the canonical experiment configuration.

    Example usage:
        mvio config-show --format json
        mvio -c conf/experiment.yaml config-show

    :param ctx: Click context object
    :param str format: Output format (table, json, yaml)
    """
    logger.info("Showing experiment configuration...")
    app_config = ctx.obj.get("app_config")

    result = False
    try:
        if format == "json":
            click.echo(json.dumps(app_config, indent=2))
        elif format == "yaml":
            click.echo(yaml.dump(app_config, default_flow_style=False))
        else:
            click.echo("Experiment Configuration")
            click.echo("=" * 40)
            for section, values in app_config.items():
                click.echo(f"{section}:")
                for key, value in values.items():
                    click.echo(f"  {key}: {value}")
            click.echo("=" * 40)
        result = True

    except Exception:
        logger.exception("Unexpected error reading configuration")
        raise

    finally:
        if result:
            click.echo("✓ Configuration displayed successfully")
        else:
            click.echo("✗ Error reading configuration", err=True)
            sys.exit(1)


def main():
    """
    Entry point for the CLI.

    :return: None
    :rtype: None
    """
    cli()


if __name__ == "__main__":
    main()
