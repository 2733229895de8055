"""Command-line entry point: ``gpslearn train | eval | replay``."""

from dataclasses import replace
import json
import logging
import sys

import click

from .config import ExperimentConfig, load_config
from .errors import GpsError
from .harness import run_experiment


def _run(config, out):
    try:
        status, manifest = run_experiment(config, out)
    except GpsError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(2)
    click.echo(json.dumps({k: manifest.get(k) for k in ("status", "config_hash", "artifacts")}))
    sys.exit(status)


def _load(path, overrides=None):
    try:
        return load_config(path, overrides)
    except GpsError as err:
        click.echo(f"error: {path}: {err}", err=True)
        sys.exit(2)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Guided policy search experiments on simulated tasks."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
def train(config_path, seed, out):
    """Train controllers (mode traj) or a policy (mode gps)."""
    config = _load(config_path, {"seed": seed} if seed is not None else None)
    if config.mode not in ("traj", "gps"):
        click.echo(f"error: train needs mode traj or gps, config has {config.mode!r}", err=True)
        sys.exit(2)
    _run(config, out)


@main.command(name="eval")
@click.option("--artifact", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None)
def eval_cmd(artifact, config_path, out):
    """Success rates of a saved controller or policy over the configured radii."""
    config = _load(config_path, {"mode": "eval"})
    _run(replace(config, artifact=str(artifact)), out)


@main.command()
@click.option("--manifest", required=True, type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None)
def replay(manifest, out):
    """Re-run a recorded experiment and verify its artifacts match."""
    _run(ExperimentConfig(mode="replay", seed=0, conditions=(), manifest=str(manifest)), out)


if __name__ == "__main__":
    main()
