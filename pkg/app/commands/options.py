"""
Shared flags and the run wrapper used by every command.

Exit codes: 0 on success, 1 on numeric or validation failure, 2 on usage errors.
"""
import json
from typing import Callable, Dict

import click
from flask import current_app

from app.models.run import RunConfig
from app.services.experiment_service import ExperimentService
from app.utils.errors import LabError, MissingKeyError


def run_options(func: Callable) -> Callable:
    """Attach --config, --seed, --out, --mode and --threads."""
    decorators = [
        click.option('--config', 'config_path', required=True,
                     type=click.Path(exists=True, dir_okay=False), help='Experiment JSON file'),
        click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1), default=None, help='Master seed'),
        click.option('--out', type=click.Path(file_okay=False), default=None, help='Output directory'),
        click.option('--mode', type=click.Choice(['rational', 'float']), default=None, help='Arithmetic mode'),
        click.option('--threads', type=click.IntRange(1), default=None, help='Worker cap')
    ]
    for decorator in reversed(decorators):
        func = decorator(func)
    return func


def execute(command: str, handler: Callable[[ExperimentService, RunConfig], Dict[str, str]],
            config_path: str, seed=None, out=None, mode=None, threads=None) -> None:
    """
    Load the config, record the run, call `handler` and write the manifest.

    Args:
        command: Command name
        handler: Function returning {name: path} of written outputs
        config_path: JSON config file
        seed, out, mode, threads: Flag overrides
    """
    service = ExperimentService()
    try:
        params = service.load_config(config_path)
    except LabError as e:
        raise click.UsageError(e.message)
    run = service.resolve(command, params, seed, out, mode, threads, source=config_path)
    record = service.start(run)

    try:
        outputs = handler(service, run)
    except MissingKeyError as e:
        service.finish(record, 'failed', e.message)
        raise click.UsageError(e.message)
    except LabError as e:
        service.finish(record, 'failed', e.message)
        current_app.logger.error(f"{command} failed: {e.message}")
        click.echo(json.dumps(e.to_dict()), err=True)
        raise click.exceptions.Exit(1)

    outputs['manifest'] = service.write_manifest(run, outputs)
    service.finish(record, 'ok')
    for name in sorted(outputs):
        click.echo(f"{name}: {outputs[name]}")


def command(bp, name: str):
    """Register `func(service, run)` as a CLI command with the shared flags."""
    def register(func):
        @bp.cli.command(name, help=func.__doc__)
        @run_options
        def wrapper(config_path, seed, out, mode, threads):
            execute(name, func, config_path, seed, out, mode, threads)
        return wrapper
    return register
