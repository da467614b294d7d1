import json
import os
import sys
from typing import Callable

import click
import structlog
from click_option_group import RequiredMutuallyExclusiveOptionGroup, optgroup

SLOG = structlog.get_logger(__name__)


def _run(ctx: click.Context, action: Callable):
    """Run `action`, turning library errors into an error JSON on stdout and an exit code."""
    from airylink.errors import AiryLinkError

    try:
        return action()
    except AiryLinkError as err:
        SLOG.error("Command failed", error=type(err).__name__, message=str(err))
        payload = {"error": type(err).__name__, "message": str(err), "exit_code": err.exit_code}
        click.echo(json.dumps(payload))
        ctx.exit(err.exit_code)


def _load(config_path: str, out: str):
    from airylink.config import load_config

    return load_config(config_path, output_directory=out)


def config_options(func):
    func = click.option(
        "-o",
        "--out",
        required=False,
        default=None,
        help="Output directory. Overrides the config's output.directory.",
    )(func)
    func = click.option(
        "-c",
        "--config",
        "config_path",
        required=True,
        type=click.Path(dir_okay=False),
        help="Path to the JSON (or YAML) config file.",
    )(func)
    return func


def jobs_option(func):
    return click.option(
        "-j",
        "--jobs",
        default=1,
        type=click.IntRange(min=1),
        help="Maximum number of worker threads.",
    )(func)


@click.group(name="airylink", context_settings=dict(help_option_names=["-h", "--help"]))
@click.option("-v", "--verbose", default=False, is_flag=True, help="Enable verbose output/logging.")
@click.pass_context
def cli(ctx: click.Context, verbose: bool) -> None:
    from airylink import loggers

    # Ensure that ctx.obj exists and is a dict.
    ctx.ensure_object(dict)

    ctx.obj["VERBOSE"] = verbose
    loggers.setup_logging(verbose=verbose)

    ctx.obj["WORKSPACE_ROOT"] = os.getcwd()


@cli.command(
    "design",
    help=(
        "Compute closed-form Airy beam parameters for the configured scenario. "
        "Falls back to a focusing beam when nothing blocks the line of sight."
    ),
)
@config_options
@click.pass_context
def design(ctx: click.Context, config_path: str, out: str):
    from airylink.tasks import design_runner

    def action():
        config = _load(config_path, out)
        payload = design_runner.main_design_runner(config=config)
        click.echo(json.dumps(payload, indent=2, sort_keys=True))

    _run(ctx, action)


@cli.command(
    "propagate",
    help=(
        "Simulate the configured beam through the scenario with the angular spectrum method. "
        "Writes a field dump per z slice and an intensity CSV."
    ),
)
@config_options
@optgroup.group("Source of the aperture phase", cls=RequiredMutuallyExclusiveOptionGroup)
@optgroup.option(
    "--from-design", is_flag=True, help="Use the closed-form design for the scenario."
)
@optgroup.option(
    "--from-params", is_flag=True, help="Use the explicit 'params' section of the config."
)
@click.pass_context
def propagate(ctx: click.Context, config_path: str, out: str, from_design: bool, from_params: bool):
    from airylink.tasks import design_runner, propagate_runner

    source = design_runner.FROM_DESIGN if from_design else design_runner.FROM_PARAMS

    def action():
        config = _load(config_path, out)
        summary = propagate_runner.main_propagate_runner(config=config, source=source)
        click.echo(json.dumps(summary, indent=2))

    _run(ctx, action)


@cli.command(
    "trajectory",
    help="Emit the predicted main and side lobe trajectories as CSV (lobe, z, x[, y]).",
)
@config_options
@optgroup.group("Source of the aperture phase", cls=RequiredMutuallyExclusiveOptionGroup)
@optgroup.option(
    "--from-design", is_flag=True, help="Use the closed-form design for the scenario."
)
@optgroup.option(
    "--from-params", is_flag=True, help="Use the explicit 'params' section of the config."
)
@click.pass_context
def trajectory(
    ctx: click.Context, config_path: str, out: str, from_design: bool, from_params: bool
):
    from airylink.tasks import design_runner, trajectory_runner

    source = design_runner.FROM_DESIGN if from_design else design_runner.FROM_PARAMS

    def action():
        config = _load(config_path, out)
        click.echo(trajectory_runner.main_trajectory_runner(config=config, source=source), nl=False)

    _run(ctx, action)


@cli.command(
    "sweep",
    help=(
        "Sweep blockage positions and compare the spectral efficiency of every beamforming "
        "scheme. Channels are cached so reruns skip finished points."
    ),
)
@config_options
@jobs_option
@click.pass_context
def sweep(ctx: click.Context, config_path: str, out: str, jobs: int):
    from airylink.tasks import sweep_runner

    def action():
        config = _load(config_path, out)
        click.echo(sweep_runner.main_sweep_runner(config=config, jobs=jobs), nl=False)

    _run(ctx, action)


@cli.command(
    name="lint-python",
    help="Run the 'black' python format checker on airylink's python.",
)
@click.option(
    "--fix", default=False, is_flag=True, help="Fix formatting in-place rather than erroring."
)
@click.pass_context
def lint_python(ctx: click.Context, fix: bool):
    from airylink.tasks import lint_python

    lint_python.lint_python(fix=fix)


@cli.command(name="self-test", help="Run the pytest tests of airylink.")
@click.pass_context
def self_test(ctx: click.Context):
    from airylink.tasks import pytest

    ctx.exit(pytest.run_self_test(workspace_root=ctx.obj["WORKSPACE_ROOT"]))


if __name__ == "__main__":
    sys.argv[0] = "airylink"
    cli()
