"""
tapermle CLI module.

This module provides the command-line interface: simulate, fit, mc, diag and
bench subcommands driven by one JSON config per run. Results go to the
configured files or, as JSON, to stdout; messages go to stderr.
"""

import sys
from functools import wraps
from types import SimpleNamespace

import rich_click as click

from tapermle import __version__
from tapermle.baseconf import RunConfig, load_config
from tapermle.commands import cmd_bench, cmd_diag, cmd_fit, cmd_mc, cmd_simulate
from tapermle.errors import TaperMleError
from tapermle.pool import resolve_threads
from tapermle.utils import msg, show_logo


def handle_errors(func):
    """Map library errors to their exit codes."""

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except TaperMleError as e:
            msg.error(f"{type(e).__name__}: {e}")
            sys.exit(int(e.exit_code))
        except KeyboardInterrupt:
            msg.warning("Interrupted.")
            sys.exit(130)

    return wrapper


def _conf(ctx: click.Context) -> RunConfig:
    return load_config(ctx.obj.config)


# INFO: https://click.palletsprojects.com/en/stable/api/
@click.group(invoke_without_command=True)
@click.help_option("-h", "--help")
@click.option(
    "-c",
    "--config",
    default="config.json",
    type=click.Path(exists=False, file_okay=True, dir_okay=True, path_type=str),
    metavar="<json>",
    show_default=True,
    help="Path to the configuration file.",
    panel="General",
)
@click.option(
    "-t",
    "--threads",
    type=click.IntRange(min=1),
    default=None,
    metavar="<int>",
    help="Worker threads for replicate loops [default: all cores].",
    panel="General",
)
@click.option(
    "-q",
    "--quiet",
    is_flag=True,
    default=False,
    help="Only print warnings and errors.",
    panel="General",
)
@click.version_option(
    __version__,
    "-v",
    "--version",
)
@click.option_panel("General")
@click.pass_context
def main(ctx: click.Context, **kwargs):
    """tapermle: Covariance-tapered MLE for 1-D Gaussian processes"""
    args = SimpleNamespace(**kwargs)
    msg.quiet = args.quiet
    ctx.obj = args
    if ctx.invoked_subcommand is None:
        show_logo("tapermle")
        click.echo(ctx.get_help())


@main.command()
@click.help_option("-h", "--help")
@click.option(
    "-o",
    "--output",
    type=click.Path(dir_okay=False, path_type=str),
    metavar="<csv>",
    help="Dataset path, overrides output.data.",
)
@click.pass_context
@handle_errors
def simulate(ctx: click.Context, output):
    """Simulate one realization to a t,x CSV with a JSON sidecar."""
    cmd_simulate(_conf(ctx), output)


@main.command()
@click.help_option("-h", "--help")
@click.argument(
    "dataset",
    type=click.Path(exists=True, dir_okay=False, path_type=str),
    metavar="<csv>",
)
@click.option(
    "-o",
    "--output",
    type=click.Path(dir_okay=False, path_type=str),
    metavar="<json>",
    help="FitResult path, overrides output.fit.",
)
@click.pass_context
@handle_errors
def fit(ctx: click.Context, dataset, output):
    """Fit the configured estimator to a dataset."""
    cmd_fit(dataset, _conf(ctx), output)


@main.command()
@click.help_option("-h", "--help")
@click.pass_context
@handle_errors
def mc(ctx: click.Context):
    """Run a Monte Carlo experiment; exit 4 when acceptance fails."""
    conf = _conf(ctx)
    threads = resolve_threads(ctx.obj.threads, conf.threads)
    cmd_mc(conf, threads=threads, quiet=ctx.obj.quiet)


@main.command()
@click.help_option("-h", "--help")
@click.option(
    "-o",
    "--output",
    type=click.Path(dir_okay=False, path_type=str),
    metavar="<json>",
    help="Report path, overrides output.report.",
)
@click.pass_context
@handle_errors
def diag(ctx: click.Context, output):
    """Taper, determinant and trace-gap diagnostics."""
    cmd_diag(_conf(ctx), output)


@main.command()
@click.help_option("-h", "--help")
@click.option(
    "-o",
    "--output",
    type=click.Path(dir_okay=False, path_type=str),
    metavar="<json>",
    help="Report path, overrides output.report.",
)
@click.pass_context
@handle_errors
def bench(ctx: click.Context, output):
    """Time dense against banded log-likelihood evaluation."""
    cmd_bench(_conf(ctx), output)


if __name__ == "__main__":
    main()
