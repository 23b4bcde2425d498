"""Command line interface for Madelung-lab runs and snapshot analyses."""

import logging
import sys
from contextlib import contextmanager
from os import makedirs
from os.path import join

import click
from hydromt.log import setuplog

from .. import __version__, utils
from ..errors import ConfigError, MadelungError
from ..model import MadelungModel

__all__ = ["main"]

LOG_FN = "madelung_lab.log"

## common arguments and options
config_opt = click.option(
    "-i",
    "--config",
    type=click.Path(resolve_path=True, dir_okay=False, exists=True),
    required=True,
    help="Path to the run configuration file (yml).",
)
out_opt = click.option(
    "-o",
    "--out",
    type=click.Path(resolve_path=True, file_okay=False),
    default=None,
    help="Output directory. Defaults to the snapshot directory.",
)
snapshot_arg = click.argument(
    "SNAPSHOT_DIR",
    type=click.Path(resolve_path=True, file_okay=False),
)
verbose_opt = click.option("-v", "--verbose", count=True, help="Increase verbosity.")
quiet_opt = click.option("-q", "--quiet", count=True, help="Decrease verbosity.")


def _log_level(verbose: int, quiet: int) -> int:
    return max(10, min(50, 20 - 10 * verbose + 10 * quiet))


@contextmanager
def _session(out_dir: str, verbose: int, quiet: int):
    """Set up the run logger and map errors to exit codes.

    Configuration errors exit with code 2, other model errors with code 1.
    """
    makedirs(out_dir, exist_ok=True)
    logger = setuplog(
        "madelung_lab", join(out_dir, LOG_FN), log_level=_log_level(verbose, quiet)
    )
    logger.info(f"madelung_lab version: {__version__}")
    try:
        yield logger
    except ConfigError as err:
        logger.error(f"Configuration error: {err}")
        sys.exit(2)
    except (MadelungError, ValueError, IOError) as err:
        logger.exception(err)
        sys.exit(1)
    finally:
        for handler in logger.handlers[:]:
            handler.close()
            logger.removeHandler(handler)
        logger.setLevel(logging.NOTSET)
        logger.propagate = True


@click.group()
@click.version_option(__version__, message="madelung_lab version: %(version)s")
@click.pass_context
def main(ctx):
    """Command line interface of the Madelung numerical laboratory."""
    if ctx.obj is None:
        ctx.obj = {}


def _evolve(config, out, verbose, quiet, overrides=None):
    with _session(out, verbose, quiet) as logger:
        logger.info(f"Evolving run configuration {config}")
        model = MadelungModel.from_config(
            config, root=out, mode="w", overrides=overrides, logger=logger
        )
        model.run()
        model.write()


@main.command(short_help="Evolve an initial state and write snapshots")
@config_opt
@click.option(
    "-o",
    "--out",
    type=click.Path(resolve_path=True, file_okay=False),
    required=True,
    help="Output directory.",
)
@verbose_opt
@quiet_opt
@click.pass_context
def evolve(ctx, config, out, verbose, quiet):
    """Evolve the state configured in CONFIG and write snapshots to OUT.

    Example usage:

        madelung-lab evolve -i free_gaussian.yml -o runs/free_gaussian -v
    """
    _evolve(config, out, verbose, quiet)


@main.command(short_help="Evolve a Klein-Gordon field and write snapshots")
@config_opt
@click.option(
    "-o",
    "--out",
    type=click.Path(resolve_path=True, file_okay=False),
    required=True,
    help="Output directory.",
)
@verbose_opt
@quiet_opt
@click.pass_context
def kg(ctx, config, out, verbose, quiet):
    """Evolve with the Klein-Gordon solver, whatever solver CONFIG names.

    Example usage:

        madelung-lab kg -i kg_packet.yml -o runs/kg_packet
    """
    _evolve(config, out, verbose, quiet, overrides={"setup_solver": {"solver": "kg"}})


@main.command(short_help="Audit the derivation checks on a snapshot series")
@snapshot_arg
@out_opt
@verbose_opt
@quiet_opt
@click.pass_context
def audit(ctx, snapshot_dir, out, verbose, quiet):
    """Write audit.json with the residual, action and uncertainty report.

    Example usage:

        madelung-lab audit runs/ho_ground/snapshots/spectral
    """
    out = snapshot_dir if out is None else out
    with _session(out, verbose, quiet) as logger:
        model = MadelungModel.for_snapshot_dir(snapshot_dir, logger=logger)
        report = model.audit(snapshot_dir)
        utils.write_json(report, join(out, "audit.json"))


@main.command(short_help="Evaluate the uncertainty relations of a snapshot series")
@snapshot_arg
@out_opt
@verbose_opt
@quiet_opt
@click.pass_context
def uncertainty(ctx, snapshot_dir, out, verbose, quiet):
    """Write uncertainty.json with the uncertainty relations per snapshot.

    Example usage:

        madelung-lab uncertainty runs/free_gaussian/snapshots/spectral
    """
    out = snapshot_dir if out is None else out
    with _session(out, verbose, quiet) as logger:
        model = MadelungModel.for_snapshot_dir(snapshot_dir, logger=logger)
        report = model.uncertainty(snapshot_dir)
        utils.write_json(report, join(out, "uncertainty.json"))


@main.command(short_help="Integrate particle trajectories through a snapshot series")
@snapshot_arg
@config_opt
@out_opt
@verbose_opt
@quiet_opt
@click.pass_context
def trajectories(ctx, snapshot_dir, config, out, verbose, quiet):
    """Write trajectory tables and the ensemble summary for SNAPSHOT_DIR.

    Start positions and the ensemble come from the setup_trajectories section of
    CONFIG.

    Example usage:

        madelung-lab trajectories runs/free_gaussian/snapshots/spectral -i run.yml
    """
    out = snapshot_dir if out is None else out
    with _session(out, verbose, quiet) as logger:
        model = MadelungModel.from_config(config, mode="r", logger=logger)
        summary = model.trajectories(snapshot_dir)
        model.write_trajectories(summary, out)


if __name__ == "__main__":
    main()
