import logging

import click

from .commands import evaluate, fit, mesh, sample, shfit

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# python -m src.cli --help


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--log-level", default="INFO", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
def cli(log_level: str):
    """Star-domain primitives: sample targets, fit assemblies, mesh and evaluate them."""
    logging.basicConfig(level=log_level.upper(), format=LOG_FORMAT, force=True)


cli.add_command(sample.command, name="sample")
cli.add_command(fit.command, name="fit")
cli.add_command(mesh.command, name="mesh")
cli.add_command(evaluate.command, name="eval")
cli.add_command(shfit.command, name="shfit")
