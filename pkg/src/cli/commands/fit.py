import logging
from pathlib import Path
from typing import Optional

import click

from ...exceptions import DataIntegrityError, NotFoundError, NumericalError, ValidationError
from ...fitting import fit
from ...persistence import CheckpointRepository, ReportRepository
from ...shape_io import ShapeSample
from ..common import (EXIT_DATA_INTEGRITY, EXIT_NUMERICAL, EXIT_VALIDATION, config_option, fail, override,
                      print_config_option, read_run_config, seed_option)

logger = logging.getLogger(__name__)


@click.command(help="Fit a primitive assembly to sampled target data.")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), default=None,
              help="Directory with surface.csv and occupancy.csv (default: data_dir from the config)")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None)
@click.option("--steps", type=int, default=None)
@click.option("--n-primitives", type=int, default=None)
@config_option
@seed_option
@print_config_option
def command(data_dir: Optional[Path], out_dir: Optional[Path], steps: Optional[int], n_primitives: Optional[int],
            config_path: Optional[Path], seed: Optional[int]):
    try:
        run = read_run_config(config_path)
        cfg = override(run.fit, steps=steps, n_primitives=n_primitives, seed=seed)
        data_dir = data_dir or (Path(run.data_dir) if run.data_dir else None)
        if data_dir is None:
            raise ValidationError("no data directory: pass --data or set data_dir in the config")
        out_dir = out_dir or Path(run.out_dir)

        target = ShapeSample.load(data_dir)
        assembly, report = fit(cfg, target)

        checkpoint = CheckpointRepository(out_dir / "checkpoints").create(report.id, assembly, report.config_hash)
        report.checkpoint = str(checkpoint)
        ReportRepository(out_dir / "reports").create(report)
        report.write_loss_log(out_dir / "loss.csv")
    except (ValidationError, NotFoundError) as e:
        fail(e, EXIT_VALIDATION)
    except DataIntegrityError as e:
        fail(e, EXIT_DATA_INTEGRITY)
    except NumericalError as e:
        fail(e, EXIT_NUMERICAL)

    losses = report.final_losses()
    if losses:
        click.echo("final losses: " + ", ".join(f"{k}={v:.6f}" for k, v in losses.items()))
    click.echo(f"tau_o={assembly.tau_o:g}")
    click.echo(f"checkpoint: {checkpoint}")
