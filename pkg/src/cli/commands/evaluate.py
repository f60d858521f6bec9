import logging
from pathlib import Path
from typing import Optional

import click

from ...config import config_hash
from ...exceptions import DataIntegrityError, NotFoundError, NumericalError, ValidationError
from ...metrics import evaluate
from ...shape_io import ShapeSample
from ...utils import write_json
from ..common import (EXIT_DATA_INTEGRITY, EXIT_NUMERICAL, EXIT_VALIDATION, config_option, fail, load_checkpoint,
                      override, print_config_option, read_run_config, seed_option)

logger = logging.getLogger(__name__)


@click.command(help="Evaluate a checkpoint against ground-truth samples and write a metric report.")
@click.argument("checkpoint", type=click.Path(path_type=Path))
@click.option("--data", "data_dir", required=True, type=click.Path(path_type=Path),
              help="Directory with surface.csv and occupancy.csv")
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@click.option("--threshold", "fscore_threshold", type=float, default=None, help="F-score distance threshold")
@click.option("--points", "eval_surface_points", type=int, default=None, help="Surface samples from the mesh")
@config_option
@seed_option
@print_config_option
def command(checkpoint: Path, data_dir: Path, out_path: Path, fscore_threshold: Optional[float],
            eval_surface_points: Optional[int], config_path: Optional[Path], seed: Optional[int]):
    try:
        run = read_run_config(config_path)
        opts = override(run.metrics, fscore_threshold=fscore_threshold, eval_surface_points=eval_surface_points,
                        seed=seed)
        assembly, checkpoint_hash = load_checkpoint(checkpoint)
        target = ShapeSample.load(data_dir)

        report = evaluate(assembly, target, fscore_threshold=opts.fscore_threshold, cd_scale=opts.cd_scale,
                          surface_points_count=opts.eval_surface_points, overlap_points=opts.overlap_points,
                          icosphere_level=opts.icosphere_level, seed=opts.seed)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        write_json(out_path, {**report.to_dict(), "config_hash": config_hash(opts),
                              "checkpoint_config_hash": checkpoint_hash})
    except (ValidationError, NotFoundError) as e:
        fail(e, EXIT_VALIDATION)
    except DataIntegrityError as e:
        fail(e, EXIT_DATA_INTEGRITY)
    except NumericalError as e:
        fail(e, EXIT_NUMERICAL)

    click.echo(report.as_table())
