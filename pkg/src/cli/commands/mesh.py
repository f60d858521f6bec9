import logging
import statistics
import time
from pathlib import Path
from typing import Optional

import click

from ...assembly import assemble_mesh, marching_cubes
from ...config import config_hash
from ...exceptions import DataIntegrityError, NotFoundError, NumericalError, ValidationError
from ...shape_io import save_mesh
from ...sphere_geom import icosphere
from ...utils import write_json
from ..common import (EXIT_DATA_INTEGRITY, EXIT_NUMERICAL, EXIT_VALIDATION, config_option, fail, load_checkpoint,
                      override, print_config_option, read_run_config)

logger = logging.getLogger(__name__)


@click.command(help="Mesh a checkpoint explicitly (icosphere template) or by marching cubes, with timing.")
@click.argument("checkpoint", type=click.Path(path_type=Path))
@click.option("--mode", default=None, help="explicit | mc")
@click.option("--level", type=int, default=None, help="Icosphere subdivisions (explicit)")
@click.option("--resolution", type=int, default=None, help="Grid resolution 32 | 64 | 128 (mc)")
@click.option("--repeats", type=int, default=None, help="Timed repetitions; the median is reported")
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
@config_option
@print_config_option
def command(checkpoint: Path, mode: Optional[str], level: Optional[int], resolution: Optional[int],
            repeats: Optional[int], out_path: Path, config_path: Optional[Path]):
    try:
        run = read_run_config(config_path)
        opts = override(run.mesh, mode=mode, level=level, resolution=resolution, repeats=repeats)
        assembly, checkpoint_hash = load_checkpoint(checkpoint)

        if opts.mode == "explicit":
            template = icosphere(opts.level)

            def produce():
                return assemble_mesh(assembly, template)
        else:
            def produce():
                return marching_cubes(assembly, opts.resolution)

        # file I/O stays outside the timed region
        times = []
        for _ in range(opts.repeats):
            started = time.perf_counter()
            result = produce()
            times.append(time.perf_counter() - started)

        out_path.parent.mkdir(parents=True, exist_ok=True)
        save_mesh(result, out_path)
        write_json(out_path.with_suffix(".timing.json"), {
            "mode": opts.mode,
            "level": opts.level if opts.mode == "explicit" else None,
            "resolution": opts.resolution if opts.mode == "mc" else None,
            "repeats": opts.repeats,
            "median_seconds": statistics.median(times),
            "seconds": times,
            "vertices": result.n_vertices,
            "faces": result.n_faces,
            "config_hash": config_hash(opts),
            "checkpoint_config_hash": checkpoint_hash,
        })
    except (ValidationError, NotFoundError) as e:
        fail(e, EXIT_VALIDATION)
    except DataIntegrityError as e:
        fail(e, EXIT_DATA_INTEGRITY)
    except NumericalError as e:
        fail(e, EXIT_NUMERICAL)

    click.echo(f"{opts.mode}: {result.n_vertices} vertices, {result.n_faces} faces, "
               f"median {statistics.median(times):.4f}s -> {out_path}")
