import logging
from pathlib import Path
from typing import Optional

import click

from ...config import config_hash, thread_count
from ...exceptions import DataIntegrityError, NotFoundError, NumericalError, ValidationError
from ...shape_io import load_mesh, sample_shape
from ...synthetic import get_shape
from ...utils import file_sha256, write_json
from ..common import (EXIT_DATA_INTEGRITY, EXIT_NUMERICAL, EXIT_VALIDATION, config_option, fail, override,
                      print_config_option, read_run_config, seed_option)

logger = logging.getLogger(__name__)


@click.command(help="Sample surface points and labeled occupancy points from a watertight OBJ mesh "
                    "(or a built-in synthetic shape).")
@click.argument("mesh_path", required=False, type=click.Path(path_type=Path))
@click.option("--shape", default=None, help="Built-in synthetic shape instead of MESH_PATH")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--surface-points", type=int, default=None)
@click.option("--occupancy-points", type=int, default=None)
@click.option("--near-surface", "near_surface_fraction", type=float, default=None)
@config_option
@seed_option
@print_config_option
def command(mesh_path: Optional[Path], shape: Optional[str], out_dir: Path, surface_points: Optional[int],
            occupancy_points: Optional[int], near_surface_fraction: Optional[float], config_path: Optional[Path],
            seed: Optional[int]):
    try:
        run = read_run_config(config_path)
        cfg = override(run.sample, surface_points=surface_points, occupancy_points=occupancy_points,
                       near_surface_fraction=near_surface_fraction, seed=seed)
        if (mesh_path is None) == (shape is None):
            raise ValidationError("give exactly one of MESH_PATH or --shape")

        if shape is not None:
            target = get_shape(shape).to_shape_sample(cfg.surface_points, cfg.occupancy_points, cfg.seed,
                                                      cfg.near_surface_fraction)
            source = {"shape": shape}
        else:
            target = sample_shape(load_mesh(mesh_path), cfg.surface_points, cfg.occupancy_points, cfg.seed,
                                  cfg.near_surface_fraction, thread_count())
            source = {"mesh": str(mesh_path), "mesh_sha256": file_sha256(mesh_path)}

        surface_path, occupancy_path = target.save(out_dir)
        write_json(out_dir / "manifest.json", {
            **source,
            "config_hash": config_hash(cfg),
            "config": cfg.model_dump(mode="json"),
            "transform": target.transform.to_dict(),
            "counts": {"surface": len(target.surface_points), "occupancy": len(target.occupancy_points)},
            "files": {p.name: file_sha256(p) for p in (surface_path, occupancy_path)},
        })
    except (ValidationError, NotFoundError) as e:
        fail(e, EXIT_VALIDATION)
    except DataIntegrityError as e:
        fail(e, EXIT_DATA_INTEGRITY)
    except NumericalError as e:
        fail(e, EXIT_NUMERICAL)

    click.echo(f"wrote {surface_path} and {occupancy_path}")
