import logging
from pathlib import Path

import click
import numpy as np

from ...exceptions import DataIntegrityError, NotFoundError, NumericalError, ValidationError
from ...sph_harmonics import fit_expansion
from ...sphere_geom import DirectionSet
from ...utils import canonical_hash, file_sha256, read_csv, write_csv, write_json
from ..common import EXIT_DATA_INTEGRITY, EXIT_NUMERICAL, EXIT_VALIDATION, fail

logger = logging.getLogger(__name__)

RADII_COLUMNS = ["theta", "phi", "radius"]


@click.command(help="Least-squares spherical-harmonic fit of sampled radii (CSV with theta,phi,radius).")
@click.argument("radii_path", type=click.Path(path_type=Path))
@click.option("--degree", "-L", "max_degree", type=int, required=True)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def command(radii_path: Path, max_degree: int, out_dir: Path):
    try:
        if not radii_path.is_file():
            raise NotFoundError(f"{radii_path} not found")
        try:
            header, rows = read_csv(radii_path)
        except ValueError as e:
            raise DataIntegrityError(f"{radii_path}: {e}") from e
        if header[:3] != RADII_COLUMNS:
            raise DataIntegrityError(f"{radii_path}: expected columns {RADII_COLUMNS}, got {header}")

        directions = DirectionSet(theta=np.ascontiguousarray(rows[:, 0]), phi=np.ascontiguousarray(rows[:, 1]))
        result = fit_expansion(directions, rows[:, 2], max_degree)

        l_index = np.concatenate([np.full(2 * l + 1, l) for l in range(max_degree + 1)])
        m_index = np.concatenate([np.arange(-l, l + 1) for l in range(max_degree + 1)])
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "coeffs.csv", ["l", "m", "coeff"],
                  np.column_stack([l_index, m_index, result.expansion.coeffs]))
        write_json(out_dir / "residual.json", {
            "degree": max_degree,
            "samples": len(directions),
            "max_residual": result.max_residual,
            "mean_residual": result.mean_residual,
            "condition": result.condition,
            "config_hash": canonical_hash({"degree": max_degree, "radii_sha256": file_sha256(radii_path)}),
        })
    except (ValidationError, NotFoundError) as e:
        fail(e, EXIT_VALIDATION)
    except DataIntegrityError as e:
        fail(e, EXIT_DATA_INTEGRITY)
    except NumericalError as e:
        fail(e, EXIT_NUMERICAL)

    click.echo(f"degree {max_degree}: max residual {result.max_residual:.3e}, mean {result.mean_residual:.3e}")
