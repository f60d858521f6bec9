import json

import numpy as np
import pytest
from click.testing import CliRunner

from src import CheckpointRepository, ReportRepository, ShapeSample, sample_directions
from src.cli.common import EXIT_DATA_INTEGRITY, EXIT_NUMERICAL, EXIT_VALIDATION
from src.cli.main import cli
from src.synthetic import unit_sphere
from src.utils import read_csv, read_json, write_csv
from tests.test_assembly import constructor_assembly
from tests.test_shape_io import CUBE_OBJ, write_obj

SMALL_RUN = {
    "fit": {"n_primitives": 1, "steps": 3, "layer_sizes": [3, 8, 1], "target_points": 64,
            "directions_per_primitive": 20, "occupancy_points": 64, "tau_o": 0.7},
    "metrics": {"iou_points": 2000, "overlap_points": 2000, "icosphere_level": 2},
}


# ---
# CLI TESTS
# ---

@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(cli, [str(a) for a in args])


def constructor_sphere_checkpoint(directory):
    return CheckpointRepository(directory).create("sphere", constructor_assembly([(0.0, 0.0, 0.0)], 0.5), "cafe")


def constructor_sphere_data(runner, directory):
    result = invoke(runner, "sample", "--shape", "unit_sphere", "--out", directory,
                    "--surface-points", 500, "--occupancy-points", 500, "--seed", 1)
    assert result.exit_code == 0, result.output
    return directory


# Test sample
def test_sample_synthetic_shape(runner, tmpdir_repo):
    data = constructor_sphere_data(runner, tmpdir_repo / "data")

    manifest = read_json(data / "manifest.json")
    sample = ShapeSample.load(data)

    assert manifest["shape"] == "unit_sphere"
    assert manifest["counts"] == {"surface": 500, "occupancy": 500}
    assert manifest["config"]["seed"] == 1
    assert set(manifest["files"]) == {"surface.csv", "occupancy.csv"}
    assert len(sample.surface_points) == 500


def test_sample_mesh_file(runner, tmpdir_repo):
    mesh_path = write_obj(tmpdir_repo, CUBE_OBJ, "cube.obj")

    result = invoke(runner, "sample", mesh_path, "--out", tmpdir_repo / "data",
                    "--surface-points", 200, "--occupancy-points", 300)

    assert result.exit_code == 0, result.output
    manifest = read_json(tmpdir_repo / "data" / "manifest.json")
    assert manifest["transform"]["scale"] == pytest.approx(1.0)
    assert len(manifest["mesh_sha256"]) == 64


def test_sample_needs_exactly_one_source(runner, tmpdir_repo):
    result = invoke(runner, "sample", "--out", tmpdir_repo)

    assert result.exit_code == EXIT_VALIDATION
    assert "error:" in result.output


def test_sample_missing_mesh(runner, tmpdir_repo):
    result = invoke(runner, "sample", tmpdir_repo / "missing.obj", "--out", tmpdir_repo / "data")

    assert result.exit_code == EXIT_VALIDATION


def test_sample_malformed_obj(runner, tmpdir_repo):
    mesh_path = write_obj(tmpdir_repo, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n")

    result = invoke(runner, "sample", mesh_path, "--out", tmpdir_repo / "data")

    assert result.exit_code == EXIT_DATA_INTEGRITY
    assert "line 4" in result.output


def test_print_config(runner):
    result = invoke(runner, "fit", "--print-config")

    assert result.exit_code == 0
    assert json.loads(result.output)["fit"]["learning_rate"] == 1e-4


# Test fit
def test_fit_writes_checkpoint_report_and_loss_log(runner, tmpdir_repo):
    data = constructor_sphere_data(runner, tmpdir_repo / "data")
    config_path = tmpdir_repo / "run.json"
    config_path.write_text(json.dumps(SMALL_RUN), encoding="utf-8")
    out = tmpdir_repo / "out"

    result = invoke(runner, "fit", "--data", data, "--out", out, "--config", config_path)

    assert result.exit_code == 0, result.output
    assert "tau_o=0.7" in result.output
    header, rows = read_csv(out / "loss.csv")
    assert header[0] == "step"
    assert rows.shape[0] == 3
    assert len(list((out / "checkpoints").glob("*.json"))) == 1
    assert len(list((out / "reports").glob("*.json"))) == 1


def test_fit_keeps_runs_on_different_data_apart(runner, tmpdir_repo):
    config_path = tmpdir_repo / "run.json"
    config_path.write_text(json.dumps(SMALL_RUN), encoding="utf-8")
    out = tmpdir_repo / "out"
    for seed in (1, 2):
        unit_sphere().to_shape_sample(300, 300, seed=seed).save(tmpdir_repo / f"data{seed}")

        result = invoke(runner, "fit", "--data", tmpdir_repo / f"data{seed}", "--out", out, "--config", config_path)
        assert result.exit_code == 0, result.output

    assert len(list((out / "checkpoints").glob("*.json"))) == 2
    assert len(ReportRepository(out / "reports").ids()) == 2


def test_fit_bad_config(runner, tmpdir_repo):
    config_path = tmpdir_repo / "run.json"
    config_path.write_text(json.dumps({"fit": {"n_primitives": 0}}), encoding="utf-8")

    result = invoke(runner, "fit", "--data", tmpdir_repo, "--config", config_path)

    assert result.exit_code == EXIT_VALIDATION
    assert "fit.n_primitives" in result.output


def test_fit_missing_data(runner, tmpdir_repo):
    result = invoke(runner, "fit", "--data", tmpdir_repo / "nothing", "--out", tmpdir_repo / "out")

    assert result.exit_code == EXIT_VALIDATION


# Test mesh
def test_mesh_explicit(runner, tmpdir_repo):
    checkpoint = constructor_sphere_checkpoint(tmpdir_repo / "checkpoints")
    out_path = tmpdir_repo / "mesh" / "sphere.obj"

    result = invoke(runner, "mesh", checkpoint, "--level", 2, "--repeats", 2, "--out", out_path)

    assert result.exit_code == 0, result.output
    timing = read_json(out_path.with_suffix(".timing.json"))
    assert timing["mode"] == "explicit"
    assert timing["vertices"] == 162
    assert timing["faces"] == 320
    assert len(timing["seconds"]) == 2
    assert timing["checkpoint_config_hash"] == "cafe"
    assert out_path.read_text(encoding="utf-8").count("\nf ") == 320


def test_mesh_marching_cubes(runner, tmpdir_repo):
    checkpoint = constructor_sphere_checkpoint(tmpdir_repo)
    out_path = tmpdir_repo / "sphere_mc.obj"

    result = invoke(runner, "mesh", checkpoint, "--mode", "mc", "--resolution", 32, "--repeats", 1, "--out", out_path)

    assert result.exit_code == 0, result.output
    timing = read_json(out_path.with_suffix(".timing.json"))
    assert timing["resolution"] == 32
    assert timing["level"] is None
    assert timing["faces"] > 0


@pytest.mark.parametrize("args", [["--mode", "voxel"], ["--mode", "mc", "--resolution", 48]])
def test_mesh_bad_options(runner, tmpdir_repo, args):
    checkpoint = constructor_sphere_checkpoint(tmpdir_repo)

    result = invoke(runner, "mesh", checkpoint, *args, "--out", tmpdir_repo / "m.obj")

    assert result.exit_code == EXIT_VALIDATION


def test_mesh_missing_checkpoint(runner, tmpdir_repo):
    result = invoke(runner, "mesh", tmpdir_repo / "missing.json", "--out", tmpdir_repo / "m.obj")

    assert result.exit_code == EXIT_VALIDATION
    assert "not found" in result.output


# Test eval
def test_eval_sphere_checkpoint(runner, tmpdir_repo):
    data = constructor_sphere_data(runner, tmpdir_repo / "data")
    checkpoint = constructor_sphere_checkpoint(tmpdir_repo / "checkpoints")
    config_path = tmpdir_repo / "run.json"
    config_path.write_text(json.dumps(SMALL_RUN), encoding="utf-8")
    out_path = tmpdir_repo / "metrics.json"

    result = invoke(runner, "eval", checkpoint, "--data", data, "--out", out_path, "--points", 5000,
                    "--threshold", 0.1, "--config", config_path)

    assert result.exit_code == 0, result.output
    report = read_json(out_path)
    assert report["fscore"] > 90.0
    assert report["overlap"] == 0.0
    assert report["checkpoint_config_hash"] == "cafe"
    assert "F-score (%)" in result.output


def test_eval_collapsed_checkpoint_writes_null_chamfer(runner, tmpdir_repo):
    data = constructor_sphere_data(runner, tmpdir_repo / "data")
    checkpoint = CheckpointRepository(tmpdir_repo / "checkpoints").create(
        "collapsed", constructor_assembly([(0.0, 0.0, 0.0)], 0.0), "cafe")
    config_path = tmpdir_repo / "run.json"
    config_path.write_text(json.dumps(SMALL_RUN), encoding="utf-8")
    out_path = tmpdir_repo / "metrics.json"

    result = invoke(runner, "eval", checkpoint, "--data", data, "--out", out_path, "--points", 1000,
                    "--config", config_path)

    assert result.exit_code == 0, result.output
    text = out_path.read_text(encoding="utf-8")
    assert "Infinity" not in text
    assert json.loads(text)["cd1"] is None
    assert json.loads(text)["fscore"] == 0.0


# Test shfit
def test_shfit_constant_radius(runner, tmpdir_repo):
    dirs = sample_directions(100, "fibonacci")
    radii_path = tmpdir_repo / "radii.csv"
    write_csv(radii_path, ["theta", "phi", "radius"], np.column_stack([dirs.theta, dirs.phi, np.full(100, 0.4)]))

    result = invoke(runner, "shfit", radii_path, "-L", 2, "--out", tmpdir_repo / "sh")

    assert result.exit_code == 0, result.output
    _, coeffs = read_csv(tmpdir_repo / "sh" / "coeffs.csv")
    residual = read_json(tmpdir_repo / "sh" / "residual.json")
    assert coeffs.shape == (9, 3)
    np.testing.assert_array_equal(coeffs[:4, 0], [0, 1, 1, 1])
    assert residual["max_residual"] < 1e-9
    assert residual["samples"] == 100


def test_shfit_rank_deficient(runner, tmpdir_repo):
    phi = np.linspace(-3.0, 3.0, 20)
    radii_path = tmpdir_repo / "radii.csv"
    write_csv(radii_path, ["theta", "phi", "radius"], np.column_stack([np.full(20, np.pi / 2), phi, np.ones(20)]))

    result = invoke(runner, "shfit", radii_path, "-L", 2, "--out", tmpdir_repo / "sh")

    assert result.exit_code == EXIT_NUMERICAL
    assert "condition" in result.output


def test_shfit_bad_header(runner, tmpdir_repo):
    radii_path = tmpdir_repo / "radii.csv"
    write_csv(radii_path, ["a", "b", "c"], np.ones((12, 3)))

    result = invoke(runner, "shfit", radii_path, "-L", 1, "--out", tmpdir_repo / "sh")

    assert result.exit_code == EXIT_DATA_INTEGRITY


def test_shfit_missing_file(runner, tmpdir_repo):
    result = invoke(runner, "shfit", tmpdir_repo / "radii.csv", "-L", 1, "--out", tmpdir_repo / "sh")

    assert result.exit_code == EXIT_VALIDATION
