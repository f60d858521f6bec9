import pytest

from src import FitConfig, LossWeights, MeshOptions, NotFoundError, RunConfig, ValidationError
from src.config import THREADS_ENV, TAU_O_GRID, config_hash, load_config, thread_count, validate


# ---
# CONFIG TESTS
# ---

def test_defaults():
    cfg = RunConfig()

    assert cfg.fit.learning_rate == 1e-4
    assert cfg.fit.alpha == 100.0
    assert cfg.fit.tau_s == 0.1
    assert cfg.fit.tau_o is None
    assert cfg.fit.tau_o_grid == TAU_O_GRID
    assert cfg.fit.weights.w_surface == 10.0
    assert cfg.metrics.fscore_threshold == 0.01
    assert cfg.mesh.resolution == 128


def test_validate_lists_every_violation():
    with pytest.raises(ValidationError) as e:
        validate(RunConfig, {"fit": {"n_primitives": 0, "learning_rate": -1.0}})

    assert "fit.n_primitives" in str(e.value)
    assert "fit.learning_rate" in str(e.value)


def test_unknown_key_is_rejected():
    with pytest.raises(ValidationError, match="fit.stepz"):
        validate(RunConfig, {"fit": {"stepz": 10}})


@pytest.mark.parametrize("fit", [
    {"layer_sizes": [2, 16, 1]},
    {"layer_sizes": [3, 16, 2]},
    {"tau_o": 0.5},
    {"tau_o": 1.0},
    {"tau_o_grid": [0.4, 0.9]},
    {"direction_scheme": "grid"},
])
def test_fit_config_error(fit):
    with pytest.raises(ValidationError):
        validate(RunConfig, {"fit": fit})


def test_mesh_options_error():
    with pytest.raises(ValidationError):
        validate(MeshOptions, {"resolution": 48})
    with pytest.raises(ValidationError):
        validate(MeshOptions, {"mode": "voxel"})


def test_assignment_is_validated():
    weights = LossWeights()

    with pytest.raises(Exception):
        weights.w_overlap = -1.0


def test_load_config(tmpdir_repo):
    path = tmpdir_repo / "config.json"
    path.write_text('{"fit": {"steps": 5, "n_primitives": 2}, "out_dir": "runs"}', encoding="utf-8")

    cfg = load_config(path)

    assert cfg.fit.steps == 5
    assert cfg.fit.n_primitives == 2
    assert cfg.out_dir == "runs"


def test_load_config_not_found(tmpdir_repo):
    with pytest.raises(NotFoundError):
        load_config(tmpdir_repo / "missing.json")


def test_load_config_bad_json(tmpdir_repo):
    path = tmpdir_repo / "config.json"
    path.write_text("{fit: ", encoding="utf-8")

    with pytest.raises(ValidationError, match="not valid JSON"):
        load_config(path)


def test_config_hash_is_stable():
    assert config_hash(FitConfig()) == config_hash(FitConfig())
    assert config_hash(FitConfig(seed=1)) != config_hash(FitConfig())


def test_thread_count(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert thread_count() == 1

    monkeypatch.setenv(THREADS_ENV, "4")
    assert thread_count() == 4


@pytest.mark.parametrize("raw", ["0", "four"])
def test_thread_count_error(monkeypatch, raw):
    monkeypatch.setenv(THREADS_ENV, raw)

    with pytest.raises(ValidationError):
        thread_count()
