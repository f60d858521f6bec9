import numpy as np
import pytest

from src import (
    FitConfig,
    FitReport,
    LossRecord,
    LossWeights,
    NumericalError,
    ShapeSample,
    Tensor,
    ValidationError,
    evaluate,
    fit,
    fit_radius,
    grid_search_tau_o,
    sample_directions,
)
from src.fitting import LOSS_COLUMNS, PLACEHOLDER_TAU_O, init_assembly, predict_radius, score_tau_grid, seed_translations
from src.synthetic import axis_box, stacked_lamp, two_disjoint_spheres, two_overlapping_spheres, unit_sphere
from src.utils import read_csv
from tests.test_assembly import constructor_assembly


# ---
# FITTING TESTS
# ---

def constructor_fit_config(**overrides):
    values = dict(n_primitives=1, steps=4, layer_sizes=(3, 8, 1), target_points=64, directions_per_primitive=20,
                  occupancy_points=64, tau_o=0.7, resample_every=2, seed=0)
    values.update(overrides)
    return FitConfig(**values)


def constructor_report(steps=3):
    records = [LossRecord(step=i, surface=0.1 / (i + 1), occupancy=0.7, overlap=0.0, total=1.7 - 0.1 * i,
                          wall_time=0.01 * i) for i in range(steps)]
    return FitReport(records=records, tau_o=0.8, tau_o_scores={"0.8": 91.5}, timings={"fit": 1.5},
                     config_hash="abc123")


@pytest.fixture(scope="module")
def sphere_target():
    return unit_sphere().to_shape_sample(400, 400, seed=0)


# Test seeding
def test_seed_translations_single_center_is_centroid():
    points = np.random.default_rng(0).normal(size=(100, 3))

    centers = seed_translations(points, 1, np.random.default_rng(1))

    np.testing.assert_allclose(centers[0], points.mean(axis=0))


def test_seed_translations_finds_clusters():
    rng = np.random.default_rng(2)
    points = np.concatenate([rng.normal((-0.3, 0.0, 0.0), 0.02, (50, 3)), rng.normal((0.3, 0.0, 0.0), 0.02, (50, 3))])

    centers = seed_translations(points, 2, rng)

    np.testing.assert_allclose(np.sort(centers[:, 0]), [-0.3, 0.3], atol=0.02)


def test_init_assembly(sphere_target):
    a = init_assembly(constructor_fit_config(n_primitives=3, tau_o=None), sphere_target)

    assert len(a) == 3
    assert a.tau_o == PLACEHOLDER_TAU_O
    assert [p.index for p in a.primitives] == [0, 1, 2]
    assert a.primitives[0].mlp.layer_sizes == (3, 8, 1)


def test_init_assembly_error(sphere_target):
    with pytest.raises(ValidationError):
        init_assembly(constructor_fit_config(n_primitives=401), sphere_target)


# Test FitReport
def test_fit_report_error():
    records = [LossRecord(1, 0.0, 0.0, 0.0, 0.0, 0.0), LossRecord(0, 0.0, 0.0, 0.0, 0.0, 0.0)]

    with pytest.raises(ValidationError):
        FitReport(records=records)


def test_fit_report_to_dict_and_from_dict():
    report = constructor_report()

    restored = FitReport.from_dict(report.to_dict())

    assert restored.records == report.records
    assert restored.tau_o_scores == {"0.8": 91.5}
    assert restored.id == "abc123"
    assert report.to_dict()["final_losses"]["total"] == pytest.approx(1.5)


def test_fit_report_write_loss_log(tmpdir_repo):
    path = tmpdir_repo / "loss.csv"

    constructor_report(steps=5).write_loss_log(path)
    header, rows = read_csv(path)

    assert tuple(header) == LOSS_COLUMNS
    assert rows.shape == (5, len(LOSS_COLUMNS))
    np.testing.assert_array_equal(rows[:, 0], np.arange(5))


def test_fit_report_smoothed_totals():
    report = constructor_report(steps=5)

    np.testing.assert_allclose(report.smoothed_totals(window=5), [1.5])
    assert len(report.smoothed_totals(window=10)) == 5
    assert FitReport().final_losses() == {}


# Test fit
def test_fit_is_deterministic(sphere_target):
    cfg = constructor_fit_config()
    seen = []

    a1, report1 = fit(cfg, sphere_target, on_step=seen.append)
    a2, report2 = fit(cfg, sphere_target)

    assert len(report1.records) == cfg.steps
    assert [r.step for r in seen] == list(range(cfg.steps))
    assert [r.total for r in report1.records] == [r.total for r in report2.records]
    np.testing.assert_array_equal(a1.translations(), a2.translations())
    assert report1.tau_o == 0.7
    assert report1.tau_o_scores == {}


def test_fit_records_overlap_when_weighted(sphere_target):
    cfg = constructor_fit_config(n_primitives=2, steps=2, weights=LossWeights(w_overlap=1.0))

    _, report = fit(cfg, sphere_target)

    assert all(r.total >= 10.0 * r.surface for r in report.records)
    assert report.records[0].overlap >= 0.0


def test_fit_searches_tau_o_when_unset(sphere_target):
    cfg = constructor_fit_config(steps=1, tau_o=None, tau_o_grid=(0.6, 0.7, 0.9))

    a, report = fit(cfg, sphere_target)

    assert a.tau_o == report.tau_o
    assert report.tau_o in (0.6, 0.7)
    assert set(report.tau_o_scores) == {"0.6", "0.7", "0.9"}
    assert "tau_search" in report.timings


def test_fit_without_steps_returns_initialization(sphere_target):
    cfg = constructor_fit_config(steps=0, tau_o=None)

    a, report = fit(cfg, sphere_target)

    assert a.to_dict() == init_assembly(cfg, sphere_target).to_dict()
    assert report.records == []
    assert report.tau_o == PLACEHOLDER_TAU_O
    assert report.tau_o_scores == {}
    assert "tau_search" not in report.timings


def test_fit_scores_tau_o_on_held_out_surface(monkeypatch, sphere_target):
    scored = []

    def recording_score(assembly, target, grid):
        scored.append(target)
        return score_tau_grid(assembly, target, grid)

    monkeypatch.setattr("src.fitting.score_tau_grid", recording_score)
    fit(constructor_fit_config(steps=1, tau_o=None, tau_o_grid=(0.6, 0.7)), sphere_target)

    validation = scored[0].surface_points
    training = {tuple(p) for p in sphere_target.surface_points} - {tuple(p) for p in validation}
    assert len(validation) == 40
    assert len(training) == 360


def test_fit_report_id_includes_target_fingerprint(sphere_target):
    cfg = constructor_fit_config(steps=1)
    other = unit_sphere().to_shape_sample(400, 400, seed=9)

    _, report = fit(cfg, sphere_target)
    _, other_report = fit(cfg, other)

    assert report.config_hash == other_report.config_hash
    assert report.data_hash == sphere_target.fingerprint()
    assert report.id != other_report.id
    assert FitReport.from_dict(report.to_dict()).id == report.id


def test_fit_nan_names_step(monkeypatch, sphere_target):
    monkeypatch.setattr("src.fitting.surface_loss", lambda *args, **kwargs: Tensor(float("nan")))

    with pytest.raises(NumericalError, match="step 0: .*surface"):
        fit(constructor_fit_config(), sphere_target)


def test_fit_empty_target_error(sphere_target):
    empty = ShapeSample(sphere_target.surface_points, np.zeros((0, 3)), np.zeros(0))

    with pytest.raises(ValidationError):
        fit(constructor_fit_config(), empty)


# Test iso-level search
def test_grid_search_tau_o_on_exact_sphere(sphere_target):
    a = constructor_assembly([(0.0, 0.0, 0.0)], 0.5)
    grid = (0.6, 0.7, 0.8, 0.9)

    scores = score_tau_grid(a, sphere_target, grid)

    # a single primitive never lifts the composite above sigmoid(1)
    assert scores[0.8] == 0.0
    assert scores[0.9] == 0.0
    assert grid_search_tau_o(a, sphere_target, grid) in (0.6, 0.7)


def test_grid_search_tau_o_error(sphere_target):
    with pytest.raises(ValidationError):
        grid_search_tau_o(constructor_assembly([(0.0, 0.0, 0.0)], 0.5), sphere_target, ())


# Test single-network radius regression
def test_fit_radius_learns_offset_sphere():
    dirs = sample_directions(300, "fibonacci")
    radii = 0.3 + 0.1 * dirs.unit_vectors()[:, 0]

    mlp, history = fit_radius(dirs, radii, steps=1000, learning_rate=3e-3, layer_sizes=(3, 32, 32, 1), seed=1)

    assert len(history) == 1000
    assert history[-1] < history[0]
    assert history[-1] < 1e-3
    assert predict_radius(mlp, dirs).shape == (300,)


def test_fit_radius_error():
    with pytest.raises(ValidationError):
        fit_radius(sample_directions(10, seed=0), np.ones(9))


# Acceptance runs
ACCEPTANCE_FIT = dict(steps=2000, layer_sizes=(3, 32, 32, 1), target_points=2048, directions_per_primitive=200,
                      occupancy_points=1024, learning_rate=3e-3, tau_o=0.6, seed=0)


def constructor_acceptance_config(n_primitives, **overrides):
    values = dict(ACCEPTANCE_FIT, n_primitives=n_primitives)
    values.update(overrides)
    return FitConfig(**values)


def constructor_dense_target(shape, seed):
    # F-score at 0.01 needs a target dense enough that a perfect surface is within 0.01 of it
    return shape.to_shape_sample(100000, 20000, seed=seed)


def constructor_evaluation(a, target):
    return evaluate(a, target, surface_points_count=100000, overlap_points=100000, icosphere_level=4, seed=0)


@pytest.mark.slow
def test_fit_single_sphere_converges():
    target = constructor_dense_target(unit_sphere(), seed=1)

    a, report = fit(constructor_acceptance_config(1), target)
    metrics = constructor_evaluation(a, target)

    smoothed = report.smoothed_totals(window=100)
    assert smoothed[-1] < smoothed[0]
    assert metrics.cd1_raw < 0.02
    assert metrics.iou > 0.95


@pytest.mark.slow
def test_fit_two_disjoint_spheres():
    target = constructor_dense_target(two_disjoint_spheres(), seed=2)

    a, _ = fit(constructor_acceptance_config(2), target)

    assert constructor_evaluation(a, target).iou > 0.9


@pytest.mark.slow
def test_fit_axis_box_fscore():
    target = constructor_dense_target(axis_box(), seed=3)

    a, _ = fit(constructor_acceptance_config(1), target)

    assert constructor_evaluation(a, target).fscore > 90.0


@pytest.mark.slow
def test_overlap_regularizer_reduces_overlap():
    target = constructor_dense_target(two_overlapping_spheres(), seed=4)

    plain, _ = fit(constructor_acceptance_config(2), target)
    regularized, _ = fit(constructor_acceptance_config(2, weights=LossWeights(w_overlap=10.0, tau_r=1.0)), target)
    plain_metrics = constructor_evaluation(plain, target)
    regularized_metrics = constructor_evaluation(regularized, target)

    assert regularized_metrics.overlap <= 0.2 * plain_metrics.overlap
    assert regularized_metrics.fscore > plain_metrics.fscore - 5.0


@pytest.mark.slow
def test_label_transfer_on_stacked_lamp():
    target = constructor_dense_target(stacked_lamp(), seed=5)

    a, _ = fit(constructor_acceptance_config(5), target)

    assert constructor_evaluation(a, target).label_iou > 0.7


@pytest.mark.slow
def test_surface_extraction_helps_on_synthetic_shapes():
    wins = 0
    for seed, shape in enumerate((two_overlapping_spheres(), axis_box(), stacked_lamp())):
        target = constructor_dense_target(shape, seed=10 + seed)
        filtered, _ = fit(constructor_acceptance_config(5, steps=1000), target)
        plain, _ = fit(constructor_acceptance_config(5, steps=1000, surface_extraction=False), target)
        wins += constructor_evaluation(filtered, target).fscore >= constructor_evaluation(plain, target).fscore

    assert wins >= 2


@pytest.mark.slow
def test_fit_radius_generalizes_to_held_out_directions():
    train = sample_directions(500, "fibonacci")
    held_out = sample_directions(200, seed=11)

    def target(dirs):
        return 0.3 + 0.1 * dirs.unit_vectors()[:, 0]

    mlp, _ = fit_radius(train, target(train), steps=3000, seed=2)

    assert np.abs(predict_radius(mlp, held_out) - target(held_out)).max() < 0.05
