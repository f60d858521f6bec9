import math

import numpy as np
import pytest

from src import (
    IndicatorConfig,
    LossWeights,
    NumericalError,
    PrimitiveAssembly,
    Tensor,
    ValidationError,
    extract_surface,
    grad_check,
    occupancy_loss,
    overlap_regularizer,
    sample_directions,
    surface_loss,
    total_loss,
)
from src.assembly import composite_indicators
from src.diff_engine import parameter
from src.losses import EMPTY_SURFACE_PENALTY, nearest_neighbors
from tests.test_assembly import constructor_disjoint, constructor_overlapping
from tests.test_nsd import constructor_primitive


# ---
# LOSS TESTS
# ---

def constructor_toy_scene(seed, n_primitives=1, alpha=20.0):
    """Small random assembly with target points and labeled occupancy points around it."""
    rng = np.random.default_rng(seed)
    primitives = [
        constructor_primitive(seed * 10 + i, rng.uniform(-0.15, 0.15, 3), index=i, layer_sizes=(3, 16, 16, 1))
        for i in range(n_primitives)
    ]
    a = PrimitiveAssembly(primitives, IndicatorConfig(alpha=alpha))
    target = rng.normal(size=(40, 3))
    target = 0.3 * target / np.linalg.norm(target, axis=1, keepdims=True)
    occupancy = rng.uniform(-0.5, 0.5, size=(30, 3))
    labels = (np.linalg.norm(occupancy, axis=1) < 0.3).astype(float)
    dirs = sample_directions(30, seed=seed)
    return a, target, occupancy, labels, dirs


# Test nearest_neighbors
def test_nearest_neighbors_kdtree_matches_brute_force():
    rng = np.random.default_rng(0)
    queries = rng.normal(size=(300, 3))
    reference = rng.normal(size=(200, 3))

    d_tree, i_tree = nearest_neighbors(queries, reference, "kdtree")
    d_brute, i_brute = nearest_neighbors(queries, reference, "brute")

    np.testing.assert_array_equal(i_tree, i_brute)
    np.testing.assert_allclose(d_tree, d_brute, atol=1e-12)


def test_nearest_neighbors_error():
    with pytest.raises(ValidationError):
        nearest_neighbors(np.zeros((2, 3)), np.zeros((0, 3)))
    with pytest.raises(ValidationError):
        nearest_neighbors(np.zeros((2, 3)), np.zeros((2, 3)), method="octree")


# Test surface_loss
def test_surface_loss_known_value():
    predicted = parameter(np.array([[0.0, 0.0, 0.0]]))
    target = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])

    loss = surface_loss(predicted, target)

    assert loss.item() == pytest.approx(1.0 + 1.5)


def test_surface_loss_identical_sets_is_zero():
    points = np.random.default_rng(1).normal(size=(50, 3))

    assert surface_loss(parameter(points), points).item() == 0.0


def test_surface_loss_empty_prediction_penalty():
    loss = surface_loss(Tensor(np.zeros((0, 3))), np.ones((4, 3)))

    assert loss.item() == EMPTY_SURFACE_PENALTY


def test_surface_loss_empty_target_error():
    with pytest.raises(ValidationError):
        surface_loss(parameter(np.zeros((3, 3))), np.zeros((0, 3)))


def test_surface_loss_gradient_pulls_points_to_target():
    predicted = parameter(np.array([[0.5, 0.0, 0.0]]))

    surface_loss(predicted, np.array([[1.0, 0.0, 0.0]])).backward()

    np.testing.assert_allclose(predicted.grad, [[-2.0, 0.0, 0.0]])


# Test occupancy_loss
def test_occupancy_loss_uninformed_prediction():
    loss = occupancy_loss(Tensor(np.full(4, 0.5)), np.array([0, 1, 1, 0]))

    assert loss.item() == pytest.approx(math.log(2.0))


def test_occupancy_loss_perfect_prediction_is_clamped():
    loss = occupancy_loss(Tensor(np.array([0.0, 1.0])), np.array([0.0, 1.0]))

    assert loss.item() == pytest.approx(-math.log(1.0 - 1e-7))
    assert math.isfinite(occupancy_loss(Tensor(np.array([1.0])), np.array([0.0])).item())


def test_occupancy_loss_error():
    with pytest.raises(ValidationError):
        occupancy_loss(Tensor(np.full(2, 0.5)), np.array([0.0, 0.5]))
    with pytest.raises(ValidationError):
        occupancy_loss(Tensor(np.full(3, 0.5)), np.array([0.0, 1.0]))


# Test overlap_regularizer
def test_overlap_regularizer_disjoint_is_zero():
    points = np.random.default_rng(2).uniform(-0.5, 0.5, size=(500, 3))

    assert overlap_regularizer(constructor_disjoint(), points, 1.0).item() == 0.0


def test_overlap_regularizer_counts_shared_volume():
    points = np.array([[0.0, 0.0, 0.0], [-0.35, 0.0, 0.0]])

    # the origin is inside both primitives (sum 2), the second point inside one
    assert overlap_regularizer(constructor_overlapping(), points, 1.0).item() == pytest.approx(0.5)


def test_overlap_regularizer_tau_error():
    with pytest.raises(ValidationError):
        overlap_regularizer(constructor_disjoint(), np.zeros((1, 3)), 0.0)


# Test total_loss
def test_total_loss_weighted_sum():
    weights = LossWeights(w_occupancy=1.0, w_surface=10.0, w_overlap=2.0)

    total = total_loss(weights, {"occupancy": Tensor(0.5), "surface": Tensor(0.1), "overlap": Tensor(0.25)})

    assert total.item() == pytest.approx(0.5 + 1.0 + 0.5)


def test_total_loss_missing_component_counts_as_zero():
    assert total_loss(LossWeights(), {"surface": 0.2}).item() == pytest.approx(2.0)


def test_total_loss_nan_names_component():
    with pytest.raises(NumericalError, match="surface"):
        total_loss(LossWeights(), {"occupancy": Tensor(0.1), "surface": Tensor(float("nan"))})


def test_total_loss_unknown_component_error():
    with pytest.raises(ValidationError):
        total_loss(LossWeights(), {"chamfer": Tensor(1.0)})


# Gradient checks on randomized instances
@pytest.mark.parametrize("seed", range(20))
def test_surface_loss_grad_check(seed):
    a, target, _, _, dirs = constructor_toy_scene(seed)

    result = grad_check(lambda: surface_loss(extract_surface(a, dirs).points, target), a.parameters(),
                        max_entries=30, seed=seed)

    assert result.max_relative_error < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_occupancy_loss_grad_check(seed):
    a, _, occupancy, labels, _ = constructor_toy_scene(seed, n_primitives=2)

    result = grad_check(lambda: occupancy_loss(composite_indicators(a, occupancy), labels), a.parameters(),
                        max_entries=30, seed=seed)

    assert result.max_relative_error < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_overlap_regularizer_grad_check(seed):
    a, _, occupancy, _, _ = constructor_toy_scene(seed, n_primitives=3)

    result = grad_check(lambda: overlap_regularizer(a, occupancy, 0.5), a.parameters(), max_entries=30, seed=seed)

    assert result.max_relative_error < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_fitting_objective_grad_check(seed):
    a, target, occupancy, labels, dirs = constructor_toy_scene(seed)
    weights = LossWeights(w_occupancy=1.0, w_surface=10.0)

    def objective():
        return total_loss(weights, {
            "occupancy": occupancy_loss(composite_indicators(a, occupancy), labels),
            "surface": surface_loss(extract_surface(a, dirs).points, target),
        })

    result = grad_check(objective, a.parameters(), max_entries=30, seed=seed)

    assert result.checked > 0
    assert result.max_relative_error < 1e-4
