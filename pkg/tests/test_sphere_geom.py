import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from src import (
    SphereCoord,
    UnitDirection,
    DirectionScheme,
    DirectionSet,
    ValidationError,
    omega,
    to_sphere,
    to_cartesian,
    sample_directions,
    icosphere,
)


# ---
# SPHERE COORDINATE TESTS
# ---

def test_sphere_coord_range_error():
    with pytest.raises(ValidationError):
        SphereCoord(theta=-0.1, phi=0.0)
    with pytest.raises(ValidationError):
        SphereCoord(theta=math.pi + 1e-9, phi=0.0)
    with pytest.raises(ValidationError):
        SphereCoord(theta=1.0, phi=4.0)


def test_unit_direction_norm_error():
    with pytest.raises(ValidationError):
        UnitDirection(1.0, 1.0, 0.0)

    u = UnitDirection(0.0, 0.0, 1.0)
    assert u.as_array().tolist() == [0.0, 0.0, 1.0]


def test_omega_axes():
    north = omega(SphereCoord(0.0, 0.0))
    assert (north.x, north.y, north.z) == pytest.approx((0.0, 0.0, 1.0))

    east = omega(SphereCoord(math.pi / 2, math.pi / 2))
    assert (east.x, east.y, east.z) == pytest.approx((0.0, 1.0, 0.0), abs=1e-15)


finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)


@given(finite, finite, finite)
def test_to_sphere_inverts_omega(x, y, z):
    vec = np.array([x, y, z])
    norm = np.linalg.norm(vec)
    if norm < 1e-6:
        return
    u = omega(to_sphere(vec)).as_array()
    np.testing.assert_allclose(u, vec / norm, atol=1e-12)


def test_to_sphere_zero_vector_is_degenerate():
    d = to_sphere([0.0, 0.0, 0.0])

    assert d.degenerate
    assert d == SphereCoord(0.0, 0.0)


def test_to_sphere_negative_x_axis_uses_quadrant():
    d = to_sphere([-1.0, 0.0, 0.0])

    assert d.theta == pytest.approx(math.pi / 2)
    assert abs(d.phi) == pytest.approx(math.pi)


def test_to_cartesian():
    p = to_cartesian(2.0, SphereCoord(math.pi, 0.0))
    np.testing.assert_allclose(p, [0.0, 0.0, -2.0], atol=1e-15)

    with pytest.raises(ValidationError):
        to_cartesian(-1.0, SphereCoord(0.0, 0.0))


# ---
# DIRECTION SAMPLING TESTS
# ---

def test_sample_directions_error():
    with pytest.raises(ValidationError):
        sample_directions(0)
    with pytest.raises(ValidationError):
        sample_directions(10, scheme="grid")


def test_sample_directions_uniform_is_seeded():
    a = sample_directions(100, DirectionScheme.UNIFORM_RANDOM, seed=3)
    b = sample_directions(100, "uniform-random", seed=3)

    assert len(a) == 100
    np.testing.assert_array_equal(a.theta, b.theta)
    np.testing.assert_allclose(np.linalg.norm(a.unit_vectors(), axis=1), 1.0)


def test_sample_directions_fibonacci_covers_sphere():
    dirs = sample_directions(500, DirectionScheme.FIBONACCI)
    u = dirs.unit_vectors()

    # roughly zero mean for an even covering
    assert np.abs(u.mean(axis=0)).max() < 0.01
    assert all(isinstance(d, SphereCoord) for d in dirs)


def test_direction_set_shape_error():
    with pytest.raises(ValidationError):
        DirectionSet(theta=np.zeros(3), phi=np.zeros(4))


# ---
# ICOSPHERE TESTS
# ---

@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_icosphere_counts(level):
    template = icosphere(level)

    assert len(template.vertices) == 10 * 4 ** level + 2
    assert len(template.faces) == 20 * 4 ** level
    assert template.euler_characteristic() == 2
    np.testing.assert_allclose(np.linalg.norm(template.vertices, axis=1), 1.0)


def test_icosphere_outward_winding():
    template = icosphere(2)
    tri = template.vertices[template.faces]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    assert np.all(np.einsum("ij,ij->i", normals, tri.mean(axis=1)) > 0)


def test_icosphere_level_error():
    with pytest.raises(ValidationError):
        icosphere(-1)
    with pytest.raises(ValidationError):
        icosphere(7)
