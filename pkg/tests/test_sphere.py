import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sphereflow.errors import DimensionError, PoleHemisphereError
from sphereflow.sphere import (GnomonicChart, SphericalCap, as_sphere_point, circular_distance,
                               geodesic_distance, gnomonic_forward, gnomonic_inverse,
                               gnomonic_tangent_map, normalize, project_tangent, rotation_to,
                               sample_cap, sample_uniform)

from strategies import dims, seeds, unit


def test_as_sphere_point_rejects_off_sphere_and_low_dim():
    with pytest.raises(ValueError):
        as_sphere_point([1.0, 1e-6 + 1e-9, 0.5])
    with pytest.raises(DimensionError):
        as_sphere_point([1.0])


def test_project_tangent_examples():
    e = np.eye(3)
    assert np.array_equal(project_tangent(e[0], e[0]), np.zeros(3))
    assert np.array_equal(project_tangent(e[0], e[1]), e[1])


@given(seeds, dims)
def test_project_tangent_orthogonal_and_idempotent(seed, d):
    rng = np.random.default_rng(seed)
    x = unit(rng, d)
    p = project_tangent(x, rng.standard_normal(d))
    assert abs(p @ x) <= 1e-14 * max(1.0, np.linalg.norm(p))
    assert np.allclose(project_tangent(x, p), p, atol=1e-15)


def test_geodesic_distance_examples():
    e = np.eye(3)
    assert geodesic_distance(e[0], e[0]) == 0.0
    assert geodesic_distance(e[0], -e[0]) == pytest.approx(np.pi, abs=1e-15)
    assert geodesic_distance(e[0], e[1]) == pytest.approx(np.pi / 2, abs=1e-15)


def test_geodesic_distance_accurate_for_tiny_angles():
    a = 1e-10
    x = np.array([1.0, 0.0])
    y = np.array([np.cos(a), np.sin(a)])
    assert geodesic_distance(x, y) == pytest.approx(a, rel=1e-6)


@given(seeds, dims)
def test_geodesic_metric_properties(seed, d):
    rng = np.random.default_rng(seed)
    x, y, z = unit(rng, d, 3)
    dxy = geodesic_distance(x, y)
    assert 0.0 <= dxy <= np.pi
    assert dxy == pytest.approx(geodesic_distance(y, x), abs=1e-15)
    assert geodesic_distance(x, z) <= dxy + geodesic_distance(y, z) + 1e-12


def test_circular_distance():
    assert circular_distance(0.1, 2 * np.pi - 0.1) == pytest.approx(0.2)
    assert circular_distance(0.0, np.pi) == pytest.approx(np.pi)


def test_sample_uniform_contract():
    a = sample_uniform(3, 10_000, 7)
    assert np.array_equal(a, sample_uniform(3, 10_000, 7))
    assert np.abs(np.linalg.norm(a, axis=1) - 1).max() <= 1e-14
    assert np.linalg.norm(a.mean(axis=0)) <= 0.05


def test_cap_membership_and_opposite():
    cap = SphericalCap(np.array([0.0, 0.0, 1.0]), np.pi / 4)
    inside = normalize(np.array([0.0, 0.5, 1.0]))
    outside = normalize(np.array([0.0, 1.5, 1.0]))
    assert cap.contains(inside) and not cap.contains(outside)
    assert cap.opposite().contains(-inside)


@given(seeds, dims, st.floats(0.05, 1.5))
def test_sample_cap_stays_in_cap(seed, d, angle):
    rng = np.random.default_rng(seed)
    c = unit(rng, d)
    pts = sample_cap(c, angle, 50, rng)
    assert np.all(pts @ c >= np.cos(angle) - 1e-12)
    assert np.abs(np.linalg.norm(pts, axis=1) - 1).max() <= 1e-14


@given(seeds, dims)
def test_rotation_to_is_proper_rotation(seed, d):
    rng = np.random.default_rng(seed)
    u = unit(rng, d)
    R = rotation_to(u)
    assert np.allclose(R.T @ R, np.eye(d), atol=1e-13)
    assert np.allclose(R[:, -1], u, atol=1e-14)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_rotation_to_identity_at_north_and_defined_at_south():
    e = np.eye(4)
    assert np.allclose(rotation_to(e[3]), np.eye(4), atol=1e-15)
    R = rotation_to(-e[3])
    assert np.allclose(R[:, -1], -e[3])


def test_gnomonic_basic_examples():
    north = normalize(np.array([0.3, -0.2, 1.0]))
    ch = GnomonicChart(north)
    assert np.allclose(gnomonic_forward(ch, north), 0.0, atol=1e-15)
    assert np.allclose(gnomonic_inverse(ch, np.zeros(2)), north, atol=1e-15)
    a = 0.7
    x = np.cos(a) * north + np.sin(a) * normalize(project_tangent(north, np.array([1.0, 0, 0])))
    assert np.linalg.norm(gnomonic_forward(ch, x)) == pytest.approx(np.tan(a), abs=1e-12)
    with pytest.raises(PoleHemisphereError):
        ch.forward(-north)


def test_tangent_map_at_origin_is_embedding():
    ch = GnomonicChart(np.array([0.0, 0.0, 1.0]))
    out = gnomonic_tangent_map(ch, np.zeros(2), np.array([1.0, 0.0]))
    assert np.allclose(out, [1.0, 0.0, 0.0], atol=1e-15)


@given(seeds, st.integers(2, 6), st.floats(0.05, 1.4))
def test_gnomonic_identities(seed, d, alpha):
    rng = np.random.default_rng(seed)
    ch = GnomonicChart(unit(rng, d))

    def ball():
        v = rng.standard_normal(d - 1)
        return v / np.linalg.norm(v) * np.tan(alpha) * rng.random()

    u, v, X = ball(), ball(), rng.standard_normal(d - 1)
    Fu, Fv = ch.inverse(u), ch.inverse(v)
    nu, nv = 1 + u @ u, 1 + v @ v
    # round trips and unit norm
    assert np.abs(ch.forward(Fu) - u).max() <= 1e-12
    assert abs(np.linalg.norm(Fu) - 1) <= 1e-14
    # inner products of chart images
    assert Fu @ Fv == pytest.approx((u @ v + 1) / np.sqrt(nu * nv), abs=1e-12)
    # tangent projection becomes linear after the tangent map
    lhs = project_tangent(Fu, Fv)
    rhs = np.sqrt(nu) / np.sqrt(nv) * ch.tangent_map(u, v - u)
    assert np.abs(lhs - rhs).max() <= 1e-10
    # norm identity
    dF = ch.tangent_map(u, X)
    assert dF @ dF == pytest.approx(X @ X / nu - (X @ u) ** 2 / nu**2, abs=1e-10)
    # differential is tangent at F(u)
    assert abs(dF @ Fu) <= 1e-13


def test_great_circles_map_to_lines(rng):
    ch = GnomonicChart(np.array([0.0, 0.0, 0.0, 1.0]))
    a = normalize(np.array([0.1, 0.2, 0.0, 1.0]))
    b = normalize(project_tangent(a, rng.standard_normal(4)))
    g = ch.forward(np.array([np.cos(t) * a + np.sin(t) * b for t in (-0.4, 0.0, 0.3, 0.6)]))
    d = g[1:] - g[0]
    assert np.linalg.matrix_rank(d, tol=1e-10) == 1
