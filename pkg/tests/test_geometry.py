import itertools
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from phpullback.geometry import (ChartValidityWarning, PointCloud, RigidTransform,
                                 chart_coordinates, from_chart_coordinates, icp_align,
                                 icp_discrepancy, random_rotation, read_cloud, rotation_2d,
                                 wasserstein_distance, write_cloud_csv, write_cloud_json)


def brute_force_w2(X, Y):
    best = np.inf
    for perm in itertools.permutations(range(Y.n)):
        best = min(best, float(((X.points - Y.points[list(perm)]) ** 2).sum()))
    return np.sqrt(best)


coords = st.floats(-10, 10, allow_nan=False, width=64)


@st.composite
def cloud_pairs(draw, max_n=6, dim=2):
    n = draw(st.integers(1, max_n))
    a = draw(arrays(float, (n, dim), elements=coords, unique=True))
    b = draw(arrays(float, (n, dim), elements=coords, unique=True))
    # keep points separated so rigid motions cannot merge them through rounding
    for m in (a, b):
        gaps = np.abs(m[:, None] - m[None]).max(-1)[np.triu_indices(n, 1)]
        assume((gaps > 1e-6).all())
    return PointCloud(a), PointCloud(b)


def test_pointcloud_rejects_duplicates_and_nonfinite():
    with pytest.raises(ValueError):
        PointCloud([[0, 0], [0, 0]])
    with pytest.raises(ValueError):
        PointCloud([[0, np.nan]])
    with pytest.raises(ValueError):
        PointCloud(np.zeros((0, 2)))


def test_pointcloud_is_read_only():
    X = PointCloud([[0, 0], [1, 0]])
    with pytest.raises(ValueError):
        X.points[0, 0] = 3


def test_w2_identical_is_zero_identity():
    X = PointCloud(np.random.default_rng(0).normal(size=(6, 2)))
    d, a = wasserstein_distance(X, X)
    assert d == 0
    assert list(a.permutation) == list(range(6))


def test_w2_translated_pair():
    X = PointCloud([[0, 0], [1, 0]])
    Y = PointCloud([[0, 1], [1, 1]])
    d, _ = wasserstein_distance(X, Y)
    assert d == pytest.approx(np.sqrt(2), abs=1e-12)


def test_w2_shape_mismatch():
    with pytest.raises(ValueError):
        wasserstein_distance(PointCloud([[0, 0]]), PointCloud([[0, 0], [1, 1]]))
    with pytest.raises(ValueError):
        wasserstein_distance(PointCloud([[0, 0]]), PointCloud([[0, 0, 0]]))


@given(cloud_pairs())
def test_w2_matches_brute_force(pair):
    X, Y = pair
    d, a = wasserstein_distance(X, Y)
    assert abs(d - brute_force_w2(X, Y)) <= 1e-9 * max(1.0, d)
    assert sorted(a.permutation) == list(range(X.n))
    assert a.cost == pytest.approx(((X.points - Y.points[a.permutation]) ** 2).sum(), rel=1e-12)


@given(cloud_pairs(max_n=5), st.integers(0, 2 ** 31))
def test_w2_metric_properties(pair, seed):
    X, Y = pair
    Z = PointCloud(np.random.default_rng(seed).normal(size=X.points.shape))
    dxy = wasserstein_distance(X, Y)[0]
    assert dxy == wasserstein_distance(Y, X)[0] or abs(dxy - wasserstein_distance(Y, X)[0]) < 1e-9
    assert brute_force_w2(X, Z) <= brute_force_w2(X, Y) + brute_force_w2(Y, Z) + 1e-9


@given(cloud_pairs(), st.floats(0, 2 * np.pi), st.floats(-5, 5), st.floats(-5, 5))
def test_w2_rigid_invariance(pair, angle, tx, ty):
    X, Y = pair
    T = RigidTransform(rotation_2d(angle), np.array([tx, ty]))
    d0 = wasserstein_distance(X, Y)[0]
    assert abs(wasserstein_distance(T(X), T(Y))[0] - d0) <= 1e-9 * max(1, d0)


def test_chart_identity_and_relisting():
    X = PointCloud(np.random.default_rng(1).uniform(size=(7, 2)))
    assert np.array_equal(chart_coordinates(X, X), X.flatten())
    Y = PointCloud(X.points[::-1])
    assert np.array_equal(chart_coordinates(X, Y), X.flatten())


def test_chart_small_displacement_matches_index_by_index():
    rng = np.random.default_rng(2)
    X = PointCloud(rng.uniform(size=(6, 2)))
    disp = rng.normal(size=(6, 2))
    disp *= 0.01 * X.min_separation() / np.linalg.norm(disp)
    Y = PointCloud(X.points + disp)
    perm = [list(p) for p in itertools.permutations(range(6))]
    costs = [((X.points - Y.points[p]) ** 2).sum() for p in perm]
    assert perm[int(np.argmin(costs))] == list(range(6))
    assert np.allclose(chart_coordinates(X, Y), X.flatten() + disp.ravel(), atol=1e-15)


def test_chart_is_isometric_inside_radius():
    rng = np.random.default_rng(3)
    X = PointCloud(rng.uniform(size=(10, 2)))
    d = rng.normal(size=(10, 2))
    Y = PointCloud(X.points + d * 0.1 * X.min_separation() / np.linalg.norm(d))
    cy = chart_coordinates(X, Y)
    assert np.linalg.norm(cy - X.flatten()) == pytest.approx(wasserstein_distance(X, Y)[0], rel=1e-12)


def test_chart_warns_outside_radius():
    X = PointCloud([[0, 0], [1, 0], [0, 1]])
    Y = PointCloud(X.points + 0.5)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        chart_coordinates(X, Y)
    assert any(issubclass(x.category, ChartValidityWarning) for x in w)


@given(cloud_pairs())
def test_chart_roundtrip_preserves_multiset(pair):
    X, Y = pair
    Z = from_chart_coordinates(X, chart_coordinates(X, Y, warn=False))
    assert sorted(map(tuple, Z.points)) == sorted(map(tuple, Y.points))


def _square_ring(n=40, seed=0):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, 2 * np.pi, n))
    return PointCloud(np.column_stack([np.cos(t) * (1 + 0.3 * np.cos(3 * t)), 0.6 * np.sin(t)]))


def test_icp_identity():
    X = _square_ring()
    T, err = icp_align(X, X)
    assert err == 0
    assert np.allclose(T.rotation, np.eye(2)) and np.allclose(T.translation, 0)


@pytest.mark.parametrize("deg", [3.0, 10.0, -7.0])
def test_icp_recovers_known_motion(deg):
    X = _square_ring(60, 1)
    S = RigidTransform(rotation_2d(np.deg2rad(deg)), np.array([0.3, -0.2]))
    T, err = icp_align(X, S(X))
    comp = T.compose(S)
    assert np.allclose(comp.rotation, np.eye(2), atol=1e-6)
    assert np.allclose(comp.translation, 0, atol=1e-6)
    assert err < 1e-10


def test_icp_noise_error_scale():
    rng = np.random.default_rng(5)
    X = _square_ring(60, 2)
    Y = PointCloud(X.points + rng.normal(scale=1e-3, size=X.points.shape))
    _, err = icp_align(X, Y)
    assert err <= 2 * (1e-3) ** 2 * 2


def test_icp_transform_is_proper_rotation_in_3d():
    rng = np.random.default_rng(6)
    X = PointCloud(rng.normal(size=(30, 3)))
    R = random_rotation(3, rng)
    Y = PointCloud(X.points @ R.T)
    T, _ = icp_align(X, Y)
    assert np.allclose(T.rotation.T @ T.rotation, np.eye(3), atol=1e-10)
    assert np.linalg.det(T.rotation) == pytest.approx(1.0)


def test_icp_discrepancy_examples():
    X = _square_ring(50, 3)
    assert icp_discrepancy(X, X) == 0
    S = RigidTransform(rotation_2d(0.05), np.array([0.01, 0.02]))
    assert icp_discrepancy(X, S(X)) < 1e-6
    eps = 1e-3
    pts = X.points.copy()
    pts[0] += [eps, 0]
    Y = PointCloud(pts)
    assert icp_discrepancy(X, Y) <= eps + 1e-12


def test_csv_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    X = PointCloud(rng.normal(size=(20, 3)) * 1e-3 + 1 / 3, id="c", meta=tuple("ab" * 10))
    write_cloud_csv(X, tmp_path / "c.csv")
    Y = read_cloud(tmp_path / "c.csv")
    assert np.array_equal(X.points, Y.points)
    assert Y.meta == X.meta
    head = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert head == "x0,x1,x2,segment"


def test_json_roundtrip(tmp_path):
    X = PointCloud(np.random.default_rng(8).normal(size=(5, 2)))
    write_cloud_json(X, tmp_path / "c.json")
    assert np.array_equal(read_cloud(tmp_path / "c.json").points, X.points)
