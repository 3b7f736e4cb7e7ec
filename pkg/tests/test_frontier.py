import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import plane_cloud
from oracles import cube_scan, front_scan
from pcinpaint.cloud import PointCloud, VoxelGrid, pack_keys
from pcinpaint.exceptions import TooFewPoints
from pcinpaint.frontier import (FillFront, HoleRegion, PriorityCache, compute_fill_front,
                                confidence, data_term, priorities, surface_variation)
from pcinpaint.holes import HoleSpec, punch_hole


def _holed_plane(extent=24, lo=8, hi=15):
    pts = plane_cloud(extent)
    spec = HoleSpec(box_min=[lo - 0.5, lo - 0.5, -1], box_max=[hi + 0.5, hi + 0.5, 1])
    holed, region, _ = punch_hole(pts, spec)
    grid = VoxelGrid.from_cloud(holed)
    region.apply(grid)
    return holed, grid, region


def test_front_matches_adjacency_scan():
    holed, grid, _ = _holed_plane()
    front = compute_fill_front(grid, holed)
    assert np.array_equal(front.indices, front_scan(grid, holed))
    assert len(front) > 0


def test_front_voxels_are_source_and_touch_hole():
    holed, grid, _ = _holed_plane()
    front = compute_fill_front(grid, holed)
    keys = grid.keys_of(holed[front.indices])
    assert set(keys.tolist()) <= grid.source
    assert not set(keys.tolist()) & grid.hole


def test_unreachable_hole_gives_empty_front():
    pts = plane_cloud(8)
    grid = VoxelGrid.from_cloud(pts)
    grid.hole = {int(pack_keys(np.array([[100, 100, 100]]))[0])}
    assert len(compute_fill_front(grid, pts)) == 0


def test_single_hole_voxel_front_is_its_neighbours():
    g = np.arange(5, dtype=np.float64)
    xx, yy, zz = np.meshgrid(g, g, g, indexing="ij")
    block = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    center = np.all(block == 2, axis=1)
    pts = block[~center]
    grid = VoxelGrid.from_cloud(pts, voxel_edge=1.0, origin=[-0.5, -0.5, -0.5])
    HoleRegion.from_voxels([[2, 2, 2]]).apply(grid)
    front = compute_fill_front(grid, pts)
    assert len(front) == 26


def test_confidence_examples(rng):
    assert confidence(np.array([[0.0, 0, 0]]), [0, 0, 0], 5, 1.0) == 1
    pts = np.vstack([[0, 0, 0], rng.uniform(-2, 2, (9, 3)), [[10, 10, 10]]])
    assert confidence(pts, pts[0], 5, 1.0) == 10
    for _ in range(10):
        cloud = rng.uniform(0, 10, (200, 3))
        p = cloud[rng.integers(200)]
        assert confidence(cloud, p, 5, 0.7) == cube_scan(cloud, p, 5, 0.7).size


def test_data_term_planar_is_floor():
    pts = plane_cloud(5)
    assert data_term(pts, pts[12], 5, 1.0) == pytest.approx(0.05)


def test_data_term_isotropic_blob_near_one(rng):
    blob = rng.normal(size=(4000, 3))
    # eigenvalues of a sampled isotropic covariance are all close, so sigma is near 1/3
    assert abs(surface_variation(blob) - 1 / 3) < 0.1 / 3
    assert data_term(blob, np.zeros(3), 100, 1.0) > 0.9


def test_data_term_ridge_above_plane():
    g = np.linspace(-2, 2, 9)
    left = np.array([[x, y, -x] for x in g if x <= 0 for y in g])
    right = np.array([[x, y, x] for x in g if x > 0 for y in g])
    ridge = np.vstack([left, right])
    plane = plane_cloud(9) - [4, 4, 0]
    assert data_term(ridge, np.zeros(3), 5, 1.0) > data_term(plane, np.zeros(3), 5, 1.0)


def test_data_term_few_points():
    pts = np.array([[0, 0, 0], [0.1, 0, 0.0]])
    assert data_term(pts, pts[0], 5, 1.0) == 0.05
    with pytest.raises(TooFewPoints):
        data_term(pts, pts[0], 5, 1.0, strict=True)


def test_priority_argmax_examples():
    one = FillFront(indices=np.array([7]), priorities=np.array([0.1]))
    assert one.argmax() == 7
    two = FillFront(indices=np.array([3, 9]), priorities=np.array([0.5 * 3, 0.5 * 7]))
    assert two.argmax() == 9
    tie = FillFront(indices=np.array([4, 2, 8]), priorities=np.array([1.0, 2.0, 2.0]))
    assert tie.argmax() == 2
    assert tie.argmax(exclude={2, 8}) == 4
    assert tie.argmax(exclude={2, 4, 8}) is None


def test_priorities_match_independent_formula(rng):
    holed, grid, _ = _holed_plane()
    holed = holed + np.column_stack([np.zeros((len(holed), 2)), rng.uniform(0, 0.3, len(holed))])
    front = priorities(compute_fill_front(grid, holed), holed, grid, n=5)
    e = grid.voxel_edge
    expected = []
    for i in front.indices:
        res = holed[cube_scan(holed, holed[i], 5, e)]
        c = res - res.mean(axis=0)
        lam = np.sort(np.linalg.eigvalsh(c.T @ c))
        sigma = lam[0] / lam.sum()
        d = 0.05 + 0.95 * min(1.0, 3 * sigma)
        expected.append(d * len(res))
    assert np.allclose(front.priorities, expected, rtol=1e-9)
    assert np.all(front.priorities > 0)
    assert front.argmax() == int(front.indices[int(np.argmax(expected))])


@given(st.floats(0.01, 100))
def test_scaling_data_term_keeps_argmax(scale):
    rng = np.random.default_rng(3)
    front = FillFront(indices=np.arange(20), data=rng.uniform(0.05, 1, 20),
                      confidence=rng.integers(1, 30, 20))
    front.priorities = front.data * front.confidence
    scaled = FillFront(indices=front.indices, priorities=scale * front.data * front.confidence)
    assert scaled.argmax() == front.argmax()


def test_local_cache_equals_full_recompute(rng):
    holed, grid, _ = _holed_plane()
    cloud = PointCloud(holed)
    cache = PriorityCache()
    front = compute_fill_front(grid, cloud)
    priorities(front, cloud, grid, 5, cache=cache)
    # add points near one corner of the hole and refresh only nearby entries
    added = np.array([[8.0, 8.0, 0.2], [9.0, 8.0, 0.1], [8.0, 9.0, 0.3]])
    cloud2 = PointCloud(np.vstack([holed, added]))
    cache.invalidate_near(cloud2.points, added[0], 2 * 5 * grid.voxel_edge)
    front2 = compute_fill_front(grid, cloud2)
    local = priorities(front2, cloud2, grid, 5, cache=cache)
    full = priorities(front2, cloud2, grid, 5)
    assert np.allclose(local.priorities, full.priorities)


def test_hole_region_from_box_and_points():
    pts = plane_cloud(10)
    grid = VoxelGrid.from_cloud(pts)
    region = HoleRegion.from_box(grid, [2.5, 2.5, -0.5], [5.5, 5.5, 0.5])
    assert len(region) > 0
    centers = grid.centers(region.keys)
    assert np.all((centers >= [2.5, 2.5, -0.5]) & (centers <= [5.5, 5.5, 0.5]))
    held = HoleRegion.from_points(grid, pts[:3])
    assert len(held) == 3
