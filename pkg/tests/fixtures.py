"""Hand-built lattice clouds for the adaptive-size matcher."""

import numpy as np

from pcinpaint.cloud import VoxelGrid
from pcinpaint.frontier import HoleRegion

# an asymmetric bump: no rotation about z maps it onto itself
BUMP = np.array([[0, 0, 1], [1, 0, 1], [0, 2, 1], [-1, -1, 1]], dtype=np.float64)
P = np.array([6.0, 6.0, 0.0])
Q1 = np.array([20.0, 6.0, 0.0])
Q2 = np.array([34.0, 6.0, 0.0])
# context feature: outside the 5-cube (|offset| = 3 > 2.5) but inside the 7-cube
FEATURE = np.array([[-3.0, -3.0, 1.0]])


def _plane(x_max=40, y_max=12):
    g = np.arange(x_max + 1, dtype=np.float64)
    h = np.arange(y_max + 1, dtype=np.float64)
    xx, yy = np.meshgrid(g, h, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])


def adaptive_fixture(copies, feature_at):
    """Plane with the bump at P and at each copy; FEATURE added around the listed centers.

    A single HOLE voxel two steps above P keeps P's own cube out of the
    candidate pool. Returns (points, grid, index of P).
    """
    parts = [_plane()]
    for c in (P, *copies):
        parts.append(c + BUMP)
    for c in feature_at:
        parts.append(c + FEATURE)
    pts = np.unique(np.vstack(parts), axis=0)
    grid = VoxelGrid.from_cloud(pts, voxel_edge=1.0, origin=[-0.5, -0.5, -0.5])
    hole_voxel = grid.index_of((P + [0, 0, 2])[None])
    HoleRegion.from_voxels(hole_voxel).apply(grid)
    p_index = int(np.flatnonzero(np.all(pts == P, axis=1))[0])
    return pts, grid, p_index


def index_of(points, target):
    return int(np.flatnonzero(np.all(points == target, axis=1))[0])
