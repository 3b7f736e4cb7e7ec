"""Point cloud primitives: voxel calibration, voxel grid, cubes, kNN and OHD."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import (
    DegenerateCloud,
    DuplicatePoints,
    EmptySet,
    InsufficientPoints,
    OctreeDepthExceeded,
)

logger = logging.getLogger(__name__)

MAX_OCTREE_DEPTH = 21

# voxel keys pack three signed indices into one int64, 21 bits each
_KEY_BITS = 21
_KEY_OFFSET = 1 << (_KEY_BITS - 1)
_KEY_MASK = (1 << _KEY_BITS) - 1


def as_points(points) -> np.ndarray:
    """Return `points` as a finite float64 array of shape (N, 3)."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) array of points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


def deduplicate(points: np.ndarray) -> np.ndarray:
    """Drop exact duplicate rows, keeping first occurrences in order."""
    points = as_points(points)
    _, first = np.unique(points, axis=0, return_index=True)
    keep = np.sort(first)
    if keep.size < points.shape[0]:
        logger.warning("dropped %d duplicate points", points.shape[0] - keep.size)
    return points[keep]


class PointCloud:
    """Immutable ordered set of 3D points with a lazily built kd-tree."""

    def __init__(self, points, dedupe: bool = False):
        pts = deduplicate(points) if dedupe else as_points(points)
        if pts.shape[0] < 1:
            raise DegenerateCloud("a point cloud needs at least one point")
        pts = pts.copy()
        pts.setflags(write=False)
        self._points = pts
        self._tree = None

    @property
    def points(self) -> np.ndarray:
        return self._points

    def __len__(self) -> int:
        return self._points.shape[0]

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self._points.min(axis=0), self._points.max(axis=0)

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self._points)
        return self._tree


def _cloud_points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else as_points(cloud)


def bounding_cube(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Min corner and edge of the cube-ified axis-aligned bounding box."""
    lo = points.min(axis=0)
    edge = float((points.max(axis=0) - lo).max())
    return lo, edge


def _cell_index(points, origin, edge, depth):
    cells = 1 << depth
    idx = np.floor((points - origin) / (edge / cells)).astype(np.int64)
    return np.clip(idx, 0, cells - 1)


def calibrate_voxel_size(cloud, max_depth: int = MAX_OCTREE_DEPTH) -> float:
    """Edge of the smallest octree leaf once every point sits alone in a leaf.

    The octree starts from the cubic bounding box. A node is split while it
    holds two or more points, so the deepest leaf is found at the first level
    where all points occupy distinct cells.
    """
    pts = _cloud_points(cloud)
    if pts.shape[0] < 2:
        raise DegenerateCloud("voxel calibration needs at least two points")
    if np.unique(pts, axis=0).shape[0] < pts.shape[0]:
        raise DuplicatePoints("cloud contains exactly coincident points")
    origin, edge = bounding_cube(pts)
    for depth in range(1, max_depth + 1):
        idx = _cell_index(pts, origin, edge, depth)
        if np.unique(idx, axis=0).shape[0] == pts.shape[0]:
            return edge / (1 << depth)
    raise OctreeDepthExceeded(
        f"points still share octree cells at depth {max_depth}; "
        "cloud has near-coincident points"
    )


def pack_keys(idx: np.ndarray) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64).reshape(-1, 3)
    shifted = idx + _KEY_OFFSET
    if np.any(shifted < 0) or np.any(shifted > _KEY_MASK):
        raise ValueError("voxel index out of the packable range")
    return (shifted[:, 0] << (2 * _KEY_BITS)) | (shifted[:, 1] << _KEY_BITS) | shifted[:, 2]


def unpack_keys(keys) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64).reshape(-1)
    out = np.empty((keys.size, 3), dtype=np.int64)
    out[:, 0] = (keys >> (2 * _KEY_BITS)) & _KEY_MASK
    out[:, 1] = (keys >> _KEY_BITS) & _KEY_MASK
    out[:, 2] = keys & _KEY_MASK
    return out - _KEY_OFFSET


_NEIGHBOR_OFFSETS = np.array(
    [(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)], dtype=np.int64
)


class Label(enum.IntEnum):
    EMPTY = 0
    SOURCE = 1
    HOLE = 2


@dataclass
class VoxelGrid:
    """Sparse cubic voxel lattice over a cloud's bounding cube.

    Only SOURCE and HOLE voxels are stored (as packed int64 keys); everything
    else is EMPTY. The label sets are mutated by the fill loop only.
    """

    origin: np.ndarray
    voxel_edge: float
    dims: tuple[int, int, int]
    source: set = field(default_factory=set)
    hole: set = field(default_factory=set)

    @classmethod
    def from_cloud(cls, cloud, voxel_edge: float | None = None, origin=None) -> "VoxelGrid":
        """Grid over the cloud's bounding cube; `origin` and `voxel_edge` pin a foreign frame."""
        pts = _cloud_points(cloud)
        lo, edge = bounding_cube(pts)
        if voxel_edge is None:
            voxel_edge = calibrate_voxel_size(pts)
        if voxel_edge <= 0:
            raise ValueError("voxel_edge must be positive")
        if origin is not None:
            lo = np.asarray(origin, dtype=np.float64).reshape(3)
            edge = float(np.max(pts.max(axis=0) - lo))
        cells = max(1, int(np.ceil(edge / voxel_edge - 1e-9)))
        grid = cls(origin=lo.copy(), voxel_edge=float(voxel_edge), dims=(cells,) * 3)
        grid.source = set(grid.keys_of(pts).tolist())
        return grid

    def index_of(self, points) -> np.ndarray:
        """Voxel index per point; the bounding cube's max faces are closed."""
        pts = as_points(points)
        scaled = (pts - self.origin) / self.voxel_edge
        idx = np.floor(scaled).astype(np.int64)
        dims = np.asarray(self.dims, dtype=np.int64)
        on_max_face = (idx == dims) & (scaled - dims < 1e-9)
        idx[on_max_face] -= 1
        return idx

    def keys_of(self, points) -> np.ndarray:
        return pack_keys(self.index_of(points))

    def centers(self, keys) -> np.ndarray:
        return self.origin + (unpack_keys(keys) + 0.5) * self.voxel_edge

    def label(self, index) -> Label:
        key = int(pack_keys(np.asarray(index).reshape(1, 3))[0])
        if key in self.hole:
            return Label.HOLE
        if key in self.source:
            return Label.SOURCE
        return Label.EMPTY

    def counts(self) -> dict:
        total = int(np.prod(self.dims))
        inside = [k for k in self.source if self._inside(k)]
        hole_inside = [k for k in self.hole if self._inside(k)]
        return {
            Label.SOURCE: len(inside),
            Label.HOLE: len(hole_inside),
            Label.EMPTY: total - len(inside) - len(hole_inside),
        }

    def _inside(self, key) -> bool:
        idx = unpack_keys([key])[0]
        return bool(np.all(idx >= 0) and np.all(idx < np.asarray(self.dims)))

    def set_hole(self, keys) -> None:
        """Mark voxels as HOLE, skipping any that hold cloud points."""
        self.hole = {int(k) for k in np.asarray(keys, dtype=np.int64).ravel()} - self.source

    def hole_array(self) -> np.ndarray:
        return np.fromiter(self.hole, dtype=np.int64, count=len(self.hole))

    def dilated_hole(self) -> np.ndarray:
        """Packed keys of every voxel 26-adjacent to (or equal to) a HOLE voxel."""
        if not self.hole:
            return np.empty(0, dtype=np.int64)
        idx = unpack_keys(self.hole_array())
        around = (idx[:, None, :] + _NEIGHBOR_OFFSETS[None, :, :]).reshape(-1, 3)
        return np.unique(pack_keys(around))

    def copy(self) -> "VoxelGrid":
        return VoxelGrid(
            origin=self.origin.copy(),
            voxel_edge=self.voxel_edge,
            dims=self.dims,
            source=set(self.source),
            hole=set(self.hole),
        )


@dataclass(frozen=True)
class Cube:
    """Axis-aligned n x n x n voxel cube and the cloud points inside it."""

    center: np.ndarray
    n: int
    voxel_edge: float
    indices: np.ndarray
    points: np.ndarray

    @property
    def half_width(self) -> float:
        return 0.5 * self.n * self.voxel_edge

    def __len__(self) -> int:
        return self.indices.size


def in_cube(points: np.ndarray, center, half_width: float) -> np.ndarray:
    """Half-open membership: [center - h, center + h) on every axis."""
    d = points - np.asarray(center, dtype=np.float64)
    return np.all((d >= -half_width) & (d < half_width), axis=1)


def cube_members(cloud, centers, n: int, voxel_edge: float) -> list[np.ndarray]:
    """Resident point indices for many cube centers at once."""
    if isinstance(cloud, PointCloud):
        pts, tree = cloud.points, cloud.tree
    else:
        pts = as_points(cloud)
        tree = cKDTree(pts)
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    h = 0.5 * n * voxel_edge
    raw = tree.query_ball_point(centers, r=h, p=np.inf)
    lengths = np.fromiter((len(r) for r in raw), dtype=np.int64, count=len(raw))
    if lengths.sum() == 0:
        return [np.empty(0, dtype=np.int64) for _ in raw]
    flat = np.concatenate([np.asarray(r, dtype=np.int64) for r in raw])
    owner = np.repeat(np.arange(len(raw)), lengths)
    d = pts[flat] - centers[owner]
    keep = np.all((d >= -h) & (d < h), axis=1)
    out = []
    start = 0
    for length in lengths:
        seg = flat[start:start + length][keep[start:start + length]]
        out.append(np.sort(seg))
        start += length
    return out


def extract_cube(cloud, center, n: int, voxel_edge: float) -> Cube:
    """Cube of n voxels per edge centered at `center` (not lattice-snapped)."""
    if n < 1:
        raise ValueError("cube size n must be >= 1")
    if voxel_edge <= 0:
        raise ValueError("voxel_edge must be positive")
    pts = _cloud_points(cloud)
    center = np.asarray(center, dtype=np.float64).reshape(3)
    idx = cube_members(cloud, center[None, :], n, voxel_edge)[0]
    return Cube(center=center, n=int(n), voxel_edge=float(voxel_edge), indices=idx, points=pts[idx])


def knn(cloud, query, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of the k nearest points, ties by lowest index."""
    if isinstance(cloud, PointCloud):
        pts, tree = cloud.points, cloud.tree
    else:
        pts = as_points(cloud)
        tree = cKDTree(pts)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > pts.shape[0]:
        raise InsufficientPoints(f"k={k} exceeds the {pts.shape[0]} available points")
    query = np.asarray(query, dtype=np.float64).reshape(3)
    dk, _ = tree.query(query, k=k)
    radius = float(np.atleast_1d(dk)[-1])
    # gather everything tied with the k-th distance, then order deterministically
    near = np.asarray(tree.query_ball_point(query, r=radius * (1 + 1e-12) + 1e-300), dtype=np.int64)
    dist = np.linalg.norm(pts[near] - query, axis=1)
    order = np.lexsort((near, dist))[:k]
    return near[order], dist[order]


def ohd(from_set, to_set) -> float:
    """One-sided Hausdorff distance: max over `from_set` of the nearest distance into `to_set`."""
    a = _cloud_points(from_set) if isinstance(from_set, PointCloud) else np.asarray(from_set, dtype=np.float64)
    if a.size == 0:
        raise EmptySet("from_set is empty")
    if isinstance(to_set, PointCloud):
        tree = to_set.tree
    else:
        b = np.asarray(to_set, dtype=np.float64)
        if b.size == 0:
            raise EmptySet("to_set is empty")
        tree = cKDTree(b.reshape(-1, 3))
    d, _ = tree.query(a.reshape(-1, 3), k=1)
    return float(d.max())
