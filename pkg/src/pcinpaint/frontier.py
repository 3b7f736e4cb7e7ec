"""Hole region, fill front and priority computation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud, VoxelGrid, as_points, cube_members, extract_cube, pack_keys
from .exceptions import TooFewPoints

logger = logging.getLogger(__name__)

DATA_TERM_FLOOR = 0.05
# surface variation of an isotropic point distribution
SIGMA_REF = 1.0 / 3.0
MAX_BOX_VOXELS = 20_000_000


@dataclass
class HoleRegion:
    """Voxels labelled HOLE, plus the box that generated them if any.

    `frame` is the (origin, voxel_edge) the indices refer to; None means the
    grid calibrated on whatever cloud the region is applied to.
    """

    voxels: np.ndarray
    box: tuple[np.ndarray, np.ndarray] | None = None
    frame: tuple[np.ndarray, float] | None = None

    def __len__(self) -> int:
        return int(np.asarray(self.voxels).shape[0])

    @property
    def keys(self) -> np.ndarray:
        return pack_keys(self.voxels)

    @classmethod
    def from_voxels(cls, voxels) -> "HoleRegion":
        arr = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
        return cls(voxels=np.unique(arr, axis=0))

    @classmethod
    def from_points(cls, grid: VoxelGrid, points, box=None) -> "HoleRegion":
        """Voxels that held the given (removed) points."""
        pts = as_points(points) if len(points) else np.empty((0, 3))
        vox = grid.index_of(pts) if pts.size else np.empty((0, 3), dtype=np.int64)
        region = cls.from_voxels(vox)
        region.box = box
        return region

    @classmethod
    def from_box(cls, grid: VoxelGrid, lo, hi) -> "HoleRegion":
        """Voxels whose centers lie inside the closed box [lo, hi]."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        first = np.ceil((lo - grid.origin) / grid.voxel_edge - 0.5).astype(np.int64)
        last = np.floor((hi - grid.origin) / grid.voxel_edge - 0.5).astype(np.int64)
        extent = np.maximum(last - first + 1, 0)
        if int(np.prod(extent)) > MAX_BOX_VOXELS:
            raise ValueError(f"hole box spans {int(np.prod(extent))} voxels; voxel size too small")
        axes = [np.arange(first[i], last[i] + 1) for i in range(3)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        return cls(voxels=mesh, box=(lo, hi))

    def grid_for(self, cloud) -> VoxelGrid:
        if self.frame is None:
            return VoxelGrid.from_cloud(cloud)
        origin, edge = self.frame
        return VoxelGrid.from_cloud(cloud, voxel_edge=edge, origin=origin)

    def apply(self, grid: VoxelGrid) -> VoxelGrid:
        """Label this region HOLE on `grid` (voxels holding points stay SOURCE)."""
        grid.set_hole(self.keys if len(self) else [])
        return grid


@dataclass
class FillFront:
    """Source points bordering HOLE voxels, sorted by point index."""

    indices: np.ndarray
    priorities: np.ndarray | None = None
    data: np.ndarray | None = None
    confidence: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.indices.size)

    def argmax(self, exclude=None) -> int | None:
        """Point index of highest priority; ties go to the lowest index."""
        if self.priorities is None:
            raise ValueError("priorities have not been computed")
        pri = self.priorities.copy()
        if exclude is not None and len(exclude):
            pri[np.isin(self.indices, np.asarray(list(exclude), dtype=np.int64))] = -np.inf
        if pri.size == 0 or not np.isfinite(pri.max()):
            return None
        return int(self.indices[int(np.argmax(pri))])


def compute_fill_front(grid: VoxelGrid, cloud, hole: HoleRegion | None = None) -> FillFront:
    """All cloud points whose voxel is 26-adjacent to a HOLE voxel."""
    if hole is not None and not grid.hole:
        hole.apply(grid)
    pts = cloud.points if isinstance(cloud, PointCloud) else as_points(cloud)
    near_hole = grid.dilated_hole()
    if near_hole.size == 0:
        return FillFront(indices=np.empty(0, dtype=np.int64))
    mask = np.isin(grid.keys_of(pts), near_hole)
    return FillFront(indices=np.flatnonzero(mask).astype(np.int64))


def confidence(cloud, p, n: int, voxel_edge: float) -> int:
    """Number of source points in the cube of size n around p (p included)."""
    return len(extract_cube(cloud, p, n, voxel_edge))


def surface_variation(points: np.ndarray) -> float:
    """Smallest covariance eigenvalue over the eigenvalue sum."""
    centered = points - points.mean(axis=0)
    evals = np.linalg.eigvalsh(centered.T @ centered)
    total = evals.sum()
    if total <= 0:
        return 0.0
    return float(max(evals[0], 0.0) / total)


def _scale_variation(sigma, floor):
    return floor + (1.0 - floor) * np.minimum(1.0, np.asarray(sigma) / SIGMA_REF)


def data_term(cloud, p, n: int, voxel_edge: float, floor: float = DATA_TERM_FLOOR,
              strict: bool = False) -> float:
    """Ridge/valley score in [floor, 1] from PCA surface variation of the cube residents.

    Planar neighbourhoods score `floor`; isotropic ones approach 1. With fewer
    than three residents the score is undefined and `floor` is returned (or
    TooFewPoints is raised when `strict`).
    """
    cube = extract_cube(cloud, p, n, voxel_edge)
    if len(cube) < 3:
        if strict:
            raise TooFewPoints(f"cube holds {len(cube)} points, need 3")
        logger.debug("data term fallback: %d residents around %s", len(cube), p)
        return float(floor)
    return float(_scale_variation(surface_variation(cube.points), floor))


def _batch_terms(pts, members, floor):
    conf = np.array([m.size for m in members], dtype=np.int64)
    data = np.full(len(members), floor, dtype=np.float64)
    ok = np.flatnonzero(conf >= 3)
    if ok.size:
        covs = np.empty((ok.size, 3, 3))
        for row, i in enumerate(ok):
            res = pts[members[i]]
            c = res - res.mean(axis=0)
            covs[row] = c.T @ c
        evals = np.linalg.eigvalsh(covs)
        total = evals.sum(axis=1)
        sigma = np.where(total > 0, np.maximum(evals[:, 0], 0.0) / np.where(total > 0, total, 1.0), 0.0)
        data[ok] = _scale_variation(sigma, floor)
    return data, conf


@dataclass
class PriorityCache:
    """Per-point (data, confidence) terms kept between fill iterations."""

    terms: dict = field(default_factory=dict)

    def invalidate_near(self, points: np.ndarray, center, radius: float) -> None:
        if not self.terms:
            return
        idx = np.fromiter(self.terms.keys(), dtype=np.int64, count=len(self.terms))
        far = np.max(np.abs(points[idx] - np.asarray(center)), axis=1) > radius
        self.terms = {int(i): self.terms[int(i)] for i in idx[far]}

    def clear(self) -> None:
        self.terms.clear()


def priorities(front: FillFront, cloud, grid: VoxelGrid, n: int = 5,
               floor: float = DATA_TERM_FLOOR, cache: PriorityCache | None = None) -> FillFront:
    """Fill in P(p) = D(p) * C(p) for every front point."""
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    pts = cloud.points
    idx = front.indices
    data = np.empty(idx.size)
    conf = np.empty(idx.size, dtype=np.int64)
    todo = np.arange(idx.size)
    if cache is not None:
        hit = np.array([int(i) in cache.terms for i in idx], dtype=bool)
        for j in np.flatnonzero(hit):
            data[j], conf[j] = cache.terms[int(idx[j])]
        todo = np.flatnonzero(~hit)
    if todo.size:
        members = cube_members(cloud, pts[idx[todo]], n, grid.voxel_edge)
        d, c = _batch_terms(pts, members, floor)
        data[todo] = d
        conf[todo] = c
        if cache is not None:
            for j, dj, cj in zip(idx[todo], d, c):
                cache.terms[int(j)] = (float(dj), int(cj))
    return FillFront(indices=idx, priorities=data * conf, data=data, confidence=conf)
