"""Hole specifications and axis-aligned hole punching."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .cloud import VoxelGrid, as_points
from .exceptions import EmptyHoleWarning
from .frontier import HoleRegion


@dataclass
class HoleSpec:
    """Either an axis-aligned box or an explicit voxel list (optionally with its grid)."""

    box_min: np.ndarray | None = None
    box_max: np.ndarray | None = None
    voxels: np.ndarray | None = None
    grid_origin: np.ndarray | None = None
    voxel_edge: float | None = None
    seed: int | None = None

    def __post_init__(self):
        if (self.box_min is None) == (self.voxels is None):
            raise ValueError("a hole spec needs exactly one of a box or a voxel list")
        if self.box_min is not None:
            self.box_min = np.asarray(self.box_min, dtype=np.float64).reshape(3)
            self.box_max = np.asarray(self.box_max, dtype=np.float64).reshape(3)
            if not np.all(self.box_min < self.box_max):
                raise ValueError("box min must be strictly below box max on every axis")
        else:
            self.voxels = np.asarray(self.voxels, dtype=np.int64).reshape(-1, 3)

    @property
    def is_box(self) -> bool:
        return self.box_min is not None

    @property
    def box(self):
        return (self.box_min, self.box_max) if self.is_box else None

    @property
    def frame(self):
        """The pinned (origin, voxel_edge), if the spec carries one."""
        if self.voxel_edge is None:
            return None
        return np.asarray(self.grid_origin, dtype=np.float64).reshape(3), float(self.voxel_edge)

    def grid(self, cloud) -> VoxelGrid:
        """Voxel grid for `cloud`: the pinned frame if any, else calibrated on the cloud."""
        if self.frame is None:
            return VoxelGrid.from_cloud(cloud)
        origin, edge = self.frame
        return VoxelGrid.from_cloud(cloud, voxel_edge=edge, origin=origin)

    def to_dict(self) -> dict:
        if self.is_box:
            out = {"box": {"min": self.box_min.tolist(), "max": self.box_max.tolist()}}
        else:
            out = {"voxels": self.voxels.tolist()}
        if self.voxel_edge is not None:
            out["grid"] = {"origin": np.asarray(self.grid_origin).tolist(), "voxel_edge": self.voxel_edge}
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "HoleSpec":
        grid = data.get("grid") or {}
        common = dict(grid_origin=grid.get("origin"), voxel_edge=grid.get("voxel_edge"),
                      seed=data.get("seed"))
        if "box" in data:
            return cls(box_min=data["box"]["min"], box_max=data["box"]["max"], **common)
        if "voxels" in data:
            return cls(voxels=data["voxels"], **common)
        raise ValueError("hole spec JSON needs a 'box' or a 'voxels' key")

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def load(cls, path) -> "HoleSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def random_hole(cloud, fraction: float = 0.2, rng=None, spread: float = 0.2) -> HoleSpec:
    """Random box with per-axis extent in [(1-spread) f, (1+spread) f] x range, inside the bbox."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    pts = as_points(cloud)
    rng = np.random.default_rng(rng)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = hi - lo
    extent = rng.uniform((1 - spread) * fraction, (1 + spread) * fraction, 3) * span
    start = lo + rng.uniform(0.0, 1.0, 3) * (span - extent)
    # flat axes get a token thickness so the box stays valid
    extent = np.where(extent > 0, extent, 1e-9)
    return HoleSpec(box_min=start, box_max=start + extent)


def region_for(grid: VoxelGrid, spec: HoleSpec, removed=None, mode: str = "box") -> HoleRegion:
    """HOLE voxels for a spec: listed voxels, voxels that held removed points, or the whole box.

    The region remembers `grid`'s frame only when the spec pins one or lists voxels.
    """
    if not spec.is_box:
        region = HoleRegion.from_voxels(spec.voxels)
    elif mode == "points":
        region = HoleRegion.from_points(grid, removed if removed is not None else np.empty((0, 3)),
                                        box=spec.box)
    elif mode == "box":
        region = HoleRegion.from_box(grid, *spec.box)
    else:
        raise ValueError("mode must be 'points' or 'box'")
    if spec.frame is not None or not spec.is_box:
        region.frame = (grid.origin.copy(), grid.voxel_edge)
    return region


def punch_hole(cloud, spec: HoleSpec, mode: str = "box"):
    """Remove every point strictly inside the box.

    Returns (holed points, HoleRegion, removed points). The region is given in
    the voxel grid calibrated on the holed cloud; with mode="points" it is the
    set of voxels that held removed points, with mode="box" every voxel whose
    center lies in the box.
    """
    pts = as_points(cloud)
    if spec.is_box:
        inside = np.all((pts > spec.box_min) & (pts < spec.box_max), axis=1)
        # box holes live in the frame the holed cloud calibrates to, unless pinned
        grid = None
    else:
        # voxel lists are indices into the pre-punch (or pinned) frame and stay there
        grid = spec.grid(pts)
        inside = np.isin(grid.keys_of(pts), HoleRegion.from_voxels(spec.voxels).keys)
    removed = pts[inside]
    kept = pts[~inside]
    if removed.shape[0] == 0:
        warnings.warn("hole contains no points; cloud unchanged", EmptyHoleWarning, stacklevel=2)
    if kept.shape[0] < 2:
        return kept, HoleRegion.from_voxels(np.empty((0, 3))), removed
    if grid is None:
        grid = spec.grid(kept)
    else:
        grid = VoxelGrid.from_cloud(kept, voxel_edge=grid.voxel_edge, origin=grid.origin)
    return kept, region_for(grid, spec, removed, mode), removed
