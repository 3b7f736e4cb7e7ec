"""Synthetic voxelized test clouds.

Surfaces are sampled densely and snapped to an integer lattice (one point per
occupied cell), the same form as voxelized capture data. Each cloud spans
2**D - 1 lattice steps on its longest axis, so octree calibration lands on a
voxel edge just under one lattice step.
"""

from __future__ import annotations

import numpy as np


def voxelize(points: np.ndarray, step: float = 1.0) -> np.ndarray:
    """Snap points to a lattice of the given step and keep one point per cell."""
    cells = np.unique(np.round(np.asarray(points) / step).astype(np.int64), axis=0)
    return cells.astype(np.float64) * step


def _height_field(x_extent, y_extent, height, oversample=4):
    u = np.linspace(0, x_extent, oversample * x_extent + 1)
    v = np.linspace(0, y_extent, oversample * y_extent + 1)
    xx, yy = np.meshgrid(u, v, indexing="ij")
    return xx, yy, height(xx, yy)


def _fill_columns(xx, yy, zz):
    """Dense samples of a height field including its steep walls."""
    pts = [np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])]
    # vertical segments between neighbouring samples keep steep slopes watertight
    for axis in (0, 1):
        z0 = zz
        z1 = np.roll(zz, -1, axis=axis)
        lo = np.minimum(z0, z1)
        hi = np.maximum(z0, z1)
        steps = int(np.ceil((hi - lo).max())) * 2
        for t in np.linspace(0, 1, steps + 1):
            z = lo + t * (hi - lo)
            pts.append(np.column_stack([xx.ravel(), yy.ravel(), z.ravel()]))
    return np.vstack(pts)


def plane_with_ridge(extent: int = 63, height: float = 20.0, width: float = 24.0) -> np.ndarray:
    """Flat square with a sharp triangular ridge and a shallower parallel valley."""
    def h(x, y):
        ridge = height * np.clip(1.0 - np.abs(x - 0.35 * extent) / (0.5 * width), 0.0, None)
        valley = -0.5 * height * np.clip(1.0 - np.abs(x - 0.75 * extent) / (0.4 * width), 0.0, None)
        return ridge + valley

    xx, yy, zz = _height_field(extent, extent, h)
    return voxelize(_fill_columns(xx, yy, zz))


def torus_section(major: float = 23.0, minor: float = 8.5, sweep_degrees: float = 270.0) -> np.ndarray:
    """Part of a torus swept through `sweep_degrees` around the z axis."""
    na = int(np.ceil(np.deg2rad(sweep_degrees) * (major + minor) * 4))
    nb = int(np.ceil(2 * np.pi * minor * 4))
    a = np.linspace(0.0, np.deg2rad(sweep_degrees), na)
    b = np.linspace(0.0, 2 * np.pi, nb, endpoint=False)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    ring = major + minor * np.cos(bb)
    pts = np.column_stack([(ring * np.cos(aa)).ravel(), (ring * np.sin(aa)).ravel(),
                           (minor * np.sin(bb)).ravel()])
    return voxelize(pts)


def _bumps(x, y, centers):
    z = np.zeros_like(x)
    for cx, cy, amp, s in centers:
        z += amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s))
    return z


def duplicated_patch(width: int = 28, length: int = 63, gap: int = 7, seed: int = 0) -> np.ndarray:
    """Two identical bumpy height fields side by side along x."""
    rng = np.random.default_rng(seed)
    centers = [(rng.uniform(0.2, 0.8) * width, rng.uniform(0.1, 0.9) * length,
                rng.uniform(4.0, 8.0), rng.uniform(3.0, 5.0)) for _ in range(6)]
    xx, yy, zz = _height_field(width, length, lambda x, y: _bumps(x, y, centers))
    patch = voxelize(_fill_columns(xx, yy, zz))
    other = patch + np.array([width + gap, 0.0, 0.0])
    return np.vstack([patch, other])


CLOUDS = {
    "plane_ridge": plane_with_ridge,
    "torus": torus_section,
    "duplicated_patch": duplicated_patch,
}


def make(name: str) -> np.ndarray:
    try:
        return CLOUDS[name]()
    except KeyError:
        raise ValueError(f"unknown synthetic cloud {name!r}; choose from {sorted(CLOUDS)}") from None
