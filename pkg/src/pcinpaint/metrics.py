"""Symmetric Hausdorff distances normalized by bounding-box volume."""

from __future__ import annotations

import numpy as np

from .cloud import as_points, ohd
from .exceptions import EmptySet


def bbox_volume(points) -> float:
    """Volume of the smallest axis-aligned box enclosing `points`."""
    pts = as_points(points)
    return float(np.prod(pts.max(axis=0) - pts.min(axis=0)))


def hausdorff(a, b) -> float:
    """Symmetric Hausdorff distance max{d(a, b), d(b, a)}."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if a.size == 0 or b.size == 0:
        raise EmptySet("Hausdorff distance needs two nonempty sets")
    return max(ohd(a, b), ohd(b, a))


def nshd(reconstructed, original, volume: float | None = None) -> float:
    """Hausdorff distance divided by the original cloud's bounding-box volume."""
    if volume is None:
        volume = bbox_volume(original)
    if volume <= 0:
        raise ValueError("normalizing volume must be positive")
    return hausdorff(reconstructed, original) / volume


def nshd_local(reconstructed, original, box, margin: float = 0.0, volume: float | None = None) -> float:
    """Hole-local variant: only points inside the dilated box are measured from.

    Each one-sided term starts from the points of one set that fall inside
    `box` grown by `margin` and measures to the whole other set, so the
    surrounding surface still counts as a valid nearest neighbour. A side with
    no points in the box contributes zero. This is not the paper-style
    full-cloud metric.
    """
    r = np.asarray(reconstructed, dtype=np.float64).reshape(-1, 3)
    o = np.asarray(original, dtype=np.float64).reshape(-1, 3)
    if r.size == 0 or o.size == 0:
        raise EmptySet("NSHD needs two nonempty sets")
    if volume is None:
        volume = bbox_volume(o)
    lo = np.asarray(box[0], dtype=np.float64) - margin
    hi = np.asarray(box[1], dtype=np.float64) + margin
    terms = [0.0]
    for src, dst in ((r, o), (o, r)):
        inside = src[np.all((src >= lo) & (src <= hi), axis=1)]
        if inside.size:
            terms.append(ohd(inside, dst))
    return max(terms) / volume
