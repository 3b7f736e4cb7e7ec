"""The exemplar fill loop: priority, match, optional refinement, point transfer."""

from __future__ import annotations

import enum
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .cloud import Cube, PointCloud, VoxelGrid, as_points, in_cube
from .exceptions import DegenerateGeometry, NoCandidates, SingularSystem
from .frontier import HoleRegion, PriorityCache, compute_fill_front, priorities
from .matcher import ICPOptions, default_stride, match_adaptive, match_fixed
from .nrt import match_points, refine

logger = logging.getLogger(__name__)


class Variant(str, enum.Enum):
    BASE = "base"
    BASE_ACS = "base_acs"
    BASE_NRT = "base_nrt"
    BASE_ACS_NRT = "base_acs_nrt"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("+", "_").replace("-", "_")
        for v in cls:
            if key in (v.value, v.name.lower()):
                return v
        raise ValueError(f"unknown variant {value!r}; choose from {[v.value for v in cls]}")

    @property
    def adaptive(self) -> bool:
        return self in (Variant.BASE_ACS, Variant.BASE_ACS_NRT)

    @property
    def nonrigid(self) -> bool:
        return self in (Variant.BASE_NRT, Variant.BASE_ACS_NRT)

    @property
    def label(self) -> str:
        return {"base": "Base", "base_acs": "Base+ACS", "base_nrt": "Base+NRT",
                "base_acs_nrt": "Base+ACS+NRT"}[self.value]


@dataclass
class FillConfig:
    variant: Variant = Variant.BASE_ACS_NRT
    base_n: int | None = None   # 10 for fixed-size variants, 5 for adaptive ones
    lam: float = 1.0
    mu: float = 1e-6
    k: int = 5
    t_factor: float = 1.0001
    n_max: int = 15
    max_icp: int = 30
    tol_icp: float | None = None
    icp_restarts: bool = True
    stride: int | None = None
    max_iter: int | None = None
    data_floor: float = 0.05
    local_priority: bool = True
    nrt_units: str = "voxel"
    hole_only: bool = True      # keep only transferred points that land in HOLE voxels

    def __post_init__(self):
        self.variant = Variant.parse(self.variant)
        for name in ("lam", "t_factor", "n_max", "max_icp", "k", "data_floor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.nrt_units not in ("voxel", "cube"):
            raise ValueError("nrt_units must be 'voxel' or 'cube'")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        for name in ("base_n", "stride", "max_iter", "tol_icp"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def cube_size(self) -> int:
        if self.base_n is not None:
            return int(self.base_n)
        return 5 if self.variant.adaptive else 10

    def icp_options(self) -> ICPOptions:
        return ICPOptions(max_icp=self.max_icp, tol=self.tol_icp, restarts=self.icp_restarts)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d


class Termination(str, enum.Enum):
    HOLE_FILLED = "hole_filled"
    TEMPLATE_COVERS_FRONT = "template_covers_front"
    FRONT_EMPTY = "front_empty"
    MAX_ITERATIONS = "max_iterations"
    NO_CANDIDATES = "no_candidates"


@dataclass
class FillReport:
    initial_count: int
    hole_voxels_initial: int
    records: list = field(default_factory=list)
    termination: Termination | None = None
    final_count: int | None = None
    hole_voxels_final: int | None = None
    dropped_duplicates: int = 0
    dropped_outside: int = 0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def points_transferred(self) -> int:
        return self.final_count - self.initial_count

    @property
    def unfillable(self) -> bool:
        return self.termination in (Termination.MAX_ITERATIONS, Termination.NO_CANDIDATES)

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "points_transferred": self.points_transferred,
            "termination": self.termination.value if self.termination else None,
            "unfillable": self.unfillable,
            "initial_count": self.initial_count,
            "final_count": self.final_count,
            "hole_voxels_initial": self.hole_voxels_initial,
            "hole_voxels_final": self.hole_voxels_final,
            "dropped_duplicates": self.dropped_duplicates,
            "dropped_outside": self.dropped_outside,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(r, sort_keys=True) for r in self.records]
        lines.append(json.dumps({"summary": self.summary()}, sort_keys=True))
        return "\n".join(lines) + "\n"


def transfer_points(template: Cube, refined_candidate: Cube, pairs=None) -> np.ndarray:
    """Candidate points that no template point picked as its nearest, in candidate order."""
    if pairs is None:
        pairs = match_points(template, refined_candidate)
    return refined_candidate.points[pairs.unmatched]


def _new_points(points: np.ndarray, cloud: PointCloud):
    """Drop exact duplicates of existing points or of each other."""
    if points.shape[0] == 0:
        return points, 0
    d, _ = cloud.tree.query(points, k=1)
    fresh = points[d > 0]
    if fresh.shape[0]:
        _, first = np.unique(fresh, axis=0, return_index=True)
        fresh = fresh[np.sort(first)]
    return fresh, points.shape[0] - fresh.shape[0]


def _round(v):
    return [float(c) for c in np.asarray(v).ravel()]


def fill_hole(cloud, hole: HoleRegion, config: FillConfig | None = None,
              grid: VoxelGrid | None = None):
    """Fill `hole` by repeated exemplar transfer; returns (filled points, FillReport).

    The input cloud is never modified: filled points are appended after the
    original ones. When `grid` is omitted it is calibrated from `cloud`, and
    the hole voxels are interpreted in that grid, unless the region carries
    its own frame.
    """
    config = config or FillConfig()
    pts = as_points(cloud.points if isinstance(cloud, PointCloud) else cloud)
    grid = hole.grid_for(pts) if grid is None else grid.copy()
    hole.apply(grid)
    e = grid.voxel_edge
    n_prio = config.cube_size
    stride = config.stride or default_stride(pts.shape[0])
    max_iter = config.max_iter or max(1, 10 * len(grid.hole))
    options = config.icp_options()
    cache = PriorityCache() if config.local_priority else None
    masked: dict[int, int] = {}
    report = FillReport(initial_count=pts.shape[0], hole_voxels_initial=len(grid.hole))
    current = PointCloud(pts)

    it = 0
    while True:
        if not grid.hole:
            report.termination = Termination.HOLE_FILLED
            break
        if it >= max_iter:
            report.termination = Termination.MAX_ITERATIONS
            break
        front = compute_fill_front(grid, current)
        if len(front) == 0:
            report.termination = Termination.FRONT_EMPTY
            break
        front = priorities(front, current, grid, n_prio, config.data_floor, cache)
        masked = {i: until for i, until in masked.items() if until > it}
        p_idx = front.argmax(exclude=masked.keys())
        if p_idx is None:
            report.termination = Termination.NO_CANDIDATES
            break
        record = {"iteration": it, "p_index": p_idx, "p": _round(current.points[p_idx]),
                  "front_size": len(front)}
        tick = time.perf_counter()
        it += 1
        try:
            if config.variant.adaptive:
                match = match_adaptive(current, grid, p_idx, n_prio, config.n_max,
                                       config.t_factor, stride, options)
            else:
                match = match_fixed(current, grid, p_idx, n_prio, stride, options)
        except (NoCandidates, DegenerateGeometry) as exc:
            masked[p_idx] = it + len(front)
            record.update(status="no_match", reason=type(exc).__name__, transferred=0,
                          hole_voxels=len(grid.hole), seconds=time.perf_counter() - tick)
            report.records.append(record)
            logger.debug("iteration %d: %s", it - 1, record)
            continue

        template = match.template
        aligned = Cube(center=template.center, n=match.n, voxel_edge=e,
                       indices=match.candidate.indices, points=match.aligned_points())
        pre = match.alignment.score
        if config.variant.nonrigid:
            try:
                aligned, _, _ = refine(template, aligned, config.lam, config.mu, config.k,
                                        config.nrt_units)
            except SingularSystem as exc:
                logger.warning("non-rigid step skipped at point %d: %s", p_idx, exc)
        pairs = match_points(template, aligned)
        post = float(np.max(np.linalg.norm(template.points - aligned.points[pairs.y_index], axis=1)))
        moved, dropped = _new_points(transfer_points(template, aligned, pairs), current)
        report.dropped_duplicates += dropped
        outside = 0
        if config.hole_only and moved.shape[0]:
            inside = np.fromiter((k in grid.hole for k in grid.keys_of(moved).tolist()), bool, moved.shape[0])
            outside = int((~inside).sum())
            moved = moved[inside]
            report.dropped_outside += outside

        if moved.shape[0]:
            keys = grid.keys_of(moved)
            grid.source.update(keys.tolist())
            grid.hole.difference_update(keys.tolist())
            # the template cube now counts as covered, like a copied image patch
            hole_keys = grid.hole_array()
            if hole_keys.size:
                covered = in_cube(grid.centers(hole_keys), template.center, template.half_width)
                grid.hole.difference_update(hole_keys[covered].tolist())
            current = PointCloud(np.vstack([current.points, moved]))
            if cache is not None:
                cache.invalidate_near(current.points, template.center, 2 * max(match.n, n_prio) * e)
        else:
            masked[p_idx] = it + len(front)

        record.update(status="matched", q_index=match.q_index, q=_round(match.candidate.center),
                      n=match.n, sizes=match.sizes, ohd_rigid=pre, ohd_final=post,
                      transferred=int(moved.shape[0]), dropped=int(dropped), outside=outside,
                      hole_voxels=len(grid.hole), seconds=time.perf_counter() - tick)
        report.records.append(record)
        logger.debug("iteration %d: %s", it - 1, record)

        if moved.shape[0] and np.all(in_cube(current.points[front.indices], template.center,
                                            template.half_width)):
            report.termination = Termination.TEMPLATE_COVERS_FRONT
            break

    report.final_count = len(current)
    report.hole_voxels_final = len(grid.hole)
    logger.info("fill finished: %s after %d iterations, %d points added",
                report.termination.value, report.iterations, report.points_transferred)
    return current.points.copy(), report
