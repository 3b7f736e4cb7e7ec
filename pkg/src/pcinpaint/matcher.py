"""Template matching: candidate search, rotation-only ICP and adaptive cube size."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._kernels import icp_batch, radial_bounds
from .cloud import Cube, PointCloud, VoxelGrid, cube_members, extract_cube
from .exceptions import DegenerateGeometry, NoCandidates

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RigidAlignment:
    rotation: np.ndarray
    pivot: np.ndarray
    score: float
    history: tuple = ()

    def apply(self, points: np.ndarray, center) -> np.ndarray:
        """Move points of a cube centered at `center` onto the pivot and rotate."""
        return self.pivot + (np.asarray(points) - np.asarray(center)) @ self.rotation.T


@dataclass
class ICPOptions:
    max_icp: int = 30
    tol: float | None = None  # absolute OHD improvement; None means 1e-4 * voxel edge
    restarts: bool = True

    def tolerance(self, voxel_edge: float) -> float:
        return 1e-4 * voxel_edge if self.tol is None else self.tol


@dataclass
class MatchResult:
    q_index: int
    n: int
    alignment: RigidAlignment
    template: Cube
    candidate: Cube
    sizes: list = field(default_factory=list)  # (n, |C|) per evaluated size
    threshold: float | None = None

    def aligned_points(self) -> np.ndarray:
        return self.alignment.apply(self.candidate.points, self.candidate.center)


def axis_rotation(axis: int, degrees: float) -> np.ndarray:
    t = np.deg2rad(degrees)
    c, s = np.cos(t), np.sin(t)
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    r = np.eye(3)
    r[i, i] = c
    r[j, j] = c
    r[i, j] = -s
    r[j, i] = s
    return r


def _start_rotations(restarts: bool, warm: np.ndarray | None = None) -> np.ndarray:
    first = np.eye(3) if warm is None else np.asarray(warm, dtype=np.float64)
    if not restarts:
        return first[None]
    extra = [axis_rotation(a, 90.0) @ first for a in range(3)]
    return np.stack([first, *extra])


def procrustes_rotation(h: np.ndarray) -> np.ndarray:
    """Rotation(s) R maximizing trace(R @ H) for H = sum(y x^T); det(R) = +1."""
    u, _, vt = np.linalg.svd(h)
    v = np.swapaxes(vt, -1, -2)
    ut = np.swapaxes(u, -1, -2)
    d = np.sign(np.linalg.det(v @ ut))
    d[d == 0] = 1.0
    fix = np.ones(h.shape[:-1])
    fix[..., 2] = d
    return (v * fix[..., None, :]) @ ut


def is_degenerate(points: np.ndarray, rtol: float = 1e-9) -> bool:
    """True for fewer than three points or (numerically) collinear sets."""
    if points.shape[0] < 3:
        return True
    s = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    return bool(s[0] == 0 or s[1] <= rtol * s[0])


def _flatten(locals_):
    sizes = np.fromiter((p.shape[0] for p in locals_), dtype=np.int64, count=len(locals_))
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    return np.ascontiguousarray(np.concatenate(locals_), dtype=np.float64), offsets


def align_batch(template_local: np.ndarray, candidate_locals: list, starts: np.ndarray,
                max_icp: int = 30, tol: float = 0.0, track: bool = False):
    """Rotation-only ICP of many candidates against one template, about the origin.

    `starts` holds either one stack of initial rotations shared by all
    candidates, shape (S, 3, 3), or per-candidate stacks, shape (B, S, 3, 3).
    Returns the best rotation and OHD per candidate (best over starts, the
    first start winning ties) and, with `track`, the running best OHD per sweep.
    """
    x = np.ascontiguousarray(template_local, dtype=np.float64)
    nb = len(candidate_locals)
    starts = np.asarray(starts, dtype=np.float64)
    if starts.ndim == 3:
        starts = np.broadcast_to(starts, (nb,) + starts.shape)
    starts = np.ascontiguousarray(starts)
    y, offsets = _flatten(candidate_locals)
    shape = (nb, starts.shape[1], max_icp + 1) if track else (0, 0, 0)
    history = np.full(shape, np.nan)
    best_rot, best = icp_batch(x, y, offsets, starts, int(max_icp), float(tol), history)
    histories = [None] * nb
    if track:
        for k in range(nb):
            runs = history[k]
            pick = int(np.argmin(np.nanmin(runs, axis=1)))  # first start wins ties
            histories[k] = tuple(float(v) for v in runs[pick] if not np.isnan(v))
    return best_rot, best, histories


def align_rigid(template: Cube, candidate: Cube, options: ICPOptions | None = None,
                init: np.ndarray | None = None) -> RigidAlignment:
    """Translate the candidate onto the template center and find the best rotation.

    Runs point-to-point ICP (template -> candidate correspondences, Procrustes
    update) and keeps the rotation with the lowest template-to-candidate OHD.
    """
    options = options or ICPOptions()
    if is_degenerate(template.points) or is_degenerate(candidate.points):
        raise DegenerateGeometry("cube points are too few or collinear to fix a rotation")
    tol = options.tolerance(template.voxel_edge)
    rot, score, hist = align_batch(
        template.points - template.center,
        [candidate.points - candidate.center],
        _start_rotations(options.restarts, init),
        options.max_icp,
        tol,
        track=True,
    )
    return RigidAlignment(rotation=rot[0], pivot=template.center.copy(), score=float(score[0]),
                          history=hist[0])


def degenerate_mask(pts: np.ndarray, members: list, rtol: float = 1e-9) -> np.ndarray:
    """is_degenerate for many index sets at once."""
    out = np.ones(len(members), dtype=bool)
    sizes = np.fromiter((m.size for m in members), dtype=np.int64, count=len(members))
    big = np.flatnonzero(sizes >= 3)
    if big.size == 0:
        return out
    padded = np.zeros((big.size, int(sizes[big].max()), 3))
    for row, i in enumerate(big):
        p = pts[members[i]]
        padded[row, : p.shape[0]] = p - p.mean(axis=0)
    s = np.linalg.svd(padded, compute_uv=False)
    out[big] = (s[:, 0] == 0) | (s[:, 1] <= rtol * s[:, 0])
    return out


def _hole_free(grid: VoxelGrid, centers: np.ndarray, n: int, tree=None) -> np.ndarray:
    """True where the cube of size n at each center overlaps no HOLE voxel."""
    if not grid.hole:
        return np.ones(centers.shape[0], dtype=bool)
    if tree is None:
        tree = cKDTree(grid.centers(grid.hole_array()))
    d, _ = tree.query(centers, k=1, p=np.inf)
    return d >= 0.5 * (n + 1) * grid.voxel_edge


def default_stride(count: int) -> int:
    return max(1, int(np.ceil(count / 50_000)))


def stride_sample(count: int, stride: int) -> np.ndarray:
    """About one in `stride` point indices, chosen by a multiplicative hash of the index.

    Plain every-s-th sampling aliases with the regular column layout of
    voxelized clouds and can miss every exact copy of a patch. The hash keeps
    the choice deterministic and stable when points are appended.
    """
    idx = np.arange(count, dtype=np.int64)
    stride = max(1, int(stride))
    if stride == 1:
        return idx
    mixed = (idx.astype(np.uint64) * np.uint64(2654435761)) & np.uint64(0xFFFFFFFF)
    return idx[(mixed >> np.uint64(16)) % np.uint64(stride) == 0]


def _candidate_pool(cloud: PointCloud, grid: VoxelGrid, n: int, min_count: int, stride: int,
                    hole_tree=None):
    pts = cloud.points
    idx = stride_sample(len(cloud), stride)
    idx = idx[_hole_free(grid, pts[idx], n, hole_tree)]
    members = cube_members(cloud, pts[idx], n, grid.voxel_edge) if idx.size else []
    keep = [i for i, m in enumerate(members) if m.size >= max(min_count, 3)]
    keep = [i for i, flat in zip(keep, degenerate_mask(pts, [members[i] for i in keep])) if not flat]
    return idx[keep], [members[i] for i in keep]


def enumerate_candidates(cloud, grid: VoxelGrid, template_center, n: int, stride: int = 1) -> np.ndarray:
    """Point indices q whose size-n cube avoids the hole and is at least as dense as the template."""
    if n < 5:
        raise ValueError("candidate cubes start at n = 5")
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    need = len(extract_cube(cloud, template_center, n, grid.voxel_edge))
    idx, _ = _candidate_pool(cloud, grid, n, need, stride)
    return idx


def best_match_fixed_n(template: Cube, candidates: list, options: ICPOptions | None = None):
    """Candidate (position in `candidates`) with the lowest aligned OHD, ties to the first."""
    if not candidates:
        raise NoCandidates("no candidate cubes to match")
    options = options or ICPOptions()
    if is_degenerate(template.points):
        raise DegenerateGeometry("template is too small or collinear")
    rot, score, _ = align_batch(
        template.points - template.center,
        [c.points - c.center for c in candidates],
        _start_rotations(options.restarts),
        options.max_icp,
        options.tolerance(template.voxel_edge),
    )
    best = int(np.argmin(score))
    return best, RigidAlignment(rotation=rot[best], pivot=template.center.copy(), score=float(score[best]))


def radial_bound(template_local: np.ndarray, candidate_local: np.ndarray) -> float:
    """Lower bound on the template-to-candidate OHD over every rotation about the origin.

    Rotations preserve each point's distance from the pivot, so no rotation
    can bring a template point closer to the candidate than the nearest
    candidate radius allows.
    """
    rx = np.linalg.norm(template_local, axis=1)
    ry = np.sort(np.linalg.norm(candidate_local, axis=1))
    pos = np.searchsorted(ry, rx)
    above = ry[np.minimum(pos, ry.size - 1)]
    below = ry[np.maximum(pos - 1, 0)]
    gap = np.minimum(np.abs(above - rx), np.abs(rx - below))
    return float(gap.max())


def _score_pool(cloud, template, q_idx, members, options, warm=None, factor=1.0, bound=None):
    """ICP score per candidate; inf for candidates that provably cannot compete.

    Candidates are aligned in order of their radial lower bound. Evaluation
    stops once the next bound exceeds the cutoff: `bound` when given,
    otherwise `factor` times the best score found so far.
    """
    pts = cloud.points
    x = template.points - template.center
    locals_ = [pts[m] - pts[q] for q, m in zip(q_idx, members)]
    if warm is None:
        starts = _start_rotations(options.restarts)
    else:
        starts = np.stack([_start_rotations(options.restarts, w) for w in warm])
    tol = options.tolerance(template.voxel_edge)
    nb = len(locals_)
    ry, offsets = _flatten(locals_)
    lower = radial_bounds(np.linalg.norm(x, axis=1), np.linalg.norm(ry, axis=1), offsets)
    order = np.argsort(lower, kind="stable")
    rot = np.broadcast_to(np.eye(3), (nb, 3, 3)).copy()
    score = np.full(nb, np.inf)
    best = np.inf
    pos, size = 0, 16
    while pos < nb:
        cutoff = bound if bound is not None else factor * best
        chunk = order[pos:pos + size]
        chunk = chunk[lower[chunk] <= cutoff + 1e-12 * (1.0 + cutoff)]
        if chunk.size == 0:
            break
        chunk_starts = starts if warm is None else starts[chunk]
        r, s_, _ = align_batch(x, [locals_[i] for i in chunk], chunk_starts, options.max_icp, tol)
        rot[chunk] = r
        score[chunk] = s_
        best = min(best, float(s_.min()))
        pos += size
        size = min(2 * size, 512)
    return rot, score


def _result(cloud, grid, template, q, n, rot, score, sizes, threshold=None):
    cand = extract_cube(cloud, cloud.points[q], n, grid.voxel_edge)
    align = RigidAlignment(rotation=rot, pivot=template.center.copy(), score=float(score))
    return MatchResult(q_index=int(q), n=int(n), alignment=align, template=template,
                       candidate=cand, sizes=sizes, threshold=threshold)


def match_fixed(cloud, grid: VoxelGrid, p_index: int, n: int, stride: int = 1,
                options: ICPOptions | None = None) -> MatchResult:
    """Best match for the template around point `p_index` at a fixed cube size."""
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    options = options or ICPOptions()
    template = extract_cube(cloud, cloud.points[p_index], n, grid.voxel_edge)
    if is_degenerate(template.points):
        raise DegenerateGeometry("template is too small or collinear")
    q_idx, members = _candidate_pool(cloud, grid, n, len(template), stride)
    if q_idx.size == 0:
        raise NoCandidates(f"no candidate cubes of size {n} for point {p_index}")
    rot, score = _score_pool(cloud, template, q_idx, members, options)
    best = int(np.argmin(score))
    return _result(cloud, grid, template, q_idx[best], n, rot[best], score[best], [(n, 1)])


def match_adaptive(cloud, grid: VoxelGrid, p_index: int, base_n: int = 5, n_max: int = 15,
                   t_factor: float = 1.0001, stride: int = 1,
                   options: ICPOptions | None = None) -> MatchResult:
    """Grow the template until a single candidate stays within the base-size threshold.

    The threshold is t_factor times the best OHD at the base size. Surviving
    candidates are re-aligned at n + 2, n + 4, ... (warm-started from their
    previous rotation); those above the threshold or touching the hole are
    dropped. A lone survivor wins at its size; if none survive, the best
    member of the previous size wins; at n_max the lowest score wins.
    """
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    options = options or ICPOptions()
    pts = cloud.points
    e = grid.voxel_edge
    n = base_n
    template = extract_cube(cloud, pts[p_index], n, e)
    if is_degenerate(template.points):
        raise DegenerateGeometry("template is too small or collinear")
    hole_tree = cKDTree(grid.centers(grid.hole_array())) if grid.hole else None
    q_idx, members = _candidate_pool(cloud, grid, n, len(template), stride, hole_tree)
    if q_idx.size == 0:
        raise NoCandidates(f"no candidate cubes of size {n} for point {p_index}")
    rot, score = _score_pool(cloud, template, q_idx, members, options, factor=t_factor)
    eps = float(score.min())
    threshold = t_factor * eps
    alive = np.flatnonzero(score <= threshold)
    q_c, rot_c, score_c = q_idx[alive], rot[alive], score[alive]
    sizes = [(n, int(alive.size))]

    while q_c.size > 1 and n + 2 <= n_max:
        n_next = n + 2
        template_next = extract_cube(cloud, pts[p_index], n_next, e)
        ok = _hole_free(grid, pts[q_c], n_next, hole_tree)
        grown = cube_members(cloud, pts[q_c], n_next, e)
        ok &= ~degenerate_mask(pts, grown)
        keep = np.flatnonzero(ok)
        if keep.size:
            r_new, s_new = _score_pool(cloud, template_next, q_c[keep],
                                       [grown[i] for i in keep], options, warm=rot_c[keep],
                                       bound=threshold)
            within = s_new <= threshold
            keep, r_new, s_new = keep[within], r_new[within], s_new[within]
        sizes.append((n_next, int(keep.size)))
        if keep.size == 0:
            best = int(np.argmin(score_c))
            return _result(cloud, grid, template, q_c[best], n, rot_c[best], score_c[best],
                           sizes, threshold)
        q_c, rot_c, score_c = q_c[keep], r_new, s_new
        n, template = n_next, template_next

    best = int(np.argmin(score_c))
    return _result(cloud, grid, template, q_c[best], n, rot_c[best], score_c[best], sizes, threshold)
