"""Non-rigid refinement of an aligned candidate cube with per-point linear maps.

Each candidate point y_i gets its own 3x3 matrix T_i acting on offsets from the
cube pivot. The maps minimize

    J = sum_pairs |x - T_i y_i|^2 + lam * sum_edges |T_i - T_j|_F^2 + mu * sum_i |T_i - I|_F^2

where pairs link every template point to its nearest candidate point and the
edges form a symmetrized k-NN graph over the candidate points. Offsets are
measured in voxel units so that `lam` does not depend on the cloud's length
unit. J is quadratic, so the minimizer is one sparse linear solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

from .cloud import Cube
from .exceptions import SingularSystem

DEFAULT_K = 5
DEFAULT_LAMBDA = 1.0
DEFAULT_MU = 1e-6
_EYE = np.eye(3).ravel()


@dataclass(frozen=True)
class MatchPairs:
    x: np.ndarray          # template points, one row per pair
    y_index: np.ndarray    # nearest candidate point for each template point
    y: np.ndarray          # candidate points (all of them)
    pivot: np.ndarray
    scale: float = 1.0

    @property
    def matched(self) -> np.ndarray:
        return np.unique(self.y_index)

    @property
    def unmatched(self) -> np.ndarray:
        mask = np.ones(self.y.shape[0], dtype=bool)
        mask[self.y_index] = False
        return np.flatnonzero(mask)

    def local(self):
        """Pivot-local template and candidate offsets in scale units."""
        return (self.x - self.pivot) / self.scale, (self.y - self.pivot) / self.scale


def nearest_indices(x: np.ndarray, y: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Index of the nearest row of y for each row of x; ties go to the lowest index."""
    out = np.empty(x.shape[0], dtype=np.int64)
    for lo in range(0, x.shape[0], chunk):
        d = np.linalg.norm(x[lo:lo + chunk, None, :] - y[None, :, :], axis=2)
        out[lo:lo + chunk] = np.argmin(d, axis=1)
    return out


def match_points(template, aligned_candidate, scale: float | None = None) -> MatchPairs:
    """Pair every template point with its Euclidean-nearest candidate point."""
    x = template.points if isinstance(template, Cube) else np.asarray(template, dtype=np.float64)
    y = aligned_candidate.points if isinstance(aligned_candidate, Cube) else np.asarray(
        aligned_candidate, dtype=np.float64)
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("both point sets must be nonempty")
    pivot = template.center if isinstance(template, Cube) else np.zeros(3)
    if scale is None:
        scale = template.voxel_edge if isinstance(template, Cube) else 1.0
    return MatchPairs(x=x, y_index=nearest_indices(x, y), y=y, pivot=np.asarray(pivot, dtype=np.float64),
                      scale=float(scale))


def knn_graph(points: np.ndarray, k: int = DEFAULT_K) -> np.ndarray:
    """Undirected k-NN edges as sorted (i, j) pairs with i < j, no duplicates."""
    n = points.shape[0]
    if n < 2:
        return np.empty((0, 2), dtype=np.int64)
    kk = min(k, n - 1)
    _, nbr = cKDTree(points).query(points, k=min(n, kk + 1))
    nbr = np.atleast_2d(nbr)
    rows = []
    for i in range(n):
        others = [int(j) for j in nbr[i] if j != i][:kk]
        rows.extend((min(i, j), max(i, j)) for j in others)
    edges = np.unique(np.asarray(rows, dtype=np.int64).reshape(-1, 2), axis=0)
    return edges


def assemble_cost(pairs: MatchPairs, edges: np.ndarray, lam: float = DEFAULT_LAMBDA,
                  mu: float = DEFAULT_MU):
    """Sparse least-squares system (A, b) with |A t - b|^2 = J.

    Unknown t stacks row-major vec(T_i): entry 9*i + 3*r + c is T_i[r, c].
    """
    if lam < 0 or mu < 0:
        raise ValueError("lam and mu must be nonnegative")
    xl, yl = pairs.local()
    nv = yl.shape[0]
    npairs = xl.shape[0]
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    ne = edges.shape[0]

    # distortion: 3 rows per pair, each touching one row of T_i
    pr = np.arange(3 * npairs).reshape(npairs, 3)
    d_rows = np.repeat(pr, 3, axis=1).ravel()
    base = 9 * pairs.y_index[:, None] + 3 * np.arange(3)[None, :]
    d_cols = (base[:, :, None] + np.arange(3)[None, None, :]).ravel()
    d_vals = np.repeat(yl[pairs.y_index][:, None, :], 3, axis=1).ravel()
    d_rhs = xl.ravel()

    off = 3 * npairs
    s_rows = off + np.arange(9 * ne)
    comp = np.tile(np.arange(9), ne)
    s_cols_i = 9 * np.repeat(edges[:, 0], 9) + comp
    s_cols_j = 9 * np.repeat(edges[:, 1], 9) + comp
    w = np.sqrt(lam)

    off2 = off + 9 * ne
    r_rows = off2 + np.arange(9 * nv)
    r_cols = np.arange(9 * nv)
    m = np.sqrt(mu)

    rows = np.concatenate([d_rows, s_rows, s_rows, r_rows])
    cols = np.concatenate([d_cols, s_cols_i, s_cols_j, r_cols])
    vals = np.concatenate([d_vals, np.full(9 * ne, w), np.full(9 * ne, -w), np.full(9 * nv, m)])
    a = sp.csr_matrix((vals, (rows, cols)), shape=(off2 + 9 * nv, 9 * nv))
    b = np.concatenate([d_rhs, np.zeros(9 * ne), np.tile(m * _EYE, nv)])
    return a, b


def solve_nrt(a, b) -> np.ndarray:
    """Solve the normal equations by sparse LU; returns an (N, 3, 3) stack."""
    ata = (a.T @ a).tocsc()
    atb = a.T @ b
    try:
        t = splu(ata).solve(atb)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    resid = np.max(np.abs(ata @ t - atb)) if t.size else 0.0
    if not np.all(np.isfinite(t)) or resid >= 1e-8 * (1.0 + np.max(np.abs(atb), initial=0.0)):
        raise SingularSystem(f"normal equations not solved to tolerance (residual {resid:.3g})")
    return t.reshape(-1, 3, 3)


def nrt_cost(stack: np.ndarray, pairs: MatchPairs, edges, lam: float = DEFAULT_LAMBDA,
             mu: float = DEFAULT_MU) -> float:
    xl, yl = pairs.local()
    stack = np.asarray(stack).reshape(-1, 3, 3)
    pred = np.einsum("nij,nj->ni", stack[pairs.y_index], yl[pairs.y_index])
    dist = np.sum((xl - pred) ** 2)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    smooth = np.sum((stack[edges[:, 0]] - stack[edges[:, 1]]) ** 2) if edges.size else 0.0
    reg = np.sum((stack - np.eye(3)) ** 2)
    return float(dist + lam * smooth + mu * reg)


def apply_nrt(stack: np.ndarray, candidate: Cube, pivot=None) -> Cube:
    """Move point i to pivot + T_i (y_i - pivot); pivot defaults to the cube center."""
    stack = np.asarray(stack).reshape(-1, 3, 3)
    if stack.shape[0] != len(candidate):
        raise ValueError("one transform per candidate point is required")
    pivot = candidate.center if pivot is None else np.asarray(pivot, dtype=np.float64)
    moved = pivot + np.einsum("nij,nj->ni", stack, candidate.points - pivot)
    return Cube(center=candidate.center, n=candidate.n, voxel_edge=candidate.voxel_edge,
                indices=candidate.indices, points=moved)


def refine(template: Cube, aligned: Cube, lam: float = DEFAULT_LAMBDA, mu: float = DEFAULT_MU,
           k: int = DEFAULT_K, units: str = "voxel"):
    """Fit and apply the per-point maps; returns (refined cube, stack, pairs used for the fit).

    `units` sets the length unit of the pivot-local offsets: "voxel" (one voxel
    edge) or "cube" (the cube half-width). It fixes how strongly λ smooths.
    """
    if units == "voxel":
        scale = template.voxel_edge
    elif units == "cube":
        scale = template.half_width
    else:
        raise ValueError("units must be 'voxel' or 'cube'")
    pairs = match_points(template, aligned, scale=scale)
    edges = knn_graph(aligned.points, k)
    stack = solve_nrt(*assemble_cost(pairs, edges, lam, mu))
    identity = np.broadcast_to(np.eye(3), stack.shape)
    if nrt_cost(identity, pairs, edges, lam, mu) <= nrt_cost(stack, pairs, edges, lam, mu):
        # exact rigid matches: the identity is the minimizer, without solver rounding
        return aligned, identity.copy(), pairs
    return apply_nrt(stack, aligned, pivot=template.center), stack, pairs
