"""scikit-learn style wrapper around the fill loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .cloud import VoxelGrid
from .exceptions import DuplicatePoints
from .frontier import HoleRegion
from .holes import HoleSpec, region_for
from .transfer import FillConfig, fill_hole


def _as_spec(hole) -> HoleSpec:
    if isinstance(hole, HoleSpec):
        return hole
    if isinstance(hole, dict):
        return HoleSpec.from_dict(hole)
    lo, hi = hole
    return HoleSpec(box_min=lo, box_max=hi)


class HoleFiller(BaseEstimator, TransformerMixin):
    """Fill a hole in an (N, 3) point array by exemplar transfer.

    `hole` is a HoleSpec, its JSON dict, a (min corner, max corner) pair, or a
    HoleRegion already expressed in the cloud's voxel grid. `fit` calibrates
    the voxel grid on the holed cloud and labels the hole; `transform` runs
    the fill and returns the original points followed by the transferred ones.

    Attributes set by fit: voxel_edge_, grid_, hole_region_.
    Attributes set by transform: report_.
    """

    def __init__(self, hole=None, variant="base_acs_nrt", base_n=None, lam=1.0, mu=1e-6,
                 k=5, t_factor=1.0001, n_max=15, max_icp=30, icp_restarts=True,
                 stride=None, max_iter=None, nrt_units="voxel", hole_only=True):
        self.hole = hole
        self.variant = variant
        self.base_n = base_n
        self.lam = lam
        self.mu = mu
        self.k = k
        self.t_factor = t_factor
        self.n_max = n_max
        self.max_icp = max_icp
        self.icp_restarts = icp_restarts
        self.stride = stride
        self.max_iter = max_iter
        self.nrt_units = nrt_units
        self.hole_only = hole_only

    def _config(self) -> FillConfig:
        return FillConfig(variant=self.variant, base_n=self.base_n, lam=self.lam, mu=self.mu,
                          k=self.k, t_factor=self.t_factor, n_max=self.n_max,
                          max_icp=self.max_icp, icp_restarts=self.icp_restarts,
                          stride=self.stride, max_iter=self.max_iter, nrt_units=self.nrt_units,
                          hole_only=self.hole_only)

    def _validate(self, X):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if X.shape[1] != 3:
            raise ValueError(f"expected (n_points, 3) coordinates, got {X.shape[1]} columns")
        if np.unique(X, axis=0).shape[0] != X.shape[0]:
            raise DuplicatePoints("input cloud has exactly coincident points; deduplicate first")
        return X

    def fit(self, X, y=None):
        X = self._validate(X)
        self._config()  # reject bad parameters before any work
        if self.hole is None:
            raise ValueError("HoleFiller needs a hole")
        if isinstance(self.hole, HoleRegion):
            region = self.hole
            grid = region.grid_for(X)
        else:
            spec = _as_spec(self.hole)
            grid = spec.grid(X)
            region = region_for(grid, spec)
        self.grid_ = grid
        self.voxel_edge_ = grid.voxel_edge
        self.hole_region_ = region
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        X = self._validate(X)
        grid = VoxelGrid.from_cloud(X, voxel_edge=self.grid_.voxel_edge, origin=self.grid_.origin)
        filled, self.report_ = fill_hole(X, self.hole_region_, self._config(), grid=grid)
        return filled
