"""Exemplar-based hole filling for 3D point clouds."""

from .bench import BenchPlan, BenchResult, run_bench
from .cloud import (Cube, Label, PointCloud, VoxelGrid, calibrate_voxel_size, deduplicate,
                    extract_cube, knn, ohd)
from .estimator import HoleFiller
from .exceptions import *  # noqa: F401,F403
from .frontier import FillFront, HoleRegion, compute_fill_front, confidence, data_term, priorities
from .holes import HoleSpec, punch_hole, random_hole
from .io import read_cloud, write_cloud
from .matcher import ICPOptions, MatchResult, RigidAlignment, align_rigid, match_adaptive, match_fixed
from .metrics import hausdorff, nshd, nshd_local
from .nrt import apply_nrt, assemble_cost, match_points, nrt_cost, refine, solve_nrt
from .transfer import FillConfig, FillReport, Termination, Variant, fill_hole, transfer_points

__version__ = "0.1.0"
