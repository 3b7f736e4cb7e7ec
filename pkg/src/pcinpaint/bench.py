"""Hole-punch benchmark: fill seeded random holes with each variant and report NSHD."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import synthetic
from .cloud import calibrate_voxel_size, deduplicate
from .exceptions import EmptyHoleWarning, InpaintError
from .holes import HoleSpec, punch_hole, random_hole
from .io import read_cloud
from .metrics import bbox_volume, nshd, nshd_local
from .transfer import FillConfig, Variant, fill_hole

logger = logging.getLogger(__name__)

COLUMNS = ["cloud", "variant", "hole_id", "nshd", "nshd_local", "seconds",
           "points_transferred", "termination"]
SUMMARY_COLUMNS = ["variant", "holes", "nshd_mean", "nshd_std", "nshd_local_mean",
                   "nshd_local_std", "seconds_mean"]
MAX_HOLE_DRAWS = 100


@dataclass
class BenchPlan:
    cloud: str
    holes: int = 15
    fraction: float = 0.2
    variants: list = field(default_factory=lambda: [v.value for v in Variant])
    seed: int = 0
    output: str | None = None
    log_dir: str | None = None
    config: dict = field(default_factory=dict)
    hole_mode: str = "points"
    min_removed: int = 10
    timing: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.holes < 1:
            raise ValueError("a plan needs at least one hole")
        if not 0 < self.fraction < 1:
            raise ValueError("fraction must lie in (0, 1)")
        if self.hole_mode not in ("points", "box"):
            raise ValueError("hole_mode must be 'points' or 'box'")
        self.variants = [Variant.parse(v).value for v in self.variants]
        FillConfig(**self.config)  # fail early on bad knobs

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "BenchPlan":
        data = dict(data)
        cloud = data.get("cloud")
        if cloud is None:
            raise ValueError("plan needs a 'cloud' entry")
        if base_dir is not None and not str(cloud).startswith("synthetic:"):
            path = Path(cloud)
            data["cloud"] = str(path if path.is_absolute() else Path(base_dir) / path)
        return cls(**data)

    @classmethod
    def load(cls, path) -> "BenchPlan":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), base_dir=Path(path).parent)


def load_plan_cloud(source: str) -> tuple[str, np.ndarray]:
    """`synthetic:<name>` or a PLY/XYZ path; returns (label, points)."""
    if source.startswith("synthetic:"):
        name = source.split(":", 1)[1]
        return name, synthetic.make(name)
    return Path(source).stem, deduplicate(read_cloud(source))


def draw_holes(points: np.ndarray, plan: BenchPlan) -> list[HoleSpec]:
    """One seeded hole per id; each id has its own child generator."""
    specs = []
    for hole_id, child in enumerate(np.random.SeedSequence(plan.seed).spawn(plan.holes)):
        rng = np.random.default_rng(child)
        for _ in range(MAX_HOLE_DRAWS):
            spec = random_hole(points, plan.fraction, rng)
            removed = np.all((points > spec.box_min) & (points < spec.box_max), axis=1).sum()
            if removed >= plan.min_removed:
                break
        else:
            logger.warning("hole %d: no box with %d+ points in %d draws", hole_id,
                           plan.min_removed, MAX_HOLE_DRAWS)
        spec.seed = hole_id
        specs.append(spec)
    return specs


def _run_one(args):
    label, original, hole_id, spec, variant, config, mode, timing = args
    row = {"cloud": label, "variant": variant, "hole_id": hole_id}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyHoleWarning)
        holed, region, removed = punch_hole(original, spec, mode=mode)
    try:
        start = time.perf_counter()
        filled, report = fill_hole(holed, region, FillConfig(**{**config, "variant": variant}))
        seconds = time.perf_counter() - start
    except (InpaintError, ValueError) as exc:
        logger.warning("hole %d / %s failed: %s", hole_id, variant, exc)
        row.update(nshd=float("nan"), nshd_local=float("nan"), seconds=float("nan"),
                   points_transferred=0, termination=f"error:{type(exc).__name__}")
        return row, None
    volume = bbox_volume(original)
    margin = 2 * calibrate_voxel_size(holed)
    row.update(
        nshd=nshd(filled, original, volume),
        nshd_local=nshd_local(filled, original, spec.box, margin, volume),
        seconds=seconds if timing else None,
        points_transferred=report.points_transferred,
        termination=report.termination.value,
    )
    return row, report


@dataclass
class BenchResult:
    rows: list
    summary: list
    reports: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in COLUMNS])
        buf.write("\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in self.summary:
            writer.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])
        return buf.getvalue()

    def mean(self, variant: str, metric: str = "nshd") -> float:
        variant = Variant.parse(variant).value
        for row in self.summary:
            if row["variant"] == variant:
                return row[f"{metric}_mean"]
        raise KeyError(variant)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9e}"
    return str(value)


def _stats(values):
    arr = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=np.float64)
    if arr.size == 0:
        return float("nan"), float("nan")
    std = float(arr.std(ddof=1)) if arr.size > 1 else float("nan")
    return float(arr.mean()), std


def summarize(rows: list, variants: list, timing: bool = True) -> list:
    out = []
    for variant in variants:
        mine = [r for r in rows if r["variant"] == variant]
        m, s = _stats(r["nshd"] for r in mine)
        ml, sl = _stats(r["nshd_local"] for r in mine)
        sec = _stats(r["seconds"] for r in mine)[0] if timing else None
        out.append({"variant": variant, "holes": len(mine), "nshd_mean": m, "nshd_std": s,
                    "nshd_local_mean": ml, "nshd_local_std": sl, "seconds_mean": sec})
    return out


def run_bench(plan: BenchPlan, points: np.ndarray | None = None) -> BenchResult:
    """Punch every hole once, fill it with every variant, collect one row per (hole, variant)."""
    if points is None:
        label, points = load_plan_cloud(plan.cloud)
    else:
        label = Path(plan.cloud).stem if not plan.cloud.startswith("synthetic:") else plan.cloud.split(":", 1)[1]
    specs = draw_holes(points, plan)
    jobs = [(label, points, hole_id, spec, variant, plan.config, plan.hole_mode, plan.timing)
            for hole_id, spec in enumerate(specs) for variant in plan.variants]
    if plan.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=plan.n_jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    order = {v: i for i, v in enumerate(plan.variants)}
    results.sort(key=lambda r: (r[0]["hole_id"], order[r[0]["variant"]]))
    rows = [r for r, _ in results]
    reports = {(r["hole_id"], r["variant"]): rep for r, rep in results}
    result = BenchResult(rows=rows, summary=summarize(rows, plan.variants, plan.timing), reports=reports)
    if plan.output:
        Path(plan.output).write_text(result.to_csv())
    if plan.log_dir:
        log_dir = Path(plan.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        for (hole_id, variant), rep in reports.items():
            if rep is not None:
                (log_dir / f"{label}_hole{hole_id:02d}_{variant}.jsonl").write_text(rep.to_jsonl())
    return result
