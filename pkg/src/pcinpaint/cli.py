"""Command-line entry point: fill, punch, bench, nshd, calibrate.

Exit status is 0 on success, 1 for usage errors (bad flags, missing files,
invalid specs) and 2 when the computation itself fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .bench import BenchPlan, run_bench
from .cloud import calibrate_voxel_size, deduplicate
from .exceptions import CloudFormatError, EmptyHoleWarning, InpaintError
from .holes import HoleSpec, punch_hole, random_hole, region_for
from .io import read_cloud, write_cloud
from .metrics import bbox_volume, nshd, nshd_local
from .transfer import FillConfig, Variant, fill_hole

logger = logging.getLogger("pcinpaint")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# flag name -> FillConfig field
_FILL_FLAGS = {
    "variant": "variant", "base_n": "base_n", "lam": "lam", "mu": "mu",
    "t_factor": "t_factor", "n_max": "n_max", "stride": "stride", "max_iter": "max_iter",
    "max_icp": "max_icp", "restarts": "icp_restarts", "nrt_units": "nrt_units",
}


def _add_fill_flags(p):
    p.add_argument("--config", help="JSON file of fill settings; flags override it")
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--base-n", type=int, help="template cube size in voxels")
    p.add_argument("--lambda", dest="lam", type=float, help="NRT smoothness weight")
    p.add_argument("--mu", type=float, help="NRT identity regularizer")
    p.add_argument("--t-factor", type=float, help="ACS threshold multiplier")
    p.add_argument("--n-max", type=int, help="largest ACS cube size")
    p.add_argument("--stride", type=int, help="candidate subsampling stride")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--max-icp", type=int)
    p.add_argument("--nrt-units", choices=["voxel", "cube"], help="length unit of the NRT offsets")
    p.add_argument("--restarts", dest="restarts", action=argparse.BooleanOptionalAction,
                   default=None, help="extra 90-degree ICP starts")


def _load_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _fill_settings(args) -> dict:
    settings = _load_json(args.config) if getattr(args, "config", None) else {}
    for flag, name in _FILL_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            settings[name] = value
    return settings


def _read(path) -> np.ndarray:
    pts = read_cloud(path)
    return deduplicate(pts) if pts.shape[0] else pts


def _hole_spec(args, points) -> HoleSpec:
    if args.hole:
        try:
            return HoleSpec.from_dict(_load_json(args.hole))
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"{args.hole}: bad hole spec ({exc})") from None
    return random_hole(points, args.fraction, np.random.default_rng(args.seed))


def cmd_fill(args) -> int:
    points = _read(args.input)
    try:
        config = FillConfig(**_fill_settings(args))
        spec = HoleSpec.from_dict(_load_json(args.hole))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    grid = spec.grid(points)
    region = region_for(grid, spec)
    filled, report = fill_hole(points, region, config, grid=grid)
    write_cloud(args.out, filled)
    if args.log:
        Path(args.log).write_text(report.to_jsonl())
    summary = report.summary()
    if args.reference:
        original = _read(args.reference)
        volume = bbox_volume(original)
        if args.metric == "local" and spec.is_box:
            summary["nshd"] = nshd_local(filled, original, spec.box, 2 * grid.voxel_edge, volume)
        else:
            summary["nshd"] = nshd(filled, original, volume)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_punch(args) -> int:
    points = _read(args.input)
    if not args.hole and args.fraction is None:
        raise UsageError("punch needs --hole or --fraction")
    spec = _hole_spec(args, points)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EmptyHoleWarning)
        holed, region, removed = punch_hole(points, spec, mode=args.hole_mode)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_cloud(args.out, holed)
    if args.removed:
        write_cloud(args.removed, removed)
    if args.hole_out:
        # pin the frame so a later fill labels exactly these voxels
        grid = spec.grid(holed) if len(holed) >= 2 else None
        if args.hole_mode == "points" and spec.is_box and grid is not None:
            spec = HoleSpec(voxels=region.voxels, grid_origin=grid.origin.tolist(),
                            voxel_edge=grid.voxel_edge, seed=spec.seed)
        elif grid is not None and region.frame is None:
            spec.grid_origin, spec.voxel_edge = grid.origin.tolist(), grid.voxel_edge
        elif region.frame is not None:
            spec.grid_origin, spec.voxel_edge = region.frame[0].tolist(), region.frame[1]
        Path(args.hole_out).write_text(spec.dumps() + "\n")
    print(json.dumps({"kept": int(len(holed)), "removed": int(len(removed)),
                      "hole_voxels": len(region)}))
    return 0


def cmd_bench(args) -> int:
    try:
        plan_data = _load_json(args.plan)
        if args.seed is not None:
            plan_data["seed"] = args.seed
        if args.holes is not None:
            plan_data["holes"] = args.holes
        if args.out:
            plan_data["output"] = args.out
        if args.log_dir:
            plan_data["log_dir"] = args.log_dir
        if args.no_timing:
            plan_data["timing"] = False
        if args.jobs is not None:
            plan_data["n_jobs"] = args.jobs
        plan_data["config"] = {**plan_data.get("config", {}), **_fill_settings(args)}
        plan = BenchPlan.from_dict(plan_data, base_dir=Path(args.plan).parent)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{args.plan}: {exc}") from None
    if not plan.cloud.startswith("synthetic:") and not Path(plan.cloud).is_file():
        raise FileNotFoundError(f"no such cloud file: {plan.cloud}")
    result = run_bench(plan)
    if not plan.output:
        sys.stdout.write(result.to_csv())
    else:
        metric = "nshd" if args.metric == "full" else "nshd_local"
        for row in result.summary:
            print(f"{row['variant']}: {metric} {row[metric + '_mean']:.6e} "
                  f"+- {row[metric + '_std']:.6e}")
    return 0


def cmd_nshd(args) -> int:
    a = _read(args.reconstructed)
    b = _read(args.original)
    if args.metric == "local":
        if not args.hole:
            raise UsageError("--metric local needs --hole")
        spec = HoleSpec.from_dict(_load_json(args.hole))
        if not spec.is_box:
            raise UsageError("--metric local needs a box hole spec")
        margin = args.margin if args.margin is not None else 2 * calibrate_voxel_size(b)
        value = nshd_local(a, b, spec.box, margin)
    else:
        value = nshd(a, b)
    print(f"{value:.9g}")
    return 0


def cmd_calibrate(args) -> int:
    print(f"{calibrate_voxel_size(_read(args.input), max_depth=args.max_depth):.17g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pcinpaint", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fill", help="fill a hole in a cloud")
    p.add_argument("input")
    p.add_argument("--hole", required=True, help="hole spec JSON")
    p.add_argument("--out", required=True, help="output cloud (.ply or .xyz)")
    p.add_argument("--log", help="per-iteration JSON-lines log")
    p.add_argument("--reference", help="pre-punch cloud; prints NSHD of the result against it")
    p.add_argument("--metric", choices=["full", "local"], default="full")
    _add_fill_flags(p)
    p.set_defaults(func=cmd_fill)

    p = sub.add_parser("punch", help="remove the points inside a box")
    p.add_argument("input")
    p.add_argument("--hole", help="hole spec JSON; omit to draw a random box")
    p.add_argument("--fraction", type=float, help="random box extent as a fraction of the range")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="holed cloud")
    p.add_argument("--removed", help="where to write the removed points")
    p.add_argument("--hole-out", help="hole spec JSON with the pinned voxel frame")
    p.add_argument("--hole-mode", choices=["box", "points"], default="box",
                   help="HOLE voxels: every voxel in the box, or those that held removed points")
    p.set_defaults(func=cmd_punch)

    p = sub.add_parser("bench", help="run a benchmark plan")
    p.add_argument("plan")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--seed", type=int)
    p.add_argument("--holes", type=int)
    p.add_argument("--log-dir")
    p.add_argument("--jobs", type=int)
    p.add_argument("--no-timing", action="store_true", help="leave the seconds column empty")
    p.add_argument("--metric", choices=["full", "local"], default="full")
    _add_fill_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("nshd", help="normalized symmetric Hausdorff distance")
    p.add_argument("reconstructed")
    p.add_argument("original")
    p.add_argument("--metric", choices=["full", "local"], default="full")
    p.add_argument("--hole", help="box hole spec (for --metric local)")
    p.add_argument("--margin", type=float)
    p.set_defaults(func=cmd_nshd)

    p = sub.add_parser("calibrate", help="octree voxel edge of a cloud")
    p.add_argument("input")
    p.add_argument("--max-depth", type=int, default=21)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return 0 if exc.code is None else int(exc.code)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"pcinpaint: {exc}", file=sys.stderr)
        return 1
    except (UsageError, CloudFormatError) as exc:
        print(f"pcinpaint: {exc}", file=sys.stderr)
        return 1
    except (InpaintError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"pcinpaint: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
