import json

import numpy as np
import pytest

from conftest import plane_cloud
from pcinpaint import synthetic
from pcinpaint.bench import COLUMNS, BenchPlan, draw_holes, run_bench
from pcinpaint.cli import main
from pcinpaint.exceptions import CloudFormatError, EmptyHoleWarning
from pcinpaint.holes import HoleSpec, punch_hole, random_hole
from pcinpaint.io import read_cloud, write_cloud

FAST = {"stride": 4, "icp_restarts": False}


def _bumpy(extent=32):
    pts = plane_cloud(extent)
    pts[:, 2] = np.round(3 * np.exp(-((pts[:, 0] - 10) ** 2 + (pts[:, 1] - 20) ** 2) / 30))
    return pts


# --- files ---------------------------------------------------------------------

@pytest.mark.parametrize("suffix", [".ply", ".xyz"])
def test_roundtrip(tmp_path, rng, suffix):
    pts = np.round(rng.uniform(-100, 100, (50, 3)), 4)
    path = tmp_path / f"c{suffix}"
    write_cloud(path, pts)
    assert np.array_equal(read_cloud(path), pts)


def test_ply_ignores_extra_properties(tmp_path):
    path = tmp_path / "c.ply"
    path.write_text("ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float y\n"
                    "property float x\nproperty uchar red\nproperty float z\nelement face 1\n"
                    "property list uchar int vertex_indices\nend_header\n"
                    "2 1 255 3\n5 4 0 6\n3 0 1 1\n")
    assert np.array_equal(read_cloud(path), [[1, 2, 3], [4, 5, 6]])


def test_bad_files(tmp_path):
    path = tmp_path / "c.ply"
    path.write_text("ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(CloudFormatError):
        read_cloud(path)
    bad = tmp_path / "c.xyz"
    bad.write_text("1 2\n")
    with pytest.raises(CloudFormatError):
        read_cloud(bad)
    with pytest.raises(FileNotFoundError):
        read_cloud(tmp_path / "missing.xyz")
    with pytest.raises(CloudFormatError):
        read_cloud(tmp_path / "c.obj")


def test_hole_spec_json(tmp_path):
    spec = HoleSpec(box_min=[0, 0, 0], box_max=[1, 2, 3], seed=4)
    path = tmp_path / "h.json"
    path.write_text(spec.dumps())
    back = HoleSpec.load(path)
    assert np.array_equal(back.box_min, spec.box_min) and back.seed == 4
    vox = HoleSpec.from_dict({"voxels": [[1, 2, 3]], "grid": {"origin": [0, 0, 0], "voxel_edge": 0.5}})
    assert vox.frame[1] == 0.5
    with pytest.raises(ValueError):
        HoleSpec(box_min=[0, 0, 0], box_max=[1, 0, 1])


# --- holes ----------------------------------------------------------------------

def test_punch_outside_box_warns(rng):
    pts = rng.uniform(0, 1, (100, 3))
    with pytest.warns(EmptyHoleWarning):
        holed, _, removed = punch_hole(pts, HoleSpec(box_min=[5, 5, 5], box_max=[6, 6, 6]))
    assert np.array_equal(holed, pts) and removed.shape[0] == 0


def test_punch_whole_bbox(rng):
    pts = rng.uniform(0, 1, (100, 3))
    holed, _, removed = punch_hole(pts, HoleSpec(box_min=[-1, -1, -1], box_max=[2, 2, 2]))
    assert holed.shape[0] == 0 and removed.shape[0] == 100


def test_punch_matches_scan(rng):
    for _ in range(20):
        pts = rng.uniform(0, 1, (300, 3))
        spec = random_hole(pts, 0.3, rng)
        holed, _, removed = punch_hole(pts, spec)
        inside = [i for i, p in enumerate(pts)
                  if all(spec.box_min[a] < p[a] < spec.box_max[a] for a in range(3))]
        assert np.array_equal(removed, pts[inside])
        assert holed.shape[0] + removed.shape[0] == 300


def test_random_hole_extents():
    cube = np.array([[0, 0, 0], [1, 1, 1.0]])
    rng = np.random.default_rng(0)
    extents = []
    for _ in range(1000):
        spec = random_hole(cube, 0.2, rng)
        ext = spec.box_max - spec.box_min
        assert np.all((ext >= 0.16 - 1e-12) & (ext <= 0.24 + 1e-12))
        assert np.all(spec.box_min >= 0) and np.all(spec.box_max <= 1)
        extents.append(ext)
    assert abs(np.mean(extents) - 0.2) <= 0.02 * 0.2
    a = random_hole(cube, 0.2, np.random.default_rng(7))
    b = random_hole(cube, 0.2, np.random.default_rng(7))
    assert np.array_equal(a.box_min, b.box_min) and np.array_equal(a.box_max, b.box_max)


def test_voxel_hole_spec_stays_in_its_frame():
    pts = plane_cloud(32)
    spec = HoleSpec(voxels=[[10, 10, 0], [11, 10, 0]], grid_origin=[-0.5, -0.5, -0.5], voxel_edge=1.0)
    holed, region, removed = punch_hole(pts, spec)
    assert np.array_equal(removed, [[10, 10, 0], [11, 10, 0]])
    assert len(region) == 2 and region.frame[1] == 1.0


# --- benchmark ----------------------------------------------------------------------

def test_synthetic_clouds_are_voxelized():
    for name in ("plane_ridge", "torus", "duplicated_patch"):
        pts = synthetic.make(name)
        assert 5_000 <= len(pts) <= 20_000
        assert np.array_equal(pts, np.round(pts))
        assert np.unique(pts, axis=0).shape[0] == len(pts)
    with pytest.raises(ValueError):
        synthetic.make("teapot")


def test_single_hole_single_variant_shape():
    plan = BenchPlan(cloud="bumpy.xyz", holes=1, variants=["base"], config=FAST, min_removed=1)
    result = run_bench(plan, points=_bumpy())
    assert len(result.rows) == 1 and len(result.summary) == 1
    lines = result.to_csv().splitlines()
    assert lines[0] == ",".join(COLUMNS)
    assert lines[1].startswith("bumpy,base,0,")


def test_variant_order_keeps_hole_specs():
    pts = _bumpy()
    a = draw_holes(pts, BenchPlan(cloud="x.xyz", holes=3, variants=["base", "base_acs"]))
    b = draw_holes(pts, BenchPlan(cloud="x.xyz", holes=3, variants=["base_acs", "base"]))
    for s, t in zip(a, b):
        assert np.array_equal(s.box_min, t.box_min) and np.array_equal(s.box_max, t.box_max)
    more = draw_holes(pts, BenchPlan(cloud="x.xyz", holes=5))
    assert all(np.array_equal(s.box_min, t.box_min) for s, t in zip(a, more))


def test_plan_validation(tmp_path):
    with pytest.raises(ValueError):
        BenchPlan(cloud="x.xyz", holes=0)
    with pytest.raises(ValueError):
        BenchPlan(cloud="x.xyz", fraction=1.5)
    with pytest.raises(ValueError):
        BenchPlan(cloud="x.xyz", config={"lam": -1})
    with pytest.raises(ValueError):
        BenchPlan(cloud="x.xyz", hole_mode="sphere")
    assert BenchPlan(cloud="x.xyz").hole_mode == "points"
    (tmp_path / "p.json").write_text(json.dumps({"cloud": "c.xyz", "holes": 2}))
    plan = BenchPlan.load(tmp_path / "p.json")
    assert plan.cloud == str(tmp_path / "c.xyz")


# --- command line -----------------------------------------------------------------------

def test_cli_nshd_self_is_zero(tmp_path, capsys):
    path = tmp_path / "a.ply"
    write_cloud(path, _bumpy())
    assert main(["nshd", str(path), str(path)]) == 0
    assert capsys.readouterr().out.strip() == "0"


def test_cli_punch_fill_nshd(tmp_path, capsys):
    original = tmp_path / "orig.xyz"
    write_cloud(original, _bumpy())
    hole = tmp_path / "hole.json"
    hole.write_text(HoleSpec(box_min=[6.5, 16.5, -1], box_max=[12.5, 22.5, 5]).dumps())
    holed, spec_out, filled = tmp_path / "holed.xyz", tmp_path / "pinned.json", tmp_path / "filled.ply"
    assert main(["punch", str(original), "--hole", str(hole), "--out", str(holed),
                 "--hole-out", str(spec_out)]) == 0
    assert json.loads(capsys.readouterr().out)["removed"] > 0
    log = tmp_path / "fill.jsonl"
    assert main(["fill", str(holed), "--hole", str(spec_out), "--out", str(filled),
                 "--variant", "base_acs", "--stride", "4", "--log", str(log)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["points_transferred"] > 0
    assert len(log.read_text().splitlines()) == summary["iterations"] + 1
    assert len(read_cloud(filled)) >= len(read_cloud(holed))
    main(["nshd", str(filled), str(original)])
    after = float(capsys.readouterr().out)
    main(["nshd", str(holed), str(original)])
    before = float(capsys.readouterr().out)
    assert after < before


def test_cli_punch_points_mode_pins_removed_voxels(tmp_path, capsys):
    original = tmp_path / "orig.xyz"
    write_cloud(original, _bumpy())
    hole = tmp_path / "hole.json"
    hole.write_text(HoleSpec(box_min=[6.5, 16.5, -1], box_max=[12.5, 22.5, 5]).dumps())
    pinned = tmp_path / "pinned.json"
    assert main(["punch", str(original), "--hole", str(hole), "--out", str(tmp_path / "h.xyz"),
                 "--removed", str(tmp_path / "r.xyz"), "--hole-out", str(pinned),
                 "--hole-mode", "points"]) == 0
    counts = json.loads(capsys.readouterr().out)
    spec = HoleSpec.load(pinned)
    assert not spec.is_box and len(spec.voxels) == counts["hole_voxels"] == counts["removed"]
    origin, edge = spec.frame
    removed = read_cloud(tmp_path / "r.xyz")
    assert np.array_equal(np.unique(np.floor((removed - origin) / edge), axis=0), spec.voxels)
    assert main(["fill", str(tmp_path / "h.xyz"), "--hole", str(pinned), "--out",
                 str(tmp_path / "f.xyz"), "--variant", "base_acs", "--stride", "4"]) == 0
    assert json.loads(capsys.readouterr().out)["points_transferred"] > 0


def test_cli_missing_file(tmp_path, capsys):
    missing = tmp_path / "nope.ply"
    assert main(["calibrate", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_cli_usage_errors(tmp_path, capsys):
    assert main(["fill"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["--help"]) == 0
    path = tmp_path / "a.xyz"
    write_cloud(path, _bumpy())
    assert main(["punch", str(path), "--out", str(tmp_path / "b.xyz")]) == 1


def test_cli_calibrate(tmp_path, capsys):
    path = tmp_path / "a.xyz"
    write_cloud(path, np.array([[0, 0, 0], [1, 1, 1.0]]))
    assert main(["calibrate", str(path)]) == 0
    assert float(capsys.readouterr().out) == 0.5


def test_cli_bench_is_byte_identical(tmp_path, capsys):
    cloud = tmp_path / "bumpy.xyz"
    write_cloud(cloud, _bumpy())
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"cloud": "bumpy.xyz", "holes": 2, "variants": ["base", "base_acs"],
                                "seed": 3, "min_removed": 1, "config": FAST}))
    outs = []
    for name in ("one.csv", "two.csv"):
        out = tmp_path / name
        assert main(["bench", str(plan), "--out", str(out), "--no-timing"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].count(b"\n") == 1 + 4 + 1 + 1 + 2
