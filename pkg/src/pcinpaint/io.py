"""ASCII PLY and XYZ point cloud files (coordinates only)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .exceptions import CloudFormatError

_PLY_TYPES = {"char", "uchar", "short", "ushort", "int", "uint", "float", "double",
              "int8", "uint8", "int16", "uint16", "int32", "uint32", "float32", "float64"}


def _format_of(path, fmt):
    if fmt:
        return fmt.lower()
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return "ply"
    if suffix in (".xyz", ".txt", ".pts"):
        return "xyz"
    raise CloudFormatError(f"cannot infer cloud format from {path!s}; use .ply or .xyz")


def _read_ply(path) -> np.ndarray:
    with open(path, "r", encoding="ascii", errors="strict") as fh:
        if fh.readline().strip() != "ply":
            raise CloudFormatError(f"{path}: missing 'ply' magic line")
        elements = []  # (name, count, [property names], has_list)
        fmt = None
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith(("comment", "obj_info")):
                continue
            tok = line.split()
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element":
                elements.append([tok[1], int(tok[2]), [], False])
            elif tok[0] == "property":
                if not elements:
                    raise CloudFormatError(f"{path}: property before any element")
                if tok[1] == "list":
                    elements[-1][3] = True
                    elements[-1][2].append(tok[4])
                elif tok[1] in _PLY_TYPES:
                    elements[-1][2].append(tok[2])
                else:
                    raise CloudFormatError(f"{path}: unknown property type {tok[1]!r}")
            elif tok[0] == "end_header":
                break
        else:
            raise CloudFormatError(f"{path}: header has no end_header")
        if fmt != "ascii":
            raise CloudFormatError(f"{path}: only ASCII PLY is supported (got {fmt!r})")
        points = None
        for name, count, props, has_list in elements:
            rows = [fh.readline() for _ in range(count)]
            if name != "vertex":
                continue
            if has_list:
                raise CloudFormatError(f"{path}: list properties on vertices are not supported")
            try:
                cols = [props.index(axis) for axis in ("x", "y", "z")]
            except ValueError:
                raise CloudFormatError(f"{path}: vertex element lacks x, y, z") from None
            try:
                table = np.array([r.split() for r in rows], dtype=np.float64).reshape(count, len(props))
            except ValueError as exc:
                raise CloudFormatError(f"{path}: malformed vertex rows ({exc})") from None
            points = table[:, cols]
        if points is None:
            raise CloudFormatError(f"{path}: no vertex element")
        return points


def _read_xyz(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.replace(",", " ").split()
            if len(tok) < 3:
                raise CloudFormatError(f"{path}:{lineno}: expected at least 3 columns")
            try:
                rows.append([float(t) for t in tok[:3]])
            except ValueError:
                raise CloudFormatError(f"{path}:{lineno}: non-numeric coordinate") from None
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def read_cloud(path, fmt: str | None = None) -> np.ndarray:
    """Read x, y, z coordinates; other properties are ignored."""
    fmt = _format_of(path, fmt)
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such cloud file: {path}")
    pts = _read_ply(path) if fmt == "ply" else _read_xyz(path)
    if not np.all(np.isfinite(pts)):
        raise CloudFormatError(f"{path}: non-finite coordinates")
    return pts


def format_points(points) -> list[str]:
    return [f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in np.asarray(points, dtype=np.float64)]


def write_cloud(path, points, fmt: str | None = None) -> None:
    """Write coordinates with 9 significant digits."""
    fmt = _format_of(path, fmt)
    lines = format_points(points)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        if fmt == "ply":
            fh.write("ply\nformat ascii 1.0\n")
            fh.write(f"element vertex {len(lines)}\n")
            fh.write("property double x\nproperty double y\nproperty double z\nend_header\n")
        for line in lines:
            fh.write(line + "\n")
