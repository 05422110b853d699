"""PLY point clouds with per-vertex attributes, via plyfile."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional

import numpy as np
from plyfile import PlyData, PlyElement, PlyParseError

from prior_engine.errors import DatasetError


def _column(values: np.ndarray) -> np.ndarray:
    if values.dtype == bool:
        return values.astype(np.uint8)
    if values.dtype.kind == "f":
        return values.astype(np.float32)
    # PLY has no 64-bit integer type
    if values.dtype.kind == "i" and values.dtype.itemsize > 4:
        return values.astype(np.int32)
    if values.dtype.kind == "u" and values.dtype.itemsize > 4:
        return values.astype(np.uint32)
    return values


def write_ply(path: str | Path, points: np.ndarray, attributes: Optional[Dict[str, np.ndarray]] = None,
              comments: Optional[Dict[str, str]] = None, text: bool = False) -> Path:
    """Write vertices with extra named per-vertex columns (normals, masks, scores, colors)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    points = np.asarray(points, dtype=np.float32)
    n = points.shape[0]
    columns = [("x", points[:, 0]), ("y", points[:, 1]), ("z", points[:, 2])]
    for name, values in (attributes or {}).items():
        values = _column(np.asarray(values))
        if values.shape[0] != n:
            raise DatasetError(f"attribute {name} has {values.shape[0]} rows, expected {n}")
        if values.ndim == 1:
            columns.append((name, values))
            continue
        if name == "normal":
            suffixes = ("nx", "ny", "nz")
        elif name == "rgb":
            suffixes = ("red", "green", "blue")
        else:
            suffixes = tuple(f"{name}{i}" for i in range(values.shape[1]))
        columns.extend((suffix, values[:, i]) for i, suffix in enumerate(suffixes))

    table = np.empty(n, dtype=[(name, col.dtype.str) for name, col in columns])
    for name, col in columns:
        table[name] = col
    vertex = PlyElement.describe(table, "vertex")
    meta = [f"{key}={value}" for key, value in (comments or {}).items()]
    PlyData([vertex], text=text, byte_order="<", comments=meta).write(str(path))
    return path


def read_ply(path: str | Path) -> Dict[str, np.ndarray]:
    """Vertex columns by property name, plus `comments` parsed from key=value comment lines."""
    try:
        ply = PlyData.read(str(path))
        vertex = ply["vertex"]
    except (PlyParseError, KeyError, ValueError, EOFError) as exc:
        raise DatasetError(f"{path} is not a readable PLY point cloud: {exc}") from exc
    out = {prop.name: np.asarray(vertex[prop.name]) for prop in vertex.properties}
    comments: Dict[str, str] = {}
    for line in ply.comments:
        if "=" in line:
            key, value = line.split("=", 1)
            comments[key.strip()] = value.strip()
    out["comments"] = comments  # type: ignore[assignment]
    return out


def write_cloud_ply(path: str | Path, cloud, scores: Optional[np.ndarray] = None,
                    colors: Optional[np.ndarray] = None, comments: Optional[Dict[str, str]] = None) -> Path:
    attrs: Dict[str, np.ndarray] = {
        "normal": cloud.normals,
        "part_mask": cloud.part_mask,
        "handle_mask": cloud.handle_mask,
    }
    if scores is not None:
        attrs["score"] = np.asarray(scores, dtype=np.float32)
    if colors is not None:
        attrs["rgb"] = np.asarray(colors, dtype=np.uint8)
    return write_ply(path, cloud.points, attrs, comments)


def read_cloud_points(path: str | Path) -> np.ndarray:
    cols = read_ply(path)
    return np.stack([cols["x"], cols["y"], cols["z"]], axis=1).astype(np.float32)
