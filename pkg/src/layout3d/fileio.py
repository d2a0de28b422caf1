"""File formats: scene JSON, PLY clouds, reports, raw head outputs.

All JSON writes are canonical byte streams: keys sorted, floats rendered
with 9 significant digits, two-space indentation. Scene readers
canonicalize wall corners on load; writers emit canonical order. PLY
supports ascii and binary little-endian with float32 coordinates and
8-bit colors; big-endian files are rejected.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ArityMismatch, LengthMismatch
from .geometry import Box3, CategoryLevelMap, DetectedObject, PointCloud, Scene, canonicalize_wall
from .metrics import EvalReport
from .voxels import MlpWeights
from .wall_codec import SCHEMES, param_count

FLOAT_DIGITS = 9


def fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    return f"{x:.{FLOAT_DIGITS}g}"


def dumps_canonical(obj, indent: int = 0) -> str:
    """Deterministic JSON text: sorted keys, fixed float formatting."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return dumps_canonical(obj.tolist(), indent)
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating, bool)) or v is None for v in obj):
            return "[" + ", ".join(dumps_canonical(v) for v in obj) + "]"
        body = ",\n".join(inner + dumps_canonical(v, indent + 1) for v in obj)
        return "[\n" + body + "\n" + pad + "]"
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = sorted(obj.items(), key=lambda kv: kv[0])
        body = ",\n".join(
            f"{inner}{json.dumps(str(k), ensure_ascii=False)}: {dumps_canonical(v, indent + 1)}"
            for k, v in items
        )
        return "{\n" + body + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_canonical(obj) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# PLY point clouds
# ---------------------------------------------------------------------------

_PLY_TYPES = {
    "float": "<f4",
    "float32": "<f4",
    "double": "<f8",
    "float64": "<f8",
    "uchar": "u1",
    "uint8": "u1",
    "char": "i1",
    "int8": "i1",
    "short": "<i2",
    "int16": "<i2",
    "ushort": "<u2",
    "uint16": "<u2",
    "int": "<i4",
    "int32": "<i4",
    "uint": "<u4",
    "uint32": "<u4",
}

_REQUIRED_PROPS = ("x", "y", "z", "red", "green", "blue")


def save_ply(path, cloud: PointCloud, binary: bool = True) -> None:
    """Write x y z as float32 and red green blue as uint8."""
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        "end_header\n"
    )
    xyz = cloud.xyz.astype("<f4")
    rgb = np.clip(np.rint(cloud.rgb), 0, 255).astype("u1")
    if binary:
        rows = np.empty(len(cloud), dtype=[(p, _PLY_TYPES["float" if i < 3 else "uchar"]) for i, p in enumerate(_REQUIRED_PROPS)])
        for i, p in enumerate(_REQUIRED_PROPS):
            rows[p] = xyz[:, i] if i < 3 else rgb[:, i - 3]
        Path(path).write_bytes(header.encode("ascii") + rows.tobytes())
    else:
        lines = [
            f"{fmt_float(float(x))} {fmt_float(float(y))} {fmt_float(float(z))} {r} {g} {b}"
            for (x, y, z), (r, g, b) in zip(xyz, rgb)
        ]
        Path(path).write_text(header + "\n".join(lines) + ("\n" if lines else ""), encoding="ascii")


def load_ply(path) -> PointCloud:
    """Read a PLY vertex cloud, honoring the property order of the header."""
    blob = Path(path).read_bytes()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply") or end < 0:
        raise ValueError(f"{path}: not a PLY file")
    header_lines = blob[:end].decode("ascii", errors="replace").splitlines()
    body = blob[end + len(b"end_header\n") :]

    fmt = None
    n_vertex = None
    props: list[tuple[str, str]] = []
    element = None
    for line in header_lines[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            element = parts[1]
            if element == "vertex":
                n_vertex = int(parts[2])
            elif n_vertex is None:
                raise ValueError(f"{path}: element {element!r} before vertex data is unsupported")
        elif parts[0] == "property" and element == "vertex":
            if parts[1] == "list":
                raise ValueError(f"{path}: list properties on vertices are unsupported")
            if parts[1] not in _PLY_TYPES:
                raise ValueError(f"{path}: unsupported property type {parts[1]!r}")
            props.append((parts[2], _PLY_TYPES[parts[1]]))
    if fmt == "binary_big_endian":
        raise ValueError(f"{path}: big-endian PLY is not supported; use binary_little_endian")
    if fmt not in ("ascii", "binary_little_endian"):
        raise ValueError(f"{path}: unsupported PLY format {fmt!r}")
    if n_vertex is None:
        raise ValueError(f"{path}: no vertex element in header")
    names = [name for name, _ in props]
    missing = [p for p in _REQUIRED_PROPS if p not in names]
    if missing:
        raise ValueError(f"{path}: missing vertex properties {missing}")

    if fmt == "binary_little_endian":
        dtype = np.dtype(props)
        need = n_vertex * dtype.itemsize
        if len(body) < need:
            raise ValueError(f"{path}: vertex data truncated ({len(body)} bytes, header says {need})")
        rows = np.frombuffer(body[:need], dtype=dtype)
    else:
        table = np.loadtxt(io.StringIO(body.decode("ascii")), ndmin=2)
        if table.shape[0] != n_vertex or (n_vertex and table.shape[1] != len(props)):
            raise ValueError(
                f"{path}: expected {n_vertex} rows of {len(props)} values, got {table.shape}"
            )
        rows = {name: table[:, k] for k, (name, _) in enumerate(props)}

    xyz = np.stack([np.asarray(rows["x"], dtype=np.float64),
                    np.asarray(rows["y"], dtype=np.float64),
                    np.asarray(rows["z"], dtype=np.float64)], axis=1)
    rgb = np.stack([np.asarray(rows["red"], dtype=np.float64),
                    np.asarray(rows["green"], dtype=np.float64),
                    np.asarray(rows["blue"], dtype=np.float64)], axis=1)
    return PointCloud.from_arrays(xyz, rgb)


def load_points_text(path) -> PointCloud:
    """Whitespace-separated 'x y z r g b' rows."""
    table = np.loadtxt(path, ndmin=2)
    if table.size == 0:
        return PointCloud(np.zeros((0, 6)))
    if table.shape[1] != 6:
        raise ValueError(f"{path}: expected 6 columns (x y z r g b), got {table.shape[1]}")
    return PointCloud(table)


# ---------------------------------------------------------------------------
# scene files
# ---------------------------------------------------------------------------


def scene_to_dict(scene: Scene, points=None) -> dict:
    doc = {
        "categories": {str(k): v for k, v in scene.categories.items()},
        "objects": [
            {
                "center": obj.box.center.tolist(),
                "size": obj.box.size.tolist(),
                "category": obj.category,
                "score": float(obj.score),
            }
            for obj in scene.objects
        ],
        "walls": [
            {
                "corners": wall.corners.tolist(),
                "score": float(wall.score) if wall.score is not None else 1.0,
            }
            for wall in scene.walls
        ],
    }
    if points is not None:
        doc["points"] = points
    return doc


def scene_from_dict(doc: Mapping, base_dir=None) -> Scene:
    points = doc.get("points")
    if points is None:
        cloud = PointCloud(np.zeros((0, 6)))
    elif isinstance(points, str):
        path = Path(points)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        cloud = load_points_text(path) if path.suffix in (".txt", ".xyz") else load_ply(path)
    else:
        arr = np.asarray(points, dtype=np.float64)
        cloud = PointCloud(arr.reshape(-1, 6) if arr.size else np.zeros((0, 6)))
    categories = {int(k): str(v) for k, v in doc.get("categories", {}).items()}
    objects = tuple(
        DetectedObject(
            box=Box3(center=o["center"], size=o["size"]),
            category=int(o["category"]),
            score=float(o.get("score", 1.0)),
        )
        for o in doc.get("objects", [])
    )
    walls = tuple(
        canonicalize_wall(w["corners"], score=float(w.get("score", 1.0)))
        for w in doc.get("walls", [])
    )
    return Scene(cloud=cloud, objects=objects, walls=walls, categories=categories)


def save_scene(path, scene: Scene, points: str = "ply", binary_ply: bool = True) -> None:
    """Write a scene JSON; points go to a sibling .ply, inline, or nowhere."""
    path = Path(path)
    if points == "ply":
        ply_name = path.with_suffix(".ply").name
        save_ply(path.parent / ply_name, scene.cloud, binary=binary_ply)
        doc = scene_to_dict(scene, points=ply_name)
    elif points == "inline":
        doc = scene_to_dict(scene, points=scene.cloud.data.tolist())
    elif points == "none":
        doc = scene_to_dict(scene, points=None)
    else:
        raise ValueError(f"points must be 'ply', 'inline', or 'none', got {points!r}")
    write_json(path, doc)


def load_scene(path) -> Scene:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    return scene_from_dict(doc, base_dir=path.parent)


def load_scene_list(path) -> list[tuple[str, Scene]]:
    """Load (scene id, scene) pairs from a directory, list file, or single file."""
    path = Path(path)
    if path.is_dir():
        out = []
        for p in sorted(path.glob("*.json")):
            out.append((p.stem, load_scene(p)))
        if not out:
            raise ValueError(f"{path}: no scene .json files found")
        return out
    doc = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(doc, Mapping) and "scenes" in doc:
        out = []
        for entry in doc["scenes"]:
            sid = str(entry.get("id", len(out)))
            out.append((sid, scene_from_dict(entry, base_dir=path.parent)))
        return out
    return [(path.stem, scene_from_dict(doc, base_dir=path.parent))]


# ---------------------------------------------------------------------------
# auxiliary inputs
# ---------------------------------------------------------------------------


def load_mlp_weights(path) -> MlpWeights:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return MlpWeights(
            w1=doc["w1"], b1=doc["b1"], w2=doc["w2"], b2=doc["b2"], w3=doc["w3"], b3=doc["b3"]
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing MLP weight entry {exc}") from None


def load_category_levels(path, categories: Mapping[int, str]) -> CategoryLevelMap:
    """Resolve a {category name: level} JSON against a scene's category table."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    by_name = {name: cid for cid, name in categories.items()}
    levels = {}
    for name, level in doc.items():
        if name in by_name:
            levels[by_name[name]] = int(level)
    return CategoryLevelMap(levels)


def load_anchors(path) -> np.ndarray:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    anchors = np.asarray(doc["anchors"] if isinstance(doc, Mapping) else doc, dtype=np.float64)
    return anchors.reshape(-1, anchors.shape[-1]) if anchors.size else anchors.reshape(0, 3)


@dataclass(frozen=True)
class RawHeadOutputs:
    """Raw per-location head outputs, as exchanged through JSON files."""

    locations: np.ndarray  # (J, 3)
    logits: np.ndarray  # (J, C) detection class logits
    delta_t: np.ndarray  # (J, 3)
    log_size: np.ndarray  # (J, 3)
    wall_logits: np.ndarray  # (J,)
    wall_params: np.ndarray  # (J, param_count(scheme))
    scheme: str
    levels: np.ndarray | None = None  # optional per-location level (cm)

    def __post_init__(self):
        for name in ("locations", "logits", "delta_t", "log_size", "wall_params"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float64)))
        object.__setattr__(self, "wall_logits", np.asarray(self.wall_logits, dtype=np.float64).reshape(-1))
        if self.levels is not None:
            object.__setattr__(self, "levels", np.asarray(self.levels, dtype=np.int64).reshape(-1))
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        n = self.locations.shape[0]
        for name in ("logits", "delta_t", "log_size", "wall_params"):
            if getattr(self, name).shape[0] != n:
                raise LengthMismatch(f"{name} has {getattr(self, name).shape[0]} rows, expected {n}")
        if self.wall_logits.shape[0] != n:
            raise LengthMismatch(f"wall_logits has {self.wall_logits.shape[0]} rows, expected {n}")
        if self.levels is not None and self.levels.shape[0] != n:
            raise LengthMismatch(f"levels has {self.levels.shape[0]} rows, expected {n}")
        arity = param_count(self.scheme)
        if n and self.wall_params.shape[1] != arity:
            raise ArityMismatch(
                f"scheme {self.scheme!r} takes {arity} parameters, got {self.wall_params.shape[1]}"
            )


def load_raw_outputs(path) -> RawHeadOutputs:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return RawHeadOutputs(
            locations=doc["locations"],
            logits=doc["logits"],
            delta_t=doc["delta_t"],
            log_size=doc["log_size"],
            wall_logits=doc["wall_logits"],
            wall_params=doc["wall_params"],
            scheme=doc["scheme"],
            levels=doc.get("levels"),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing raw-output entry {exc}") from None


def save_raw_outputs(path, raw: RawHeadOutputs) -> None:
    doc = {
        "locations": raw.locations,
        "logits": raw.logits,
        "delta_t": raw.delta_t,
        "log_size": raw.log_size,
        "wall_logits": raw.wall_logits,
        "wall_params": raw.wall_params,
        "scheme": raw.scheme,
    }
    if raw.levels is not None:
        doc["levels"] = raw.levels
    write_json(path, doc)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _stats_dict(stats) -> dict:
    return {
        "precision": stats.precision,
        "recall": stats.recall,
        "f1": 100.0 * stats.f1,
        "tp": stats.tp,
        "fp": stats.fp,
        "fn": stats.fn,
    }


def report_to_dict(report: EvalReport, class_names: Mapping[int, str] | None = None) -> dict:
    """JSON-ready report. F1 values are scaled to [0, 100]; mAP stays raw."""
    names = dict(class_names or {})
    per_class = {}
    for thr, result in sorted(report.detection.items()):
        per_class[fmt_float(thr)] = {
            str(cid): {
                "name": names.get(cid, str(cid)),
                "ap": cap.ap,
                "n_gt": cap.n_gt,
                "n_pred": cap.n_pred,
            }
            for cid, cap in sorted(result.per_class.items())
        }
    return {
        "scene_count": report.scene_count,
        "detection": {
            "mAP@0.25": report.map_at_25,
            "mAP@0.5": report.map_at_50,
            "per_class": per_class,
        },
        "layout_corner": {"threshold": report.corner_threshold, **_stats_dict(report.corner)},
        "layout_projection": {
            "thickness": report.projection_thickness,
            **{fmt_float(thr): _stats_dict(stats) for thr, stats in sorted(report.projection.items())},
        },
    }


def save_report_json(path, report: EvalReport, class_names=None) -> None:
    write_json(path, report_to_dict(report, class_names))


def save_report_csv(path, report: EvalReport, class_names: Mapping[int, str] | None = None) -> None:
    """One row per class/threshold, plus the layout metrics."""
    names = dict(class_names or {})
    rows = []
    for thr, result in sorted(report.detection.items()):
        for cid, cap in sorted(result.per_class.items()):
            rows.append(
                {
                    "metric": "detection_ap",
                    "threshold": fmt_float(thr),
                    "class_id": cid,
                    "class_name": names.get(cid, str(cid)),
                    "value": fmt_float(cap.ap),
                    "n_gt": cap.n_gt,
                    "n_pred": cap.n_pred,
                    "tp": "",
                    "fp": "",
                    "fn": "",
                    "precision": "",
                    "recall": "",
                }
            )
        rows.append(
            {
                "metric": "detection_map",
                "threshold": fmt_float(thr),
                "class_id": "",
                "class_name": "",
                "value": fmt_float(result.mean_ap),
                "n_gt": "",
                "n_pred": "",
                "tp": "",
                "fp": "",
                "fn": "",
                "precision": "",
                "recall": "",
            }
        )
    layout_rows = [("layout_corner_f1", fmt_float(report.corner_threshold), report.corner)] + [
        ("layout_projection_f1", fmt_float(thr), stats)
        for thr, stats in sorted(report.projection.items())
    ]
    for metric, thr, stats in layout_rows:
        rows.append(
            {
                "metric": metric,
                "threshold": thr,
                "class_id": "",
                "class_name": "",
                "value": fmt_float(100.0 * stats.f1),
                "n_gt": "",
                "n_pred": "",
                "tp": stats.tp,
                "fp": stats.fp,
                "fn": stats.fn,
                "precision": fmt_float(stats.precision),
                "recall": fmt_float(stats.recall),
            }
        )
    fieldnames = [
        "metric",
        "threshold",
        "class_id",
        "class_name",
        "value",
        "n_gt",
        "n_pred",
        "tp",
        "fp",
        "fn",
        "precision",
        "recall",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def summary_line(report: EvalReport) -> str:
    return (
        f"mAP@0.25={report.map_at_25:.4f} "
        f"mAP@0.5={report.map_at_50:.4f} "
        f"F1={100.0 * report.corner.f1:.1f}"
    )
