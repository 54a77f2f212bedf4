"""File formats: canonical JSON, atomic writes, artifact hashes and the
per-stage exchange formats (graphs, growth tables, map batches)."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DomainError
from .models import model_from_descriptor
from .nets import GrowthFit, IntersectionGraph, Net

SCHEMA_VERSION = "v1"


def to_jsonable(obj):
    """Plain-Python copy of ``obj`` with numpy types converted and
    non-finite floats written as the strings ``"inf"``, ``"-inf"``, ``"nan"``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def atomic_write(path, data: str | bytes) -> str:
    """Write via a temporary file in the same directory and rename; returns
    the sha256 of the bytes written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode() if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(raw).hexdigest()


def write_json(path, obj) -> str:
    return atomic_write(path, dumps(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def sha256_file(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# -- nets and graphs ------------------------------------------------------


def net_to_json(net: Net) -> dict:
    return {
        "model": net.model.descriptor(),
        "r": net.r,
        "source_id": net.source_id,
        "vertices": [{"id": i, "coords": c} for i, c in enumerate(net.vertices.tolist())],
        "sample_index": net.sample_index.tolist(),
    }


def net_from_json(obj) -> Net:
    model = model_from_descriptor(obj["model"])
    V = np.array([v["coords"] for v in obj["vertices"]], dtype=float).reshape(-1, model.coord_dim)
    return Net(model, float(obj["r"]), model.validate(V), obj.get("source_id", ""), np.asarray(obj.get("sample_index", np.arange(len(V))), dtype=np.int64))


def graph_to_json(graph: IntersectionGraph) -> dict:
    out = net_to_json(graph.net)
    out["edges"] = graph.edges.tolist()
    out["lambda"] = graph.lam
    return out


def graph_from_json(obj) -> IntersectionGraph:
    net = net_from_json(obj)
    edges = np.asarray(obj.get("edges", []), dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= len(net)):
        raise DomainError("graph JSON has an edge endpoint outside the vertex list")
    return IntersectionGraph(net, float(obj["lambda"]), edges)


# -- growth ------------------------------------------------------------------


def growth_csv(fit: GrowthFit) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["R", "count"])
    for R, c in zip(fit.radii.tolist(), fit.counts.tolist()):
        w.writerow([R, c])
    return buf.getvalue()


def read_growth_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    data = np.array([[int(a), int(b)] for a, b in rows[1:]], dtype=np.int64).reshape(-1, 2)
    return data[:, 0], data[:, 1]


# -- map batches -------------------------------------------------------------


def map_batch_csv(points, images, header: dict) -> str:
    """Header line ``# key=value ...`` (sorted), then ``x_*`` and ``y_*`` columns."""
    points = np.asarray(points, float)
    images = np.asarray(images, float)
    buf = io.StringIO()
    buf.write("# " + " ".join(f"{k}={header[k]}" for k in sorted(header)) + "\n")
    cols = [f"x{i}" for i in range(points.shape[1])] + [f"y{i}" for i in range(images.shape[1])]
    buf.write(",".join(cols) + "\n")
    np.savetxt(buf, np.hstack([points, images]), delimiter=",", fmt="%.17g")
    return buf.getvalue()


def read_points_csv(path, dim=None) -> np.ndarray:
    """Plain numeric CSV (``#`` comments and a non-numeric header allowed)."""
    rows = []
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            try:
                rows.append([float(x) for x in ln.split(",")])
            except ValueError:
                if rows:
                    raise DomainError(f"non-numeric row in {path}: {ln[:40]!r}")
    arr = np.array(rows, dtype=float)
    if dim is not None:
        arr = arr.reshape(-1, dim)
    return arr
