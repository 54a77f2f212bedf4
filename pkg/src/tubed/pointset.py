"""Deterministic region samples and their CSV form."""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PreconditionError, ResourceError
from .models import Euclidean, FlatTorus, ManifoldModel, model_from_descriptor
from .seeds import stage_rng

DEFAULT_MAX_POINTS = 20_000_000


@dataclass
class PointSet:
    model: ManifoldModel
    points: np.ndarray
    seed: int
    center: np.ndarray | None = None
    radius: float | None = None
    spacing: float | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @property
    def id(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.model.descriptor()).encode())
        h.update(np.ascontiguousarray(self.points).tobytes())
        return h.hexdigest()[:16]


def _flat_pitch(n, spacing):
    # grid covering radius is pitch*sqrt(n)/2
    return spacing if n <= 4 else 2 * spacing / math.sqrt(n)


def estimate_count(model: ManifoldModel, R: float, spacing: float) -> int:
    if R == 0:
        return 1
    if isinstance(model, FlatTorus):
        pitches = [L / math.ceil(L / spacing) for L in model.periods]
        full = math.prod(math.ceil(L / p) for L, p in zip(model.periods, pitches))
        reach = R + max(pitches) * math.sqrt(model.dim) / 2
        if reach >= math.sqrt(sum(L * L for L in model.periods)) / 2:
            return full
        return min(full, int(Euclidean(model.dim).ball_volume(reach) / math.prod(pitches)) + 1)
    if isinstance(model, Euclidean):
        h = _flat_pitch(model.n, spacing)
        return int(model.ball_volume(R + h * math.sqrt(model.n) / 2) / h**model.n) + 1
    rho, m = _ring_layout(model, R, spacing)
    return int(m.sum())


def _ring_layout(model, R, h):
    R = min(R, model.injectivity_radius)
    K = math.ceil(R / h - 1e-12)
    rho = np.arange(K + 1) * (R / K if K else 0.0)
    J = model.profile(rho)
    m = np.maximum(np.ceil(2 * math.pi * np.maximum(J, 0.0) / h - 1e-9), 1).astype(np.int64)
    m[0] = 1
    if math.isfinite(model.injectivity_radius) and R >= model.injectivity_radius:
        m[-1] = 1  # antipode
    return rho, m


def sample_region(
    model: ManifoldModel,
    center,
    R: float,
    target_spacing: float,
    seed: int,
    max_points: int = DEFAULT_MAX_POINTS,
) -> PointSet:
    """Sample the metric ball ``B(center, R)`` so that every point of it lies
    within ``target_spacing`` of a sample.

    Flat models use a square grid (pitch = spacing in dimension <= 4), curved
    2-D models use geodesic polar rings: ring radii ``k*h`` with ``h <= spacing``
    and ``ceil(2*pi*J(rho)/h)`` equally spaced points per ring.  Either layout
    is then put in a seeded random order, which is the order the greedy net
    construction consumes.
    """
    if R < 0:
        raise PreconditionError("region radius must be >= 0")
    if target_spacing <= 0:
        raise PreconditionError("target spacing must be > 0")
    center = model.validate(np.asarray(center, float))
    if R == 0:
        return PointSet(model, center[None, :].copy(), seed, center, 0.0, target_spacing)

    need = estimate_count(model, R, target_spacing)
    if need > max_points:
        raise ResourceError(
            f"sampling would need about {need} points (budget {max_points})",
            required=need,
            budget=max_points,
        )

    if isinstance(model, FlatTorus):
        pts = _torus_grid(model, center, R, target_spacing)
    elif isinstance(model, Euclidean):
        pts = _flat_grid(model, center, R, target_spacing)
    else:
        pts = _polar_rings(model, center, R, target_spacing)

    rng = stage_rng(seed, "sample_region")
    pts = pts[rng.permutation(len(pts))]
    return PointSet(model, pts, seed, center, float(R), float(target_spacing))


def _flat_grid(model, center, R, spacing):
    n = model.n
    h = _flat_pitch(n, spacing)
    reach = R + h * math.sqrt(n) / 2
    k = math.ceil(reach / h)
    ticks = np.arange(-k, k + 1) * h
    grids = np.meshgrid(*([ticks] * n), indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=-1)
    offs = offs[np.linalg.norm(offs, axis=1) <= reach + 1e-12]
    return center + offs


def _torus_grid(model, center, R, spacing):
    L = np.array(model.periods)
    counts = [math.ceil(Li / spacing) for Li in model.periods]
    axes = [np.arange(c) * (Li / c) for c, Li in zip(counts, model.periods)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = model.wrap(center + np.stack([g.ravel() for g in grids], axis=-1))
    pts = np.where(pts >= L, 0.0, pts)
    reach = R + max(Li / c for c, Li in zip(counts, model.periods)) * math.sqrt(model.dim) / 2
    return pts[model.distance(center, pts) <= reach + 1e-12]


def _polar_rings(model, center, R, spacing):
    rho, m = _ring_layout(model, R, spacing)
    chunks = []
    for rk, mk in zip(rho, m):
        theta = 2 * math.pi * np.arange(mk) / mk
        v = rk * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        chunks.append(v)
    v = np.concatenate(chunks)
    return model.exp_map(np.broadcast_to(center, (len(v), model.coord_dim)), v)


# -- CSV -----------------------------------------------------------------


def write_pointset_csv(ps: PointSet, path_or_buf) -> None:
    kind = ps.model.kind
    buf = io.StringIO()
    buf.write(f"# model={kind} seed={ps.seed}\n")
    params = ",".join(f"{k}={_fmt_param(v)}" for k, v in sorted(ps.model.params().items()))
    buf.write(f"# params {params}\n")
    np.savetxt(buf, ps.points, delimiter=",", fmt="%.17g")
    text = buf.getvalue()
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w") as fh:
            fh.write(text)


def _fmt_param(v):
    if isinstance(v, (list, tuple)):
        return ":".join(repr(float(x)) for x in v)
    return repr(v)


def read_pointset_csv(path_or_buf) -> PointSet:
    if hasattr(path_or_buf, "read"):
        text = path_or_buf.read()
    else:
        with open(path_or_buf) as fh:
            text = fh.read()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# model="):
        raise DomainError("point CSV must start with '# model=<kind> seed=<n>'")
    head = dict(tok.split("=", 1) for tok in lines[0][2:].split())
    params = {}
    body_start = 1
    if len(lines) > 1 and lines[1].startswith("# params"):
        body_start = 2
        spec = lines[1][len("# params"):].strip()
        for item in filter(None, spec.split(",")):
            k, v = item.split("=", 1)
            params[k] = [float(x) for x in v.split(":")] if ":" in v or k == "periods" else _parse_num(v)
    model = model_from_descriptor({"kind": head["model"], "params": params})
    rows = [ln for ln in lines[body_start:] if ln.strip() and not ln.startswith("#")]
    pts = np.array([[float(x) for x in ln.split(",")] for ln in rows], dtype=float)
    pts = pts.reshape(-1, model.coord_dim)
    return PointSet(model, model.validate(pts), int(head.get("seed", 0)))


def _parse_num(v):
    try:
        return int(v)
    except ValueError:
        return float(v)
