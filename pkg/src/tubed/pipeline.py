"""End-to-end run: sample -> net -> graph -> lattice -> calibrate -> f1/f2 ->
combine -> reach, with every certificate collected in one summary."""

from __future__ import annotations

import io
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError
from .geometry import tubedness_check
from .hull import hull_distance
from .io import SCHEMA_VERSION, atomic_write, dumps, graph_to_json, growth_csv, map_batch_csv, write_json
from .lattice import calibrate, heuristic_lattice_coords
from .models import ManifoldModel, model_from_descriptor, model_from_name
from .nets import (
    build_net,
    central_vertices,
    check_distance_comparison,
    count_N_lambda,
    graph_growth,
    intersection_graph,
    verify_net,
)
from .pointset import sample_region, write_pointset_csv
from .seeds import stage_rng
from .smooth import (
    F1Map,
    PartitionOfUnity,
    SmoothMapStack,
    build_f2,
    choose_epsilon,
    coloring_is_proper,
    derivative_bounds,
)
from .spatial import MetricIndex
from .svg import distortion_histogram, embedding_scatter, growth_curve

OUTPUT_ENV = "TUBED_OUTPUT_DIR"


@dataclass
class PipelineConfig:
    model: str | dict = "euclidean2"
    center: list | None = None
    region_radius: float = 12.0
    r: float = 0.25  # net radius of the partition of unity behind f1
    r2: float = 1.0  # net radius behind f2
    lambdas: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    spacing: float | None = None  # default r / 5
    seed: int = 0
    calibration_box: int = 6
    eps_margin: float = 1.25
    f2_profile: str = "wide"
    lattice_method: str = "grid-snap"
    growth_r_max: int = 20
    n_pairs: int = 10_000
    n_eps_samples: int = 2000
    n_geodesics: int = 50
    n_balls: int = 50
    ball_points: int = 400
    reach_points: int = 1500
    injectivity_pairs: int = 100_000
    output_dir: str = "tubed-out"
    plots: bool = True

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        if not isinstance(obj, dict):
            raise ConfigurationError("config: expected a JSON object", field="config")
        known = set(cls.__dataclass_fields__)
        for k in obj:
            if k not in known:
                raise ConfigurationError(f"config.{k}: unknown field", field=f"config.{k}")
        cfg = cls(**obj)
        cfg.validate()
        return cfg

    def validate(self):
        def need(cond, name, what):
            if not cond:
                raise ConfigurationError(f"config.{name}: {what}", field=f"config.{name}")

        for name in ("region_radius", "r", "r2", "eps_margin"):
            v = getattr(self, name)
            need(isinstance(v, (int, float)) and v > 0, name, "must be a positive number")
        if self.spacing is not None:
            need(isinstance(self.spacing, (int, float)) and self.spacing > 0, "spacing", "must be a positive number")
        need(isinstance(self.lambdas, list) and self.lambdas, "lambdas", "must be a non-empty list")
        for i, lam in enumerate(self.lambdas):
            need(isinstance(lam, (int, float)) and lam >= 1, f"lambdas[{i}]", "must be >= 1")
        for name in (
            "calibration_box",
            "growth_r_max",
            "n_pairs",
            "n_eps_samples",
            "n_geodesics",
            "n_balls",
            "ball_points",
            "reach_points",
            "injectivity_pairs",
        ):
            v = getattr(self, name)
            need(isinstance(v, int) and v > 0, name, "must be a positive integer")
        need(self.calibration_box >= 2, "calibration_box", "must be >= 2")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed", "must be a non-negative integer")
        need(self.f2_profile in ("wide", "literal"), "f2_profile", "must be 'wide' or 'literal'")
        try:
            self.resolve_model()
        except Exception as exc:  # noqa: BLE001 - reported as a config error
            raise ConfigurationError(f"config.model: {exc}", field="config.model") from exc

    def resolve_model(self) -> ManifoldModel:
        m = self.model
        return model_from_descriptor(m) if isinstance(m, dict) else model_from_name(m)

    def to_json(self):
        # the output location is not part of the result
        return {k: v for k, v in asdict(self).items() if k != "output_dir"}


def normalized_model(model: ManifoldModel) -> tuple[ManifoldModel, float]:
    """Rescale so that ``|sec| <= 1/100`` and ``inj >= 10``; flat models with
    infinite injectivity radius are left alone."""
    lo, hi = model.curvature_bounds
    kmax = max(abs(lo), abs(hi))
    factor = 1.0
    if kmax > 0:
        factor = max(factor, 10 * math.sqrt(kmax))
    if math.isfinite(model.injectivity_radius):
        factor = max(factor, 10 / model.injectivity_radius)
    return (model.rescaled(factor) if factor != 1.0 else model), factor


def _row_pairs(indptr):
    """All ordered pairs ``(a, b)`` of positions within each CSR row."""
    sizes = np.diff(indptr)
    rows = np.repeat(np.arange(len(sizes)), sizes)
    first = np.repeat(np.arange(indptr[-1]), sizes[rows])
    start = indptr[rows]
    within = np.arange(len(first)) - np.repeat(np.cumsum(sizes[rows]) - sizes[rows], sizes[rows])
    second = np.repeat(start, sizes[rows]) + within
    return first, second


def _far_pairs(model, X, n, far, rng):
    """``n`` random pairs with ``d >= far`` plus near-threshold pairs with
    ``d in [far, 1.25 far]``."""
    out_i, out_j = [], []
    got = 0
    while got < n:
        a = rng.integers(0, len(X), 4 * n)
        b = rng.integers(0, len(X), 4 * n)
        keep = model.distance(X[a], X[b]) >= far
        a, b = a[keep][: n - got], b[keep][: n - got]
        out_i.append(a)
        out_j.append(b)
        got += len(a)
    index = MetricIndex(model, X)
    src = rng.integers(0, len(X), max(1, n // 5))
    indptr, idx, d = index.ball(X[src], 1.25 * far, strict=False)
    rows = np.repeat(np.arange(len(src)), np.diff(indptr))
    ann = d >= far
    rows, idx = rows[ann], idx[ann]
    if len(rows):
        # one partner per source, chosen uniformly among its annulus points
        key = rng.random(len(rows))
        order = np.lexsort((key, rows))
        firsts = np.ones(len(order), bool)
        firsts[1:] = rows[order][1:] != rows[order][:-1]
        sel = order[firsts]
        out_i.append(src[rows[sel]])
        out_j.append(idx[sel])
    return np.concatenate(out_i), np.concatenate(out_j)


def _unit_ball_points(model, center, m, rng):
    u = rng.standard_normal((m, model.dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    u *= rng.uniform(0, 1, (m, 1)) ** (1 / model.dim)
    return model.exp_map(np.broadcast_to(center, (m, model.coord_dim)), u)


def f2_distortion(f2, model, centers, ball_points=400, n_pairs=10_000, seed=0):
    """Per-ball min/max of ``|f2(x) - f2(y)| / d(x, y)`` over random pairs in
    unit balls around ``centers``."""
    rng = stage_rng(seed, "f2_distortion")
    lows, highs, all_ratios = [], [], []
    for c in centers:
        P = _unit_ball_points(model, c, ball_points, rng)
        G = f2(P)
        a = rng.integers(0, len(P), n_pairs)
        b = rng.integers(0, len(P), n_pairs)
        k = a != b
        d = model.distance(P[a[k]], P[b[k]])
        ok = d > 0
        ratio = np.linalg.norm(G[a[k]][ok] - G[b[k]][ok], axis=1) / d[ok]
        lows.append(float(ratio.min()))
        highs.append(float(ratio.max()))
        all_ratios.append(ratio)
    return np.array(lows), np.array(highs), np.concatenate(all_ratios) if all_ratios else np.zeros(0)


class Pipeline:
    """Holds every intermediate object of one run."""

    def __init__(self, config: PipelineConfig):
        config.validate()
        self.config = config
        base = config.resolve_model()
        self.model, self.rescale = normalized_model(base)
        self.base_model = base
        self.summary: dict = {}
        self.artifacts: dict = {}

    # -- stages -------------------------------------------------------------
    def run(self, out_dir: str | os.PathLike | None = None) -> dict:
        cfg = self.config
        out = Path(out_dir or os.environ.get(OUTPUT_ENV) or cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        M = self.model
        center = M.origin() if cfg.center is None else M.validate(np.asarray(cfg.center, float))
        spacing = cfg.spacing if cfg.spacing is not None else cfg.r / 5
        s = self.summary
        s["schema"] = SCHEMA_VERSION
        s["version"] = __version__
        s["config"] = cfg.to_json()
        s["model"] = {"input": self.base_model.descriptor(), "normalized": M.descriptor(), "rescale": self.rescale}

        # sample
        ps = sample_region(M, center, cfg.region_radius, spacing, cfg.seed)
        self.points = ps
        buf = io.StringIO()
        write_pointset_csv(ps, buf)
        self._artifact(out, "points.csv", buf.getvalue())
        s["sample"] = {"count": len(ps), "spacing": spacing, "radius": cfg.region_radius, "id": ps.id}

        # nets and graphs
        net = build_net(ps, cfg.r)
        self.net = net
        rep = verify_net(net, ps, rng=stage_rng(cfg.seed, "verify_net"))
        s["net"] = {"r": cfg.r, "size": len(net), **rep.as_dict()}
        graphs = {}
        s["graphs"] = {}
        for lam in cfg.lambdas:
            g = intersection_graph(net, lam)
            graphs[lam] = g
            dc = check_distance_comparison(g, cfg.n_pairs, rng=stage_rng(cfg.seed, f"dist_G_{lam}"))
            N2l = count_N_lambda(net, 2 * lam)
            s["graphs"][_lam_key(lam)] = {
                "edges": int(len(g.edges)),
                "max_degree": int(g.degrees().max()) if len(net) else 0,
                "N_2lambda": N2l,
                "degree_bound_ok": bool(len(net) == 0 or g.degrees().max() <= N2l - 1),
                "connected": bool(g.is_connected()),
                "distance_comparison": asdict(dc),
            }
        g2 = graphs.get(2.0) or intersection_graph(net, 2.0)
        self._artifact(out, "graph_lambda2.json", dumps(graph_to_json(g2)))
        g1 = graphs.get(1.0) or intersection_graph(net, 1.0)
        centers = central_vertices(net, center, 5)
        fit = graph_growth(g1, centers, cfg.growth_r_max)
        self._artifact(out, "growth.csv", growth_csv(fit))
        self._artifact(out, "growth.json", dumps(fit.summary()))
        s["growth"] = fit.summary()

        # lattice coordinates and calibration
        lat = heuristic_lattice_coords(g2, cfg.lattice_method)
        s["lattice"] = {
            "ok": lat.ok,
            "method": lat.method,
            "n": None if lat.coords is None else lat.coords.n,
            "violations": int(len(lat.violations)),
            "collisions": int(len(lat.collisions)),
            **lat.info,
        }
        if not lat.ok:
            raise ConfigurationError("lattice embedding failed; f1 cannot be built", **s["lattice"])
        self._artifact(out, "lattice_coords.json", dumps(lat.coords.as_json()))
        cal = calibrate(lat.coords.n, cfg.calibration_box)
        self.calibration = cal
        self._artifact(out, "calibration.json", dumps(cal.report()))
        s["calibration"] = {k: v for k, v in cal.report().items() if k != "extremal_pair"}

        # f1
        pu = PartitionOfUnity(net)
        f1 = F1Map(pu, lat.coords, cal.scale)
        X = ps.points
        vals = pu.evaluate(X)
        N2 = count_N_lambda(net, 2.0, np.vstack([net.vertices, X]))
        a, b = _row_pairs(vals.indptr)
        off = a != b
        dsup = M.distance(net.vertices[vals.indices[a[off]]], net.vertices[vals.indices[b[off]]])
        F1 = f1(X)
        rng = stage_rng(cfg.seed, "f1_pairs")
        i, j = _far_pairs(M, X, cfg.n_pairs, 4 * cfg.r, rng)
        sep = np.linalg.norm(F1[i] - F1[j], axis=1)
        shared = _shared_support(vals, i, j)
        hull_res = _hull_residual(vals, F1, f1.phi_table, stage_rng(cfg.seed, "hull_residual"))
        s["f1"] = {
            "d1": f1.dim,
            "N2": N2,
            "normalization_error": vals.normalization_error,
            "psi_min": float(vals.psi_sum.min()),
            "psi_max": float(vals.psi_sum.max()),
            "psi_bounds_ok": bool(vals.psi_sum.min() >= 1 and vals.psi_sum.max() <= N2),
            "support_max_pair_distance": float(dsup.max()) if len(dsup) else 0.0,
            "supports_are_cliques": bool(len(dsup) == 0 or dsup.max() < 4 * cfg.r),
            "far_threshold": 4 * cfg.r,
            "far_pairs": int(len(i)),
            "far_pairs_shared_support": shared,
            "min_far_separation": float(sep.min()),
            "separation_ok": bool(sep.min() >= 1),
            "hull_membership_residual": hull_res,
        }

        # f2
        net2 = build_net(ps, cfg.r2)
        f2 = build_f2(net2, cfg.f2_profile)
        inner_c = central_vertices(net2, center, cfg.n_balls)
        lows, highs, ratios = f2_distortion(
            f2, M, net2.vertices[inner_c], cfg.ball_points, cfg.n_pairs, cfg.seed
        )
        s["f2"] = {
            "profile": cfg.f2_profile,
            "net_size": len(net2),
            "d2": f2.dim,
            "colors": f2.n_colors,
            "N2": count_N_lambda(net2, 2.0),
            "coloring_proper": coloring_is_proper(f2),
            "balls": int(len(lows)),
            "lower": float(lows.min()),
            "upper": float(highs.max()),
            "per_ball_lower": lows,
            "per_ball_upper": highs,
        }

        # combined map
        stack = SmoothMapStack(M, f1, f2)
        inner = X[M.distance(center, X) <= max(cfg.region_radius - 3 * cfg.r2, cfg.region_radius / 2)]
        rng = stage_rng(cfg.seed, "epsilon")
        S = inner[rng.choice(len(inner), min(cfg.n_eps_samples, len(inner)), replace=False)]
        eps, sup = choose_epsilon(stack.raw, M, S, margin=cfg.eps_margin, rng=rng)
        stack.eps = eps
        self.stack = stack
        # geodesics start in the inner region and must stay inside the
        # sampled one, so their length is capped by the 3*r2 margin
        C = derivative_bounds(
            stack.raw, M, inner, n_geodesics=cfg.n_geodesics, step=1e-3,
            length=min(4.0, 2.0 * cfg.r2),
            rng=stage_rng(cfg.seed, "derivatives"),
        )
        inj = _injectivity(stack, inner, cfg.injectivity_pairs, stage_rng(cfg.seed, "injectivity"))
        s["combined"] = {
            "eps": eps,
            "sup_ratio": sup,
            "margin": cfg.eps_margin,
            "dimension": stack.d1 + stack.d2,
            "derivative_bounds": C,
            **inj,
        }
        sub = inner[stage_rng(cfg.seed, "map_batch").choice(len(inner), min(500, len(inner)), replace=False)]
        header = {"eps": repr(eps), "d1": stack.d1, "d2": stack.d2, "seed": cfg.seed, "model": M.kind}
        self._artifact(out, "images.csv", map_batch_csv(sub, stack.combined(sub), header))

        # reach
        reach = tubedness_check(
            stack.combined, M, inner, eps, r=cfg.r, n_points=cfg.reach_points, n_pairs=cfg.n_pairs,
            rng=stage_rng(cfg.seed, "reach"), seed=cfg.seed,
        )
        self.reach = reach
        self._artifact(out, "reach.json", dumps(reach.as_json()))
        s["reach"] = reach.as_json()

        s["checks"] = {
            "net_axioms": bool(rep.separation_ok and rep.cover_ok and rep.lebesgue_ok),
            "distance_comparison": all(v["distance_comparison"]["max_violation"] <= 0 for v in s["graphs"].values()),
            "f1_separation": s["f1"]["separation_ok"],
            "partition": bool(s["f1"]["normalization_error"] <= 1e-12 and s["f1"]["psi_bounds_ok"]),
            "f2_bilipschitz": bool(math.isfinite(s["f2"]["upper"]) and s["f2"]["lower"] > 0),
            "reach_positive": bool(reach.reach_estimate > 0),
            "far_pairs": bool(reach.extra["far_pair_collisions"] == 0),
        }
        s["artifacts"] = dict(sorted(self.artifacts.items()))
        atomic_write(out / "summary.json", dumps(s))

        if cfg.plots:
            r_counts = {"Gamma_1": (fit.radii, fit.counts)}
            atomic_write(out / "growth.svg", growth_curve(r_counts, "ball growth of the net graph"))
            atomic_write(out / "embedding.svg", embedding_scatter(stack.combined(sub), M.distance(center, sub)))
            atomic_write(out / "distortion.svg", distortion_histogram(ratios))
        return s

    def _artifact(self, out, name, text):
        self.artifacts[name] = atomic_write(out / name, text)


def _lam_key(lam):
    return f"{float(lam):g}"


def _shared_support(vals, i, j) -> int:
    """Number of pairs whose supports intersect."""
    bad = 0
    for a, b in zip(i.tolist(), j.tolist()):
        if np.intersect1d(vals.support(a), vals.support(b)).size:
            bad += 1
    return bad


def _hull_residual(vals, F, phi_table, rng, n=200) -> float:
    pick = rng.choice(len(vals.psi_sum), min(n, len(vals.psi_sum)), replace=False)
    worst = 0.0
    for p in pick.tolist():
        hd = hull_distance(F[p][None, :], phi_table[vals.support(p)])
        worst = max(worst, hd.distance)
    return worst


def _injectivity(stack, X, n_pairs, rng) -> dict:
    sub = X[rng.choice(len(X), min(5000, len(X)), replace=False)]
    Y = stack.combined(sub)
    a = rng.integers(0, len(sub), n_pairs)
    b = rng.integers(0, len(sub), n_pairs)
    k = np.flatnonzero(np.any(sub[a] != sub[b], axis=1))
    d = np.linalg.norm(Y[a[k]] - Y[b[k]], axis=1)
    res = 1e-6 * stack.eps
    return {
        "injectivity_pairs": int(len(k)),
        "injectivity_collisions": int(np.count_nonzero(d < res)),
        "min_image_distance": float(d.min()) if len(d) else math.inf,
    }


def run_pipeline(config: PipelineConfig | dict, out_dir=None) -> dict:
    if isinstance(config, dict):
        config = PipelineConfig.from_dict(config)
    return Pipeline(config).run(out_dir)


__all__ = ["PipelineConfig", "Pipeline", "run_pipeline", "normalized_model", "f2_distortion", "OUTPUT_ENV"]

