"""Command line entry point: one subcommand per stage plus ``pipeline``.

Exit status: 0 on success, 2 on usage or configuration errors, 3 when a stage
raises a :class:`TubedError` (the error is printed to stderr as JSON with the
originating module and its payload).
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, TubedError
from .io import (
    atomic_write,
    dumps,
    graph_from_json,
    graph_to_json,
    growth_csv,
    map_batch_csv,
    net_from_json,
    net_to_json,
    read_json,
    read_points_csv,
    sha256_file,
    write_json,
)
from .pipeline import OUTPUT_ENV, PipelineConfig, run_pipeline

EXIT_USAGE = 2
EXIT_MODULE = 3


def _out(args, name) -> Path:
    """Output path: explicit ``--out`` wins, else ``name`` inside the output
    directory (``$TUBED_OUTPUT_DIR`` or ``--output-dir``)."""
    if getattr(args, "out", None):
        p = Path(args.out)
    else:
        p = Path(os.environ.get(OUTPUT_ENV) or args.output_dir) / name
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _model(args):
    from .models import model_from_descriptor, model_from_name

    if args.model_json:
        return model_from_descriptor(read_json(args.model_json))
    return model_from_name(args.model)


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _print(obj):
    sys.stdout.write(dumps(obj))


# -- subcommands -------------------------------------------------------------


def cmd_sample(args):
    from .pointset import sample_region, write_pointset_csv

    model = _model(args)
    center = model.origin() if args.center is None else np.array(_floats(args.center))
    ps = sample_region(model, center, args.radius, args.spacing, args.seed)
    path = _out(args, "points.csv")
    buf = io.StringIO()
    write_pointset_csv(ps, buf)
    digest = atomic_write(path, buf.getvalue())
    _print({"points": len(ps), "path": str(path), "sha256": digest})


def cmd_net(args):
    from .nets import build_net, verify_net
    from .pointset import read_pointset_csv
    from .seeds import stage_rng

    ps = read_pointset_csv(args.points)
    net = build_net(ps, args.r)
    rep = verify_net(net, ps, rng=stage_rng(ps.seed, "verify_net"))
    path = _out(args, "net.json")
    write_json(path, net_to_json(net))
    _print({"vertices": len(net), "path": str(path), "report": rep.as_dict()})


def _load_net(args):
    from .nets import build_net
    from .pointset import read_pointset_csv

    if args.net:
        return net_from_json(read_json(args.net))
    if args.points:
        return build_net(read_pointset_csv(args.points), args.r)
    raise ConfigurationError("one of --net or --points is required", field="net")


def cmd_graph(args):
    from .nets import check_distance_comparison, count_N_lambda, intersection_graph
    from .seeds import stage_rng

    net = _load_net(args)
    g = intersection_graph(net, args.lam)
    dc = check_distance_comparison(g, args.pairs, rng=stage_rng(args.seed, f"dist_G_{args.lam:g}"))
    path = _out(args, f"graph_lambda{args.lam:g}.json")
    write_json(path, graph_to_json(g))
    deg = g.degrees()
    _print(
        {
            "vertices": len(net),
            "edges": int(len(g.edges)),
            "max_degree": int(deg.max()) if len(deg) else 0,
            "N_2lambda": count_N_lambda(net, 2 * args.lam),
            "distance_comparison": dc.__dict__,
            "path": str(path),
        }
    )


def cmd_growth(args):
    from .nets import central_vertices, graph_growth
    from .svg import growth_curve

    series, fits = {}, {}
    for k, gpath in enumerate(args.graph):
        g = graph_from_json(read_json(gpath))
        center = g.net.model.origin() if args.center is None else np.array(_floats(args.center))
        fit = graph_growth(g, central_vertices(g.net, center, args.centers), args.r_max)
        label = args.label[k] if args.label and k < len(args.label) else Path(gpath).stem
        series[label] = (fit.radii, fit.counts)
        fits[label] = fit
    if len(fits) == 1:
        (label, fit), = fits.items()
        path = _out(args, "growth.csv")
        atomic_write(path, growth_csv(fit))
        write_json(path.with_suffix(".json"), fit.summary())
    else:
        base = Path(os.environ.get(OUTPUT_ENV) or args.output_dir)
        base.mkdir(parents=True, exist_ok=True)
        for label, fit in fits.items():
            atomic_write(base / f"growth_{label}.csv", growth_csv(fit))
            write_json(base / f"growth_{label}.json", fit.summary())
    if args.plot:
        atomic_write(args.plot, growth_curve(series))
    _print({label: fit.summary() for label, fit in fits.items()})


def cmd_lattice(args):
    from .lattice import heuristic_lattice_coords

    g = graph_from_json(read_json(args.graph))
    res = heuristic_lattice_coords(g, args.method)
    info = {
        "ok": res.ok,
        "method": res.method,
        "violations": res.violations.tolist(),
        "collisions": res.collisions.tolist(),
        **res.info,
    }
    if not res.ok:
        _print(info)
        raise ConfigurationError("lattice embedding failed", **{k: v for k, v in info.items() if k != "ok"})
    path = _out(args, "lattice_coords.json")
    write_json(path, res.coords.as_json())
    info.update({"n": res.coords.n, "path": str(path)})
    _print(info)


def cmd_calibrate(args):
    from .lattice import calibrate, calibrate_scale, certified_calibration

    if args.method == "exhaustive":
        cal = calibrate_scale(args.n, args.box, args.max_pairs)
    elif args.method == "closed-form":
        cal = certified_calibration(args.n)
    else:
        cal = calibrate(args.n, args.box)
    path = _out(args, "calibration.json")
    write_json(path, cal.report())
    _print(cal.report())


def _build_f1(graph_path, coords_path, cal_path=None, scale=None):
    from .lattice import LatticeCoords, calibrate
    from .smooth import F1Map, PartitionOfUnity

    g = graph_from_json(read_json(graph_path))
    coords = LatticeCoords.from_json(read_json(coords_path))
    if scale is None:
        scale = read_json(cal_path)["scale"] if cal_path else calibrate(coords.n).scale
    return F1Map(PartitionOfUnity(g.net), coords, float(scale))


def cmd_f1(args):
    f1 = _build_f1(args.graph, args.coords, args.calibration, args.scale)
    X = f1.partition.net.model.validate(read_points_csv(args.input, f1.partition.net.model.coord_dim))
    header = {"eps": "none", "d1": f1.dim, "d2": 0, "scale": repr(f1.scale)}
    path = _out(args, "f1_images.csv")
    atomic_write(path, map_batch_csv(X, f1(X), header))
    _print({"points": len(X), "d1": f1.dim, "path": str(path)})


def cmd_f2(args):
    from .smooth import build_f2, coloring_is_proper

    net = net_from_json(read_json(args.net))
    f2 = build_f2(net, args.profile)
    X = net.model.validate(read_points_csv(args.input, net.model.coord_dim))
    header = {"eps": "none", "d1": 0, "d2": f2.dim, "profile": args.profile}
    path = _out(args, "f2_images.csv")
    atomic_write(path, map_batch_csv(X, f2(X), header))
    _print({"points": len(X), "d2": f2.dim, "colors": f2.n_colors, "coloring_proper": coloring_is_proper(f2), "path": str(path)})


def _stack_from_config(cfg_path):
    """Stack configuration JSON: ``{graph, coords, calibration?, scale?,
    f2_net, profile, eps?}``; relative paths resolve against the file."""
    from .smooth import SmoothMapStack, build_f2

    cfg = read_json(cfg_path)
    root = Path(cfg_path).parent

    def p(key):
        if key not in cfg:
            raise ConfigurationError(f"stack.{key}: missing", field=f"stack.{key}")
        return root / cfg[key]

    f1 = _build_f1(p("graph"), p("coords"), p("calibration") if "calibration" in cfg else None, cfg.get("scale"))
    f2 = build_f2(net_from_json(read_json(p("f2_net"))), cfg.get("profile", "wide"))
    stack = SmoothMapStack(f1.partition.net.model, f1, f2, cfg.get("eps"))
    return stack, cfg


def cmd_combine(args):
    from .seeds import stage_rng
    from .smooth import choose_epsilon

    stack, cfg = _stack_from_config(args.stack)
    model = stack.model
    X = model.validate(read_points_csv(args.input, model.coord_dim))
    sup = None
    if stack.eps is None:
        rng = stage_rng(args.seed, "epsilon")
        S = X[rng.choice(len(X), min(args.eps_samples, len(X)), replace=False)]
        stack.eps, sup = choose_epsilon(stack.raw, model, S, margin=args.margin, rng=rng)
    header = {"eps": repr(stack.eps), "d1": stack.d1, "d2": stack.d2, "seed": args.seed}
    path = _out(args, "images.csv")
    atomic_write(path, map_batch_csv(X, stack.combined(X), header))
    _print({"points": len(X), "eps": stack.eps, "sup_ratio": sup, "d1": stack.d1, "d2": stack.d2, "path": str(path)})


def cmd_reach(args):
    from .geometry import reach_estimate, tubedness_check
    from .seeds import stage_rng

    if args.sphere:
        rng = stage_rng(args.seed, "sphere_control")
        P = rng.standard_normal((args.sphere, 3))
        P /= np.linalg.norm(P, axis=1, keepdims=True)
        a = np.where(np.abs(P[:, :1]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]])
        t1 = np.cross(P, a)
        t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
        frames = np.stack([t1, np.cross(P, t1)], axis=1)
        report = reach_estimate(P, frames, seed=args.seed)
    else:
        if not (args.stack and args.input):
            raise ConfigurationError("reach needs --stack and --input (or --sphere N)", field="stack")
        stack, _ = _stack_from_config(args.stack)
        if stack.eps is None:
            raise ConfigurationError("stack.eps: required for reach", field="stack.eps")
        X = stack.model.validate(read_points_csv(args.input, stack.model.coord_dim))
        r = stack.f1.partition.net.r
        report = tubedness_check(
            stack.combined, stack.model, X, stack.eps, r=r, n_points=args.points, n_pairs=args.pairs,
            rng=stage_rng(args.seed, "reach"), seed=args.seed,
        )
    path = _out(args, "reach.json")
    write_json(path, report.as_json())
    _print(report.as_json())


def cmd_gauss(args):
    from .geometry import SffSample, gauss_curvature_quadrature, lemma_check, lemma_sweep

    if args.sff:
        results = []
        for mats in read_json(args.sff):
            s = SffSample(np.asarray(mats, float))
            lc = lemma_check(s)
            results.append({**lc.__dict__, "K_quadrature": gauss_curvature_quadrature(s)})
        out = {"samples": results, "violations": sum(not r["passes"] for r in results)}
    else:
        out = lemma_sweep(args.sweep, seed=args.seed).as_dict()
    path = _out(args, "gauss.json")
    write_json(path, out)
    _print(out)
    return 0


def _target_graph(spec):
    from .universal import Graph, cycle_graph, graph_from_intersection, path_graph

    kind, _, arg = spec.partition(":")
    if kind == "path":
        return path_graph(int(arg))
    if kind == "cycle":
        return cycle_graph(int(arg))
    obj = read_json(spec)
    if "lambda" in obj:
        return graph_from_intersection(graph_from_json(obj))
    return Graph(len(obj["vertices"]), np.asarray(obj["edges"], dtype=np.int64).reshape(-1, 2))


def cmd_universal(args):
    from .universal import build_delta, count_bound, factorial_crossover

    if args.count_bound:
        d, k, S = (int(x) for x in args.count_bound.split(","))
        L = S // 4 if args.L is None else args.L
        b = count_bound(d, k, S, L)
        _print(
            {
                "d": d, "k": k, "S": S, "L": L,
                "maps_upper": str(b["maps_upper"]),
                "graphs_count": str(b["graphs_count"]),
                "graphs_exceed_maps": b["graphs_count"] > b["maps_upper"],
                "crossover_L": factorial_crossover(d, k, S),
            }
        )
        return
    gammas = [_target_graph(s) for s in args.gamma]
    target = gammas[0] if len(gammas) == 1 else gammas
    delta = build_delta(
        target, args.k_max, max_sk=args.max_sk, max_candidates=args.max_candidates,
        node_budget=args.search_node_budget, seed=args.seed,
    )
    path = _out(args, "delta.json")
    write_json(path, delta.to_json())
    _print({"levels": delta.levels, "certificates": delta.certificates, "path": str(path)})


def cmd_pipeline(args):
    cfg = read_json(args.config) if args.config else {}
    if not isinstance(cfg, dict):
        raise ConfigurationError("config: expected a JSON object", field="config")
    for key, val in (
        ("model", args.model),
        ("region_radius", args.region_radius),
        ("r", args.r),
        ("r2", args.r2),
        ("seed", args.seed),
        ("spacing", args.spacing),
        ("lambdas", _floats(args.lambdas) if args.lambdas else None),
    ):
        if val is not None:
            cfg[key] = val
    if args.no_plots:
        cfg["plots"] = False
    config = PipelineConfig.from_dict(cfg)
    out_dir = os.environ.get(OUTPUT_ENV) or args.output_dir or config.output_dir
    summary = run_pipeline(config, out_dir)
    _print(
        {
            "summary": str(Path(out_dir) / "summary.json"),
            "summary_sha256": sha256_file(Path(out_dir) / "summary.json"),
            "checks": summary["checks"],
            "f1_min_separation": summary["f1"]["min_far_separation"],
            "reach_estimate": summary["reach"]["reach_estimate"],
        }
    )


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tubed", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default="tubed-out", help=f"output directory (overridden by ${OUTPUT_ENV})")
    common.add_argument("--out", help="explicit output file")
    common.add_argument("--seed", type=int, default=0)
    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", default="euclidean2", help="euclidean1|euclidean2|euclidean3|torus2|sphere|hyperbolic")
    model.add_argument("--model-json", help="model descriptor JSON {kind, params}")
    sub = p.add_subparsers(dest="command", metavar="command")

    s = sub.add_parser("sample", parents=[common, model], help="sample a metric ball")
    s.add_argument("--center", help="comma-separated coordinates (default: model origin)")
    s.add_argument("--radius", type=float, required=True)
    s.add_argument("--spacing", type=float, required=True)
    s.set_defaults(fn=cmd_sample)

    s = sub.add_parser("net", parents=[common], help="greedy r-net of a point set")
    s.add_argument("--points", required=True)
    s.add_argument("--r", type=float, required=True)
    s.set_defaults(fn=cmd_net)

    s = sub.add_parser("graph", parents=[common], help="intersection graph of a net")
    s.add_argument("--net")
    s.add_argument("--points")
    s.add_argument("--r", type=float, default=0.25)
    s.add_argument("--lambda", dest="lam", type=float, default=2.0)
    s.add_argument("--pairs", type=int, default=10_000)
    s.set_defaults(fn=cmd_graph)

    s = sub.add_parser("growth", parents=[common], help="ball growth of graph JSON files")
    s.add_argument("--graph", action="append", required=True)
    s.add_argument("--label", action="append")
    s.add_argument("--center")
    s.add_argument("--centers", type=int, default=5)
    s.add_argument("--r-max", type=int, default=20)
    s.add_argument("--plot", help="write an SVG growth plot here")
    s.set_defaults(fn=cmd_growth)

    s = sub.add_parser("lattice", parents=[common], help="lattice coordinates for a lambda=2 graph")
    s.add_argument("--graph", required=True)
    s.add_argument("--method", default="grid-snap")
    s.set_defaults(fn=cmd_lattice)

    s = sub.add_parser("calibrate", parents=[common], help="scale of the lattice map")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--box", type=int, default=6)
    s.add_argument("--method", choices=["auto", "exhaustive", "closed-form"], default="auto")
    s.add_argument("--max-pairs", type=int, default=5_000_000)
    s.set_defaults(fn=cmd_calibrate)

    s = sub.add_parser("f1", parents=[common], help="evaluate f1 on a points CSV")
    s.add_argument("--graph", required=True)
    s.add_argument("--coords", required=True)
    s.add_argument("--calibration")
    s.add_argument("--scale", type=float)
    s.add_argument("--input", required=True)
    s.set_defaults(fn=cmd_f1)

    s = sub.add_parser("f2", parents=[common], help="evaluate f2 on a points CSV")
    s.add_argument("--net", required=True)
    s.add_argument("--profile", choices=["wide", "literal"], default="wide")
    s.add_argument("--input", required=True)
    s.set_defaults(fn=cmd_f2)

    s = sub.add_parser("combine", parents=[common], help="evaluate eps*(f1, f2)")
    s.add_argument("--stack", required=True, help="stack configuration JSON")
    s.add_argument("--input", required=True)
    s.add_argument("--margin", type=float, default=1.25)
    s.add_argument("--eps-samples", type=int, default=2000)
    s.set_defaults(fn=cmd_combine)

    s = sub.add_parser("reach", parents=[common], help="reach and far-pair check")
    s.add_argument("--stack")
    s.add_argument("--input")
    s.add_argument("--sphere", type=int, help="control run on N random points of the unit sphere")
    s.add_argument("--points", type=int, default=1500)
    s.add_argument("--pairs", type=int, default=10_000)
    s.set_defaults(fn=cmd_reach)

    s = sub.add_parser("gauss", parents=[common], help="Gauss-curvature bound checks")
    s.add_argument("--sweep", type=int, default=10_000)
    s.add_argument("--sff", help="JSON list of second fundamental forms")
    s.set_defaults(fn=cmd_gauss)

    s = sub.add_parser("universal", parents=[common], help="build the obstruction graph")
    s.add_argument("--gamma", action="append", default=None, help="path:N, cycle:N or graph JSON (repeat for a sequence)")
    s.add_argument("--k-max", type=int, default=1)
    s.add_argument("--max-sk", type=int, default=4096)
    s.add_argument("--max-candidates", type=int, default=64)
    s.add_argument("--search-node-budget", type=int, default=2_000_000)
    s.add_argument("--count-bound", help="d,k,S: print the counting bound instead")
    s.add_argument("--L", type=int)
    s.set_defaults(fn=cmd_universal)

    s = sub.add_parser("pipeline", help="run every stage and write summary.json")
    s.add_argument("--config", help="PipelineConfig JSON")
    s.add_argument("--output-dir")
    s.add_argument("--model")
    s.add_argument("--region-radius", type=float)
    s.add_argument("--r", type=float)
    s.add_argument("--r2", type=float)
    s.add_argument("--spacing", type=float)
    s.add_argument("--lambdas", help="comma-separated, e.g. 1,2,4")
    s.add_argument("--seed", type=int)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(fn=cmd_pipeline)
    return p


def _origin_module(exc) -> str:
    tb = exc.__traceback__
    name = "tubed"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("tubed."):
            name = mod
        tb = tb.tb_next
    return name


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.command == "universal" and not args.count_bound and not args.gamma:
        args.gamma = ["path:50"]
    try:
        args.fn(args)
    except ConfigurationError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        sys.stderr.write(dumps({"error": "ConfigurationError", "module": _origin_module(exc), "payload": exc.payload}))
        return EXIT_USAGE
    except TubedError as exc:
        sys.stderr.write(
            dumps(
                {
                    "error": type(exc).__name__,
                    "module": _origin_module(exc),
                    "message": str(exc),
                    "payload": exc.payload,
                }
            )
        )
        return EXIT_MODULE
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        if os.environ.get("TUBED_DEBUG"):
            traceback.print_exc()
        return EXIT_USAGE
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
