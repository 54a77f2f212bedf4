"""Shared fixtures that are plain functions (importable from tests)."""

import math

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from tubed.models import Euclidean, FlatTorus, HyperbolicPlane, Sphere

ALL_MODELS = [Euclidean(1), Euclidean(2), Euclidean(3), FlatTorus((3.0, 5.0)), Sphere(2.0), HyperbolicPlane(1.5)]


def random_points(model, m, rng, spread=2.0):
    """Points at geodesic distance < ``spread`` from the origin."""
    base = np.broadcast_to(model.origin(), (m, model.coord_dim))
    v = rng.standard_normal((m, model.dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    v *= rng.uniform(0, spread, (m, 1))
    return model.exp_map(base, v)


def small_euclidean_stack(radius=6.0, r=0.25, seed=0):
    """f1, f2 and the sample on a Euclidean disk, built like the pipeline."""
    from tubed.lattice import calibrate, heuristic_lattice_coords
    from tubed.nets import build_net, intersection_graph
    from tubed.pointset import sample_region
    from tubed.smooth import F1Map, PartitionOfUnity, build_f2

    ps = sample_region(Euclidean(2), [0, 0], radius, r / 5, seed)
    net = build_net(ps, r)
    g2 = intersection_graph(net, 2.0)
    lat = heuristic_lattice_coords(g2)
    cal = calibrate(lat.coords.n)
    f1 = F1Map(PartitionOfUnity(net), lat.coords, cal.scale)
    f2 = build_f2(build_net(ps, 1.0), "wide")
    return ps, net, g2, f1, f2


# -- hull-distance oracles -----------------------------------------------------


def grid_oracle(P, Q, steps=400):
    """Dense search over convex weights for two-point or three-point sets,
    refined once around the best grid cell."""
    P, Q = np.asarray(P, float), np.asarray(Q, float)

    def simplex(k, m):
        if k == 1:
            return np.ones((1, 1))
        t = np.linspace(0, 1, m + 1)
        if k == 2:
            return np.stack([t, 1 - t], axis=1)
        a, b = np.meshgrid(t, t, indexing="ij")
        keep = a + b <= 1 + 1e-12
        return np.stack([a[keep], b[keep], 1 - a[keep] - b[keep]], axis=1)

    WA = simplex(len(P), steps if len(P) < 3 else steps // 5)
    WB = simplex(len(Q), steps if len(Q) < 3 else steps // 5)
    D = cdist(WA @ P, WB @ Q)
    i, j = np.unravel_index(np.argmin(D), D.shape)
    # local polish with SLSQP from the best grid point
    return min(D[i, j], slsqp_oracle(P, Q, WA[i], WB[j]))


def slsqp_oracle(P, Q, a0=None, b0=None):
    k, m = len(P), len(Q)
    a0 = np.full(k, 1 / k) if a0 is None else a0
    b0 = np.full(m, 1 / m) if b0 is None else b0

    def f(z):
        return np.sum((z[:k] @ P - z[k:] @ Q) ** 2)

    cons = [
        {"type": "eq", "fun": lambda z: z[:k].sum() - 1},
        {"type": "eq", "fun": lambda z: z[k:].sum() - 1},
    ]
    res = minimize(f, np.r_[a0, b0], bounds=[(0, 1)] * (k + m), constraints=cons, method="SLSQP", options={"ftol": 1e-16, "maxiter": 500})
    return math.sqrt(max(res.fun, 0.0))
