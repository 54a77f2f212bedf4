"""Maximal separated nets, their intersection graphs and graph volume growth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import PreconditionError
from .models import ManifoldModel
from .pointset import PointSet
from .spatial import MetricIndex

# ---------------------------------------------------------------------------
# nets


@dataclass
class Net:
    model: ManifoldModel
    r: float
    vertices: np.ndarray
    source_id: str
    sample_index: np.ndarray  # position of each vertex in the source PointSet

    def __len__(self):
        return len(self.vertices)

    def index(self) -> MetricIndex:
        if getattr(self, "_index", None) is None:
            self._index = MetricIndex(self.model, self.vertices)
        return self._index


def build_net(points: PointSet, r: float, chunk: int = 4096) -> Net:
    """Greedy maximal ``r``-separated subset, in the order of ``points``.

    A point is taken iff it is at distance ``>= r`` from everything taken
    before it.  Neighbourhoods are fetched in batches, and only for points
    still uncovered when their batch starts.
    """
    if r <= 0:
        raise PreconditionError("net radius must be positive")
    pts = points.points
    if len(pts) == 0:
        raise PreconditionError("cannot build a net from an empty point set")
    index = MetricIndex(points.model, pts)
    covered = bytearray(len(pts))
    chosen: list[int] = []
    for start in range(0, len(pts), chunk):
        stop = min(start + chunk, len(pts))
        todo = [i for i in range(start, stop) if not covered[i]]
        if not todo:
            continue
        indptr, indices, _ = index.ball(pts[todo], r, strict=True)
        indptr = indptr.tolist()
        indices = indices.tolist()
        for k, i in enumerate(todo):
            if covered[i]:
                continue
            chosen.append(i)
            covered[i] = 1
            for j in indices[indptr[k] : indptr[k + 1]]:
                covered[j] = 1
    sel = np.array(chosen, dtype=np.int64)
    return Net(points.model, float(r), pts[sel].copy(), points.id, sel)


@dataclass
class NetReport:
    separation_ok: bool
    min_separation: float
    cover_radius: float
    cover_ok: bool
    lebesgue_ok: bool
    lebesgue_centers: int
    lebesgue_failures: int

    def as_dict(self):
        return dict(self.__dict__)


def verify_net(net: Net, points: PointSet, n_lebesgue: int = 1000, rng=None) -> NetReport:
    """Check separation, covering and the Lebesgue property of ``{2 B_v}``.

    The Lebesgue check is sampled: for each chosen center ``x`` the ball
    ``B(x, r)`` lies in ``B(v, 2r)`` as soon as ``d(x, v) <= r`` for some net
    vertex ``v`` (triangle inequality).
    """
    index = net.index()
    r = net.r
    if len(net) > 1:
        i, j, d = index.pairs_within(r, strict=True)
        sep_ok = len(i) == 0
        # min pairwise distance: look a little further out to report a value
        _, _, d2 = index.pairs_within(3 * r, strict=True)
        min_sep = float(d2.min()) if len(d2) else math.inf
    else:
        sep_ok, min_sep = True, math.inf
    nd, _ = index.nearest(points.points)
    cover = float(nd.max())
    rng = rng if rng is not None else np.random.default_rng(0)
    m = min(n_lebesgue, len(points))
    centers = points.points[rng.choice(len(points), size=m, replace=False)]
    cd, _ = index.nearest(centers)
    failures = int(np.count_nonzero(cd > r))
    return NetReport(sep_ok, min_sep, cover, cover < r, failures == 0, m, failures)


def count_N_lambda(net: Net, lam: float, centers=None) -> int:
    """Largest number of net vertices in an open ``lam*r`` ball around a center."""
    if lam <= 0:
        raise PreconditionError("lambda must be positive")
    if len(net) == 0:
        return 0
    centers = net.vertices if centers is None else np.asarray(centers, float)
    if len(centers) == 0:
        return 0
    return int(net.index().count_ball(centers, lam * net.r, strict=True).max())


# ---------------------------------------------------------------------------
# intersection graphs


@dataclass
class IntersectionGraph:
    net: Net
    lam: float
    edges: np.ndarray  # (E, 2), i < j
    _csr: sp.csr_matrix = field(default=None, repr=False)

    @property
    def n_vertices(self):
        return len(self.net)

    @property
    def csr(self) -> sp.csr_matrix:
        if self._csr is None:
            n = self.n_vertices
            i, j = self.edges[:, 0], self.edges[:, 1]
            data = np.ones(2 * len(i), dtype=np.int8)
            self._csr = sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(n, n))
        return self._csr

    def degrees(self):
        return np.diff(self.csr.indptr)

    def neighbors(self, v):
        c = self.csr
        return c.indices[c.indptr[v] : c.indptr[v + 1]]

    def bfs(self, source, max_depth=None):
        return bfs_distances(self.csr, source, max_depth)

    def is_connected(self):
        n_comp, _ = sp.csgraph.connected_components(self.csr, directed=False)
        return n_comp <= 1


def intersection_graph(net: Net, lam: float) -> IntersectionGraph:
    """``v ~ w`` iff the open balls ``B(v, lam*r)`` and ``B(w, lam*r)`` meet,
    i.e. ``d(v, w) < 2*lam*r``."""
    if lam < 1:
        raise PreconditionError("lambda must be >= 1")
    if len(net) < 2:
        return IntersectionGraph(net, float(lam), np.zeros((0, 2), dtype=np.int64))
    i, j, _ = net.index().pairs_within(2 * lam * net.r, strict=True)
    edges = np.stack([i, j], axis=1)
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    return IntersectionGraph(net, float(lam), edges)


def bfs_distances(csr: sp.csr_matrix, source: int, max_depth=None) -> np.ndarray:
    """Hop distances from ``source``; ``-1`` for unreached vertices."""
    n = csr.shape[0]
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    depth = 0
    indptr, indices = csr.indptr, csr.indices
    while len(frontier) and (max_depth is None or depth < max_depth):
        starts, ends = indptr[frontier], indptr[frontier + 1]
        lens = ends - starts
        if lens.sum() == 0:
            break
        offs = np.repeat(starts - np.r_[0, np.cumsum(lens)[:-1]], lens)
        nb = indices[np.arange(lens.sum()) + offs]
        nb = np.unique(nb[dist[nb] < 0])
        depth += 1
        dist[nb] = depth
        frontier = nb
    return dist


@dataclass
class DistanceComparison:
    max_violation: float
    n_pairs: int
    n_checked: int
    n_disconnected: int


def check_distance_comparison(
    graph: IntersectionGraph, n_pairs: int = 10_000, n_sources: int = 100, rng=None
) -> DistanceComparison:
    """Max over sampled pairs of ``|v-w|_M - 2*lam*r*|v-w|_graph`` (must be <= 0)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    n = graph.n_vertices
    model = graph.net.model
    V = graph.net.vertices
    scale = 2 * graph.lam * graph.net.r
    n_sources = max(1, min(n_sources, n, n_pairs))
    sources = rng.choice(n, size=n_sources, replace=False)
    per = [n_pairs // n_sources + (1 if k < n_pairs % n_sources else 0) for k in range(n_sources)]
    worst = -math.inf
    checked = disconnected = 0
    for s, m in zip(sources, per):
        if m == 0:
            continue
        targets = rng.integers(0, n, size=m)
        hops = graph.bfs(int(s))[targets]
        ok = hops >= 0
        disconnected += int(np.count_nonzero(~ok))
        if ok.any():
            dm = model.distance(V[s], V[targets[ok]])
            worst = max(worst, float(np.max(dm - scale * hops[ok])))
            checked += int(ok.sum())
    return DistanceComparison(worst, n_pairs, checked, disconnected)


# ---------------------------------------------------------------------------
# growth

POLYNOMIAL, EXPONENTIAL, INCONCLUSIVE = "Polynomial", "Exponential", "Inconclusive"


@dataclass
class GrowthFit:
    radii: np.ndarray
    counts: np.ndarray  # max over centers of |B(x, R)|
    window: tuple[int, int]
    poly_coef: tuple[float, float]  # log|B| = c0 + c1*log R
    exp_coef: tuple[float, float]  # log|B| = c0 + c1*R
    poly_residual: float
    exp_residual: float
    classification: str
    degree: int | None
    saturated: bool
    margin: float

    @property
    def exponent(self):
        return self.poly_coef[1]

    def summary(self):
        return {
            "classification": self.classification,
            "degree": self.degree,
            "exponent": self.poly_coef[1],
            "poly_coef": list(self.poly_coef),
            "exp_coef": list(self.exp_coef),
            "poly_residual": self.poly_residual,
            "exp_residual": self.exp_residual,
            "window": list(self.window),
            "saturated": self.saturated,
            "margin": self.margin,
        }


def ball_counts(graph: IntersectionGraph, center: int, R_max: int) -> np.ndarray:
    """``|B(center, R)|`` (closed hop balls) for ``R = 0..R_max``."""
    d = graph.bfs(center, max_depth=R_max)
    d = d[d >= 0]
    return np.cumsum(np.bincount(d, minlength=R_max + 1)[: R_max + 1])


def _lsq(x, y):
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return (float(coef[0]), float(coef[1])), float(np.sqrt(np.mean(res**2)))


def graph_growth(graph: IntersectionGraph, centers, R_max: int, margin: float = 0.5) -> GrowthFit:
    """Fit ``log|B(x,R)|`` against ``log R`` and against ``R`` over the top half
    ``[ceil(R_max/2), R_max]`` of the radius window.

    Exponential if the exponential residual is below ``margin`` times the
    polynomial one, Polynomial in the mirrored case, Inconclusive otherwise
    or when the counts stop growing inside the window.
    """
    if R_max < 1:
        raise PreconditionError("R_max must be >= 1")
    table = np.zeros(R_max + 1, dtype=np.int64)
    for c in np.atleast_1d(centers):
        table = np.maximum(table, ball_counts(graph, int(c), R_max))
    lo = max(1, math.ceil(R_max / 2))
    R = np.arange(lo, R_max + 1, dtype=float)
    y = np.log(table[lo:].astype(float))
    saturated = bool(np.any(np.diff(table[lo - 1 :]) == 0))
    if len(R) >= 2:
        pc, pres = _lsq(np.log(R), y)
        ec, eres = _lsq(R, y)
    else:
        pc, pres, ec, eres = (float(y[0]), 0.0), 0.0, (float(y[0]), 0.0), 0.0
    if saturated or len(R) < 3:
        cls = INCONCLUSIVE
    elif eres < margin * pres:
        cls = EXPONENTIAL
    elif pres < margin * eres:
        cls = POLYNOMIAL
    else:
        cls = INCONCLUSIVE
    degree = int(round(pc[1])) if cls == POLYNOMIAL else None
    return GrowthFit(
        np.arange(R_max + 1), table, (lo, R_max), pc, ec, pres, eres, cls, degree, saturated, margin
    )


def central_vertices(net: Net, center, k: int = 5) -> np.ndarray:
    """The ``k`` net vertices closest to ``center``."""
    d = net.model.distance(np.asarray(center, float), net.vertices)
    return np.argsort(d, kind="stable")[:k]
