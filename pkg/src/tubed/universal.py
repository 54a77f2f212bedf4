"""Obstruction graphs for coarse embeddings of bounded-degree graphs.

A map ``f: Delta -> Gamma`` is ``K``-regular when every fibre has at most ``K``
vertices and adjacent vertices of ``Delta`` land at ``Gamma``-distance at most
``K``.  ``build_delta_level`` grows a degree-3 graph ``Delta_k`` (a path with
one perfect matching of diagonals per level) until an exhaustive search
certifies that no ``k``-regular map with a pinned root exists.

Vertices are 0-based here.  Vertex 0 of ``Delta`` is the root, and target
vertex ``h`` of ``Gamma`` carries the 1-based label ``h + 1``, so pinning the
root to label ``n_k`` means ``f(0) = n_k - 1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import PreconditionError, ResourceError
from .seeds import stage_rng

# ---------------------------------------------------------------------------
# ruler sequence


def ruler_sequence(k: int) -> int:
    """``n_k = v2(k) + 1``: 1, 2, 1, 3, 1, 2, 1, 4, ..."""
    if k < 1:
        raise PreconditionError("ruler sequence is indexed from 1")
    return (k & -k).bit_length()


# ---------------------------------------------------------------------------
# small graphs


@dataclass
class Graph:
    n: int
    edges: np.ndarray  # (E, 2), i < j, no duplicates

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if e.min() < 0 or e.max() >= self.n:
                raise PreconditionError("edge endpoint outside the vertex set")
            if np.any(e[:, 0] == e[:, 1]):
                raise PreconditionError("self-loops are not allowed")
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
        self.edges = e

    @property
    def csr(self):
        if getattr(self, "_csr", None) is None:
            i, j = self.edges[:, 0], self.edges[:, 1]
            data = np.ones(2 * len(i))
            self._csr = sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(self.n, self.n))
        return self._csr

    def adjacency(self) -> list[list[int]]:
        c = self.csr
        return [sorted(c.indices[c.indptr[v] : c.indptr[v + 1]].tolist()) for v in range(self.n)]

    def degrees(self):
        return np.diff(self.csr.indptr)

    def is_connected(self):
        return self.n <= 1 or connected_components(self.csr, directed=False)[0] == 1

    def distances(self) -> np.ndarray:
        """All-pairs hop distances; unreachable pairs get ``n`` (beyond any hop count)."""
        if getattr(self, "_dist", None) is None:
            if self.n == 0:
                self._dist = np.zeros((0, 0), dtype=np.int64)
            else:
                D = shortest_path(self.csr, unweighted=True, directed=False)
                D[~np.isfinite(D)] = self.n
                self._dist = D.astype(np.int64)
        return self._dist

    def to_json(self):
        return {"vertices": [{"id": i} for i in range(self.n)], "edges": self.edges.tolist()}


def path_graph(n: int) -> Graph:
    return Graph(n, np.stack([np.arange(n - 1), np.arange(1, n)], axis=1) if n > 1 else np.zeros((0, 2)))


def cycle_graph(n: int) -> Graph:
    e = [(i, (i + 1) % n) for i in range(n)] if n > 2 else []
    return Graph(n, np.array(e, dtype=np.int64).reshape(-1, 2))


def graph_from_intersection(graph) -> Graph:
    return Graph(graph.n_vertices, graph.edges)


# ---------------------------------------------------------------------------
# regular maps


@dataclass
class RegularMapCheck:
    ok: bool
    multiplicity_violations: list  # target vertices with more than K preimages
    displacement_violations: list  # source edges moved more than K apart


def regular_map_check(delta: Graph, gamma: Graph, K: int, f) -> RegularMapCheck:
    f = np.asarray(f, dtype=np.int64)
    if f.shape != (delta.n,):
        raise PreconditionError("the map must assign one target vertex to every source vertex")
    if len(f) and (f.min() < 0 or f.max() >= gamma.n):
        bad = int(np.flatnonzero((f < 0) | (f >= gamma.n))[0])
        raise PreconditionError(f"vertex {bad} is mapped outside the target graph", vertex=bad)
    counts = np.bincount(f, minlength=gamma.n)
    mult = np.flatnonzero(counts > K).tolist()
    D = gamma.distances()
    e = delta.edges
    moved = D[f[e[:, 0]], f[e[:, 1]]] if len(e) else np.zeros(0, dtype=np.int64)
    disp = [tuple(x) for x in e[moved > K].tolist()]
    return RegularMapCheck(not mult and not disp, mult, disp)


@dataclass
class SearchResult:
    found: bool
    assignment: list | None
    nodes: int
    n_solutions: int | None = None
    root_images: list = field(default_factory=list)


def _bfs_order(adj, root):
    order = [root]
    seen = {root}
    for v in order:
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                order.append(w)
    return order


def exists_regular_map(
    delta: Graph,
    gamma: Graph,
    K: int,
    root_image: int | None = None,
    node_budget: int = 10_000_000,
    count_all: bool = False,
) -> SearchResult:
    """Backtracking search for a ``K``-regular map ``Delta -> Gamma``.

    Source vertices are assigned in BFS order from vertex 0.  The candidates
    for a vertex are the target vertices within ``K`` of the images of all its
    already-assigned neighbours whose fibre is not yet full, tried in
    increasing order.  With ``root_image`` the root is pinned; otherwise every
    root image is tried.  ``count_all`` enumerates every solution.
    """
    if K < 1:
        raise PreconditionError("K must be >= 1")
    if delta.n == 0:
        return SearchResult(True, [], 0, 1 if count_all else None)
    if not delta.is_connected():
        raise PreconditionError("source graph must be connected")
    if root_image is not None and not 0 <= root_image < gamma.n:
        raise PreconditionError("pinned root image outside the target graph")
    adj = delta.adjacency()
    order = _bfs_order(adj, 0)
    pos = {v: i for i, v in enumerate(order)}
    back = [[pos[w] for w in adj[v] if pos[w] < i] for i, v in enumerate(order)]
    near = gamma.distances() <= K
    roots = list(range(gamma.n)) if root_image is None else [root_image]
    n = len(order)
    img = np.full(n, -1, dtype=np.int64)
    counts = np.zeros(gamma.n, dtype=np.int64)
    cands: list = [None] * n
    ptr = [0] * n
    nodes = 0
    solutions = 0
    first = None
    for r in roots:
        if root_image is not None:
            # displacement bound: every image lies within K*(|Delta|-1) of f(0)
            reach = gamma.distances()[r] <= K * (n - 1)
        else:
            reach = np.ones(gamma.n, dtype=bool)
        cands[0] = np.array([r])
        ptr[0] = 0
        i = 0
        while i >= 0:
            if i < n and ptr[i] < len(cands[i]):
                h = int(cands[i][ptr[i]])
                ptr[i] += 1
                nodes += 1
                if nodes > node_budget:
                    raise ResourceError(
                        f"search exceeded the node budget {node_budget}",
                        nodes=nodes,
                        budget=node_budget,
                        bound=count_bound(max(2, int(gamma.degrees().max()) + 1), K, delta.n, 1)["maps_upper"],
                    )
                img[i] = h
                counts[h] += 1
                i += 1
                if i == n:
                    solutions += 1
                    if first is None:
                        first = img.copy()
                    if not count_all:
                        break
                    counts[img[n - 1]] -= 1
                    i = n - 1
                    continue
                mask = (counts < K) & reach
                for j in back[i]:
                    mask &= near[img[j]]
                cands[i] = np.flatnonzero(mask)
                ptr[i] = 0
            else:
                i -= 1
                if i >= 0:
                    counts[img[i]] -= 1
                    img[i] = -1
        if first is not None and not count_all:
            break
        counts[:] = 0
        img[:] = -1
    if first is None:
        return SearchResult(False, None, nodes, 0 if count_all else None, roots)
    f = np.empty(delta.n, dtype=np.int64)
    f[order] = first
    return SearchResult(True, f.tolist(), nodes, solutions if count_all else None, roots)


def brute_force_regular_maps(delta: Graph, gamma: Graph, K: int, root_image: int | None = None, limit=10**6):
    """``(number of K-regular maps, first one in lexicographic order)`` by full
    enumeration of ``|Gamma|^|Delta|`` maps (root fixed when pinned)."""
    free = delta.n - (1 if root_image is not None else 0)
    total = gamma.n**free
    if total > limit:
        raise ResourceError(f"{total} maps exceed the enumeration limit {limit}", count=total)
    D = gamma.distances()
    e = delta.edges
    count = 0
    first = None
    for tail in itertools.product(range(gamma.n), repeat=free):
        f = np.array(((root_image,) if root_image is not None else ()) + tail, dtype=np.int64)
        if len(e) and np.any(D[f[e[:, 0]], f[e[:, 1]]] > K):
            continue
        if np.bincount(f, minlength=gamma.n).max(initial=0) > K:
            continue
        count += 1
        if first is None:
            first = f.tolist()
    return count, first


# ---------------------------------------------------------------------------
# counting bound


def count_bound(d: int, k: int, S: int, L: int) -> dict:
    """``maps_upper = d^(k S) (k d^k)^S`` labelled graphs admitting a map,
    against ``graphs_count = L!`` matchings."""
    if d < 2 or k < 1 or S < 1 or L < 1:
        raise PreconditionError("need d >= 2, k >= 1, S >= 1, L >= 1")
    return {"maps_upper": d ** (k * S) * (k * d**k) ** S, "graphs_count": math.factorial(L)}


def factorial_crossover(d: int, k: int, S: int) -> int:
    """Smallest ``L`` with ``L! > d^(k S) (k d^k)^S`` (exact integers)."""
    target = count_bound(d, k, S, 1)["maps_upper"]
    L, fact = 1, 1
    while fact <= target:
        L += 1
        fact *= L
    return L


def ratio_turning_point(d: int, k: int) -> int:
    """Along ``S = 4L`` the ratio ``L! / maps_upper`` grows from ``L`` to
    ``L + 1`` exactly when ``L + 1 > (k d^(2k))^4``; this is that threshold."""
    return (k * d ** (2 * k)) ** 4


# ---------------------------------------------------------------------------
# Delta_k


@dataclass
class DeltaGraph:
    levels: list  # S_0 = 0 < S_1 < ...
    matchings: list  # per level: list of (a, b) diagonals
    certificates: list = field(default_factory=list)

    @property
    def n(self):
        return self.levels[-1]

    def graph(self) -> Graph:
        n = self.n
        path = [(i, i + 1) for i in range(n - 1)]
        diag = [tuple(e) for m in self.matchings for e in m]
        return Graph(n, np.array(path + diag, dtype=np.int64).reshape(-1, 2))

    def check_structure(self) -> list[str]:
        """Degree <= 3, level locality and matching shape; returns problems."""
        problems = []
        g = self.graph()
        if g.n and g.degrees().max() > 3:
            problems.append("degree exceeds 3")
        for m, diag in enumerate(self.matchings):
            lo, hi = self.levels[m], self.levels[m + 1]
            L = len(diag)
            A = sorted(a for a, _ in diag)
            B = sorted(b for _, b in diag)
            if A != list(range(lo, lo + L)) or B != list(range(hi - L, hi)):
                problems.append(f"level {m + 1}: diagonals are not a bijection first-L <-> last-L")
            for a, b in diag:
                if not lo <= a < b < hi:
                    problems.append(f"level {m + 1}: diagonal {(a, b)} leaves its level")
                if b - a == 1:
                    problems.append(f"level {m + 1}: diagonal {(a, b)} duplicates a path edge")
        return problems

    def to_json(self):
        out = self.graph().to_json()
        out.update(
            {
                "levels": list(self.levels),
                "matchings": [[list(e) for e in m] for m in self.matchings],
                "certificates": self.certificates,
            }
        )
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(
            list(obj["levels"]),
            [[tuple(e) for e in m] for m in obj["matchings"]],
            list(obj.get("certificates", [])),
        )


def _matchings(L, max_candidates, rng):
    """Lexicographic permutations first, then seeded uniform ones."""
    n_lex = min(math.factorial(L), max(1, max_candidates // 2))
    seen = set()
    for perm in itertools.islice(itertools.permutations(range(L)), n_lex):
        seen.add(perm)
        yield "lexicographic", perm
    produced = n_lex
    tries = 0
    while produced < max_candidates and len(seen) < math.factorial(L) and tries < 10 * max_candidates:
        tries += 1
        perm = tuple(int(x) for x in rng.permutation(L))
        if perm in seen:
            continue
        seen.add(perm)
        produced += 1
        yield "random", perm


def build_delta_level(
    gamma: Graph,
    k: int,
    prev: DeltaGraph | None = None,
    max_sk: int = 4096,
    max_candidates: int = 64,
    node_budget: int = 2_000_000,
    seed: int = 0,
    root_image: int | None | str = "ruler",
) -> DeltaGraph:
    """Extend ``prev`` by level ``k`` and certify that no ``k``-regular map
    ``Delta_k -> Gamma`` with ``f(0) = n_k - 1`` exists.

    ``S_k`` runs over ``S_{k-1} + 4 * 2^j``; ``L = (S_k - S_{k-1}) // 4``.
    For each ``S_k`` the diagonal matchings ``A <-> B`` are tried in
    lexicographic order, then in seeded random order.  The first candidate
    whose search is exhausted without a map is returned with its certificate.
    ``root_image=None`` certifies against every root image instead.
    """
    prev = prev if prev is not None else DeltaGraph([0], [])
    if len(prev.levels) != k:
        raise PreconditionError(f"level {k} needs Delta_{k - 1} ({len(prev.levels) - 1} levels given)")
    n_k = ruler_sequence(k)
    pin = n_k - 1 if root_image == "ruler" else root_image
    if pin is not None and pin >= gamma.n:
        raise PreconditionError(f"target graph has no vertex labelled {pin + 1}")
    rng = stage_rng(seed, f"delta_level_{k}")
    S_prev = prev.levels[-1]
    tried = []
    j = 0
    while True:
        S = S_prev + 4 * 2**j
        j += 1
        if S > max_sk:
            break
        L = (S - S_prev) // 4
        A = list(range(S_prev, S_prev + L))
        B = list(range(S - L, S))
        for idx, (how, perm) in enumerate(_matchings(L, max_candidates, rng)):
            diag = [(A[i], B[p]) for i, p in enumerate(perm)]
            cand = DeltaGraph(prev.levels + [S], prev.matchings + [diag], list(prev.certificates))
            try:
                res = exists_regular_map(cand.graph(), gamma, k, pin, node_budget)
            except ResourceError as exc:
                tried.append({"S": S, "candidate": idx, "outcome": "budget", "nodes": exc.payload.get("nodes")})
                continue
            if not res.found:
                cand.certificates.append(
                    {
                        "level": k,
                        "S": S,
                        "L": L,
                        "K": k,
                        "root_label": None if pin is None else pin + 1,
                        "candidate": idx,
                        "matching_order": how,
                        "nodes_explored": res.nodes,
                        "exhausted": True,
                        "seed": seed,
                        "candidates_tried": len(tried) + 1,
                    }
                )
                return cand
            tried.append({"S": S, "candidate": idx, "outcome": "map found", "nodes": res.nodes})
    largest = max((t["S"] for t in tried), default=S_prev)
    raise ResourceError(
        f"no certified Delta_{k} up to S_k = {largest}", largest_S=largest, tried=len(tried)
    )


def build_delta(gammas, k_max: int, **kw) -> DeltaGraph:
    """Levels ``1..k_max``.  With a single target every level pins the root per
    the ruler sequence; with a list, level ``k`` is certified against target
    ``n_k`` for every root image."""
    delta = None
    for k in range(1, k_max + 1):
        if isinstance(gammas, Graph):
            delta = build_delta_level(gammas, k, delta, **kw)
        else:
            n_k = ruler_sequence(k)
            if n_k > len(gammas):
                raise PreconditionError(f"level {k} needs target graph {n_k}")
            delta = build_delta_level(gammas[n_k - 1], k, delta, root_image=None, **kw)
    return delta


# ---------------------------------------------------------------------------
# sphere-tube metric graph


SPHERE_TO_TUBE = math.pi / 2 + 0.5  # half a great circle to the attachment, half a tube


@dataclass
class MetricGraph:
    labels: list  # ("sphere", v) or ("tube", u, v)
    edges: np.ndarray
    weights: np.ndarray

    def distances(self) -> np.ndarray:
        n = len(self.labels)
        if n == 0:
            return np.zeros((0, 0))
        i, j = self.edges[:, 0], self.edges[:, 1]
        W = sp.csr_matrix((np.r_[self.weights, self.weights], (np.r_[i, j], np.r_[j, i])), shape=(n, n))
        return shortest_path(W, directed=False)

    def sphere_nodes(self):
        return [i for i, lab in enumerate(self.labels) if lab[0] == "sphere"]


def sphere_tube_graph(delta: Graph) -> MetricGraph:
    """One node per sphere and one per tube midpoint.  A sphere node sits
    antipodal to its attachment circles, so crossing to a tube midpoint costs
    ``pi/2`` on the unit sphere plus half the unit-length tube."""
    if delta.n and not delta.is_connected():
        raise PreconditionError("source graph must be connected")
    if delta.n and delta.degrees().max() > 3:
        raise PreconditionError("source graph must have degree <= 3")
    labels = [("sphere", v) for v in range(delta.n)]
    edges = []
    for u, v in delta.edges.tolist():
        t = len(labels)
        labels.append(("tube", u, v))
        edges += [(u, t), (v, t)]
    e = np.array(edges, dtype=np.int64).reshape(-1, 2)
    return MetricGraph(labels, e, np.full(len(e), SPHERE_TO_TUBE))
