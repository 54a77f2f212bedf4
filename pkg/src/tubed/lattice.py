"""The lattice graph Z^n with l-infinity adjacency, the parity colouring and
the colour-lifted map ``Phi(v) = scale * (v, e_color(v))`` into R^(n + 2^n).

Two ways to fix ``scale`` so that hulls of disjoint cliques end up at
distance >= 1:

* ``calibrate_scale`` -- exhaustive over every pair of disjoint cliques in a
  box (feasible for n <= 2);
* ``certified_scale`` -- a closed-form bound valid on all of Z^n.

Why the closed form holds.  A clique lies in a unit cube ``p + {0,1}^n`` and
uses each parity colour at most once.  Let ``A``, ``B`` be disjoint cliques in
cubes ``p``, ``q`` and ``a``, ``b`` points of their (scale-1) hulls.  If
``|p - q|_inf >= 2`` the lattice parts are separated by 1 along some axis.
Otherwise let ``T`` be the axes where ``p`` and ``q`` differ and ``E`` the
colours whose A- and B-representatives coincide; colours in ``E`` occur on one
side only, every other colour is pushed off the shared face along some axis of
``T``.  Writing ``u`` for the total mass moved along ``T`` and ``w`` for the
mass on ``E``, ``u + w >= 2`` and Cauchy-Schwarz gives
``|a - b|^2 >= u^2/|T| + w^2/|E| >= 4 / (|T| + 2^(n-|T|)) >= 4 / 2^n``.
The bound ``2^(1 - n/2)`` is attained for n >= 2 by the even and odd vertices
of one cube, so ``scale = max(1, 2^(n/2 - 1))`` is optimal there.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, PreconditionError, ResourceError
from .hull import hull_distance

# ---------------------------------------------------------------------------
# colouring and Phi


def parity_coloring(v) -> np.ndarray:
    """Colour index ``sum_i (v_i mod 2) * 2**i``; broadcasts over leading axes."""
    v = np.asarray(v, dtype=np.int64)
    bits = np.mod(v, 2)
    return (bits << np.arange(v.shape[-1])).sum(axis=-1)


def phi_map(v, scale: float = 1.0) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64)
    n = v.shape[-1]
    color = parity_coloring(v)
    out = np.zeros(v.shape[:-1] + (n + 2**n,))
    out[..., :n] = v
    np.put_along_axis(out, (n + color)[..., None], 1.0, axis=-1)
    return scale * out


def linf(a, b):
    return np.max(np.abs(np.asarray(a) - np.asarray(b)), axis=-1)


def _check_clique(C, name):
    C = np.atleast_2d(np.asarray(C, dtype=np.int64))
    for i, j in itertools.combinations(range(len(C)), 2):
        if linf(C[i], C[j]) > 1:
            raise PreconditionError(
                f"{name} is not a clique: {tuple(C[i])} and {tuple(C[j])} are not adjacent",
                pair=(tuple(C[i].tolist()), tuple(C[j].tolist())),
            )
        if linf(C[i], C[j]) == 0:
            raise PreconditionError(f"{name} repeats vertex {tuple(C[i])}")
    return C


def clique_hull_distance(A, B, scale: float = 1.0):
    """Distance between ``Conv Phi(A)`` and ``Conv Phi(B)`` for disjoint cliques."""
    A = _check_clique(A, "A")
    B = _check_clique(B, "B")
    shared = {tuple(a) for a in A.tolist()} & {tuple(b) for b in B.tolist()}
    if shared:
        raise PreconditionError(f"cliques are not disjoint: share {sorted(shared)}", shared=sorted(shared))
    return hull_distance(phi_map(A, scale), phi_map(B, scale))


def max_edge_length(n: int) -> float:
    """``|Phi(v) - Phi(w)|`` maximised over adjacent ``v, w`` at scale 1."""
    return math.sqrt(n + 2)


def min_hull_distance_bound(n: int) -> float:
    """Lower bound on disjoint-clique hull distance at scale 1 (see module doc)."""
    return min(1.0, 2.0 ** (1 - n / 2))


def certified_scale(n: int) -> float:
    return 1.0 / min_hull_distance_bound(n)


# ---------------------------------------------------------------------------
# exhaustive calibration


def enumerate_cliques(n: int, box_radius: int) -> list[tuple[tuple[int, ...], ...]]:
    """All cliques of Z^n_inf inside ``[0, box_radius]^n`` (sorted vertex tuples)."""
    cube = list(itertools.product((0, 1), repeat=n))
    seen = set()
    out = []
    for corner in itertools.product(range(box_radius), repeat=n):
        verts = [tuple(c + e for c, e in zip(corner, off)) for off in cube]
        for k in range(1, len(verts) + 1):
            for sub in itertools.combinations(verts, k):
                key = tuple(sorted(sub))
                if key not in seen:
                    seen.add(key)
                    out.append(key)
    if box_radius == 0:
        out.append((tuple([0] * n),))
    out.sort(key=lambda c: (len(c), c))
    return out


def _canonical_pair(A, B):
    # hull distance is invariant under lattice translations (odd shifts only
    # permute colour axes) and under swapping the two sets
    allv = np.array(A + B)
    o = allv.min(axis=0)
    a = tuple(sorted(tuple(int(x) for x in np.subtract(v, o)) for v in A))
    b = tuple(sorted(tuple(int(x) for x in np.subtract(v, o)) for v in B))
    return min((a, b), (b, a))


@dataclass
class Calibration:
    n: int
    scale: float
    rho: float
    min_distance: float  # min disjoint-clique hull distance at scale 1
    extremal_pair: tuple | None
    box_radius: int | None
    n_cliques: int = 0
    n_pairs: int = 0
    n_computed: int = 0
    n_bounded: int = 0
    method: str = "exhaustive"
    extra: dict = field(default_factory=dict)

    def report(self):
        return {
            "n": self.n,
            "scale": self.scale,
            "rho": self.rho,
            "min_distance_unit_scale": self.min_distance,
            "extremal_pair": None
            if self.extremal_pair is None
            else [[list(v) for v in self.extremal_pair[0]], [list(v) for v in self.extremal_pair[1]]],
            "box_radius": self.box_radius,
            "n_cliques": self.n_cliques,
            "n_pairs": self.n_pairs,
            "n_computed": self.n_computed,
            "n_bounded": self.n_bounded,
            "method": self.method,
        }


def calibrate_scale(n: int, box_radius: int, max_pairs: int = 5_000_000) -> Calibration:
    """Smallest scale making every disjoint-clique pair in ``[0, box]^n`` at hull
    distance >= 1, with the extremal pair as certificate.

    Distances are homogeneous in the scale, so the answer is ``1 / D`` with
    ``D`` the minimum over pairs at scale 1.  Every pair is accounted for:
    either its distance is computed, or the axis gap between the two lattice
    bounding boxes (a lower bound on the hull distance) already reaches the
    running minimum.  Pairs are processed in increasing gap order.
    """
    if n < 1 or box_radius < 2:
        raise PreconditionError("need n >= 1 and box_radius >= 2")
    cliques = enumerate_cliques(n, box_radius)
    m = len(cliques)
    n_pairs_upper = m * (m - 1) // 2
    if n_pairs_upper > max_pairs:
        raise ResourceError(
            f"{n_pairs_upper} clique pairs exceed the budget {max_pairs}", count=n_pairs_upper
        )
    lo = np.array([np.min(c, axis=0) for c in cliques])
    hi = np.array([np.max(c, axis=0) for c in cliques])
    sets = [frozenset(c) for c in cliques]
    iu, ju = np.triu_indices(m, k=1)
    gap = np.maximum(lo[ju] - hi[iu], lo[iu] - hi[ju]).max(axis=1).clip(min=0).astype(float)
    disjoint = np.fromiter((sets[i].isdisjoint(sets[j]) for i, j in zip(iu, ju)), bool, count=len(iu))
    iu, ju, gap = iu[disjoint], ju[disjoint], gap[disjoint]
    order = np.argsort(gap, kind="stable")
    cache: dict = {}
    best = math.inf
    best_pair = None
    computed = bounded = 0
    for k in order:
        if gap[k] >= best:
            bounded += len(order) - computed - bounded
            break
        A, B = cliques[iu[k]], cliques[ju[k]]
        key = _canonical_pair(A, B)
        if key not in cache:
            cache[key] = hull_distance(phi_map(np.array(key[0])), phi_map(np.array(key[1]))).distance
        computed += 1
        d = cache[key]
        if d < best:
            best, best_pair = d, (A, B)
    scale = 1.0 / best
    return Calibration(
        n,
        scale,
        scale * _box_max_edge(n, box_radius),
        best,
        best_pair,
        box_radius,
        m,
        len(order),
        computed,
        bounded,
        "exhaustive",
        {"distinct_configurations": len(cache)},
    )


def _box_max_edge(n, box_radius):
    pts = np.array(list(itertools.product(range(box_radius + 1), repeat=n)))
    P = phi_map(pts)
    best = 0.0
    for step in itertools.product((-1, 0, 1), repeat=n):
        if not any(step):
            continue
        q = pts + np.array(step)
        ok = np.all((q >= 0) & (q <= box_radius), axis=1)
        if ok.any():
            best = max(best, float(np.linalg.norm(P[ok] - phi_map(q[ok]), axis=1).max()))
    return best


def certified_calibration(n: int) -> Calibration:
    """Closed-form calibration valid on all of Z^n (see module docstring)."""
    s = certified_scale(n)
    witness = None
    if n >= 2:
        cube = list(itertools.product((0, 1), repeat=n))
        even = tuple(v for v in cube if sum(v) % 2 == 0)
        odd = tuple(v for v in cube if sum(v) % 2 == 1)
        witness = (even, odd)
    return Calibration(
        n, s, s * max_edge_length(n), min_hull_distance_bound(n), witness, None, method="closed-form"
    )


def calibrate(n: int, box_radius: int = 6) -> Calibration:
    """Exhaustive box calibration when affordable, closed form otherwise."""
    if n <= 2:
        return calibrate_scale(n, box_radius)
    return certified_calibration(n)


# ---------------------------------------------------------------------------
# lattice coordinates for graphs


@dataclass
class LatticeCoords:
    n: int
    coords: np.ndarray  # (V, n) int

    def as_json(self, ids=None):
        ids = range(len(self.coords)) if ids is None else ids
        return {"n": self.n, "coords": {str(i): [int(x) for x in c] for i, c in zip(ids, self.coords)}}

    @classmethod
    def from_json(cls, obj):
        items = sorted(obj["coords"].items(), key=lambda kv: int(kv[0]))
        coords = np.array([v for _, v in items], dtype=np.int64).reshape(-1, int(obj["n"]))
        return cls(int(obj["n"]), coords)


@dataclass
class LatticeResult:
    ok: bool
    coords: LatticeCoords | None
    violations: np.ndarray  # edges (i, j) whose images are not at l-inf distance 1
    collisions: np.ndarray  # non-adjacent pairs sharing a lattice point
    method: str
    info: dict = field(default_factory=dict)


def verify_lattice_coords(edges, coords) -> tuple[np.ndarray, np.ndarray]:
    """Edges violating ``|c(v) - c(w)|_inf == 1`` and colliding non-edges."""
    coords = np.asarray(coords, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges):
        bad = edges[linf(coords[edges[:, 0]], coords[edges[:, 1]]) != 1]
    else:
        bad = edges
    _, inv, counts = np.unique(coords, axis=0, return_inverse=True, return_counts=True)
    inv = np.asarray(inv).ravel()
    collisions = []
    edge_set = {tuple(e) for e in edges.tolist()}
    for g in np.flatnonzero(counts > 1):
        members = np.flatnonzero(inv == g)
        for i, j in itertools.combinations(members.tolist(), 2):
            if (i, j) not in edge_set:
                collisions.append((i, j))
    return bad, np.array(collisions, dtype=np.int64).reshape(-1, 2)


def grid_snap_coords(graph, max_dim: int | None = None) -> LatticeResult:
    """Lattice coordinates for an intersection graph of a flat-model net.

    The first coordinates are ``floor(x / (2*lam*r))`` (adjacent vertices are
    closer than the pitch, so these move by at most 1).  Vertices sharing a
    cell get distinct binary slot codes in extra coordinates; binary codes
    differ by at most 1 per axis, so edges stay at l-inf distance 1 and the
    map is injective.
    """
    net = graph.net
    model = net.model
    if not model.is_flat:
        return LatticeResult(
            False, None, np.zeros((0, 2), np.int64), np.zeros((0, 2), np.int64), "grid-snap",
            {"reason": f"grid snapping needs a flat model, got {model.kind}"},
        )
    pitch = 2 * graph.lam * net.r
    base = np.floor(net.vertices / pitch).astype(np.int64)
    dim = base.shape[1]
    _, inv, counts = np.unique(base, axis=0, return_inverse=True, return_counts=True)
    inv = np.asarray(inv).ravel()
    slot = np.zeros(len(base), dtype=np.int64)
    seen = np.zeros(len(counts), dtype=np.int64)
    for v, c in enumerate(inv.tolist()):
        slot[v] = seen[c]
        seen[c] += 1
    occupancy = int(counts.max()) if len(counts) else 1
    bits = max(0, math.ceil(math.log2(occupancy))) if occupancy > 1 else 0
    if max_dim is not None and dim + bits > max_dim:
        bits = max(0, max_dim - dim)
        slot = slot % (2**bits)
    extra = (slot[:, None] >> np.arange(bits)) & 1
    coords = np.concatenate([base, extra], axis=1)
    bad, coll = verify_lattice_coords(graph.edges, coords)
    ok = len(bad) == 0 and len(coll) == 0 and (max_dim is None or dim <= max_dim)
    info = {"pitch": pitch, "occupancy": occupancy, "slot_bits": bits}
    return LatticeResult(ok, LatticeCoords(coords.shape[1], coords), bad, coll, "grid-snap", info)


# pluggable embedders: name -> callable(graph, **kw) -> LatticeResult
EMBEDDERS: dict[str, Callable] = {"grid-snap": grid_snap_coords}


def register_embedder(name: str, fn: Callable) -> None:
    EMBEDDERS[name] = fn


def heuristic_lattice_coords(graph, method: str = "grid-snap", **kw) -> LatticeResult:
    if method not in EMBEDDERS:
        raise ConfigurationError(f"unknown lattice embedder {method!r}")
    return EMBEDDERS[method](graph, **kw)
