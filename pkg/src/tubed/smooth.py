"""Bump function, partition of unity and the maps f1 (separating), f2 (locally
bi-Lipschitz) and their scaled sum."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, CoverageError, NumericError, PreconditionError
from .lattice import LatticeCoords, phi_map
from .models import ManifoldModel
from .nets import IntersectionGraph, Net, intersection_graph

# ---------------------------------------------------------------------------
# bump


def _g(s):
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def bump(t):
    """``sigma(t) = g(2-t) / (g(2-t) + g(t-1))`` with ``g(s) = exp(-1/s)``, s > 0.

    Equal to 1 for ``t <= 1`` and to 0 for ``t >= 2``.
    """
    t = np.asarray(t, float)
    a, b = _g(2.0 - t), _g(t - 1.0)
    return a / (a + b)


def bump_derivative(t, k: int):
    """Exact ``k``-th derivative of ``bump`` (``0 <= k <= 4``).

    On (1, 2), ``sigma = L(z)`` with ``L`` the logistic function and
    ``z = 1/(t-1) - 1/(2-t)``; the derivatives follow from the chain rule,
    using ``L' = L(1-L)`` and its polynomial successors.
    """
    if not 0 <= k <= 4:
        raise PreconditionError("derivative order must be in 0..4")
    t = np.asarray(t, float)
    if k == 0:
        return bump(t)
    out = np.zeros_like(t)
    inside = (t > 1) & (t < 2)
    if not inside.any():
        return out
    ti = t[inside]
    a, b = 2.0 - ti, ti - 1.0
    z = 1.0 / b - 1.0 / a
    zd = [None] + [
        -math.factorial(j) * (a ** -(j + 1) - (-1) ** j * b ** -(j + 1)) for j in range(1, 5)
    ]
    L = expit(z)
    e = np.exp(-np.abs(z))
    w = e / (1 + e) ** 2  # L(1-L), computed without cancellation
    L1 = w
    L2 = w * (1 - 2 * L)
    L3 = w * (1 - 6 * L + 6 * L * L)
    L4 = w * (1 - 2 * L) * (1 - 12 * L + 12 * L * L)
    z1, z2, z3, z4 = zd[1], zd[2], zd[3], zd[4]
    with np.errstate(over="ignore", invalid="ignore"):
        if k == 1:
            v = L1 * z1
        elif k == 2:
            v = L2 * z1**2 + L1 * z2
        elif k == 3:
            v = L3 * z1**3 + 3 * L2 * z1 * z2 + L1 * z3
        else:
            v = L4 * z1**4 + 6 * L3 * z1**2 * z2 + L2 * (3 * z2**2 + 4 * z1 * z3) + L1 * z4
    v = np.where(w == 0, 0.0, v)
    out[inside] = v
    return out


# ---------------------------------------------------------------------------
# partition of unity


@dataclass
class PartitionValues:
    indptr: np.ndarray
    indices: np.ndarray  # net vertices in the support V_x
    weights: np.ndarray  # phi_v(x)
    psi_sum: np.ndarray  # Psi(x)

    def support(self, i):
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def weights_of(self, i):
        return self.weights[self.indptr[i] : self.indptr[i + 1]]

    @property
    def normalization_error(self) -> float:
        rows = np.repeat(np.arange(len(self.psi_sum)), np.diff(self.indptr))
        s = np.bincount(rows, weights=self.weights, minlength=len(self.psi_sum))
        return float(np.max(np.abs(s - 1.0))) if len(s) else 0.0


@dataclass
class PartitionOfUnity:
    """``phi_v = psi_v / Psi`` with ``psi_v = sigma(d(v, x) / r)``; ``supp psi_v = 2 B_v``."""

    net: Net

    @property
    def r(self):
        return self.net.r

    def evaluate(self, x) -> PartitionValues:
        x = np.asarray(x, float).reshape(-1, self.net.model.coord_dim)
        indptr, indices, dists = self.net.index().ball(x, 2 * self.r, strict=True)
        psi = bump(dists / self.r)
        rows = np.repeat(np.arange(len(x)), np.diff(indptr))
        total = np.bincount(rows, weights=psi, minlength=len(x))
        bad = np.flatnonzero(total <= 0)
        if len(bad):
            raise CoverageError(
                f"{len(bad)} point(s) lie outside every ball 2B_v", first=int(bad[0]), count=len(bad)
            )
        return PartitionValues(indptr, indices, psi / total[rows], total)


def clique_violations(values: PartitionValues, net: Net, lam: float = 2.0) -> int:
    """Number of evaluated supports that are not cliques of the graph with
    adjacency ``d < 2*lam*r``."""
    bad = 0
    model = net.model
    limit = 2 * lam * net.r
    for i in range(len(values.psi_sum)):
        s = values.support(i)
        if len(s) > 1:
            P = net.vertices[s]
            d = model.distance(P[:, None, :], P[None, :, :])
            iu = np.triu_indices(len(s), 1)
            if np.any(d[iu] >= limit):
                bad += 1
    return bad


# ---------------------------------------------------------------------------
# f1


@dataclass
class F1Map:
    """``f1(x) = sum_v phi_v(x) * Phi(v)``: a point of ``Conv Phi(V_x)``."""

    partition: PartitionOfUnity
    coords: LatticeCoords
    scale: float
    phi_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.coords.coords) != len(self.partition.net):
            raise ConfigurationError(
                "lattice coordinates do not cover the net",
                n_coords=len(self.coords.coords),
                n_vertices=len(self.partition.net),
            )
        self.phi_table = phi_map(self.coords.coords, self.scale)

    @property
    def dim(self):
        return self.phi_table.shape[1]

    def evaluate(self, x, chunk=20000):
        x = np.asarray(x, float).reshape(-1, self.partition.net.model.coord_dim)
        out = np.empty((len(x), self.dim))
        for s in range(0, len(x), chunk):
            vals = self.partition.evaluate(x[s : s + chunk])
            rows = np.repeat(np.arange(len(vals.psi_sum)), np.diff(vals.indptr))
            block = np.zeros((len(vals.psi_sum), self.dim))
            np.add.at(block, rows, vals.weights[:, None] * self.phi_table[vals.indices])
            out[s : s + chunk] = block
        return out

    __call__ = evaluate


# ---------------------------------------------------------------------------
# f2


def greedy_coloring(graph: IntersectionGraph) -> np.ndarray:
    """First-fit colouring in net order."""
    n = graph.n_vertices
    color = np.full(n, -1, dtype=np.int64)
    csr = graph.csr
    for v in range(n):
        nb = csr.indices[csr.indptr[v] : csr.indptr[v + 1]]
        used = set(color[nb].tolist())
        c = 0
        while c in used:
            c += 1
        color[v] = c
    return color


# Local chart profiles for f2: name -> (plateau radius / r, colouring lambda).
# ``s_v(exp_v y) = sigma(|y| / plateau) * y`` is the identity on the plateau
# ball and vanishes outside twice that radius.  Colour classes come from the
# graph with adjacency ``d < 2*lambda*r``, so the supports of one class are
# disjoint from each other's plateau balls.
#
# "literal": sigma(2|y|) at r = 1.  Its radial profile t*sigma(2t) turns back
#   at t ~ 0.61 r, so f2 folds wherever a single chart covers a point beyond
#   that radius.
# "wide": the plateau is the whole ball 2B_v; since r is a Lebesgue number of
#   {2B_v}, every unit ball sits on one plateau and f2 is bi-Lipschitz there.
F2_PROFILES = {"literal": (0.5, 2.0), "wide": (2.0, 3.0)}


@dataclass
class F2Map:
    """``f2 = S_1 + ... + S_N`` (blocks), ``S_i = sum_{v in V_i} s_v`` with
    ``s_v(exp_v y) = sigma(|y| / plateau) * y`` in the model's canonical frame at ``v``."""

    net: Net
    colors: np.ndarray
    plateau: float  # absolute radius

    @property
    def n_colors(self):
        return int(self.colors.max()) + 1 if len(self.colors) else 0

    @property
    def dim(self):
        return self.n_colors * self.net.model.dim

    def evaluate(self, x, chunk=20000):
        model = self.net.model
        x = np.asarray(x, float).reshape(-1, model.coord_dim)
        n = model.dim
        out = np.zeros((len(x), self.dim))
        for s in range(0, len(x), chunk):
            xs = x[s : s + chunk]
            indptr, idx, dists = self.net.index().ball(xs, 2 * self.plateau, strict=True)
            rows = np.repeat(np.arange(len(xs)), np.diff(indptr))
            if len(rows) == 0:
                continue
            y = model.log_map(self.net.vertices[idx], xs[rows])
            sv = bump(dists / self.plateau)[:, None] * y
            cols = self.colors[idx][:, None] * n + np.arange(n)
            block = np.zeros((len(xs), self.dim))
            np.add.at(block, (rows[:, None], cols), sv)
            out[s : s + chunk] = block
        return out

    __call__ = evaluate


def build_f2(net: Net, profile: str = "wide") -> F2Map:
    if profile not in F2_PROFILES:
        raise ConfigurationError(f"unknown f2 profile {profile!r}")
    plateau, lam = F2_PROFILES[profile]
    colors = greedy_coloring(intersection_graph(net, lam))
    return F2Map(net, colors, plateau * net.r)


def coloring_is_proper(f2: F2Map) -> bool:
    """Exact check: no support ``B(w, 2*plateau)`` meets the plateau ball of
    another vertex ``v`` of the same colour."""
    net = f2.net
    i, j, _ = net.index().pairs_within(3 * f2.plateau, strict=True)
    return not np.any(f2.colors[i] == f2.colors[j])


# ---------------------------------------------------------------------------
# combined map, epsilon, derivative estimates


@dataclass
class SmoothMapStack:
    model: ManifoldModel
    f1: Callable
    f2: Callable
    eps: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def d1(self):
        return self.f1.dim

    @property
    def d2(self):
        return self.f2.dim

    def raw(self, x):
        return np.concatenate([self.f1(x), self.f2(x)], axis=1)

    def combined(self, x):
        if self.eps is None or not self.eps > 0:
            raise PreconditionError("combined map needs eps > 0")
        return self.eps * self.raw(x)

    __call__ = combined


def _random_unit(rng, m, n):
    u = rng.standard_normal((m, n))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def stretch_ratios(F, model: ManifoldModel, samples, n_dirs=4, step=1e-4, rng=None):
    """``|F(gamma(h)) - F(gamma(-h))|^2 / (2h)^2`` along random unit geodesics,
    an estimate of ``h(u,u)/g(u,u)`` for the pull-back metric ``h`` of ``F``."""
    rng = rng if rng is not None else np.random.default_rng(0)
    samples = np.asarray(samples, float).reshape(-1, model.coord_dim)
    base = np.repeat(samples, n_dirs, axis=0)
    u = _random_unit(rng, len(base), model.dim)
    fp = F(model.exp_map(base, step * u))
    fm = F(model.exp_map(base, -step * u))
    return np.sum((fp - fm) ** 2, axis=1) / (2 * step) ** 2


def choose_epsilon(F, model, samples, n_dirs=4, margin=1.25, step=1e-4, rng=None):
    """``eps = min(1, 1/sqrt(2 * sup_ratio * margin))`` so that ``eps^2 h < g/2``.

    Returns ``(eps, sup_ratio)``.
    """
    ratios = stretch_ratios(F, model, samples, n_dirs, step, rng)
    sup = float(np.max(ratios)) if len(ratios) else 0.0
    if not np.isfinite(sup) or sup <= 0:
        raise NumericError("stretch ratio estimate degenerated", sup_ratio=sup)
    return min(1.0, 1.0 / math.sqrt(2 * sup * margin)), sup


_STENCILS = {
    1: np.array([-0.5, 0.0, 0.5]),
    2: np.array([1.0, -2.0, 1.0]),
    3: np.array([-0.5, 1.0, 0.0, -1.0, 0.5]),
    4: np.array([1.0, -4.0, 6.0, -4.0, 1.0]),
}


def _stencil_weights(k, half=2):
    st = _STENCILS[k]
    w = np.zeros(2 * half + 1)
    m = len(st) // 2
    w[half - m : half + m + 1] = st
    return w


def _derivative_at(F, model, x, u, k, step, half=2):
    """``|d^k/dt^k F(exp_x(t u))|`` at ``t = 0`` for rows of ``x``, ``u``."""
    offs = np.arange(-half, half + 1) * step
    base = np.repeat(x, len(offs), axis=0)
    vel = np.repeat(u, len(offs), axis=0) * np.tile(offs, len(x))[:, None]
    vals = F(model.exp_map(base, vel)).reshape(len(x), len(offs), -1)
    d = np.einsum("s,gsd->gd", _stencil_weights(k, half), vals) / step**k
    return np.linalg.norm(d, axis=-1)


def derivative_bounds(
    F,
    model,
    samples,
    k_max=4,
    n_geodesics=50,
    length=4.0,
    n_grid=200,
    step=1e-2,
    rng=None,
    n_refine=32,
    refine_rounds=5,
    refine_draws=32,
):
    """Estimates of ``C_k = sup |d^k/dt^k F(gamma(t))|`` over unit-speed
    geodesics, ``k = 1..k_max``, by central differences.

    Random geodesics from sample points are scanned on a grid; then the
    ``n_refine`` best grid hits per order are polished by a shrinking random
    search over nearby base points and directions (the peaks of higher
    derivatives are narrow, so the scan alone undersamples them).
    Returns ``C[k-1]``.
    """
    if not 1 <= k_max <= 4:
        raise PreconditionError("k_max must be in 1..4")
    if step < 1e-6:
        raise NumericError("finite-difference step too small", step=step)
    rng = rng if rng is not None else np.random.default_rng(0)
    samples = np.asarray(samples, float).reshape(-1, model.coord_dim)
    # drawn one geodesic at a time: a run with 2m geodesics scans a superset
    # of the run with m from the same generator state
    picks = [(int(rng.integers(0, len(samples))), rng.standard_normal(model.dim)) for _ in range(n_geodesics)]
    starts = samples[[i for i, _ in picks]].reshape(n_geodesics, model.coord_dim)
    u = np.array([v / np.linalg.norm(v) for _, v in picks]).reshape(n_geodesics, model.dim)
    t_grid = np.linspace(0.0, length, n_grid)
    dt = t_grid[1] - t_grid[0] if n_grid > 1 else length
    half = 2
    offs = np.arange(-half, half + 1) * step
    T = (t_grid[:, None] + offs[None, :]).ravel()
    base = np.repeat(starts, len(T), axis=0)
    vel = np.repeat(u, len(T), axis=0) * np.tile(T, n_geodesics)[:, None]
    pts = model.exp_map(base, vel)
    vals = F(pts).reshape(n_geodesics, n_grid, 2 * half + 1, -1)
    pts = pts.reshape(n_geodesics, n_grid, 2 * half + 1, -1)
    C = np.zeros(k_max)
    for k in range(1, k_max + 1):
        d = np.einsum("s,gtsd->gtd", _stencil_weights(k, half), vals) / step**k
        norms = np.linalg.norm(d, axis=-1)
        C[k - 1] = float(norms.max())
        if n_refine <= 0 or refine_rounds <= 0:
            continue
        # one hit per geodesic, so the polished candidates sit in different basins
        t_best = np.argmax(norms, axis=1)
        g = np.argsort(norms[np.arange(n_geodesics), t_best])[::-1][:n_refine]
        t = t_best[g]
        x0 = pts[g, t, half]
        # velocity of the geodesic at the hit, in the model's frame there
        v0 = model.log_map(x0, pts[g, t, half + 1])
        v0 /= np.linalg.norm(v0, axis=1, keepdims=True)
        best = norms[g, t]
        for rnd in range(refine_rounds):
            radius, spread = dt * 0.5**rnd, 0.3 * 0.5**rnd
            xs = np.repeat(x0, refine_draws, axis=0)
            w = _random_unit(rng, len(xs), model.dim) * radius * rng.uniform(0, 1, (len(xs), 1))
            xs = model.exp_map(xs, w)
            us = np.repeat(v0, refine_draws, axis=0) + spread * rng.standard_normal((len(xs), model.dim))
            us /= np.linalg.norm(us, axis=1, keepdims=True)
            val = _derivative_at(F, model, xs, us, k, step, half).reshape(len(x0), refine_draws)
            j = np.argmax(val, axis=1)
            better = val[np.arange(len(x0)), j] > best
            pick = np.arange(len(x0)) * refine_draws + j
            x0[better] = xs[pick][better]
            v0[better] = us[pick][better]
            best = np.maximum(best, val[np.arange(len(x0)), j])
        C[k - 1] = max(C[k - 1], float(best.max()))
    return C
