"""Curvature-side checks: Gauss formula for surfaces in terms of the second
fundamental form, normal curvatures, a pairwise reach estimator and the
tubedness check for embedded samples."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from .errors import NumericError, PreconditionError

# ---------------------------------------------------------------------------
# second fundamental form of a surface


@dataclass
class SffSample:
    """Components ``s^(k)`` (``m x 2 x 2``) of a second fundamental form on a
    2-plane, one per orthonormal normal direction."""

    mats: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mats, dtype=float)
        if m.ndim == 2:
            m = m[None]
        if m.ndim != 3 or m.shape[1:] != (2, 2) or len(m) < 1:
            raise PreconditionError("expected an (m, 2, 2) array of matrices")
        if not np.array_equal(m, np.swapaxes(m, 1, 2)):
            raise PreconditionError("second fundamental form components must be symmetric")
        self.mats = m

    @property
    def codim(self):
        return len(self.mats)

    def normal_vector(self, theta):
        """``s(u, u)`` for ``u = (cos theta, sin theta)``; shape ``(..., m)``."""
        c, s = np.cos(theta)[..., None], np.sin(theta)[..., None]
        a, b, d = self.mats[:, 0, 0], self.mats[:, 0, 1], self.mats[:, 1, 1]
        return a * c * c + 2 * b * c * s + d * s * s

    def to_json(self):
        return self.mats.tolist()


def mean_vector(sff: SffSample) -> np.ndarray:
    """``h``: circle average of ``s(u, u)``, i.e. half the trace per component."""
    return 0.5 * (sff.mats[:, 0, 0] + sff.mats[:, 1, 1])


def mean_square(sff: SffSample) -> float:
    """``h_hat``: circle average of ``|s(u, u)|^2``."""
    a, b, d = sff.mats[:, 0, 0], sff.mats[:, 0, 1], sff.mats[:, 1, 1]
    return float(np.sum(((a + d) / 2) ** 2 + (a - d) ** 2 / 8 + b**2 / 2))


def gauss_curvature(sff: SffSample) -> float:
    """``K = 3|h|^2 - 2 h_hat`` (equal to ``sum_k det s^(k)``)."""
    h = mean_vector(sff)
    return float(3 * h @ h - 2 * mean_square(sff))


def gauss_curvature_quadrature(sff: SffSample, n: int = 1024):
    """``(h, h_hat, K)`` from an ``n``-point rule on the unit circle."""
    theta = 2 * np.pi * np.arange(n) / n
    v = sff.normal_vector(theta)
    h = v.mean(axis=0)
    hh = float(np.mean(np.sum(v * v, axis=1)))
    return h, hh, float(3 * h @ h - 2 * hh)


def max_normal_curvature(sff: SffSample, resolution: float = 1e-4, tol: float = 1e-9) -> float:
    """``max_u |s(u, u)|`` over unit tangent vectors: grid on ``[0, pi)``, then
    bounded scalar refinement around the best grid node."""
    n = int(math.ceil(math.pi / resolution))
    theta = np.pi * np.arange(n) / n
    vals = np.linalg.norm(sff.normal_vector(theta), axis=1)
    k = int(np.argmax(vals))
    lo, hi = theta[k] - np.pi / n, theta[k] + np.pi / n
    res = minimize_scalar(
        lambda t: -float(np.linalg.norm(sff.normal_vector(np.array(t)))),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": tol},
    )
    return max(float(vals[k]), -float(res.fun))


@dataclass
class LemmaResult:
    applicable: bool  # max normal curvature <= 1 (+ tol)
    passes: bool | None  # None when not applicable
    K: float
    max_normal_curvature: float


def lemma_check(sff: SffSample, tol: float = 1e-9) -> LemmaResult:
    """If all normal curvatures are at most 1 then ``-2 <= K <= 1``."""
    kappa = max_normal_curvature(sff)
    K = gauss_curvature(sff)
    if kappa > 1 + tol:
        return LemmaResult(False, None, K, kappa)
    return LemmaResult(True, bool(-2 - tol <= K <= 1 + tol), K, kappa)


def umbilic_witness() -> SffSample:
    return SffSample(np.eye(2)[None])


def saddle_witness() -> SffSample:
    return SffSample(np.array([[[1.0, 0.0], [0.0, -1.0]], [[0.0, 1.0], [1.0, 0.0]]]))


@dataclass
class SweepReport:
    n_samples: int
    n_drawn: int
    violations: int
    K_min: float
    K_max: float
    per_codim: dict
    quadrature_max_error: float
    seed: int
    kappa_cross_check_error: float = 0.0

    def as_dict(self):
        return dict(self.__dict__)


def batch_max_normal_curvature(mats, n_grid=128, newton_steps=8):
    """Vectorised ``max_u |s(u, u)|`` for a batch ``(B, m, 2, 2)``.

    With ``phi = 2 theta``, ``s(u, u) = c0 + c1 cos phi + c2 sin phi``; the best
    node of an ``n_grid`` grid in ``phi`` is refined by Newton steps on
    ``|s(u, u)|^2``.
    """
    mats = np.asarray(mats, float)
    a, b, d = mats[..., 0, 0], mats[..., 0, 1], mats[..., 1, 1]  # (B, m)
    c0, c1, c2 = (a + d) / 2, (a - d) / 2, b
    phi = 2 * np.pi * np.arange(n_grid) / n_grid
    v = c0[:, :, None] + c1[:, :, None] * np.cos(phi) + c2[:, :, None] * np.sin(phi)
    f = np.sum(v * v, axis=1)
    k = np.argmax(f, axis=1)
    best = f[np.arange(len(f)), k]
    t = phi[k]
    for _ in range(newton_steps):
        cs, sn = np.cos(t)[:, None], np.sin(t)[:, None]
        v = c0 + c1 * cs + c2 * sn
        dv = -c1 * sn + c2 * cs
        ddv = -c1 * cs - c2 * sn
        g1 = 2 * np.sum(v * dv, axis=1)
        g2 = 2 * np.sum(dv * dv + v * ddv, axis=1)
        step = np.where(g2 < 0, -g1 / np.where(g2 < 0, g2, -1.0), 0.0)
        t = t + np.clip(step, -np.pi / n_grid, np.pi / n_grid)
    v = c0 + c1 * np.cos(t)[:, None] + c2 * np.sin(t)[:, None]
    return np.sqrt(np.maximum(best, np.sum(v * v, axis=1)))


def _draw_forms(rng, batch, m, box):
    raw = rng.uniform(-box, box, size=(batch, m, 3))
    mats = np.empty((batch, m, 2, 2))
    mats[..., 0, 0], mats[..., 1, 1] = raw[..., 0], raw[..., 2]
    mats[..., 0, 1] = mats[..., 1, 0] = raw[..., 1]
    return mats


def lemma_sweep(n_samples=10_000, seed=0, codims=(1, 2, 3), box=1.5, n_cross_checks=200, rng=None):
    """Rejection-sample admissible forms (entries uniform in ``[-box, box]``,
    kept iff the max normal curvature is at most 1) and test the lemma.

    Draws whose normal vector already exceeds 1 along ``e1``, ``e2`` or the
    diagonal are rejected before the full maximisation.  A spread subset of
    the kept forms is re-checked with ``max_normal_curvature`` and against
    the 1024-point quadrature.
    """
    rng = rng if rng is not None else np.random.default_rng(seed)
    per = {}
    kept_all = []
    drawn = 0
    quota = {m: n_samples // len(codims) + (1 if i < n_samples % len(codims) else 0) for i, m in enumerate(codims)}
    for m in codims:
        kept = []
        n_kept = 0
        while n_kept < quota[m]:
            batch = 1 << 16
            drawn += batch
            mats = _draw_forms(rng, batch, m, box)
            a, b, d = mats[..., 0, 0], mats[..., 0, 1], mats[..., 1, 1]
            quick = (
                (np.sum(a * a, axis=1) <= 1)
                & (np.sum(d * d, axis=1) <= 1)
                & (np.sum(((a + d) / 2 + b) ** 2, axis=1) <= 1)
            )
            cand = mats[quick]
            if len(cand):
                kappa = batch_max_normal_curvature(cand)
                ok = cand[kappa <= 1.0][: quota[m] - n_kept]
                kept.append(ok)
                n_kept += len(ok)
        M = np.concatenate(kept)
        a, b, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]
        h2 = np.sum(((a + d) / 2) ** 2, axis=1)
        hh = np.sum(((a + d) / 2) ** 2 + (a - d) ** 2 / 8 + b**2 / 2, axis=1)
        K = 3 * h2 - 2 * hh
        per[str(m)] = {
            "samples": int(len(M)),
            "violations": int(np.count_nonzero((K < -2 - 1e-9) | (K > 1 + 1e-9))),
            "K_min": float(K.min()),
            "K_max": float(K.max()),
        }
        kept_all.append(M)
    total = sum(len(M) for M in kept_all)
    stride = max(1, total // max(1, n_cross_checks))
    q_err = 0.0
    kappa_err = 0.0
    for M in (M for block in kept_all for M in block[::stride]):
        sff = SffSample(M)
        h, hh, K = gauss_curvature_quadrature(sff)
        q_err = max(
            q_err,
            float(np.max(np.abs(h - mean_vector(sff)))),
            abs(hh - mean_square(sff)),
            abs(K - gauss_curvature(sff)),
        )
        kappa_err = max(kappa_err, float(abs(max_normal_curvature(sff) - batch_max_normal_curvature(M[None])[0])))
    return SweepReport(
        int(total),
        drawn,
        sum(p["violations"] for p in per.values()),
        min(p["K_min"] for p in per.values()),
        max(p["K_max"] for p in per.values()),
        per,
        q_err,
        seed,
        kappa_err,
    )


# ---------------------------------------------------------------------------
# reach


@dataclass
class ReachReport:
    reach_estimate: float
    max_normal_curvature: float
    witness: tuple[int, int] | None
    n_pairs: int
    seed: int | None = None
    projection_injective: bool | None = None  # reach estimate above the tube radius
    tube_radius: float | None = None
    extra: dict = field(default_factory=dict)

    def as_json(self):
        out = {
            "reach_estimate": _json_float(self.reach_estimate),
            "max_normal_curvature": _json_float(self.max_normal_curvature),
            "witness": None if self.witness is None else {"i": self.witness[0], "j": self.witness[1]},
            "n_pairs": self.n_pairs,
            "seed": self.seed,
            "projection_injective": self.projection_injective,
            "tube_radius": self.tube_radius,
        }
        out.update({k: _json_float(v) if isinstance(v, float) else v for k, v in self.extra.items()})
        return out


def _json_float(x):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _check_frames(frames, tol=1e-9):
    frames = np.asarray(frames, float)
    G = np.einsum("nid,njd->nij", frames, frames)
    err = np.abs(G - np.eye(frames.shape[1])).max(axis=(1, 2))
    bad = np.flatnonzero(err > tol)
    if len(bad):
        raise PreconditionError(
            f"tangent frame at point {int(bad[0])} is not orthonormal", point=int(bad[0]), error=float(err[bad[0]])
        )
    return frames


def reach_estimate(points, tangent_bases, floor=1e-6, chunk=256, k_local=8, seed=None, tube_radius=None):
    """Min over ordered pairs of ``|y - x|^2 / (2 dist(y - x, T_x))``.

    Pairs with ``|y - x|^2`` below ``floor`` are skipped; pairs with ``y - x``
    tangent give ``+inf``.  The estimate comes from finitely many pairs and
    so approaches the true reach from above.  The curvature estimate is the
    largest reciprocal quotient over each point's ``k_local`` nearest
    neighbours.
    """
    P = np.asarray(points, float)
    if len(P) < 2:
        raise PreconditionError("reach estimate needs at least 2 points")
    F = _check_frames(tangent_bases)
    best = math.inf
    witness = None
    n = len(P)
    for s in range(0, n, chunk):
        x = P[s : s + chunk]
        diff = P[None, :, :] - x[:, None, :]  # (c, n, D)
        sq = np.einsum("cnd,cnd->cn", diff, diff)
        tang = np.einsum("cnd,ckd->cnk", diff, F[s : s + chunk])
        normal = np.sqrt(np.clip(sq - np.einsum("cnk,cnk->cn", tang, tang), 0.0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where((sq >= floor) & (normal > 0), sq / (2 * normal), np.inf)
        k = int(np.argmin(q))
        if q.flat[k] < best:
            best = float(q.flat[k])
            witness = (s + k // n, k % n)
    kappa = _local_curvature(P, F, floor, k_local)
    return ReachReport(
        best,
        kappa,
        witness if math.isfinite(best) else None,
        n * (n - 1),
        seed,
        None if tube_radius is None else bool(best > tube_radius),
        tube_radius,
    )


def _local_curvature(P, F, floor, k_local):
    k = min(k_local + 1, len(P))
    _, nb = cKDTree(P).query(P, k=k)
    nb = nb[:, 1:]
    diff = P[nb] - P[:, None, :]
    sq = np.einsum("nkd,nkd->nk", diff, diff)
    tang = np.einsum("nkd,nid->nki", diff, F)
    normal = np.sqrt(np.clip(sq - np.einsum("nki,nki->nk", tang, tang), 0.0, None))
    ok = sq >= floor
    if not ok.any():
        return 0.0
    return float(np.max(np.where(ok, 2 * normal / np.where(ok, sq, 1.0), 0.0)))


# ---------------------------------------------------------------------------
# tubedness of an embedded region sample


def pushforward_frames(F, model, X, step):
    """Orthonormal frames of ``dF`` at ``X`` by central differences along the
    model's canonical frame, orthonormalised by QR."""
    X = np.asarray(X, float).reshape(-1, model.coord_dim)
    n = model.dim
    cols = []
    for i in range(n):
        e = np.zeros((len(X), n))
        e[:, i] = step
        cols.append((F(model.exp_map(X, e)) - F(model.exp_map(X, -e))) / (2 * step))
    J = np.stack(cols, axis=-1)  # (N, D, n)
    Q, R = np.linalg.qr(J)
    diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    scale = np.maximum(np.linalg.norm(J, axis=(1, 2)), 1e-300)
    bad = np.flatnonzero(diag.min(axis=1) <= 1e-10 * scale)
    if len(bad):
        raise NumericError(f"differential is rank deficient at point {int(bad[0])}", point=int(bad[0]))
    return np.swapaxes(Q, 1, 2), J


def tubedness_check(F, model, points, eps, r=1.0, n_points=1500, n_pairs=10_000, rng=None, seed=None, far=1.0):
    """Reach estimate of ``F(region)`` plus the far-pair separation check:
    no pair with model distance ``>= far`` may have image distance below
    ``eps * (1 - 1e-6)``."""
    rng = rng if rng is not None else np.random.default_rng(seed)
    points = np.asarray(points, float).reshape(-1, model.coord_dim)
    sel = np.sort(rng.choice(len(points), size=min(n_points, len(points)), replace=False))
    X = points[sel]
    Y = F(X)
    frames, _ = pushforward_frames(F, model, X, 1e-4 * r)
    report = reach_estimate(Y, frames, seed=seed, tube_radius=None)
    # far pairs: every pair of the subset plus random pairs of the region
    i, j = np.triu_indices(len(X), 1)
    dm = model.distance(X[i], X[j])
    di = np.linalg.norm(Y[i] - Y[j], axis=1)
    far_mask = dm >= far
    a = rng.integers(0, len(points), n_pairs)
    b = rng.integers(0, len(points), n_pairs)
    dm2 = model.distance(points[a], points[b])
    keep = dm2 >= far
    di2 = np.linalg.norm(F(points[a[keep]]) - F(points[b[keep]]), axis=1)
    far_d = np.concatenate([di[far_mask], di2])
    threshold = eps * (1 - 1e-6)
    collisions = int(np.count_nonzero(far_d < threshold))
    report.extra.update(
        {
            "far_pairs": int(len(far_d)),
            "far_pair_min_image_distance": float(far_d.min()) if len(far_d) else math.inf,
            "far_pair_collisions": collisions,
            "eps": float(eps),
            "n_points": int(len(X)),
        }
    )
    report.tube_radius = None
    return report
