"""Distance between convex hulls of small point sets.

``hull_distance(A, B)`` is the norm of the minimum-norm point of the
Minkowski difference ``Conv(A) - Conv(B) = Conv{a - b}``, found with Wolfe's
finite active-set algorithm (P. Wolfe, "Finding the nearest point in a
polytope", Math. Programming 11, 1976).  For the sets used here (at most a
few hundred difference vectors) this is exact up to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class HullDistance:
    distance: float
    alpha: np.ndarray  # barycentric weights on A
    beta: np.ndarray  # barycentric weights on B
    iterations: int


def _affine_minimizer(Q):
    # argmin |mu @ Q| subject to sum(mu) = 1
    k = len(Q)
    G = Q @ Q.T
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = G
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    return sol[:k]


def min_norm_point(P, tol=1e-14, max_iter=10_000):
    """Minimum-norm point of ``Conv(P)``; returns ``(x, weights, iterations)``."""
    P = np.asarray(P, dtype=float)
    m = len(P)
    norms2 = np.einsum("ij,ij->i", P, P)
    scale = max(float(norms2.max()), 1e-300)
    j0 = int(np.argmin(norms2))
    S = [j0]
    lam = np.array([1.0])
    x = P[j0].copy()
    it = 0
    while it < max_iter:
        it += 1
        j = int(np.argmin(P @ x))
        if x @ x - P[j] @ x <= tol * scale or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            mu = _affine_minimizer(P[S])
            if np.all(mu > 1e-15):
                lam = mu
                break
            neg = mu <= 1e-15
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - mu), np.inf)
            theta = float(np.min(ratios))
            lam = (1 - theta) * lam + theta * mu
            keep = lam > 1e-15
            if keep.all():
                keep[int(np.argmin(ratios))] = False
            S = [s for s, k in zip(S, keep) if k]
            lam = lam[keep]
            lam /= lam.sum()
        x = lam @ P[S]
    w = np.zeros(m)
    w[S] = lam
    return x, w, it


def hull_distance(A, B) -> HullDistance:
    """Minimal Euclidean distance between ``Conv(A)`` and ``Conv(B)``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    D = (A[:, None, :] - B[None, :, :]).reshape(-1, A.shape[1])
    x, w, it = min_norm_point(D)
    w = w.reshape(len(A), len(B))
    return HullDistance(float(np.linalg.norm(x)), w.sum(axis=1), w.sum(axis=0), it)
