"""Exact metric-ball queries on top of a Euclidean KD-tree.

Each model maps its points to Euclidean index coordinates and encloses every
metric ball in a Euclidean ball (exactly, for the Poincare disk and the
sphere).  Candidates from the tree are then filtered with the model's own
distance, so results are exact with respect to ``model.distance``.
"""

from __future__ import annotations

from itertools import chain

import numpy as np
from scipy.spatial import cKDTree

from .models import ManifoldModel


class MetricIndex:
    def __init__(self, model: ManifoldModel, points):
        self.model = model
        self.points = np.asarray(points, dtype=float)
        box = model.periodic_box
        self.tree = cKDTree(model.index_coords(self.points), boxsize=box)

    def __len__(self):
        return len(self.points)

    def ball(self, x, R, strict=True, chunk=65536):
        """CSR neighbourhoods ``{j : d(x_i, p_j) < R}`` (``<=`` if not strict).

        Returns ``(indptr, indices, dists)``.
        """
        x = np.asarray(x, dtype=float).reshape(-1, self.model.coord_dim)
        R = np.broadcast_to(np.asarray(R, dtype=float), (len(x),))
        counts, idx_parts, d_parts = [], [], []
        for s in range(0, len(x), chunk):
            xs, Rs = x[s : s + chunk], R[s : s + chunk]
            centers, radii = self.model.index_ball(xs, Rs)
            lists = self.tree.query_ball_point(centers, radii, return_sorted=False)
            lens = np.fromiter(map(len, lists), dtype=np.int64, count=len(lists))
            flat = np.fromiter(chain.from_iterable(lists), dtype=np.int64, count=int(lens.sum()))
            rows = np.repeat(np.arange(len(xs)), lens)
            d = self.model.distance(xs[rows], self.points[flat])
            keep = d < Rs[rows] if strict else d <= Rs[rows]
            counts.append(np.bincount(rows[keep], minlength=len(xs)))
            idx_parts.append(flat[keep])
            d_parts.append(d[keep])
        counts = np.concatenate(counts) if counts else np.zeros(0, np.int64)
        indptr = np.zeros(len(x) + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        if idx_parts:
            indices = np.concatenate(idx_parts)
            dists = np.concatenate(d_parts)
        else:
            indices = np.zeros(0, np.int64)
            dists = np.zeros(0)
        return indptr, indices, dists

    def count_ball(self, x, R, strict=True):
        indptr, _, _ = self.ball(x, R, strict)
        return np.diff(indptr)

    def nearest(self, x):
        """Exact metric nearest neighbour: ``(distance, index)`` per query."""
        x = np.asarray(x, dtype=float).reshape(-1, self.model.coord_dim)
        _, j0 = self.tree.query(self.model.index_coords(x))
        upper = self.model.distance(x, self.points[j0])
        indptr, indices, dists = self.ball(x, upper, strict=False)
        best_d = upper.copy()
        best_j = j0.copy()
        rows = np.repeat(np.arange(len(x)), np.diff(indptr))
        if len(rows):
            order = np.lexsort((dists, rows))
            first = np.ones(len(order), bool)
            first[1:] = rows[order][1:] != rows[order][:-1]
            sel = order[first]
            r = rows[sel]
            better = dists[sel] < best_d[r]
            best_d[r[better]] = dists[sel][better]
            best_j[r[better]] = indices[sel][better]
        return best_d, best_j

    def pairs_within(self, R, strict=True):
        """All unordered pairs ``i < j`` of indexed points with ``d < R``."""
        indptr, indices, dists = self.ball(self.points, R, strict)
        rows = np.repeat(np.arange(len(self.points)), np.diff(indptr))
        keep = rows < indices
        return rows[keep], indices[keep], dists[keep]
