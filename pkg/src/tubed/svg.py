"""Small deterministic SVG plots (no rendering dependency)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .errors import PreconditionError

W, H = 640, 420
PAD_L, PAD_R, PAD_T, PAD_B = 70, 20, 40, 50
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
KINDS = ("growth-curve", "embedding-scatter", "distortion-histogram")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _header(title):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
    ]


def _empty(title, note="no data"):
    out = _header(title)
    out.append(
        f'<text x="{W / 2}" y="{H / 2}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14" fill="#777">{escape(note)}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


class _Axes:
    def __init__(self, xlim, ylim, logy=False):
        self.logy = logy
        self.x0, self.x1 = xlim
        self.y0, self.y1 = (math.log10(ylim[0]), math.log10(ylim[1])) if logy else ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1

    def px(self, x):
        return PAD_L + (x - self.x0) / (self.x1 - self.x0) * (W - PAD_L - PAD_R)

    def py(self, y):
        if self.logy:
            y = math.log10(y)
        return H - PAD_B - (y - self.y0) / (self.y1 - self.y0) * (H - PAD_T - PAD_B)

    def frame(self, xlabel, ylabel):
        out = [
            f'<rect x="{PAD_L}" y="{PAD_T}" width="{W - PAD_L - PAD_R}" height="{H - PAD_T - PAD_B}" '
            'fill="none" stroke="black"/>'
        ]
        for t in np.linspace(self.x0, self.x1, 6):
            out.append(
                f'<text x="{_fmt(self.px(t))}" y="{H - PAD_B + 16}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="11">{t:.3g}</text>'
            )
        for t in np.linspace(self.y0, self.y1, 6):
            label = f"1e{t:.2g}" if self.logy else f"{t:.3g}"
            y = H - PAD_B - (t - self.y0) / (self.y1 - self.y0) * (H - PAD_T - PAD_B)
            out.append(
                f'<text x="{PAD_L - 6}" y="{_fmt(y + 4)}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11">{label}</text>'
            )
        out.append(
            f'<text x="{(PAD_L + W - PAD_R) / 2}" y="{H - 12}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>'
        )
        out.append(
            f'<text x="16" y="{(PAD_T + H - PAD_B) / 2}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="12" transform="rotate(-90 16 {(PAD_T + H - PAD_B) / 2})">{escape(ylabel)}</text>'
        )
        return out


def growth_curve(series: dict, title="ball growth") -> str:
    """``series``: name -> (radii, counts); log-scale counts."""
    series = {k: (np.asarray(r, float), np.asarray(c, float)) for k, (r, c) in series.items() if len(r)}
    pos = [c[c > 0] for _, c in series.values()]
    if not series or not any(len(p) for p in pos):
        return _empty(title)
    xs = np.concatenate([r for r, _ in series.values()])
    ys = np.concatenate([p for p in pos if len(p)])
    ax = _Axes((xs.min(), xs.max()), (ys.min(), ys.max()), logy=True)
    out = _header(title) + ax.frame("R (hops)", "|B(x, R)|")
    for i, (name, (r, c)) in enumerate(sorted(series.items())):
        col = PALETTE[i % len(PALETTE)]
        keep = c > 0
        pts = " ".join(f"{_fmt(ax.px(x))},{_fmt(ax.py(y))}" for x, y in zip(r[keep], c[keep]))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="2"/>')
        out.append(
            f'<text x="{PAD_L + 10}" y="{PAD_T + 16 + 16 * i}" font-family="sans-serif" font-size="12" '
            f'fill="{col}">{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def pca_2d(Y) -> np.ndarray:
    """Projection onto the top two principal axes, signs fixed so the largest
    loading of each axis is positive."""
    Y = np.asarray(Y, float)
    Z = Y - Y.mean(axis=0)
    _, _, Vt = np.linalg.svd(Z, full_matrices=False)
    Vt = Vt[:2]
    sign = np.sign(Vt[np.arange(len(Vt)), np.argmax(np.abs(Vt), axis=1)])
    Vt = Vt * sign[:, None]
    P = Z @ Vt.T
    if P.shape[1] < 2:
        P = np.hstack([P, np.zeros((len(P), 2 - P.shape[1]))])
    return P


def embedding_scatter(images, values=None, title="embedding (2-D projection)") -> str:
    images = np.asarray(images, float)
    if images.ndim != 2 or len(images) == 0:
        return _empty(title)
    P = pca_2d(images)
    ax = _Axes((P[:, 0].min(), P[:, 0].max()), (P[:, 1].min(), P[:, 1].max()))
    out = _header(title) + ax.frame("axis 1", "axis 2")
    if values is None:
        cols = [PALETTE[0]] * len(P)
    else:
        v = np.asarray(values, float)
        t = (v - v.min()) / (np.ptp(v) or 1.0)
        cols = [f"rgb({int(255 * a)},{int(80 + 60 * a)},{int(255 * (1 - a))})" for a in t]
    for (x, y), c in zip(P, cols):
        out.append(f'<circle cx="{_fmt(ax.px(x))}" cy="{_fmt(ax.py(y))}" r="1.6" fill="{c}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def distortion_histogram(ratios, bins=40, title="distance ratio |f(x)-f(y)| / d(x,y)") -> str:
    r = np.asarray(ratios, float)
    r = r[np.isfinite(r)]
    if len(r) == 0:
        return _empty(title)
    lo, hi = float(r.min()), float(r.max())
    if hi <= lo:
        hi = lo + 1.0
    counts, edges = np.histogram(r, bins=bins, range=(lo, hi))
    ax = _Axes((lo, hi), (0, max(1, int(counts.max()))))
    out = _header(title) + ax.frame("ratio", "pairs")
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        x0, x1 = ax.px(a), ax.px(b)
        y = ax.py(c)
        out.append(
            f'<rect x="{_fmt(x0)}" y="{_fmt(y)}" width="{_fmt(max(x1 - x0 - 1, 0.5))}" '
            f'height="{_fmt(H - PAD_B - y)}" fill="{PALETTE[0]}"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(data, kind: str) -> str:
    if kind == "growth-curve":
        return growth_curve(data or {})
    if kind in ("embedding-scatter", "embedding-scatter-2d-projection"):
        return embedding_scatter(data if data is not None else np.zeros((0, 2)))
    if kind == "distortion-histogram":
        return distortion_histogram(data if data is not None else [])
    raise PreconditionError(f"unknown plot kind {kind!r}; expected one of {KINDS}")
