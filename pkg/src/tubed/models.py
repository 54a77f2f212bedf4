"""Closed-form model manifolds.

Points are numpy arrays in the model's chart coordinates (last axis), and
every operation broadcasts over leading axes.  Tangent vectors are given by
their components in a fixed orthonormal frame at the base point, so the
Euclidean norm of a tangent array *is* its Riemannian length.  For the flat
models and the Poincare disk that frame is the (normalized) coordinate frame;
for the sphere it is built by Gram-Schmidt from a fixed reference axis.

Coordinates per model:

* ``Euclidean(n)``        -- R^n.
* ``FlatTorus(periods)``  -- fundamental domain ``0 <= x_i < L_i``.
* ``Sphere(radius)``      -- points of R^3 with norm ``radius`` (a 2-sphere).
* ``HyperbolicPlane()``   -- Poincare disk, ``|z| < 1``; ``scale`` multiplies
  all lengths (curvature ``-1/scale**2``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import DomainError, RangeError

_TINY = 1e-300


def _norm(v):
    return np.linalg.norm(v, axis=-1)


class ManifoldModel:
    """Common interface; concrete models are frozen dataclasses below."""

    kind: str
    dim: int
    coord_dim: int
    periodic_box: np.ndarray | None = None

    # -- metadata -------------------------------------------------------
    @property
    def curvature_bounds(self) -> tuple[float, float]:
        raise NotImplementedError

    @property
    def injectivity_radius(self) -> float:
        raise NotImplementedError

    @property
    def is_flat(self) -> bool:
        return self.curvature_bounds == (0.0, 0.0)

    def params(self) -> dict[str, Any]:
        raise NotImplementedError

    def descriptor(self) -> dict[str, Any]:
        return {"kind": self.kind, "params": self.params()}

    def rescaled(self, factor: float) -> "ManifoldModel":
        """The same manifold with all lengths multiplied by ``factor``."""
        raise NotImplementedError

    # -- geometry ---------------------------------------------------------
    def validate(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        if p.shape[-1] != self.coord_dim:
            raise DomainError(
                f"{self.kind}: expected coordinates of length {self.coord_dim}, got shape {p.shape}"
            )
        if not np.all(np.isfinite(p)):
            raise DomainError(f"{self.kind}: non-finite coordinates")
        return p

    def distance(self, p, q) -> np.ndarray:
        raise NotImplementedError

    def exp_map(self, p, v) -> np.ndarray:
        raise NotImplementedError

    def log_map(self, p, q) -> np.ndarray:
        raise NotImplementedError

    def ball_volume(self, R: float) -> float:
        raise NotImplementedError

    def origin(self) -> np.ndarray:
        return np.zeros(self.coord_dim)

    # -- spatial indexing support ----------------------------------------
    def index_coords(self, points) -> np.ndarray:
        """Coordinates fed to a Euclidean KD-tree."""
        return np.asarray(points, dtype=float)

    def index_ball(self, points, R):
        """Euclidean balls (centers, radii) in index coordinates that contain
        the metric balls ``B(points, R)``."""
        p = np.asarray(points, dtype=float)
        R = np.broadcast_to(np.asarray(R, dtype=float), p.shape[:-1])
        return p, R * (1 + 1e-9) + 1e-12

    def profile(self, rho):
        """Circumference factor ``J`` with ``|S(x, rho)| = 2*pi*J(rho)`` (2-D models)."""
        raise NotImplementedError


@dataclass(frozen=True)
class Euclidean(ManifoldModel):
    n: int = 2
    kind = "euclidean"

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("Euclidean dimension must be >= 1")

    @property
    def dim(self):
        return self.n

    @property
    def coord_dim(self):
        return self.n

    @property
    def curvature_bounds(self):
        return (0.0, 0.0)

    @property
    def injectivity_radius(self):
        return math.inf

    def params(self):
        return {"n": self.n}

    def rescaled(self, factor):
        return self

    def distance(self, p, q):
        return _norm(np.asarray(q, float) - np.asarray(p, float))

    def exp_map(self, p, v):
        return np.asarray(p, float) + np.asarray(v, float)

    def log_map(self, p, q):
        return np.asarray(q, float) - np.asarray(p, float)

    def ball_volume(self, R):
        n = self.n
        return math.pi ** (n / 2) / math.gamma(n / 2 + 1) * R**n

    def profile(self, rho):
        return np.asarray(rho, float)


@dataclass(frozen=True)
class FlatTorus(ManifoldModel):
    periods: tuple[float, ...] = (1.0, 1.0)
    kind = "flat_torus"

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(float(L) for L in self.periods))
        if not self.periods or min(self.periods) <= 0:
            raise DomainError("torus periods must be positive")

    @property
    def dim(self):
        return len(self.periods)

    @property
    def coord_dim(self):
        return len(self.periods)

    @property
    def _L(self):
        return np.array(self.periods)

    @property
    def periodic_box(self):
        return self._L

    @property
    def curvature_bounds(self):
        return (0.0, 0.0)

    @property
    def injectivity_radius(self):
        return min(self.periods) / 2

    def params(self):
        return {"periods": list(self.periods)}

    def rescaled(self, factor):
        return FlatTorus(tuple(L * factor for L in self.periods))

    def validate(self, points):
        p = super().validate(points)
        if np.any(p < 0) or np.any(p >= self._L):
            raise DomainError("torus coordinates must lie in the fundamental domain [0, L)")
        return p

    def wrap(self, x):
        return np.mod(x, self._L)

    def displacement(self, p, q):
        """Shortest lift of ``q - p``; per-axis rounding equals the min over shifts."""
        d = np.asarray(q, float) - np.asarray(p, float)
        return d - self._L * np.round(d / self._L)

    def distance(self, p, q):
        return _norm(self.displacement(p, q))

    def exp_map(self, p, v):
        x = self.wrap(np.asarray(p, float) + np.asarray(v, float))
        # mod can return L itself for tiny negative inputs
        return np.where(x >= self._L, 0.0, x)

    def log_map(self, p, q):
        d = self.displacement(p, q)
        if np.any(_norm(d) >= self.injectivity_radius):
            raise RangeError("torus log: point at or beyond the injectivity radius")
        return d

    def ball_volume(self, R):
        L = self.periods
        if R <= 0:
            return 0.0
        if len(L) == 1:
            return min(2 * R, L[0])
        if R <= self.injectivity_radius:
            return Euclidean(len(L)).ball_volume(R)
        if len(L) == 2:
            return _disk_rectangle_area(R, L[0] / 2, L[1] / 2)
        raise NotImplementedError("torus ball volume beyond inj is implemented for n <= 2")

    def profile(self, rho):
        return np.asarray(rho, float)


def _disk_rectangle_area(R, A, B):
    """Area of the radius-R disk intersected with the centered box [-A,A]x[-B,B]."""

    def G(x):
        return 0.5 * (x * math.sqrt(max(R * R - x * x, 0.0)) + R * R * math.asin(min(x / R, 1.0)))

    a = min(A, R)
    xb = math.sqrt(max(R * R - B * B, 0.0))
    xs = min(xb, a)
    return 4 * (B * xs + G(a) - G(xs))


def _sphere_frame(u):
    """Orthonormal tangent frame (..., 2, 3) at unit vectors ``u``."""
    ref = np.where(np.abs(u[..., 2:3]) < 0.9, np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))
    e1 = ref - np.sum(ref * u, axis=-1, keepdims=True) * u
    e1 /= _norm(e1)[..., None]
    e2 = np.cross(u, e1)
    return np.stack([e1, e2], axis=-2)


@dataclass(frozen=True)
class Sphere(ManifoldModel):
    radius: float = 1.0
    kind = "sphere"
    dim = 2
    coord_dim = 3

    def __post_init__(self):
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise DomainError("sphere radius must be positive")

    @property
    def curvature_bounds(self):
        k = 1.0 / self.radius**2
        return (k, k)

    @property
    def injectivity_radius(self):
        return math.pi * self.radius

    def params(self):
        return {"radius": self.radius}

    def rescaled(self, factor):
        return Sphere(self.radius * factor)

    def origin(self):
        return np.array([0.0, 0.0, self.radius])

    def validate(self, points):
        p = super().validate(points)
        if np.any(np.abs(_norm(p) - self.radius) > 1e-9 * self.radius):
            raise DomainError("sphere points must have norm equal to the radius")
        return p

    def frame(self, p):
        u = np.asarray(p, float) / self.radius
        return _sphere_frame(u)

    def distance(self, p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        c = np.sum(p * q, axis=-1)
        s = _norm(np.cross(p, q))
        return self.radius * np.arctan2(s, c)

    def exp_map(self, p, v):
        p = np.asarray(p, float)
        v = np.asarray(v, float)
        a = self.radius
        w = np.einsum("...i,...ij->...j", v, self.frame(p))
        t = _norm(v)
        safe = np.where(t > 0, t, 1.0)
        direction = w / safe[..., None]
        out = p * np.cos(t / a)[..., None] + a * np.sin(t / a)[..., None] * direction
        # renormalize to stay on the sphere
        return out * (a / _norm(out))[..., None]

    def log_map(self, p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        d = self.distance(p, q)
        if np.any(d >= self.injectivity_radius * (1 - 1e-12)):
            raise RangeError("sphere log: antipodal point")
        u = p / self.radius
        w = q - np.sum(q * u, axis=-1, keepdims=True) * u
        wn = _norm(w)
        direction = w / np.where(wn > 0, wn, 1.0)[..., None]
        comps = np.einsum("...ij,...j->...i", self.frame(p), direction)
        return comps * d[..., None]

    def ball_volume(self, R):
        a = self.radius
        R = min(max(R, 0.0), math.pi * a)
        return 2 * math.pi * a * a * (1 - math.cos(R / a))

    def index_ball(self, points, R):
        p = np.asarray(points, float)
        R = np.broadcast_to(np.asarray(R, float), p.shape[:-1])
        a = self.radius
        chord = 2 * a * np.sin(np.minimum(R, math.pi * a) / (2 * a))
        return p, chord * (1 + 1e-9) + 1e-12

    def profile(self, rho):
        return self.radius * np.sin(np.asarray(rho, float) / self.radius)


def _cmul(a, b):
    return np.stack(
        [a[..., 0] * b[..., 0] - a[..., 1] * b[..., 1], a[..., 0] * b[..., 1] + a[..., 1] * b[..., 0]],
        axis=-1,
    )


def _cdiv(a, b):
    den = b[..., 0] ** 2 + b[..., 1] ** 2
    return np.stack(
        [
            (a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]) / den,
            (a[..., 1] * b[..., 0] - a[..., 0] * b[..., 1]) / den,
        ],
        axis=-1,
    )


def _conj(a):
    return np.stack([a[..., 0], -a[..., 1]], axis=-1)


def _one_minus_sq(p):
    r = _norm(p)
    return (1.0 - r) * (1.0 + r)


@dataclass(frozen=True)
class HyperbolicPlane(ManifoldModel):
    """Poincare disk model.  Distance ``2*scale*asinh(|p-q| / sqrt((1-|p|^2)(1-|q|^2)))``."""

    scale: float = 1.0
    kind = "hyperbolic_plane"
    dim = 2
    coord_dim = 2

    def __post_init__(self):
        object.__setattr__(self, "scale", float(self.scale))
        if self.scale <= 0:
            raise DomainError("hyperbolic scale must be positive")

    @property
    def curvature_bounds(self):
        k = -1.0 / self.scale**2
        return (k, k)

    @property
    def injectivity_radius(self):
        return math.inf

    def params(self):
        return {"scale": self.scale}

    def rescaled(self, factor):
        return HyperbolicPlane(self.scale * factor)

    def validate(self, points):
        p = super().validate(points)
        if np.any(_norm(p) >= 1.0):
            raise DomainError("Poincare disk points must have norm < 1")
        return p

    def distance(self, p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        den = np.sqrt(_one_minus_sq(p) * _one_minus_sq(q))
        return 2 * self.scale * np.arcsinh(_norm(q - p) / den)

    def _mobius(self, p, w):
        # z -> (w + p) / (1 + conj(p) w); sends 0 to p with positive real derivative
        one = np.zeros(np.broadcast_shapes(p.shape, w.shape))
        one[..., 0] = 1.0
        return _cdiv(w + p, one + _cmul(_conj(p), w))

    def _mobius_inv(self, p, z):
        one = np.zeros(np.broadcast_shapes(p.shape, z.shape))
        one[..., 0] = 1.0
        return _cdiv(z - p, one - _cmul(_conj(p), z))

    def exp_map(self, p, v):
        p = np.asarray(p, float)
        v = np.asarray(v, float)
        t = _norm(v)
        safe = np.where(t > 0, t, 1.0)
        w = np.tanh(t / (2 * self.scale))[..., None] * v / safe[..., None]
        return self._mobius(p, w)

    def log_map(self, p, q):
        p = np.asarray(p, float)
        q = np.asarray(q, float)
        w = self._mobius_inv(p, q)
        wn = _norm(w)
        d = self.distance(p, q)
        return w / np.where(wn > 0, wn, 1.0)[..., None] * d[..., None]

    def ball_volume(self, R):
        a = self.scale
        return 2 * math.pi * a * a * (math.cosh(R / a) - 1)

    def index_ball(self, points, R):
        # metric circles are Euclidean circles; use the two diameter endpoints
        p = np.asarray(points, float)
        R = np.broadcast_to(np.asarray(R, float), p.shape[:-1]) / self.scale
        r = _norm(p)
        rho = 2 * np.arctanh(np.minimum(r, 1 - 1e-17))
        far = np.tanh((rho + R) / 2)
        near = np.tanh((rho - R) / 2)
        u = np.where(r[..., None] > 0, p / np.where(r > 0, r, 1.0)[..., None], np.array([1.0, 0.0]))
        center = u * ((far + near) / 2)[..., None]
        rad = (far - near) / 2
        return center, rad * (1 + 1e-9) + 1e-15

    def profile(self, rho):
        return self.scale * np.sinh(np.asarray(rho, float) / self.scale)


MODEL_KINDS = {
    "euclidean": Euclidean,
    "flat_torus": FlatTorus,
    "sphere": Sphere,
    "hyperbolic_plane": HyperbolicPlane,
}

# short names used on the command line
MODEL_ALIASES = {
    "euclidean1": lambda: Euclidean(1),
    "euclidean2": lambda: Euclidean(2),
    "euclidean3": lambda: Euclidean(3),
    "torus2": lambda: FlatTorus((10.0, 10.0)),
    "sphere": lambda: Sphere(1.0),
    "hyperbolic": lambda: HyperbolicPlane(),
}


def model_from_descriptor(desc: dict[str, Any]) -> ManifoldModel:
    kind = desc.get("kind")
    if kind not in MODEL_KINDS:
        raise DomainError(f"unknown model kind {kind!r}", field="kind")
    params = dict(desc.get("params") or {})
    if kind == "flat_torus" and "periods" in params:
        params["periods"] = tuple(params["periods"])
    return MODEL_KINDS[kind](**params)


def model_from_name(name: str) -> ManifoldModel:
    if name in MODEL_ALIASES:
        return MODEL_ALIASES[name]()
    raise DomainError(f"unknown model name {name!r}; choose from {sorted(MODEL_ALIASES)}")
