"""Bounded Lipschitz domains in d = 1, 2 with exact distance primitives.

Supported shapes: intervals, axis-aligned boxes, balls/disks, simple
polygons (CCW), and finite disjoint unions of these.  Every other module
consumes domains only through signed distance, nearest boundary point,
cube-to-boundary distance and boundary quadrature, so the distance code
is kept exact (edge/vertex projection, no level sets).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

Point = np.ndarray  # shape (d,)


def _as_points(x, dim: int) -> np.ndarray:
    """Coerce scalar / (d,) / (n,d) input to an (n, d) array."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, dim) if a.size == dim else a.reshape(-1, 1)
    return a


# ---------------------------------------------------------------------------
# segment / box primitives (exact up to floating point)


def _seg_point_dist(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Distances from points p (n,2) to segment [a, b]."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(p - a, axis=-1)
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.linalg.norm(p - proj, axis=-1)


def _seg_point_nearest(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.broadcast_to(a, p.shape).copy()
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    return a + t[..., None] * ab


def _cross2(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _segments_intersect(p1, p2, p3, p4) -> bool:
    d1 = _cross2(p4 - p3, p1 - p3)
    d2 = _cross2(p4 - p3, p2 - p3)
    d3 = _cross2(p2 - p1, p3 - p1)
    d4 = _cross2(p2 - p1, p4 - p1)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True

    def on_seg(a, b, c):
        return (min(a[0], b[0]) - 1e-300 <= c[0] <= max(a[0], b[0]) + 1e-300
                and min(a[1], b[1]) - 1e-300 <= c[1] <= max(a[1], b[1]) + 1e-300)

    for d, (a, b, c) in ((d1, (p3, p4, p1)), (d2, (p3, p4, p2)),
                         (d3, (p1, p2, p3)), (d4, (p1, p2, p4))):
        if d == 0 and on_seg(a, b, c):
            return True
    return False


def _seg_seg_dist(p1, p2, p3, p4) -> float:
    if _segments_intersect(p1, p2, p3, p4):
        return 0.0
    cands = [
        _seg_point_dist(p3, p4, p1[None, :])[0],
        _seg_point_dist(p3, p4, p2[None, :])[0],
        _seg_point_dist(p1, p2, p3[None, :])[0],
        _seg_point_dist(p1, p2, p4[None, :])[0],
    ]
    return min(cands)


def _box_edges(lo: np.ndarray, hi: np.ndarray):
    c = [np.array([lo[0], lo[1]]), np.array([hi[0], lo[1]]),
         np.array([hi[0], hi[1]]), np.array([lo[0], hi[1]])]
    return [(c[i], c[(i + 1) % 4]) for i in range(4)]


def _seg_box_dist(a, b, lo, hi) -> float:
    """Distance between segment [a,b] and the closed box [lo,hi] (2-D)."""
    inside = lambda q: bool(np.all(q >= lo) and np.all(q <= hi))
    if inside(a) or inside(b):
        return 0.0
    best = np.inf
    for e0, e1 in _box_edges(lo, hi):
        best = min(best, _seg_seg_dist(a, b, e0, e1))
    return best


def _seg_boxes_dist(a: np.ndarray, b: np.ndarray, lo: np.ndarray,
                    hi: np.ndarray) -> np.ndarray:
    """Distances between one segment [a,b] and n closed boxes, vectorized.

    For disjoint convex sets the minimum is attained at a box corner against
    the segment or a segment endpoint against the box; intersection is
    detected with a slab test.
    """
    n = lo.shape[0]
    dirv = b - a
    tmin = np.zeros(n)
    tmax = np.ones(n)
    ok = np.ones(n, dtype=bool)
    for ax in range(2):
        if dirv[ax] != 0.0:
            t1 = (lo[:, ax] - a[ax]) / dirv[ax]
            t2 = (hi[:, ax] - a[ax]) / dirv[ax]
            tmin = np.maximum(tmin, np.minimum(t1, t2))
            tmax = np.minimum(tmax, np.maximum(t1, t2))
        else:
            ok &= (lo[:, ax] <= a[ax]) & (a[ax] <= hi[:, ax])
    intersects = ok & (tmin <= tmax)

    corners = np.stack([
        np.stack([lo[:, 0], lo[:, 1]], axis=-1),
        np.stack([hi[:, 0], lo[:, 1]], axis=-1),
        np.stack([hi[:, 0], hi[:, 1]], axis=-1),
        np.stack([lo[:, 0], hi[:, 1]], axis=-1),
    ], axis=1)  # (n, 4, 2)
    d_corner = _seg_point_dist(a, b, corners.reshape(-1, 2)).reshape(n, 4).min(axis=1)

    d_end = np.full(n, np.inf)
    for p in (a, b):
        g = np.maximum(np.maximum(lo - p, p - hi), 0.0)
        d_end = np.minimum(d_end, np.linalg.norm(g, axis=-1))

    return np.where(intersects, 0.0, np.minimum(d_corner, d_end))


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Nodes and weights for integrals over the topological boundary."""

    points: np.ndarray   # (n, d)
    weights: np.ndarray  # (n,)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(np.asarray(f(self.points), dtype=float), self.weights))


class Domain:
    """Base class; subclasses implement the exact distance primitives."""

    dim: int
    #: configurable Lipschitz-graph bound (estimate, not certified)
    lipschitz_bound: float = 1.0

    # -- shape-specific API ------------------------------------------------
    def signed_distance(self, x) -> np.ndarray:
        """Negative inside, positive outside, zero on the boundary."""
        raise NotImplementedError

    def nearest_boundary_point(self, x) -> np.ndarray:
        raise NotImplementedError

    def boundary_distance_to_boxes(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """dist(closed boxes, boundary) for (n,d) corner arrays, exact per shape."""
        raise NotImplementedError

    def boundary_distance_to_box(self, lo: np.ndarray, hi: np.ndarray) -> float:
        lo = np.asarray(lo, dtype=float).reshape(1, -1)
        hi = np.asarray(hi, dtype=float).reshape(1, -1)
        return float(self.boundary_distance_to_boxes(lo, hi)[0])

    def boundary_quadrature(self, n_nodes: int) -> BoundaryQuadrature:
        raise NotImplementedError

    @property
    def inradius(self) -> float:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    # -- derived helpers -----------------------------------------------------
    @property
    def localization_radius(self) -> float:
        """Estimate of the boundary localization radius; configurable."""
        return getattr(self, "_r0", self.inradius)

    def dist_to_boundary(self, x) -> np.ndarray:
        return np.abs(self.signed_distance(x))

    def contains(self, x) -> np.ndarray:
        return self.signed_distance(x) < 0.0

    def collar_region(self, r: float, side: str = "exterior") -> Callable:
        """Characteristic predicate of the one-sided collar of width r."""
        if r <= 0:
            raise ValueError("collar width must be positive")
        if side == "exterior":
            return lambda x: (self.signed_distance(x) > 0) & (self.dist_to_boundary(x) < r)
        if side == "interior":
            return lambda x: (self.signed_distance(x) < 0) & (self.dist_to_boundary(x) < r)
        raise ValueError(f"unknown side {side!r}")

    def volume(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Interval(Domain):
    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("interval requires b > a")

    dim = 1

    def signed_distance(self, x):
        pts = _as_points(x, 1)[:, 0]
        sd = np.maximum(self.a - pts, pts - self.b)
        return sd if np.ndim(x) else float(sd[0])

    def nearest_boundary_point(self, x):
        pts = _as_points(x, 1)[:, 0]
        near = np.where(np.abs(pts - self.a) <= np.abs(pts - self.b), self.a, self.b)
        return near.reshape(-1, 1)

    def boundary_distance_to_boxes(self, lo, hi):
        lo0, hi0 = lo[:, 0], hi[:, 0]
        da = np.maximum(np.maximum(lo0 - self.a, self.a - hi0), 0.0)
        db = np.maximum(np.maximum(lo0 - self.b, self.b - hi0), 0.0)
        return np.minimum(da, db)

    def boundary_quadrature(self, n_nodes: int = 2) -> BoundaryQuadrature:
        if n_nodes < 2:
            raise ValueError("need at least 2 boundary nodes")
        pts = np.array([[self.a], [self.b]])
        return BoundaryQuadrature(pts, np.ones(2))

    @property
    def inradius(self):
        return 0.5 * (self.b - self.a)

    @property
    def diameter(self):
        return self.b - self.a

    def bounding_box(self):
        return np.array([self.a]), np.array([self.b])

    def volume(self):
        return self.b - self.a

    def boundary_points(self) -> np.ndarray:
        return np.array([self.a, self.b])


@dataclass(frozen=True)
class Box(Domain):
    lo: tuple[float, float]
    hi: tuple[float, float]

    dim = 2

    def __post_init__(self):
        if not (self.hi[0] > self.lo[0] and self.hi[1] > self.lo[1]):
            raise ValueError("box requires hi > lo componentwise")

    def signed_distance(self, x):
        p = _as_points(x, 2)
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        c, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
        q = np.abs(p - c) - h
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        sd = outside + inside
        return sd if np.ndim(x) > 1 else float(sd[0])

    def _edges(self):
        return _box_edges(np.asarray(self.lo), np.asarray(self.hi))

    def nearest_boundary_point(self, x):
        p = _as_points(x, 2)
        best = np.full(p.shape[0], np.inf)
        out = np.zeros_like(p)
        for a, b in self._edges():
            d = _seg_point_dist(a, b, p)
            near = _seg_point_nearest(a, b, p)
            mask = d < best
            best = np.where(mask, d, best)
            out[mask] = near[mask]
        return out

    def boundary_distance_to_boxes(self, lo, hi):
        d = np.full(lo.shape[0], np.inf)
        for a, b in self._edges():
            d = np.minimum(d, _seg_boxes_dist(a, b, lo, hi))
        return d

    def boundary_quadrature(self, n_nodes: int) -> BoundaryQuadrature:
        return _polyline_quadrature(self._edges(), n_nodes)

    @property
    def inradius(self):
        return 0.5 * min(self.hi[0] - self.lo[0], self.hi[1] - self.lo[1])

    @property
    def diameter(self):
        return float(np.hypot(self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]))

    def bounding_box(self):
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)

    def volume(self):
        return (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])


@dataclass(frozen=True)
class Ball(Domain):
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "dim", len(self.center))
        if self.dim not in (1, 2):
            raise ValueError("only d in {1, 2} supported")

    def signed_distance(self, x):
        p = _as_points(x, self.dim)
        sd = np.linalg.norm(p - np.asarray(self.center), axis=-1) - self.radius
        return sd if np.ndim(x) > (self.dim - 1) else float(sd[0])

    def nearest_boundary_point(self, x):
        p = _as_points(x, self.dim)
        c = np.asarray(self.center, dtype=float)
        v = p - c
        r = np.linalg.norm(v, axis=-1, keepdims=True)
        unit = np.where(r > 0, v / np.where(r == 0, 1.0, r), 0.0)
        deg = (r[:, 0] == 0)
        if np.any(deg):
            unit[deg] = np.eye(self.dim)[0]
        return c + self.radius * unit

    def boundary_distance_to_boxes(self, lo, hi):
        c = np.asarray(self.center, dtype=float)
        nearest = np.clip(c, lo, hi)
        m = np.linalg.norm(nearest - c, axis=-1)
        if self.dim == 1:
            corners = np.stack([lo[:, 0], hi[:, 0]], axis=1)[..., None]
        else:
            corners = np.stack([
                np.stack([lo[:, 0], lo[:, 1]], axis=-1),
                np.stack([hi[:, 0], lo[:, 1]], axis=-1),
                np.stack([hi[:, 0], hi[:, 1]], axis=-1),
                np.stack([lo[:, 0], hi[:, 1]], axis=-1),
            ], axis=1)
        M = np.max(np.linalg.norm(corners - c, axis=-1), axis=1)
        return np.where(m >= self.radius, m - self.radius,
                        np.where(M <= self.radius, self.radius - M, 0.0))

    def boundary_quadrature(self, n_nodes: int) -> BoundaryQuadrature:
        if self.dim == 1:
            return Interval(self.center[0] - self.radius,
                            self.center[0] + self.radius).boundary_quadrature(n_nodes)
        if n_nodes < 2:
            raise ValueError("need at least 2 boundary nodes")
        theta = 2 * np.pi * (np.arange(n_nodes) + 0.5) / n_nodes
        pts = np.asarray(self.center) + self.radius * np.stack(
            [np.cos(theta), np.sin(theta)], axis=-1)
        w = np.full(n_nodes, 2 * np.pi * self.radius / n_nodes)
        return BoundaryQuadrature(pts, w)

    @property
    def inradius(self):
        return self.radius

    @property
    def diameter(self):
        return 2 * self.radius

    def bounding_box(self):
        c = np.asarray(self.center, dtype=float)
        return c - self.radius, c + self.radius

    def volume(self):
        if self.dim == 1:
            return 2 * self.radius
        return np.pi * self.radius ** 2


def _polygon_area2(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@dataclass(frozen=True)
class Polygon(Domain):
    vertices: tuple[tuple[float, float], ...]

    dim = 2

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if len(v) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if _polygon_area2(v) <= 0:
            raise ValueError("vertices must be in counterclockwise order")
        n = len(v)
        for i in range(n):
            for j in range(i + 1, n):
                if abs(i - j) in (1, n - 1):
                    continue
                if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise ValueError("polygon must be simple (non-self-intersecting)")

    @cached_property
    def _v(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def _edges(self):
        v = self._v
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    def _inside(self, p: np.ndarray) -> np.ndarray:
        """Even-odd crossing test, vectorized over points."""
        v = self._v
        n = len(v)
        x, y = p[:, 0], p[:, 1]
        inside = np.zeros(len(p), dtype=bool)
        for i in range(n):
            x1, y1 = v[i]
            x2, y2 = v[(i + 1) % n]
            cond = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= cond & (x < np.where(cond, xint, np.inf))
        return inside

    def signed_distance(self, x):
        p = _as_points(x, 2)
        d = np.full(len(p), np.inf)
        for a, b in self._edges():
            d = np.minimum(d, _seg_point_dist(a, b, p))
        sd = np.where(self._inside(p), -d, d)
        return sd if np.ndim(x) > 1 else float(sd[0])

    def nearest_boundary_point(self, x):
        p = _as_points(x, 2)
        best = np.full(len(p), np.inf)
        out = np.zeros_like(p)
        for a, b in self._edges():
            d = _seg_point_dist(a, b, p)
            near = _seg_point_nearest(a, b, p)
            mask = d < best
            best = np.where(mask, d, best)
            out[mask] = near[mask]
        return out

    def boundary_distance_to_boxes(self, lo, hi):
        d = np.full(lo.shape[0], np.inf)
        for a, b in self._edges():
            d = np.minimum(d, _seg_boxes_dist(a, b, lo, hi))
        return d

    def boundary_quadrature(self, n_nodes: int) -> BoundaryQuadrature:
        return _polyline_quadrature(self._edges(), n_nodes)

    @cached_property
    def inradius(self):
        # multiscale grid scan for the deepest interior point
        lo, hi = self.bounding_box()
        best = 0.0
        center = 0.5 * (lo + hi)
        span = hi - lo
        for _ in range(8):
            gx = np.linspace(center[0] - span[0] / 2, center[0] + span[0] / 2, 41)
            gy = np.linspace(center[1] - span[1] / 2, center[1] + span[1] / 2, 41)
            X, Y = np.meshgrid(gx, gy)
            pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
            sd = self.signed_distance(pts)
            k = int(np.argmin(sd))
            if -sd[k] > best:
                best = -sd[k]
                center = pts[k]
            span = span / 4
        return float(best)

    @cached_property
    def diameter(self):
        v = self._v
        d = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
        return float(np.max(d))

    def bounding_box(self):
        return self._v.min(axis=0), self._v.max(axis=0)

    def volume(self):
        return 0.5 * _polygon_area2(self._v)


@dataclass(frozen=True)
class UnionDomain(Domain):
    """Finite disjoint union of components; distance is the min over parts."""

    parts: tuple[Domain, ...]

    def __post_init__(self):
        dims = {p.dim for p in self.parts}
        if len(dims) != 1:
            raise ValueError("all components must share the dimension")
        object.__setattr__(self, "dim", dims.pop())

    def signed_distance(self, x):
        sds = [p.signed_distance(_as_points(x, self.dim)) for p in self.parts]
        sd = np.min(np.stack(sds, axis=0), axis=0)
        return sd if np.ndim(x) > (self.dim - 1) else float(np.asarray(sd).ravel()[0])

    def nearest_boundary_point(self, x):
        pts = _as_points(x, self.dim)
        best = np.full(len(pts), np.inf)
        out = np.zeros_like(pts)
        for part in self.parts:
            d = np.abs(part.signed_distance(pts)).reshape(-1)
            near = part.nearest_boundary_point(pts)
            mask = d < best
            best = np.where(mask, d, best)
            out[mask] = near[mask]
        return out

    def boundary_distance_to_boxes(self, lo, hi):
        return np.min(np.stack([p.boundary_distance_to_boxes(lo, hi)
                                for p in self.parts]), axis=0)

    def boundary_quadrature(self, n_nodes: int) -> BoundaryQuadrature:
        qs = [p.boundary_quadrature(n_nodes) for p in self.parts]
        return BoundaryQuadrature(np.concatenate([q.points for q in qs]),
                                  np.concatenate([q.weights for q in qs]))

    @property
    def inradius(self):
        return max(p.inradius for p in self.parts)

    @property
    def diameter(self):
        los, his = zip(*[p.bounding_box() for p in self.parts])
        corners = []
        for lo, hi in zip(los, his):
            if self.dim == 1:
                corners += [lo, hi]
            else:
                corners += [np.array([lo[0], lo[1]]), np.array([hi[0], lo[1]]),
                            np.array([lo[0], hi[1]]), np.array([hi[0], hi[1]])]
        c = np.stack(corners)
        return float(np.max(np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)))

    def bounding_box(self):
        los, his = zip(*[p.bounding_box() for p in self.parts])
        return np.min(np.stack(los), axis=0), np.max(np.stack(his), axis=0)

    def volume(self):
        return sum(p.volume() for p in self.parts)

    def boundary_points(self) -> np.ndarray:
        if self.dim != 1:
            raise ValueError("boundary_points only available in d=1")
        return np.concatenate([p.boundary_points() for p in self.parts])


def _polyline_quadrature(edges: Sequence, n_nodes: int) -> BoundaryQuadrature:
    """Midpoint-composite rule along a list of edges, nodes split by length."""
    if n_nodes < 2 * len(edges):
        raise ValueError("need at least 2 nodes per boundary edge")
    lengths = np.array([np.linalg.norm(b - a) for a, b in edges])
    total = lengths.sum()
    pts, ws = [], []
    for (a, b), L in zip(edges, lengths):
        m = max(2, int(round(n_nodes * L / total)))
        t = (np.arange(m) + 0.5) / m
        pts.append(a + t[:, None] * (b - a))
        ws.append(np.full(m, L / m))
    return BoundaryQuadrature(np.concatenate(pts), np.concatenate(ws))


# convenience constructors -------------------------------------------------

def unit_interval() -> Interval:
    return Interval(0.0, 1.0)


def unit_square() -> Box:
    return Box((0.0, 0.0), (1.0, 1.0))


def unit_disk(radius: float = 1.0) -> Ball:
    return Ball((0.0, 0.0), radius)


def l_shape() -> Polygon:
    """Unit L-shaped polygon: unit square minus its upper-right quadrant."""
    return Polygon(((0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)))


def make_domain(shape: str, params: Sequence[float], dim: int | None = None) -> Domain:
    """Build a domain from config-file style (shape, params, dim) keys."""
    shape = shape.lower()
    if shape == "interval":
        return Interval(params[0], params[1])
    if shape == "box":
        return Box((params[0], params[1]), (params[2], params[3]))
    if shape in ("ball", "disk"):
        if dim == 1 or len(params) == 2:
            return Ball((params[0],), params[-1])
        return Ball((params[0], params[1]), params[2])
    if shape == "polygon":
        v = np.asarray(params, dtype=float).reshape(-1, 2)
        return Polygon(tuple(map(tuple, v)))
    if shape == "lshape":
        return l_shape()
    raise ValueError(f"unknown shape {shape!r}")
