"""Boundary-weighted measures and their quadrature.

Four density families on top of a domain, all built from the boundary
distance d_x:

* ``mu``      : (1-s) d_x^-s (1+d_x)^(-d-s(p-1)) on the exterior,
* ``tau``     : (1-s) d_x^-s on the interior,
* ``mutilde`` : (1-s) d_x^-s on the exterior,
* ``mubar``   : (1-s) d_x^-s on an exterior collar of finite width.

Node builders absorb the d_x^-s singularity exactly in the boundary-normal
coordinate (1-D pieces and radial coordinates for balls); generic 2-D
regions fall back to Whitney-cube cells with an explicit error bound for
the unresolved collar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from ._quadrature import (angular_nodes, gauss_panel, power_law_nodes,
                          tail_inversion_nodes, tensor_gauss)
from .geometry import Ball, Domain, Interval, UnionDomain
from .whitney import cached_decompose

KINDS = ("mu", "tau", "mutilde", "mubar")


class BoundaryEvaluationError(ValueError):
    """Raised when a singular density is evaluated exactly on the boundary."""


@dataclass(frozen=True)
class MeasureDensity:
    kind: str
    s: float
    domain: Domain
    p: float = 2.0               # enters the far-field weight of mu only
    collar: Optional[float] = None   # mubar collar width
    robust_factor: bool = True   # keep the (1-s) prefactor

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not 0.0 < self.s < 1.0:
            raise ValueError("s must lie in (0, 1)")
        if self.kind == "mubar" and (self.collar is None or self.collar <= 0):
            raise ValueError("mubar requires a positive collar width")
        if self.kind == "mu" and self.p < 1.0:
            raise ValueError("p must be >= 1")

    @property
    def prefactor(self) -> float:
        return (1.0 - self.s) if self.robust_factor else 1.0

    @property
    def farfield_exponent(self) -> float:
        """Decay exponent of the (1+d_x) weight carried by mu."""
        return self.domain.dim + self.s * (self.p - 1.0)

    def support_side(self) -> str:
        return "interior" if self.kind == "tau" else "exterior"

    def density(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        sd = np.asarray(self.domain.signed_distance(pts)).reshape(-1)
        if np.any(sd == 0.0):
            raise BoundaryEvaluationError(
                "density is singular on the boundary; evaluation rejected")
        d = np.abs(sd)
        out = np.zeros(len(pts))
        if self.kind == "tau":
            mask = sd < 0
            out[mask] = self.prefactor * d[mask] ** (-self.s)
            return out
        mask = sd > 0
        if self.kind == "mubar":
            mask &= d < self.collar
        vals = self.prefactor * d[mask] ** (-self.s)
        if self.kind == "mu":
            vals = vals * (1.0 + d[mask]) ** (-self.farfield_exponent)
        out[mask] = vals
        return out


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class BallRegion:
    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class CollarRegion:
    width: float


Region = Optional[object]  # None | BallRegion | CollarRegion | callable


@dataclass
class MeasureNodes:
    points: np.ndarray    # (n, d)
    weights: np.ndarray   # (n,) include the full density
    dists: np.ndarray     # (n,) boundary distance
    err_bound: float      # analytic bound on unresolved / truncated mass
    flags: tuple[str, ...] = ()


@dataclass
class QuadResult:
    value: float
    error: float
    flags: tuple[str, ...] = ()

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class NodeBudget:
    panels: int = 24
    q: int = 8
    n_ang: int = 96
    level_2d: int = 6
    tail_panels: int = 14

    def scaled(self, f: float) -> "NodeBudget":
        return NodeBudget(panels=max(6, int(self.panels * f)),
                          q=max(4, int(self.q * f)),
                          n_ang=max(16, int(self.n_ang * f)),
                          level_2d=max(3, self.level_2d - (1 if f < 1 else 0)),
                          tail_panels=max(6, int(self.tail_panels * f)))


def budget_from(budget) -> NodeBudget:
    if budget is None:
        return NodeBudget()
    if isinstance(budget, NodeBudget):
        return budget
    # interpret an integer budget as a rough total node count
    f = float(np.clip(math.sqrt(budget / 20000.0), 0.3, 4.0))
    return NodeBudget().scaled(f)


# ---------------------------------------------------------------------------
# 1-D pieces


def _interval_components(domain: Domain) -> list[tuple[float, float]]:
    if isinstance(domain, Interval):
        return [(domain.a, domain.b)]
    if isinstance(domain, Ball) and domain.dim == 1:
        return [(domain.center[0] - domain.radius, domain.center[0] + domain.radius)]
    if isinstance(domain, UnionDomain):
        comps = []
        for p in domain.parts:
            comps += _interval_components(p)
        return sorted(comps)
    raise NotImplementedError("1-D pieces need interval-like domains")


def _pieces_1d(domain: Domain, side: str) -> list[tuple[float, float, float | None]]:
    """Half-line pieces (base, direction, extent) with d_x = |x - base|.

    extent None marks an unbounded exterior piece.
    """
    comps = _interval_components(domain)
    pieces = []
    if side == "interior":
        for a, b in comps:
            half = 0.5 * (b - a)
            pieces.append((a, +1.0, half))
            pieces.append((b, -1.0, half))
        return pieces
    # exterior: complement intervals of the sorted components
    pieces.append((comps[0][0], -1.0, None))
    for (a0, b0), (a1, b1) in zip(comps[:-1], comps[1:]):
        gap = a1 - b0
        if gap > 0:
            pieces.append((b0, +1.0, gap / 2.0))
            pieces.append((a1, -1.0, gap / 2.0))
    pieces.append((comps[-1][1], +1.0, None))
    return pieces


def _clip_piece_to_region(base: float, direction: float, t_lo: float, t_hi: float,
                          region: Region) -> list[tuple[float, float]]:
    """Intersect the t-range of a 1-D piece with a structured region, exactly."""
    if region is None:
        return [(t_lo, t_hi)]
    if isinstance(region, CollarRegion):
        return [(t_lo, min(t_hi, region.width))] if t_lo < region.width else []
    if isinstance(region, BallRegion):
        c = region.center[0]
        x_lo, x_hi = c - region.radius, c + region.radius
        # piece: x = base + direction * t
        if direction > 0:
            lo = max(t_lo, x_lo - base)
            hi = min(t_hi, x_hi - base)
        else:
            lo = max(t_lo, base - x_hi)
            hi = min(t_hi, base - x_lo)
        return [(lo, hi)] if lo < hi else []
    return [(t_lo, t_hi)]  # callable regions applied as node masks later


def _region_mask(region: Region, pts: np.ndarray) -> tuple[np.ndarray, bool]:
    if callable(region):
        return np.asarray(region(pts), dtype=float), True
    return np.ones(pts.shape[0]), False


def _nodes_1d(m: MeasureDensity, region: Region, nb: NodeBudget) -> MeasureNodes:
    side = m.support_side()
    pieces = _pieces_1d(m.domain, side)
    if m.kind == "mubar":
        region_eff = CollarRegion(m.collar) if region is None else region
    else:
        region_eff = region
    pts, ws, dts, flags = [], [], [], set()
    tail_err = 0.0
    for base, direction, extent in pieces:
        if extent is None:
            if m.kind in ("mutilde",) and not isinstance(
                    region_eff, (BallRegion, CollarRegion)):
                raise ValueError("mutilde has infinite mass: pass a bounded region")
            near_T = 2.0 + m.domain.diameter
        else:
            near_T = extent
        # near part: absorb t^-s exactly
        for lo, hi in _clip_piece_to_region(base, direction, 0.0, near_T, region_eff):
            if lo <= 0.0:
                t, w = power_law_nodes(hi, -m.s, nb.panels, nb.q)
            else:
                t, w = gauss_panel(lo, hi, nb.q * 4)
                w = w * t ** (-m.s)
            x = base + direction * t
            dens = np.full_like(t, m.prefactor)
            if m.kind == "mu":
                dens = dens * (1.0 + t) ** (-m.farfield_exponent)
            pts.append(x)
            ws.append(w * dens)
            dts.append(t)
        # far tail for unbounded mu pieces
        if extent is None and m.kind == "mu":
            skip_tail = False
            if isinstance(region_eff, (BallRegion, CollarRegion)):
                skip_tail = True  # bounded region: tail clipped away entirely
            if not skip_tail:
                decay = m.s * m.p
                t, w = tail_inversion_nodes(near_T, decay, nb.tail_panels, nb.q)
                dens = m.prefactor * t ** (-m.s) * (1.0 + t) ** (-m.farfield_exponent)
                pts.append(base + direction * t)
                ws.append(w * dens)
                dts.append(t)
                flags.add("far-tail-inverted")
    x = np.concatenate(pts).reshape(-1, 1)
    w = np.concatenate(ws)
    mask, clipped = _region_mask(region_eff, x)
    if clipped:
        flags.add("predicate-clip")
    return MeasureNodes(x, w * mask, np.concatenate(dts), tail_err,
                        tuple(sorted(flags)))


# ---------------------------------------------------------------------------
# radial nodes for balls (d = 2)


def _arc_halfwidth(r: np.ndarray, c_dist: float, rho: float) -> np.ndarray:
    """Angular half-width of circle radius r (origin) inside a ball at c."""
    if c_dist == 0.0:
        return np.where(r <= rho, np.pi, 0.0)
    cosv = (r ** 2 + c_dist ** 2 - rho ** 2) / (2.0 * r * c_dist)
    return np.arccos(np.clip(cosv, -1.0, 1.0))


def _nodes_ball2d(m: MeasureDensity, region: Region, nb: NodeBudget) -> MeasureNodes:
    dom: Ball = m.domain  # type: ignore[assignment]
    R = dom.radius
    ctr = np.asarray(dom.center, dtype=float)
    side = m.support_side()
    sgn = -1.0 if side == "interior" else +1.0
    flags = set()

    if m.kind == "mubar":
        region_eff = CollarRegion(m.collar) if region is None else region
    else:
        region_eff = region

    if side == "interior":
        T = R
    elif isinstance(region_eff, CollarRegion):
        T = region_eff.width
    elif isinstance(region_eff, BallRegion):
        T = float(np.linalg.norm(np.asarray(region_eff.center) - ctr)
                  + region_eff.radius - R)
        T = max(T, 1e-300)
    elif m.kind == "mutilde":
        raise ValueError("mutilde has infinite mass: pass a bounded region")
    else:
        T = 2.0 + 2.0 * dom.diameter

    t, wt = power_law_nodes(T, -m.s, nb.panels, nb.q)
    r = R + sgn * t
    keep = r > 0
    t, wt, r = t[keep], wt[keep], r[keep]
    dens = np.full_like(t, m.prefactor)
    if m.kind == "mu":
        dens = dens * (1.0 + t) ** (-m.farfield_exponent)

    pts, ws, dts = [], [], []
    if isinstance(region_eff, BallRegion):
        cvec = np.asarray(region_eff.center, dtype=float) - ctr
        c_dist = float(np.linalg.norm(cvec))
        theta0 = math.atan2(cvec[1], cvec[0]) if c_dist > 0 else 0.0
        half = _arc_halfwidth(r, c_dist, region_eff.radius)
        for j in range(len(t)):
            if half[j] <= 0.0:
                continue
            n_arc = max(6, int(nb.n_ang * half[j] / np.pi))
            th, wth = gauss_panel(theta0 - half[j], theta0 + half[j], min(n_arc, 64))
            xy = ctr + r[j] * np.stack([np.cos(th), np.sin(th)], axis=-1)
            pts.append(xy)
            ws.append(wth * r[j] * wt[j] * dens[j])
            dts.append(np.full(len(th), t[j]))
    else:
        th, wth = angular_nodes(nb.n_ang)
        cs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        xy = ctr[None, None, :] + r[:, None, None] * cs[None, :, :]
        w2 = (wt * dens * r)[:, None] * wth[None, :]
        pts.append(xy.reshape(-1, 2))
        ws.append(w2.reshape(-1))
        dts.append(np.repeat(t, len(th)))

    # far tail for full-exterior mu integrals
    tail_err = 0.0
    if side == "exterior" and m.kind == "mu" and not isinstance(
            region_eff, (BallRegion, CollarRegion)):
        decay = m.s * m.p  # radial integrand ~ t^(-1-sp) with the jacobian
        tt, wtt = tail_inversion_nodes(T, decay, nb.tail_panels, nb.q)
        dens_t = m.prefactor * tt ** (-m.s) * (1.0 + tt) ** (-m.farfield_exponent)
        th, wth = angular_nodes(max(16, nb.n_ang // 2))
        cs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        rr = R + tt
        xy = ctr[None, None, :] + rr[:, None, None] * cs[None, :, :]
        w2 = (wtt * dens_t * rr)[:, None] * wth[None, :]
        pts.append(xy.reshape(-1, 2))
        ws.append(w2.reshape(-1))
        dts.append(np.repeat(tt, len(th)))
        flags.add("far-tail-inverted")

    x = np.concatenate(pts)
    w = np.concatenate(ws)
    mask, clipped = _region_mask(region_eff, x)
    if clipped:
        flags.add("predicate-clip")
    return MeasureNodes(x, w * mask, np.concatenate(dts), tail_err,
                        tuple(sorted(flags)))


# ---------------------------------------------------------------------------
# generic 2-D fallback: Whitney-cube cells


def _nodes_whitney2d(m: MeasureDensity, region: Region, nb: NodeBudget) -> MeasureNodes:
    side = m.support_side()
    decomp = cached_decompose(m.domain, side, nb.level_2d)
    flags = {"whitney-cells"}
    if m.kind == "mubar":
        region_eff = CollarRegion(m.collar) if region is None else region
    else:
        region_eff = region
    if m.kind == "mutilde" and not isinstance(region_eff, (BallRegion, CollarRegion)):
        raise ValueError("mutilde has infinite mass: pass a bounded region")

    pts, ws = [], []
    for c in decomp.cubes:
        if isinstance(region_eff, BallRegion):
            gap = np.maximum(np.maximum(c.lo - np.asarray(region_eff.center),
                                        np.asarray(region_eff.center) - c.hi), 0.0)
            if float(np.linalg.norm(gap)) > region_eff.radius:
                continue
        if isinstance(region_eff, CollarRegion) and \
                c.dist_to_boundary > region_eff.width:
            continue
        if m.kind == "mubar" and c.dist_to_boundary > m.collar:
            continue
        x, w = tensor_gauss(c.lo, c.hi, nb.q // 2 + 2)
        pts.append(x)
        ws.append(w)
    x = np.concatenate(pts)
    w = np.concatenate(ws)
    dens = m.density(x)
    if isinstance(region_eff, BallRegion):
        inside = np.linalg.norm(x - np.asarray(region_eff.center), axis=-1) \
            <= region_eff.radius
        dens = dens * inside
        flags.add("region-node-mask")
    elif isinstance(region_eff, CollarRegion):
        d = np.abs(np.asarray(m.domain.signed_distance(x)).reshape(-1))
        dens = dens * (d < region_eff.width)
        flags.add("region-node-mask")
    mask, clipped = _region_mask(region_eff, x)
    if clipped:
        flags.add("predicate-clip")

    # unresolved collar: analytic bound on the missing boundary mass
    eps = 4.0 * math.sqrt(m.domain.dim) * 2.0 ** (-nb.level_2d)
    perimeter = m.domain.boundary_quadrature(64).total_mass
    collar_mass = 2.0 * perimeter * eps ** (1.0 - m.s)
    if not m.robust_factor:
        collar_mass /= (1.0 - m.s)
    tail_bound = 0.0
    if m.kind == "mu" and not isinstance(region_eff, (BallRegion, CollarRegion)):
        Rm = decomp.r_max or 8.0 * m.domain.diameter
        sp = m.s * m.p
        tail_bound = m.prefactor * 2 * np.pi * Rm ** (1.0 - m.s) \
            * (1.0 + Rm) ** (-m.farfield_exponent) * Rm / max(sp, 0.1)
        flags.add("far-tail-bounded")
    return MeasureNodes(x, w * dens * mask, np.abs(np.asarray(
        m.domain.signed_distance(x)).reshape(-1)),
        collar_mass + tail_bound, tuple(sorted(flags)))


def measure_nodes(m: MeasureDensity, region: Region = None,
                  budget=None) -> MeasureNodes:
    nb = budget_from(budget)
    if m.domain.dim == 1:
        nodes = _nodes_1d(m, region, nb)
    elif isinstance(m.domain, Ball):
        nodes = _nodes_ball2d(m, region, nb)
    else:
        nodes = _nodes_whitney2d(m, region, nb)
    # offsets below float resolution collapse onto the boundary; their mass
    # is genuine (the measure concentrates there), so keep the nodes and
    # floor the stored distance to keep regularized kernels finite
    keep = np.isfinite(nodes.weights)
    if not np.all(keep):
        nodes = MeasureNodes(nodes.points[keep], nodes.weights[keep],
                             nodes.dists[keep], nodes.err_bound, nodes.flags)
    nodes.dists = np.maximum(nodes.dists, 1e-60)
    return nodes


# ---------------------------------------------------------------------------
# public operations


def integrate(m: MeasureDensity, region: Region = None,
              f: Optional[Callable[[np.ndarray], np.ndarray]] = None,
              budget=None, rtol: float = 1e-6) -> QuadResult:
    """Integrate f against the measure over the region, with error estimate.

    The error combines the difference of two refinement levels with the
    analytic bounds for unresolved collar mass and far-field truncation.
    """
    nb = budget_from(budget)
    fine = measure_nodes(m, region, nb)
    coarse = measure_nodes(m, region, nb.scaled(0.5))

    def total(nodes: MeasureNodes) -> float:
        if f is None:
            return float(np.sum(nodes.weights))
        vals = np.asarray(f(nodes.points), dtype=float).reshape(-1)
        return float(np.dot(vals, nodes.weights))

    v_f, v_c = total(fine), total(coarse)
    err = abs(v_f - v_c) + fine.err_bound
    flags = set(fine.flags)
    if err > rtol * max(abs(v_f), 1e-300) and err > 1e-14:
        flags.add("tolerance-not-met")
    return QuadResult(v_f, err, tuple(sorted(flags)))


def mu_tilde_mass_1d_exact(domain: Domain, s: float, x_lo: float,
                           x_hi: float) -> float:
    """Closed-form (1-s) * integral of d_x^-s over [x_lo, x_hi] excluding Ω (d=1).

    The distance function is piecewise linear with breakpoints at boundary
    points and gap midpoints, so each piece integrates to a difference of
    powers.
    """
    comps = _interval_components(domain)
    total = 0.0
    for base, direction, extent in _pieces_1d(domain, "exterior"):
        hi_t = np.inf if extent is None else extent
        if direction > 0:
            lo = max(x_lo, base)
            hi = min(x_hi, base + hi_t)
            t0, t1 = lo - base, hi - base
        else:
            lo = max(x_lo, base - hi_t if np.isfinite(hi_t) else -np.inf)
            hi = min(x_hi, base)
            t0, t1 = base - hi, base - lo
        if t1 > t0 >= 0.0:
            total += t1 ** (1.0 - s) - t0 ** (1.0 - s)
    return total


def extension_weight(domain: Domain, cube, s: float, budget=None) -> QuadResult:
    """Inverse boundary-collar mass of the ball around a Whitney cube.

    Requires the ball B(center, 6*diam) to meet the exterior with interior
    points, which holds for cubes whose center sits within 5 diameters of
    the boundary.
    """
    center = cube.center
    radius = 6.0 * cube.diam
    mt = MeasureDensity("mutilde", s, domain)
    res = integrate(mt, BallRegion(tuple(center), radius), budget=budget)
    if res.value <= 0.0:
        raise ValueError("ball does not intersect the exterior")
    rel = res.error / res.value
    return QuadResult(1.0 / res.value, rel / res.value, res.flags)


@dataclass
class WeakConvergenceRow:
    s: float
    value: float
    error: float
    target: float


@dataclass
class WeakConvergenceReport:
    rows: list[WeakConvergenceRow]
    target: float
    monotone_error_decrease: bool

    def errors(self) -> np.ndarray:
        return np.array([abs(r.value - r.target) for r in self.rows])


def weak_convergence_report(domain: Domain, f, s_grid, collar: float = 1.0,
                            budget=None) -> WeakConvergenceReport:
    """Collar-measure integrals of f against a sweep of s, with the boundary
    integral (d >= 2) or boundary point sum (d = 1) as the limiting target."""
    s_grid = sorted(s_grid)
    if domain.dim == 1:
        bpts = domain.boundary_points() if hasattr(domain, "boundary_points") \
            else np.concatenate([[c[0], c[1]] for c in _interval_components(domain)])
        target = float(np.sum(np.asarray(f(np.asarray(bpts).reshape(-1, 1)))))
    else:
        bq = domain.boundary_quadrature(4096)
        target = bq.integrate(f)
    rows = []
    for s in s_grid:
        m = MeasureDensity("mubar", s, domain, collar=collar)
        res = integrate(m, None, f=f, budget=budget)
        rows.append(WeakConvergenceRow(s, res.value, res.error, target))
    errs = [abs(r.value - r.target) for r in rows]
    monotone = all(e1 >= e2 - 1e-12 for e1, e2 in zip(errs[:-1], errs[1:]))
    return WeakConvergenceReport(rows, target, monotone)
