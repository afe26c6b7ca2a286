"""Scalar fields and the built-in test-field families used by the probes."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import Domain


@dataclass(frozen=True)
class ScalarField:
    """Real-valued function on R^d given by a vectorized evaluator.

    The evaluator must be pure: repeated evaluation at the same points
    returns identical values.  ``support_radius`` is the radius (around the
    origin) outside of which the field is guaranteed to vanish; ``None``
    means unbounded support.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    name: str = "field"
    support_radius: Optional[float] = None
    lipschitz: Optional[float] = None
    vanishes_inside: bool = False   # identically 0 on the domain
    vanishes_outside: bool = False  # identically 0 off the domain

    def __call__(self, x: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.evaluator(pts), dtype=float).reshape(pts.shape[0])

    def scaled(self, factor: float) -> "ScalarField":
        return ScalarField(lambda p: factor * self.evaluator(p),
                           name=f"{factor}*{self.name}",
                           support_radius=self.support_radius,
                           lipschitz=None if self.lipschitz is None
                           else abs(factor) * self.lipschitz,
                           vanishes_inside=self.vanishes_inside,
                           vanishes_outside=self.vanishes_outside)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        sr = None
        if self.support_radius is not None and other.support_radius is not None:
            sr = max(self.support_radius, other.support_radius)
        return ScalarField(lambda p: self.evaluator(p) + other.evaluator(p),
                           name=f"{self.name}+{other.name}", support_radius=sr)


def constant(c: float = 1.0) -> ScalarField:
    return ScalarField(lambda p: np.full(p.shape[0], c), name=f"const{c}",
                       lipschitz=0.0)


def smooth_bump(center, radius: float, height: float = 1.0) -> ScalarField:
    """Compactly supported exp bump, exactly zero outside the ball."""
    c = np.atleast_1d(np.asarray(center, dtype=float))

    def ev(p):
        r2 = np.sum((p - c) ** 2, axis=-1) / radius ** 2
        out = np.zeros(p.shape[0])
        m = r2 < 1.0
        out[m] = height * np.exp(1.0 - 1.0 / (1.0 - r2[m]))
        return out

    sr = float(np.linalg.norm(c) + radius)
    return ScalarField(ev, name=f"bump(r={radius})", support_radius=sr,
                       lipschitz=2.0 * height / radius)


def coordinate_clipped(axis: int, lo: float = -1.0, hi: float = 2.0) -> ScalarField:
    """Coordinate function clipped into [lo, hi] and cut off outside [lo, hi]^d.

    Continuous with compact support, so it is integrable against every norm.
    """

    def ev(p):
        inside = np.all((p >= lo) & (p <= hi), axis=-1)
        vals = np.clip(p[:, axis], lo, hi)
        # taper linearly to zero across a unit margin outside the window
        dist_out = np.max(np.maximum(np.maximum(lo - p, p - hi), 0.0), axis=-1)
        taper = np.clip(1.0 - dist_out, 0.0, 1.0)
        return np.where(inside, vals, vals * taper)

    sr = max(abs(lo), abs(hi)) * 2.0 + 1.0
    return ScalarField(ev, name=f"coord{axis}-clip", support_radius=sr, lipschitz=None)


def step_exterior(domain: Domain) -> ScalarField:
    """Indicator of the exterior: jump across the whole boundary."""
    return ScalarField(lambda p: (domain.signed_distance(p) > 0).astype(float),
                       name="step-exterior")


def step_halfspace(threshold: float = 0.5, axis: int = 0) -> ScalarField:
    return ScalarField(lambda p: (p[:, axis] > threshold).astype(float),
                       name=f"step-x{axis}>{threshold}")


def distance_power(domain: Domain, alpha: float, reach: float = 1.0) -> ScalarField:
    """d_x^alpha near the boundary, tapered to zero at distance ``reach``."""

    def ev(p):
        d = domain.dist_to_boundary(p)
        out = np.zeros(p.shape[0])
        m = d < reach
        out[m] = (d[m] ** alpha) * (1.0 - d[m] / reach)
        return out

    return ScalarField(ev, name=f"dist^{alpha}",
                       support_radius=domain.diameter * 2 + reach)


def oscillation(k: int = 3, radius: float = 2.0) -> ScalarField:
    def ev(p):
        r = np.linalg.norm(p, axis=-1)
        cut = np.clip(1.0 - np.maximum(r - radius, 0.0), 0.0, 1.0)
        return np.sin(2 * np.pi * k * p[:, 0]) * cut

    return ScalarField(ev, name=f"osc{k}", support_radius=radius + 1.0,
                       lipschitz=2 * np.pi * k + 1)


def interior_tent(domain: Domain) -> ScalarField:
    """d_x inside the domain, 0 outside; vanishes on the complement."""

    def ev(p):
        sd = domain.signed_distance(p)
        return np.where(sd < 0, -sd, 0.0)

    return ScalarField(ev, name="tent", support_radius=domain.diameter * 2,
                       lipschitz=1.0, vanishes_outside=True)


def interior_bump(domain: Domain, shrink: float = 0.8) -> ScalarField:
    """Smooth bump supported strictly inside the domain."""
    lo, hi = domain.bounding_box()
    center = 0.5 * (np.atleast_1d(lo) + np.atleast_1d(hi))
    sd = float(np.asarray(domain.signed_distance(center.reshape(1, -1))).ravel()[0])
    if sd >= 0:  # center outside (e.g. L-shape): fall back to deepest sample
        rng = np.random.default_rng(0)
        pts = np.atleast_1d(lo) + (np.atleast_1d(hi) - np.atleast_1d(lo)) * \
            rng.random((512, domain.dim))
        sds = np.asarray(domain.signed_distance(pts)).reshape(-1)
        k = int(np.argmin(sds))
        center, sd = pts[k], float(sds[k])
    f = smooth_bump(center, shrink * abs(sd))
    return ScalarField(f.evaluator, name="bump-inside",
                       support_radius=f.support_radius,
                       lipschitz=f.lipschitz, vanishes_outside=True)


def counterexample(n: int, domain: Domain, s: float) -> ScalarField:
    """Tall thin exterior-collar plateau: n^(1-s) on the width-1/n collar."""
    if n < 2:
        raise ValueError("n must be >= 2")
    height = float(n) ** (1.0 - s)

    def ev(p):
        sd = domain.signed_distance(p)
        return np.where((sd > 0) & (sd < 1.0 / n), height, 0.0)

    return ScalarField(ev, name=f"counterexample-{n}",
                       support_radius=domain.diameter * 2 + 1.0,
                       vanishes_inside=True)


def interior_counterexample(n: int, domain: Domain, s: float) -> ScalarField:
    """Interior mirror of the thin-collar plateau: n^(1-s) just inside."""
    if n < 2:
        raise ValueError("n must be >= 2")
    height = float(n) ** (1.0 - s)

    def ev(p):
        sd = domain.signed_distance(p)
        return np.where((sd < 0) & (sd > -1.0 / n), height, 0.0)

    return ScalarField(ev, name=f"interior-counterexample-{n}",
                       support_radius=domain.diameter * 2 + 1.0,
                       vanishes_outside=True)


def battery(domain: Domain, s: float = 0.5) -> list[ScalarField]:
    """The fixed 12-family probe battery for a given domain.

    Families stress constants, slopes, boundary-concentrated data, jumps
    across the boundary, near-singular distance powers and the seminorm
    counterexample; corner bumps target the non-smooth boundary points.
    """
    d = domain.dim
    bq = domain.boundary_quadrature(max(8, 4 * d))
    b0 = bq.points[0]
    # a corner-ish second boundary anchor: farthest node from the first
    b1 = bq.points[int(np.argmax(np.linalg.norm(bq.points - b0, axis=-1)))]
    diam = domain.diameter

    fams = [
        constant(1.0),
        coordinate_clipped(0, -1.0, 1.0 + diam),
        smooth_bump(np.zeros(d) if d > 1 else np.zeros(1), diam, height=1.0),
        interior_bump(domain),
        smooth_bump(b0, 0.5 * diam),
        smooth_bump(b1, 0.25 * diam),
        step_exterior(domain),
        step_halfspace(0.5, 0),
        distance_power(domain, alpha=0.6),
        oscillation(3, radius=diam + 1),
        interior_tent(domain),
        counterexample(16, domain, s),
    ]
    return fams


FIELD_SPECS = {
    "constant": lambda dom, s: constant(1.0),
    "coordinate": lambda dom, s: coordinate_clipped(0, -1.0, 1.0 + dom.diameter),
    "bump": lambda dom, s: interior_bump(dom),
    "bump-boundary": lambda dom, s: smooth_bump(
        dom.boundary_quadrature(8).points[0], 0.5 * dom.diameter),
    "step": lambda dom, s: step_exterior(dom),
    "tent": lambda dom, s: interior_tent(dom),
    "distpow": lambda dom, s: distance_power(dom, 0.6),
    "osc": lambda dom, s: oscillation(3, dom.diameter + 1),
}


def field_from_spec(spec: str, domain: Domain, s: float = 0.5) -> ScalarField:
    """Resolve CLI field specs like ``bump`` or ``counterexample-64``."""
    if spec.startswith("counterexample-"):
        return counterexample(int(spec.split("-", 1)[1]), domain, s)
    if spec.startswith("const-"):
        return constant(float(spec.split("-", 1)[1]))
    if spec in FIELD_SPECS:
        return FIELD_SPECS[spec](domain, s)
    raise ValueError(f"unknown field spec {spec!r}; known: "
                     f"{sorted(FIELD_SPECS)}, counterexample-<n>, const-<c>")
