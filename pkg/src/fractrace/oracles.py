"""Stratified Monte-Carlo oracles for the double-integral forms.

Independent of the quadrature engines: cells only stratify the sampling,
all singular structure is faced head-on by uniform draws.  Used by the
verification suite to cross-check the deterministic paths within combined
error estimates; every run is reproducible from its seed.
"""

from __future__ import annotations

import numpy as np

from ._quadrature import signed_power
from .fields import ScalarField
from .geometry import Domain
from .measures import MeasureDensity
from .whitney import cached_decompose


def _cells(domain: Domain, side: str, level: int, r_max: float | None):
    decomp = cached_decompose(domain, side, level, r_max)
    return [(c.lo, c.hi, c.volume) for c in decomp.cubes]


def vsp_form_mc(u: ScalarField, A: str, B: str, domain: Domain, s: float,
                p: float, n_samples: int = 10_000_000, seed: int = 1234,
                level: int = 6, truncation: float | None = None):
    """Stratified MC estimate of the difference form with standard error.

    Samples are allocated to cell pairs proportionally to the product
    volume (with a floor), drawn uniformly within each cell.
    """
    d = domain.dim
    if truncation is None:
        truncation = (u.support_radius or 4.0 * domain.diameter) \
            + domain.diameter + 2.0
    r_max = float(2.0 ** np.ceil(np.log2(truncation)))
    if d == 1:
        r_max = max(r_max, 4096.0)  # bands are log-many, tail decays slowly

    def side_cells(region):
        out = []
        if domain.dim == 1:
            sides = {"interior": ["interior"], "exterior": ["exterior"],
                     "all": ["interior", "exterior"]}[region]
            for sd in sides:
                out += [(np.array([lo]), np.array([hi]), hi - lo)
                        for lo, hi in _strata_1d(domain, sd, r_max)]
            return out
        if region in ("interior", "all"):
            out += _cells(domain, "interior", level, None)
        if region in ("exterior", "all"):
            out += _cells(domain, "exterior", level, r_max)
        return out

    cells_a = side_cells(A)
    cells_b = side_cells(B)
    rng = np.random.default_rng(seed)
    vols = np.array([[va * vb for (_, _, vb) in cells_b]
                     for (_, _, va) in cells_a])
    alloc = vols / vols.sum()
    counts = np.maximum((alloc * n_samples).astype(int), 16)

    total = 0.0
    var_total = 0.0
    expo = d + s * p
    for i, (lo_a, hi_a, va) in enumerate(cells_a):
        lo_a, hi_a = np.atleast_1d(lo_a), np.atleast_1d(hi_a)
        for j, (lo_b, hi_b, vb) in enumerate(cells_b):
            lo_b, hi_b = np.atleast_1d(lo_b), np.atleast_1d(hi_b)
            n = counts[i, j]
            x = lo_a + (hi_a - lo_a) * rng.random((n, d))
            y = lo_b + (hi_b - lo_b) * rng.random((n, d))
            dist = np.linalg.norm(x - y, axis=-1)
            ok = dist > 0
            vals = np.zeros(n)
            du = np.abs(u(x[ok]) - u(y[ok]))
            vals[ok] = du ** p * dist[ok] ** (-expo)
            mean = float(vals.mean())
            var = float(vals.var(ddof=1)) if n > 1 else 0.0
            total += va * vb * mean
            var_total += (va * vb) ** 2 * var / n
    value = (1.0 - s) * total
    # Lebesgue tail beyond the truncation radius decays like r^(-sp)
    tail = 0.0
    if B in ("exterior", "all"):
        sup_u = 1e-12
        for lo, hi, _ in cells_a[:8]:
            mid = 0.5 * (np.atleast_1d(lo) + np.atleast_1d(hi)).reshape(1, -1)
            sup_u = max(sup_u, float(np.abs(u(mid))[0]))
        vol_a = sum(v for _, _, v in cells_a)
        tail = (1.0 - s) * 2.0 * d * vol_a * (2.0 * sup_u) ** p \
            * r_max ** (-s * p) / (s * p)
    stderr = (1.0 - s) * float(np.sqrt(var_total)) + tail
    return value, stderr


def _strata_1d(domain: Domain, side: str, r_max: float, depth: int = 45):
    """Dyadic boundary-distance bands per interior or exterior piece.

    The weighted measures concentrate at the boundary (and difference
    kernels peak there), so uniform spatial strata would miss the action;
    bands halving toward each boundary point keep every stratum's density
    variation bounded while covering all mass down to 2^-depth.
    """
    from .measures import _pieces_1d
    strata = []  # (x_lo, x_hi)
    for base, direction, extent in _pieces_1d(domain, side):
        near = extent if extent is not None else 1.0
        edges = [near * 2.0 ** (-k) for k in range(depth, -1, -1)]
        if extent is None:
            grow = near * 2.0
            while grow < r_max:
                edges.append(grow)
                grow *= 2.0
            edges.append(r_max)
        for t0, t1 in zip(edges[:-1], edges[1:]):
            if direction > 0:
                strata.append((base + t0, base + t1))
            else:
                strata.append((base - t1, base - t0))
    return strata


def tsp_form_mc(g: ScalarField, domain: Domain, s: float, p: float,
                n_samples: int = 10_000_000, seed: int = 1234,
                level: int = 6, truncation: float | None = None):
    """Stratified MC estimate of the diagonal trace form over the exterior.

    In 1-D the strata are dyadic boundary-distance bands, which track the
    measure concentration; in 2-D Whitney cells stratify and the unresolved
    collar mass enters the error bound.  The exterior is truncated at a
    dyadic radius covering the data support.
    """
    d = domain.dim
    if truncation is None:
        truncation = (g.support_radius or 4.0 * domain.diameter) \
            + domain.diameter + 2.0
    r_max = max(float(2.0 ** np.ceil(np.log2(truncation))),
                1024.0 if d == 1 else 8.0 * domain.diameter)
    m = MeasureDensity("mu", s, domain, p=p)
    expo = d + s * (p - 2.0)
    rng = np.random.default_rng(seed)

    deficit = 0.0
    if d == 1:
        bands = _strata_1d(domain, "exterior", r_max)
        cells = [(np.array([lo]), np.array([hi]), hi - lo) for lo, hi in bands]
    else:
        cells = _cells(domain, "exterior", level, r_max)
        eps = 4.0 * np.sqrt(d) * 2.0 ** (-level)
        perim = domain.boundary_quadrature(64).total_mass
        deficit = 2.0 * perim * eps ** (1.0 - s) \
            * float(np.max(np.abs(g(domain.boundary_quadrature(64).points)))
                    + 1e-12) ** p

    # measure mass per stratum steers the allocation
    masses = []
    for lo, hi, vol in cells:
        mid = 0.5 * (np.atleast_1d(lo) + np.atleast_1d(hi)).reshape(1, -1)
        masses.append(max(float(m.density(mid)[0]), 1e-300) * vol)
    masses = np.array(masses)
    alloc = np.outer(masses, masses)
    alloc = alloc / alloc.sum()
    counts = np.maximum((alloc * n_samples).astype(int), 16)

    total = 0.0
    var_total = 0.0
    for i, (lo_a, hi_a, va) in enumerate(cells):
        lo_a, hi_a = np.atleast_1d(lo_a), np.atleast_1d(hi_a)
        for j, (lo_b, hi_b, vb) in enumerate(cells):
            lo_b, hi_b = np.atleast_1d(lo_b), np.atleast_1d(hi_b)
            n = counts[i, j]
            x = lo_a + (hi_a - lo_a) * rng.random((n, d))
            y = lo_b + (hi_b - lo_b) * rng.random((n, d))
            dx = np.abs(np.asarray(domain.signed_distance(x)).reshape(-1))
            dy = np.abs(np.asarray(domain.signed_distance(y)).reshape(-1))
            dist = np.linalg.norm(x - y, axis=-1)
            reg = np.minimum(dist + np.maximum(dx, 1e-60)
                             + np.maximum(dy, 1e-60), 1.0)
            kern = reg ** (-expo)
            gx, gy = g(x), g(y)
            vals = signed_power(gx - gy, p) * (gx - gy) * kern \
                * m.density(x) * m.density(y)
            mean = float(vals.mean())
            var = float(vals.var(ddof=1)) if n > 1 else 0.0
            total += va * vb * mean
            var_total += (va * vb) ** 2 * var / n
    # analytic bound on pairs lost to the exterior truncation: the kernel is
    # at most one and the truncated measure mass decays like r^(-sp)
    sp = s * p
    mu_tail = 2.0 * d * (1.0 - s) * r_max ** (-sp) / sp
    bq = domain.boundary_quadrature(32)
    gsup = float(np.max(np.abs(g(bq.points * (1.0 + 1e-3)))) + 1e-12)
    mu_near = 4.0 * d * (1.0 + domain.diameter)
    tail_err = 2.0 * mu_tail * (2.0 * gsup) ** p * mu_near
    stderr = float(np.sqrt(var_total)) + deficit + tail_err
    return total, stderr
