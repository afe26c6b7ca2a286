"""Dyadic Whitney decompositions, reflected cubes and the partition of unity.

A cube at level k has side 2**-k and integer lattice index, so all cube
coordinates are exact dyadic floats.  Construction is recursive: a cube
entirely on the target side of the boundary is accepted once
diam(Q) <= dist(Q, boundary); otherwise it is subdivided.  Starting the
recursion from cubes too large to be accepted guarantees the two-sided
Whitney inequality diam <= dist <= 4*diam for every accepted cube.

Cubes that would need side below 2**-max_level are dropped and their
volume is reported as the coverage deficit of the decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .geometry import Domain

SQRT = {1: 1.0, 2: math.sqrt(2.0)}


@dataclass(frozen=True)
class Cube:
    level: int            # side = 2**-level (negative levels allowed)
    index: tuple[int, ...]
    dist_to_boundary: float

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def center(self) -> np.ndarray:
        h = self.side
        return (np.asarray(self.index, dtype=float) + 0.5) * h

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.index, dtype=float) * self.side

    @property
    def hi(self) -> np.ndarray:
        return (np.asarray(self.index, dtype=float) + 1.0) * self.side

    @property
    def diam(self) -> float:
        return SQRT[self.dim] * self.side

    @property
    def volume(self) -> float:
        return self.side ** self.dim

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        return bool(np.all(x >= self.lo) and np.all(x < self.hi))

    def dilate_contains(self, x: np.ndarray, factor: float = 1.125) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        half = 0.5 * factor * self.side
        return bool(np.all(np.abs(x - self.center) <= half))


def _gap(c1: Cube, c2: Cube) -> float:
    """Componentwise max gap: <= 0 iff the closed cubes intersect."""
    g = np.maximum(c1.lo - c2.hi, c2.lo - c1.hi)
    return float(np.max(g))


def box_distance(c1: Cube, c2: Cube) -> float:
    g = np.maximum(np.maximum(c1.lo - c2.hi, c2.lo - c1.hi), 0.0)
    return float(np.linalg.norm(g))


class WhitneyDecomposition:
    def __init__(self, domain: Domain, target: str, max_level: int,
                 cubes: list[Cube], deficit_volume: float, deficit_count: int,
                 r_max: float | None):
        self.domain = domain
        self.target = target
        self.max_level = max_level
        self.cubes = cubes
        self.coverage_deficit = deficit_volume
        self.deficit_count = deficit_count
        self.r_max = r_max
        self._by_key = {(c.level, c.index): i for i, c in enumerate(cubes)}
        self._levels = sorted({c.level for c in cubes})
        self._neighbors: list[list[int]] | None = None

    def __len__(self) -> int:
        return len(self.cubes)

    @property
    def levels(self) -> list[int]:
        return self._levels

    def locate(self, x) -> Optional[int]:
        """Index of the cube containing x, finest levels first."""
        x = np.asarray(x, dtype=float).reshape(-1)
        for k in reversed(self._levels):
            h = 2.0 ** (-k)
            idx = tuple(int(v) for v in np.floor(x / h))
            i = self._by_key.get((k, idx))
            if i is not None:
                return i
        return None

    def nearest_cube(self, x) -> int:
        """Fallback for points in the coverage deficit: nearest center."""
        x = np.asarray(x, dtype=float).reshape(-1)
        centers = self.centers()
        return int(np.argmin(np.linalg.norm(centers - x, axis=-1)))

    def centers(self) -> np.ndarray:
        if not hasattr(self, "_centers"):
            self._centers = np.array([c.center for c in self.cubes])
        return self._centers

    # -- adjacency ----------------------------------------------------------
    def neighbors(self, i: int) -> list[int]:
        if self._neighbors is None:
            self._build_adjacency()
        return self._neighbors[i]

    def _build_adjacency(self) -> None:
        self._neighbors = [[] for _ in self.cubes]
        for i, c in enumerate(self.cubes):
            for j in self._touch_candidates(c):
                if j != i and _gap(c, self.cubes[j]) <= 0.0:
                    self._neighbors[i].append(j)

    def _touch_candidates(self, c: Cube) -> Iterable[int]:
        for k in self._levels:
            if abs(k - c.level) > 2:
                continue
            h = 2.0 ** (-k)
            ranges = []
            for a in range(c.dim):
                lo = int(np.floor(c.lo[a] / h)) - 1
                hi = int(np.floor(c.hi[a] / h)) + 1
                ranges.append(range(lo, hi + 1))
            if c.dim == 1:
                idxs = [(i,) for i in ranges[0]]
            else:
                idxs = [(i, j) for i in ranges[0] for j in ranges[1]]
            for idx in idxs:
                pos = self._by_key.get((k, idx))
                if pos is not None:
                    yield pos

    def touching(self, i: int) -> list[Cube]:
        return [self.cubes[j] for j in self.neighbors(i)]

    # -- diagnostics ---------------------------------------------------------
    def max_dilated_overlap(self, points: np.ndarray | None = None,
                            rng: np.random.Generator | None = None,
                            n_random: int = 2000) -> int:
        """Max multiplicity of the (1+1/8)-dilated cubes over sample points."""
        samples = [c.center for c in self.cubes]
        samples += [c.lo for c in self.cubes]
        if points is not None:
            samples += list(np.atleast_2d(points))
        if rng is not None and len(self.cubes) > 0:
            lo = np.min([c.lo for c in self.cubes], axis=0)
            hi = np.max([c.hi for c in self.cubes], axis=0)
            samples += list(lo + (hi - lo) * rng.random((n_random, self.cubes[0].dim)))
        if self._neighbors is None:
            self._build_adjacency()
        best = 0
        for x in samples:
            x = np.asarray(x, dtype=float).reshape(-1)
            i = self.locate(x)
            cand = range(len(self.cubes)) if i is None else [i] + self._neighbors[i]
            count = sum(1 for j in cand if self.cubes[j].dilate_contains(x))
            best = max(best, count)
        return best


def decompose(domain: Domain, target: str = "interior", max_level: int = 7,
              r_max: float | None = None) -> WhitneyDecomposition:
    """Build the Whitney decomposition of the interior or exterior of Ω.

    Processes one dyadic level at a time with vectorized box-to-boundary
    distances, so deep 1-D trees and 2-D level-7 trees stay fast.
    """
    if target not in ("interior", "exterior"):
        raise ValueError("target must be 'interior' or 'exterior'")
    if max_level < 0:
        raise ValueError("max_level must be >= 0")
    d = domain.dim
    if target == "interior" and domain.inradius <= 2.0 ** (-max_level):
        raise ValueError("domain inradius below cube resolution at max_level")

    lo_d, hi_d = domain.bounding_box()
    if target == "interior":
        region_lo, region_hi = np.atleast_1d(lo_d), np.atleast_1d(hi_d)
        sign = -1.0
    else:
        if r_max is None:
            r_max = max(8.0 * domain.diameter, domain.diameter + 2.0)
        region_lo = np.atleast_1d(lo_d) - r_max
        region_hi = np.atleast_1d(hi_d) + r_max
        sign = 1.0

    extent = float(np.max(region_hi - region_lo))
    k0 = -int(math.ceil(math.log2(2.0 * extent)))
    side0 = 2.0 ** (-k0)

    i_lo = np.floor(region_lo / side0).astype(np.int64)
    i_hi = np.floor(region_hi / side0).astype(np.int64)
    if d == 1:
        current = np.arange(i_lo[0], i_hi[0] + 1, dtype=np.int64).reshape(-1, 1)
    else:
        gx = np.arange(i_lo[0], i_hi[0] + 1, dtype=np.int64)
        gy = np.arange(i_lo[1], i_hi[1] + 1, dtype=np.int64)
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        current = np.stack([X.ravel(), Y.ravel()], axis=-1)

    cubes: list[Cube] = []
    deficit_vol = 0.0
    deficit_cnt = 0

    for k in range(k0, max_level + 1):
        if current.shape[0] == 0:
            break
        h = 2.0 ** (-k)
        lo = current.astype(float) * h
        hi = lo + h
        inside_region = ~(np.any(lo > region_hi, axis=1) | np.any(hi < region_lo, axis=1))
        current = current[inside_region]
        lo, hi = lo[inside_region], hi[inside_region]
        if current.shape[0] == 0:
            continue

        dist = np.asarray(domain.boundary_distance_to_boxes(lo, hi))
        centers = lo + 0.5 * h
        sd = np.asarray(domain.signed_distance(centers)).reshape(-1)
        positive = dist > 0.0
        on_target = sd * sign > 0.0
        accept = positive & on_target & (dist >= SQRT[d] * h)
        prune = positive & ~on_target
        split = ~accept & ~prune

        for idx, dval in zip(current[accept], dist[accept]):
            cubes.append(Cube(level=k, index=tuple(int(v) for v in idx),
                              dist_to_boundary=float(dval)))

        leftovers = current[split]
        if k == max_level:
            if leftovers.shape[0] > 0:
                frac = _target_fractions(domain, leftovers.astype(float) * h,
                                         leftovers.astype(float) * h + h, sign)
                covered = frac > 0.0
                deficit_vol = float(np.sum(frac[covered]) * h ** d)
                deficit_cnt = int(np.count_nonzero(covered))
            break
        current = _children_of(leftovers, d)

    cubes.sort(key=lambda c: (c.level, c.index))
    return WhitneyDecomposition(domain, target, max_level, cubes,
                                deficit_vol, deficit_cnt,
                                r_max if target == "exterior" else None)


def _children_of(indices: np.ndarray, d: int) -> np.ndarray:
    if indices.shape[0] == 0:
        return indices
    base = 2 * indices
    if d == 1:
        return np.concatenate([base, base + 1], axis=0)
    offs = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.int64)
    return (base[:, None, :] + offs[None, :, :]).reshape(-1, 2)


def _target_fractions(domain: Domain, lo: np.ndarray, hi: np.ndarray,
                      sign: float, n: int = 8) -> np.ndarray:
    """Per-cube fraction on the target side, via a subgrid sample."""
    m, d = lo.shape
    t = (np.arange(n) + 0.5) / n
    if d == 1:
        pts = lo[:, None, 0] + t[None, :] * (hi[:, None, 0] - lo[:, None, 0])
        pts = pts.reshape(-1, 1)
        per = n
    else:
        tx, ty = np.meshgrid(t, t)
        offs = np.stack([tx.ravel(), ty.ravel()], axis=-1)  # (n*n, 2)
        pts = (lo[:, None, :] + offs[None, :, :] * (hi - lo)[:, None, :]).reshape(-1, 2)
        per = n * n
    sd = np.asarray(domain.signed_distance(pts)).reshape(m, per)
    return np.mean(sd * sign > 0, axis=1)


# ---------------------------------------------------------------------------
# reflected cubes


@dataclass
class ReflectedCubeMap:
    """Map from exterior cubes (by index) to comparable interior cubes."""

    pairs: dict[int, int]          # exterior cube id -> interior cube id
    achieved_M: float
    achieved_N: int
    unmatched: list[int]
    violations: list[tuple[int, str]]


def reflect_cubes(ext: WhitneyDecomposition, interior: WhitneyDecomposition,
                  domain: Domain, comparability_bound: float = 32.0) -> ReflectedCubeMap:
    """Pair each small exterior cube with an interior cube across the boundary.

    The exterior center is mirrored across its nearest boundary point and
    pushed inward by one cube diameter; the interior Whitney cube containing
    the landing point is the reflection.  All comparability inequalities are
    checked and reported, never assumed.
    """
    if ext.target != "exterior" or interior.target != "interior":
        raise ValueError("expected (exterior, interior) decompositions")
    inr = domain.inradius
    pairs: dict[int, int] = {}
    unmatched: list[int] = []
    violations: list[tuple[int, str]] = []
    achieved_M = 1.0

    for i, q in enumerate(ext.cubes):
        if q.diam > inr:
            continue
        qc = q.center
        bp = domain.nearest_boundary_point(qc.reshape(1, -1))[0]
        dvec = bp - qc
        dn = float(np.linalg.norm(dvec))
        if dn == 0.0:
            unmatched.append(i)
            continue
        u = dvec / dn
        # mirror depth capped away from the deep center: uncapped landings
        # from every boundary direction would pile onto the central cubes
        # and inflate the overlap constant
        cap = max(0.4 * inr, 1.5 * q.diam)
        primary = min(dn + q.diam, cap)
        j = None
        # the small inward bias keeps landing points off dyadic cube edges,
        # where the half-open convention would break mirror symmetry
        nudge = 1.0 + 2.0 ** -16
        for depth in (primary * nudge, 1.5 * primary, 0.5 * primary * nudge,
                      0.5 * inr * nudge, 0.25 * inr * nudge):
            y = bp + depth * u
            j = interior.locate(y)
            if j is not None:
                break
        if j is None:
            unmatched.append(i)
            continue
        qt = interior.cubes[j]
        pairs[i] = j
        ratio = qt.diam / q.diam
        m_here = max(ratio, 1.0 / ratio)
        dist_pair = box_distance(q, qt)
        if q.dist_to_boundary > 0:
            m_here = max(m_here, dist_pair / q.dist_to_boundary)
        achieved_M = max(achieved_M, m_here)
        if m_here > comparability_bound:
            violations.append((i, f"comparability {m_here:.2f} exceeds bound"))

    counts: dict[int, int] = {}
    for j in pairs.values():
        counts[j] = counts.get(j, 0) + 1
    achieved_N = max(counts.values()) if counts else 0
    return ReflectedCubeMap(pairs, achieved_M, achieved_N, unmatched, violations)


# ---------------------------------------------------------------------------
# partition of unity


def _f_exp(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _f_exp_prime(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos]) / u[pos] ** 2
    return out


_EDGE_LO = 0.5        # profile is 1 on [-1/2, 1/2]^d
_EDGE_HI = 9.0 / 16.0  # and 0 outside [-9/16, 9/16]^d


def _eta(t: np.ndarray) -> np.ndarray:
    """1-D profile: 1 on [0, 1/2], 0 beyond 9/16, smooth exp-type in between."""
    t = np.asarray(t, dtype=float)
    u = (_EDGE_HI - t) / (_EDGE_HI - _EDGE_LO)
    fu = _f_exp(np.clip(u, 0.0, 1.0))
    f1u = _f_exp(np.clip(1.0 - u, 0.0, 1.0))
    with np.errstate(invalid="ignore"):
        s = np.where(fu + f1u > 0, fu / np.where(fu + f1u == 0, 1.0, fu + f1u), 0.0)
    return np.where(t <= _EDGE_LO, 1.0, np.where(t >= _EDGE_HI, 0.0, s))


def _eta_prime(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    u = (_EDGE_HI - t) / (_EDGE_HI - _EDGE_LO)
    uc = np.clip(u, 0.0, 1.0)
    fu, f1u = _f_exp(uc), _f_exp(np.clip(1.0 - uc, 0.0, 1.0))
    dfu, df1u = _f_exp_prime(uc), _f_exp_prime(np.clip(1.0 - uc, 0.0, 1.0))
    denom = (fu + f1u) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        sp = np.where(denom > 0, (dfu * f1u + fu * df1u) / np.where(denom == 0, 1.0, denom), 0.0)
    inside = (t > _EDGE_LO) & (t < _EDGE_HI)
    return np.where(inside, -sp / (_EDGE_HI - _EDGE_LO), 0.0)


def bump_psi(z: np.ndarray) -> np.ndarray:
    """Tensor bump: 1 on [-1/2,1/2]^d, 0 outside [-9/16,9/16]^d."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return np.prod(_eta(np.abs(z)), axis=-1)


def bump_psi_grad(z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    eta_vals = _eta(np.abs(z))
    grad = np.empty_like(z)
    d = z.shape[1]
    for a in range(d):
        others = np.prod(np.delete(eta_vals, a, axis=1), axis=1) if d > 1 else 1.0
        grad[:, a] = _eta_prime(np.abs(z[:, a])) * np.sign(z[:, a]) * others
    return grad


class PartitionOfUnity:
    """Whitney partition functions subordinate to the (9/8)-dilated cubes."""

    def __init__(self, decomp: WhitneyDecomposition, domain: Domain):
        if decomp.target != "interior":
            raise ValueError("partition of unity lives on the interior decomposition")
        self.decomp = decomp
        self.domain = domain
        self.rho = min(domain.inradius / 2.0, 0.5)
        self.kappa = int(math.floor(math.log2(self.rho / SQRT[domain.dim])))
        if decomp.max_level < -self.kappa + 2:
            raise ValueError(
                "decomposition too coarse to cover the boundary collar; "
                f"need max_level >= {-self.kappa + 2}")
        self.small_ids = [i for i, c in enumerate(decomp.cubes)
                          if c.level >= -self.kappa]
        self.small_set = set(self.small_ids)

    def _local_cubes(self, x: np.ndarray) -> list[int]:
        i = self.decomp.locate(x)
        if i is None:
            return []
        return [i] + self.decomp.neighbors(i)

    def _psi_all(self, x: np.ndarray, ids: list[int]) -> np.ndarray:
        vals = np.empty(len(ids))
        for n, j in enumerate(ids):
            c = self.decomp.cubes[j]
            z = (x - c.center) / c.side
            vals[n] = bump_psi(z.reshape(1, -1))[0]
        return vals

    def phi(self, cube_id: int, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        ids = self._local_cubes(x)
        if not ids:
            return 0.0
        psis = self._psi_all(x, ids)
        denom = float(psis.sum())
        if denom <= 0.0 or cube_id not in ids:
            return 0.0
        return float(psis[ids.index(cube_id)] / denom)

    def grad_phi(self, cube_id: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        ids = self._local_cubes(x)
        d = self.domain.dim
        if not ids or cube_id not in ids:
            return np.zeros(d)
        psis = self._psi_all(x, ids)
        grads = np.empty((len(ids), d))
        for n, j in enumerate(ids):
            c = self.decomp.cubes[j]
            z = (x - c.center) / c.side
            grads[n] = bump_psi_grad(z.reshape(1, -1))[0] / c.side
        denom = psis.sum()
        k = ids.index(cube_id)
        return (grads[k] * denom - psis[k] * grads.sum(axis=0)) / denom ** 2

    def sum_small(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        ids = self._local_cubes(x)
        if not ids:
            return 0.0
        psis = self._psi_all(x, ids)
        denom = float(psis.sum())
        if denom <= 0.0:
            return 0.0
        num = sum(float(p) for p, j in zip(psis, ids) if j in self.small_set)
        return num / denom

    def weighted_sum(self, x, values: dict[int, float], flag_deficit: bool = False):
        """Evaluate sum over small cubes of phi_Q(x) * values[Q]."""
        x = np.asarray(x, dtype=float).reshape(-1)
        i = self.decomp.locate(x)
        flagged = False
        if i is None:
            i = self.decomp.nearest_cube(x)
            flagged = True
        ids = [i] + self.decomp.neighbors(i)
        psis = self._psi_all(x, ids)
        denom = float(psis.sum())
        if denom <= 0.0:
            return (0.0, flagged) if flag_deficit else 0.0
        acc = 0.0
        for p, j in zip(psis, ids):
            if p > 0.0 and j in self.small_set:
                acc += float(p) * values.get(j, 0.0)
        out = acc / denom
        return (out, flagged) if flag_deficit else out


def partition_of_unity(decomp: WhitneyDecomposition, domain: Domain) -> PartitionOfUnity:
    return PartitionOfUnity(decomp, domain)


# decomposition cache: probes reuse the same decompositions many times
_DECOMP_CACHE: dict = {}


def cached_decompose(domain: Domain, target: str, max_level: int,
                     r_max: float | None = None) -> WhitneyDecomposition:
    key = (domain, target, max_level, r_max)
    if key not in _DECOMP_CACHE:
        _DECOMP_CACHE[key] = decompose(domain, target, max_level, r_max)
    return _DECOMP_CACHE[key]
