"""Trace restriction, the collar-mean extension operator, and inequality probes.

The extension copies weighted exterior means into interior Whitney cubes:
for each small cube Q the data is averaged over the ball of radius
6*diam(Q) around its center against the boundary-concentrated collar
measure, and the averages are blended with the cube partition of unity.
By construction the operator is linear, reproduces constants near the
boundary, vanishes deep inside, and depends only on data in the 6*rho
exterior collar.

Probes evaluate inequality ratios over field ensembles and sweeps of s;
they report empirical constants and never certify theorems.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Sequence

import numpy as np

from .fields import ScalarField, battery, counterexample
from .geometry import Ball, Domain
from .measures import (CollarRegion, MeasureDensity, NodeBudget, QuadResult,
                       measure_nodes)
from .norms import (NormParams, lp_mu_norm, lp_norm, tsp_form, tsp_norm,
                    vsp_form, vsp_norm, wsp_norm)
from .whitney import PartitionOfUnity, bump_psi, cached_decompose


def trace(u, domain: Domain) -> ScalarField:
    """Restriction to the complement; evaluation simply delegates."""
    u = u if isinstance(u, ScalarField) else ScalarField(u)
    return ScalarField(u.evaluator, name=f"tr({u.name})",
                       support_radius=u.support_radius, lipschitz=u.lipschitz)


class ExtensionOperator:
    """Whitney collar-mean extension for fixed domain and order s.

    The construction involves only s through the collar measure; it is
    independent of the integrability exponent p.  Instances cache the
    exterior node set and per-cube ball memberships, so extending many
    data fields for the same (domain, s) is cheap.
    """

    def __init__(self, domain: Domain, s: float, level: int | None = None,
                 budget: NodeBudget | None = None):
        self.domain = domain
        self.s = s
        if level is None:
            level = 30 if domain.dim == 1 else 7
        self.decomp = cached_decompose(domain, "interior", level)
        self.pou = PartitionOfUnity(self.decomp, domain)
        self.rho = self.pou.rho
        self.kappa = self.pou.kappa
        if budget is None:
            budget = NodeBudget(panels=26, q=8) if domain.dim == 1 \
                else NodeBudget(panels=16, q=6, n_ang=512)
        m = MeasureDensity("mutilde", s, domain)
        self.nodes = measure_nodes(m, CollarRegion(6.0 * self.rho), budget)
        self._build_ball_index()
        self._build_level_tables()

    def _build_ball_index(self) -> None:
        pts = self.nodes.points
        order = np.argsort(pts[:, 0], kind="stable")
        xs_sorted = pts[order, 0]
        self.ball_idx: dict[int, np.ndarray] = {}
        self.ball_w: dict[int, np.ndarray] = {}
        self.weight_table: dict[int, float] = {}
        for i in self.pou.small_ids:
            c = self.decomp.cubes[i]
            r = 6.0 * c.diam
            lo = np.searchsorted(xs_sorted, c.center[0] - r)
            hi = np.searchsorted(xs_sorted, c.center[0] + r)
            window = order[lo:hi]
            if window.size == 0:
                continue
            d = np.linalg.norm(pts[window] - c.center, axis=-1)
            idx = window[d < r]
            if idx.size == 0:
                continue
            w = self.nodes.weights[idx]
            tot = float(w.sum())
            if tot <= 0.0:
                continue
            self.ball_idx[i] = idx
            self.ball_w[i] = w
            self.weight_table[i] = 1.0 / tot  # discrete inverse collar mass

    def _build_level_tables(self) -> None:
        """Sorted integer key tables per level for vectorized cube lookup."""
        self._levels = sorted({c.level for c in self.decomp.cubes})
        self._tables = {}
        B = np.int64(1) << np.int64(30)
        for k in self._levels:
            ids = [i for i, c in enumerate(self.decomp.cubes) if c.level == k]
            if self.domain.dim == 1:
                keys = np.array([self.decomp.cubes[i].index[0] for i in ids],
                                dtype=np.int64)
            else:
                keys = np.array([self.decomp.cubes[i].index[0] * B
                                 + self.decomp.cubes[i].index[1] for i in ids],
                                dtype=np.int64)
            order = np.argsort(keys)
            self._tables[k] = (keys[order], np.asarray(ids)[order])

    def _psi_sums(self, pts: np.ndarray, values: np.ndarray):
        """Vectorized sum of psi_Q(x) and psi_Q(x) * values[Q] over all cubes."""
        n, d = pts.shape
        denom = np.zeros(n)
        numer = np.zeros(n)
        B = np.int64(1) << np.int64(30)
        offsets = [(-1, 0, 1)] if d == 1 else \
            [(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)]
        for k in self._levels:
            keys_sorted, ids_sorted = self._tables[k]
            h = 2.0 ** (-k)
            base = np.floor(pts / h).astype(np.int64)
            offs = [(o,) for o in (-1, 0, 1)] if d == 1 else offsets
            for off in offs:
                idx = base + np.asarray(off, dtype=np.int64)
                if d == 1:
                    q = idx[:, 0]
                else:
                    q = idx[:, 0] * B + idx[:, 1]
                pos = np.searchsorted(keys_sorted, q)
                pos_c = np.minimum(pos, len(keys_sorted) - 1)
                hit = (len(keys_sorted) > 0) & (keys_sorted[pos_c] == q)
                if not np.any(hit):
                    continue
                cube_ids = ids_sorted[pos_c[hit]]
                centers = (idx[hit].astype(float) + 0.5) * h
                z = (pts[hit] - centers) / h
                psi = bump_psi(z)
                nz = psi > 0.0
                if not np.any(nz):
                    continue
                rows = np.nonzero(hit)[0][nz]
                denom[rows] += psi[nz]
                numer[rows] += psi[nz] * values[cube_ids[nz]]
        return numer, denom

    def extend(self, g) -> ScalarField:
        g = g if isinstance(g, ScalarField) else ScalarField(g)
        gv = g(self.nodes.points)
        means = np.zeros(len(self.decomp.cubes))
        for i, idx in self.ball_idx.items():
            w = self.ball_w[i]
            means[i] = float(np.dot(gv[idx], w)) / float(w.sum())
        op = self

        def ev(pts: np.ndarray) -> np.ndarray:
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            sd = np.asarray(op.domain.signed_distance(pts)).reshape(-1)
            out = np.empty(pts.shape[0])
            outside = sd >= 0
            if np.any(outside):
                out[outside] = g(pts[outside])
            inside = ~outside
            if np.any(inside):
                numer, denom = op._psi_sums(pts[inside], means)
                vals = np.where(denom > 0, numer / np.where(denom == 0, 1.0, denom), 0.0)
                # coverage-deficit fallback: nearest resolved cube mean
                missing = denom <= 0.0
                if np.any(missing):
                    sub = pts[inside][missing]
                    fall = np.empty(len(sub))
                    for j, x in enumerate(sub):
                        fall[j] = means[op.decomp.nearest_cube(x)]
                    vals[missing] = fall
                out[inside] = vals
            return out

        name = f"ext[s={self.s}]({g.name})"
        sr = None
        if g.support_radius is not None:
            sr = max(g.support_radius, self.domain.diameter + 6.0 * self.rho)
        ext = ScalarField(ev, name=name, support_radius=sr)
        object.__setattr__(ext, "cube_means", means)
        object.__setattr__(ext, "operator", self)
        return ext


_OPERATOR_CACHE: dict = {}


def extension_operator(domain: Domain, s: float, level: int | None = None) \
        -> ExtensionOperator:
    key = (domain, s, level)
    if key not in _OPERATOR_CACHE:
        _OPERATOR_CACHE[key] = ExtensionOperator(domain, s, level)
    return _OPERATOR_CACHE[key]


def extend(g, domain: Domain, s: float, level: int | None = None) -> ScalarField:
    return extension_operator(domain, s, level).extend(g)


# ---------------------------------------------------------------------------
# probe reports


@dataclass
class ProbeSample:
    id: str
    s: float
    p: float
    lhs: float
    rhs: float
    ratio: Optional[float]
    flags: tuple[str, ...] = ()


@dataclass
class ProbeReport:
    probe: str
    params: dict
    samples: list[ProbeSample]
    verdict: bool
    max_ratio: float
    min_ratio: float
    runtime_s: float
    notes: str = ""

    @property
    def spread(self) -> float:
        if self.min_ratio <= 0 or not math.isfinite(self.max_ratio):
            return math.inf
        return self.max_ratio / self.min_ratio

    def ratios(self) -> list[float]:
        return [s.ratio for s in self.samples if s.ratio is not None]

    def to_json(self) -> str:
        payload = {
            "probe": self.probe,
            "params": self.params,
            "samples": [asdict(s) for s in self.samples],
            "verdict": bool(self.verdict),
            "max_ratio": self.max_ratio,
            "min_ratio": self.min_ratio,
            "spread": self.spread if math.isfinite(self.spread) else None,
            "runtime_s": self.runtime_s,
            "notes": self.notes,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _finish(probe: str, params: dict, samples: list[ProbeSample],
            threshold: float, t0: float, notes: str = "") -> ProbeReport:
    ratios = [s.ratio for s in samples if s.ratio is not None
              and "skipped" not in s.flags and "non-convergent" not in s.flags]
    if ratios:
        mx, mn = max(ratios), min(ratios)
        verdict = mn > 0 and mx / mn < threshold and math.isfinite(mx)
    else:
        mx = mn = float("nan")
        verdict = False
    return ProbeReport(probe, params, samples, verdict, mx, mn,
                       time.time() - t0, notes)


def _norm_params(s: float, p: float, domain: Domain, robust: bool,
                 fast: bool) -> NormParams:
    kw = dict(s=s, p=p, robust_factor=robust)
    if fast:
        kw.update(n_geo=16, q=5, level_1d=24, with_error=False)
    return NormParams(**kw)


def probe_trace_continuity(fields: Sequence[ScalarField], domain: Domain,
                           s_grid: Sequence[float], p: float,
                           threshold: float = 10.0, robust: bool = True,
                           fast: bool = True) -> ProbeReport:
    """Ratios of the exterior trace norm against the energy norm.

    For p = 1 only the weighted L^p part enters the numerator (the seminorm
    bound genuinely fails there); for p > 1 the full trace norm is used.
    """
    t0 = time.time()
    samples = []
    for s in s_grid:
        params = _norm_params(s, p, domain, robust, fast)
        for f in fields:
            fam = f(domain, s) if callable(f) and not isinstance(f, ScalarField) else f
            rhs = vsp_norm(fam, domain, params)
            flags = list(rhs.flags)
            if rhs.value <= 1e-12:
                samples.append(ProbeSample(fam.name, s, p, 0.0, rhs.value, None,
                                           ("skipped",)))
                continue
            if p > 1.0:
                lhs = tsp_norm(trace(fam, domain), domain, params)
            else:
                lhs = lp_mu_norm(trace(fam, domain), domain, params)
            flags += list(lhs.flags)
            if "refinement-stall" in flags:
                flags.append("non-convergent")
            samples.append(ProbeSample(fam.name, s, p, lhs.value, rhs.value,
                                       lhs.value / rhs.value,
                                       tuple(sorted(set(flags)))))
    return _finish("trace-continuity", {"s_grid": list(s_grid), "p": p,
                                        "robust": robust}, samples, threshold, t0)


def probe_extension_continuity(fields: Sequence[ScalarField], domain: Domain,
                               s_grid: Sequence[float], p: float,
                               threshold: float = 10.0, robust: bool = True,
                               fast: bool = True) -> ProbeReport:
    """Ratios of the extended-field energy norm against the trace norm."""
    t0 = time.time()
    samples = []
    for s in s_grid:
        params = _norm_params(s, p, domain, robust, fast)
        op = extension_operator(domain, s)
        for f in fields:
            fam = f(domain, s) if callable(f) and not isinstance(f, ScalarField) else f
            rhs = tsp_norm(fam, domain, params)
            if rhs.value <= 1e-12:
                samples.append(ProbeSample(fam.name, s, p, 0.0, rhs.value, None,
                                           ("skipped",)))
                continue
            eg = op.extend(fam)
            lhs = vsp_norm(eg, domain, params)
            flags = list(lhs.flags) + list(rhs.flags)
            if "refinement-stall" in flags:
                flags.append("non-convergent")
            samples.append(ProbeSample(fam.name, s, p, lhs.value, rhs.value,
                                       lhs.value / rhs.value,
                                       tuple(sorted(set(flags)))))
    return _finish("extension-continuity", {"s_grid": list(s_grid), "p": p,
                                            "robust": robust}, samples,
                   threshold, t0)


def check_approximate_trace(u: ScalarField, domain: Domain, s: float, p: float,
                            fast: bool = True) -> ProbeSample:
    """Interior collar-norm against the classical fractional norm.

    The left side integrates against the interior collar measure, both the
    weighted L^p mass and the regularized difference form; bounded ratios
    are expected for p > 1 only.
    """
    params = _norm_params(s, p, domain, True, fast)
    lp_tau = lp_mu_norm(u, domain, params, measure_kind="tau")
    form = tsp_form(u, u, domain, params, measure_kind="tau")
    lhs = lp_tau.value ** p + max(form.value, 0.0)
    rhs = wsp_norm(u, domain, params).value ** p
    ratio = lhs / rhs if rhs > 1e-300 else None
    return ProbeSample(u.name, s, p, lhs, rhs, ratio,
                       tuple(sorted(set(form.flags))))


def check_hardy_domain(u: ScalarField, domain: Domain, s: float,
                       fast: bool = True) -> ProbeSample:
    """Distance-weighted interior mass against L^1 plus the s-weighted energy."""
    params = _norm_params(s, 1.0, domain, True, fast)
    lhs = lp_mu_norm(u, domain, params, measure_kind="tau").value  # p = 1
    l1 = lp_norm(u, domain, params).value
    semi = vsp_form(u, "interior", "interior", domain, params).value
    rhs = l1 + s * semi
    ratio = lhs / rhs if rhs > 1e-300 else None
    return ProbeSample(u.name, s, 1.0, lhs, rhs, ratio)


def probe_approximate_trace(fields, domain: Domain, s_grid, p: float,
                            threshold: float = 10.0, fast: bool = True) -> ProbeReport:
    t0 = time.time()
    samples = []
    for s in s_grid:
        for f in fields:
            fam = f(domain, s) if callable(f) and not isinstance(f, ScalarField) else f
            smp = check_approximate_trace(fam, domain, s, p, fast)
            if smp.rhs <= 1e-12:
                smp = ProbeSample(smp.id, s, p, smp.lhs, smp.rhs, None, ("skipped",))
            samples.append(smp)
    return _finish("approximate-trace", {"s_grid": list(s_grid), "p": p},
                   samples, threshold, t0)


def probe_hardy_domain(fields, domain: Domain, s_grid,
                       threshold: float = 10.0, fast: bool = True) -> ProbeReport:
    t0 = time.time()
    samples = []
    for s in s_grid:
        for f in fields:
            fam = f(domain, s) if callable(f) and not isinstance(f, ScalarField) else f
            smp = check_hardy_domain(fam, domain, s, fast)
            if smp.rhs <= 1e-12:
                smp = ProbeSample(smp.id, s, 1.0, smp.lhs, smp.rhs, None, ("skipped",))
            samples.append(smp)
    return _finish("hardy-domain", {"s_grid": list(s_grid), "p": 1.0},
                   samples, threshold, t0)


def probe_poincare(fields, domain: Domain, s_grid, p: float,
                   threshold: float = 10.0, fast: bool = True) -> ProbeReport:
    """L^p to energy-norm ratios for fields vanishing off the domain."""
    t0 = time.time()
    rng = np.random.default_rng(7)
    lo, hi = domain.bounding_box()
    span = np.atleast_1d(hi) - np.atleast_1d(lo)
    probe_pts = np.atleast_1d(lo) - span + rng.random((256, domain.dim)) * 3 * span
    outside = np.asarray(domain.signed_distance(probe_pts)).reshape(-1) > 0
    samples = []
    for s in s_grid:
        params = _norm_params(s, p, domain, True, fast)
        for f in fields:
            fam = f(domain, s) if callable(f) and not isinstance(f, ScalarField) else f
            vals_out = fam(probe_pts[outside])
            if np.any(np.abs(vals_out) > 1e-12):
                raise ValueError(f"{fam.name} does not vanish outside the domain")
            rhs = vsp_norm(fam, domain, params)
            if rhs.value <= 1e-12:
                samples.append(ProbeSample(fam.name, s, p, 0.0, rhs.value, None,
                                           ("skipped",)))
                continue
            lhs = lp_norm(fam, domain, params)
            samples.append(ProbeSample(fam.name, s, p, lhs.value, rhs.value,
                                       lhs.value / rhs.value))
    return _finish("poincare", {"s_grid": list(s_grid), "p": p},
                   samples, threshold, t0)


def counterexample_family(n: int, domain: Domain, s: float) -> ScalarField:
    return counterexample(n, domain, s)


def counterexample_report(domain: Domain, s: float, n_grid: Sequence[int],
                          ratio_tolerance: float = 0.2) -> ProbeReport:
    """Growth of the p = 1 trace seminorm along the thin-collar family.

    Per n the report records the diagonal trace form (p = 1), its ratio to
    log n, and the energy norm and weighted exterior mass as auxiliary
    columns; the verdict asserts the log-normalized ratio is stable while
    the auxiliary norms stay bounded.
    """
    t0 = time.time()
    params = NormParams(s=s, p=1.0, level_1d=int(math.log2(max(n_grid))) + 14,
                        n_geo=26, with_error=False)
    samples = []
    aux = []
    for n in n_grid:
        un = counterexample(n, domain, s)
        form = tsp_form(un, un, domain, params)
        vnorm = vsp_norm(un, domain, params)
        l1mu = lp_mu_norm(un, domain, params)
        ratio = form.value / math.log(n)
        samples.append(ProbeSample(f"n={n}", s, 1.0, form.value, math.log(n),
                                   ratio))
        aux.append({"n": n, "tsp_form": form.value, "log_n": math.log(n),
                    "ratio": ratio, "v_norm": vnorm.value,
                    "l1_mu": l1mu.value})
    ratios = [a["ratio"] for a in aux]
    vb = [a["v_norm"] for a in aux]
    lb = [a["l1_mu"] for a in aux]
    stable = max(ratios) / min(ratios) < 1.0 + ratio_tolerance
    bounded = max(vb) / min(vb) < 1.3 and max(lb) / min(lb) < 1.3
    rep = _finish("counterexample-growth", {"s": s, "n_grid": list(n_grid),
                                            "columns": aux},
                  samples, math.inf, t0,
                  notes="ratio = trace form / log n")
    rep.verdict = bool(stable and bounded)
    return rep


@dataclass
class ClassicalLimitRow:
    s: float
    lp_mu: float
    tsp_semi: float
    target_lp: float
    target_semi: float
    err_lp: float
    err_semi: float


def classical_limit_report(u: ScalarField, domain: Domain,
                           s_grid: Sequence[float], p: float,
                           n_boundary: int = 512,
                           fast: bool = True) -> list[ClassicalLimitRow]:
    """Sweep of trace norms against their boundary-norm limits.

    The boundary targets are the classical L^p norm and the fractional
    boundary seminorm of order 1 - 1/p (the flat-difference seminorm for
    p = 1).
    """
    from .norms import boundary_lp, boundary_seminorm, tsp_seminorm
    kind = "besov" if p == 1.0 else "sobolev"
    tgt_lp = boundary_lp(u, domain, p, n_boundary).value
    tgt_semi = boundary_seminorm(u, domain, p, kind, n_boundary).value
    rows = []
    for s in sorted(s_grid):
        params = _norm_params(s, p, domain, True, fast)
        lpv = lp_mu_norm(u, domain, params).value
        semiv = tsp_seminorm(u, domain, params).value
        rows.append(ClassicalLimitRow(s, lpv, semiv, tgt_lp, tgt_semi,
                                      abs(lpv - tgt_lp), abs(semiv - tgt_semi)))
    return rows
