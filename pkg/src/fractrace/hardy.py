"""Optimal half-space Hardy constant and numerical Hardy-inequality checks.

The constant is a Gamma-ratio prefactor times the one-dimensional integral

    I(s, p) = integral_0^1 |1 - t^((ps-1)/p)|^p (1 - t)^(-1-ps) dt,

whose integrand is singular at t=1 (always) and at t=0 (when ps < 1).
Both endpoints are removed by explicit substitutions before adaptive
quadrature; a tanh-sinh evaluation provides an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import gammaln

from ._quadrature import graded_nodes, power_law_nodes
from .fields import ScalarField


@dataclass(frozen=True)
class HardyParams:
    d: int
    s: float
    p: float

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError("s must lie in (0,1)")
        if self.p < 1.0:
            raise ValueError("p must be >= 1")
        if abs(self.p * self.s - 1.0) < 1e-12:
            raise ValueError("p*s = 1 is excluded")
        if self.d < 1:
            raise ValueError("d must be >= 1")


def _one_minus_tpow(t: np.ndarray, alpha: float) -> np.ndarray:
    """1 - t^alpha evaluated stably near t = 1 via expm1/log."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    near = t > 0.5
    out[near] = -np.expm1(alpha * np.log(t[near]))
    out[~near] = 1.0 - t[~near] ** alpha
    return out


def _diff_quotient_at_one(omt: np.ndarray, alpha: float) -> np.ndarray:
    """(1 - (1-omt)^alpha) / omt, stable down to underflowing omt."""
    omt = np.asarray(omt, dtype=float)
    out = np.full_like(omt, -alpha)  # the omt -> 0 limit
    ok = omt > 1e-250
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = -np.expm1(alpha * np.log1p(-omt[ok])) / omt[ok]
    out[ok] = vals
    return out


def _integrand(t: np.ndarray, s: float, p: float) -> np.ndarray:
    alpha = (p * s - 1.0) / p
    return np.abs(_one_minus_tpow(t, alpha)) ** p * (1.0 - t) ** (-1.0 - p * s)


def hardy_integral(s: float, p: float, rtol: float = 1e-10) -> tuple[float, float]:
    """The endpoint-singular integral with both singularities substituted out.

    Right half: 1-t = tau^(1/(p(1-s))) turns the (1-t)-singularity into a
    bounded integrand.  Left half: when ps < 1 the integrand behaves like
    t^(ps-1), removed by t = tau^(1/(ps)).
    """
    ps = p * s
    alpha = (ps - 1.0) / p

    # right part over t in [1/2, 1]: substitute 1-t = tau^m, m = 1/(p(1-s));
    # the power of tau collapses exactly (m*p*(1-s) = 1), leaving the bounded
    # difference quotient (1-t^alpha)/(1-t)
    m = 1.0 / (p * (1.0 - s))

    def right_plain(tau):
        tau = np.asarray(tau, dtype=float)
        omt = tau ** m  # 1 - t, may underflow for tiny tau
        ratio = _diff_quotient_at_one(omt, alpha)
        return m * np.abs(ratio) ** p

    v_right, e_right = sp_integrate.quad(right_plain, 0.0, 0.5 ** (1.0 / m),
                                         epsrel=rtol, limit=200)

    # left part over t in [0, 1/2]
    if ps > 1.0:
        v_left, e_left = sp_integrate.quad(
            lambda t: float(_integrand(np.array([t]), s, p)[0]),
            0.0, 0.5, epsrel=rtol, limit=200)
    else:
        # integrand ~ t^(ps-1): substitute t = tau^(1/ps)
        k = 1.0 / ps

        def left(tau):
            tau = np.asarray(tau, dtype=float)
            t = tau ** k
            body = np.abs(_one_minus_tpow(t, alpha) * t ** (-alpha)) ** p \
                * (1.0 - t) ** (-1.0 - ps)
            return k * body

        v_left, e_left = sp_integrate.quad(left, 0.0, 0.5 ** ps,
                                           epsrel=rtol, limit=200)
    return v_left + v_right, e_left + e_right


def hardy_integral_graded(s: float, p: float, n_geo: int = 40, q: int = 12) -> float:
    """Independent evaluation on graded Gauss panels toward both endpoints."""
    t1, w1 = power_law_nodes(0.5, p * s - 1.0, n_geo, q) if p * s < 1.0 \
        else graded_nodes(0.0, 0.5, True, n_geo, q)
    if p * s < 1.0:
        alpha = (p * s - 1.0) / p
        body1 = np.abs(_one_minus_tpow(t1, alpha) * t1 ** (-alpha)) ** p \
            * (1.0 - t1) ** (-1.0 - p * s)
    else:
        body1 = _integrand(t1, s, p)
    left = float(np.dot(body1, w1))

    m = 1.0 / (p * (1.0 - s))
    tau, wt = graded_nodes(0.0, 0.5 ** (1.0 / m), True, n_geo, q)
    omt = tau ** m
    alpha = (p * s - 1.0) / p
    body2 = m * np.abs(_diff_quotient_at_one(omt, alpha)) ** p
    right = float(np.dot(body2, wt))
    return left + right


def hardy_integral_tanhsinh(s: float, p: float) -> float:
    """Second independent scheme: tanh-sinh quadrature in high precision.

    Runs on the endpoint-substituted integrands (regular at both ends), so
    the rule itself is the only thing shared with nothing: node placement,
    arithmetic precision and error control all differ from the Gauss path.
    """
    import mpmath as mp
    with mp.workdps(40):
        ps = mp.mpf(p) * mp.mpf(s)
        alpha = (ps - 1) / p

        m = 1 / (p * (1 - mp.mpf(s)))

        def right(tau):
            omt = tau ** m
            if omt == 0:
                return m * abs(alpha) ** p
            ratio = -mp.expm1(alpha * mp.log1p(-omt)) / omt
            return m * abs(ratio) ** p

        v_right = mp.quad(right, [0, mp.mpf("0.5") ** (1 / m)])

        if ps > 1:
            def left(t):
                return abs(1 - t ** alpha) ** p * (1 - t) ** (-1 - ps)
            v_left = mp.quad(left, [0, mp.mpf("0.5")])
        else:
            k = 1 / ps

            def left(tau):
                t = tau ** k
                body = abs((1 - t ** alpha) * t ** (-alpha)) ** p \
                    * (1 - t) ** (-1 - ps)
                return k * body

            v_left = mp.quad(left, [0, mp.mpf("0.5") ** ps])
        return float(v_left + v_right)


def hardy_constant(params: HardyParams, rtol: float = 1e-10,
                   scheme: str = "adaptive") -> tuple[float, float]:
    """Optimal constant with estimated relative error.

    The prefactor 2 pi^((d-1)/2) Gamma((1+sp)/2) / Gamma((d+sp)/2) is
    evaluated through log-Gamma; for d = 1, p = 1 it reduces to exactly 2.
    """
    d, s, p = params.d, params.s, params.p
    sp_ = s * p
    log_pref = math.log(2.0) + 0.5 * (d - 1) * math.log(math.pi) \
        + gammaln((1.0 + sp_) / 2.0) - gammaln((d + sp_) / 2.0)
    pref = math.exp(log_pref)
    if scheme == "adaptive":
        integral, err = hardy_integral(s, p, rtol)
    elif scheme == "graded":
        integral, err = hardy_integral_graded(s, p), 0.0
    elif scheme == "tanh-sinh":
        integral, err = hardy_integral_tanhsinh(s, p), 0.0
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    value = pref * integral
    rel = err / integral if integral > 0 else 0.0
    return value, rel


def bracket_d1(s: float) -> tuple[float, float]:
    """Two-sided bound on s * (constant) for d = 1, p = 1.

    Composed from elementary bounds of the two integral halves:
    lower (1-s)/(4s) + 1/2 and upper 4/s + 2, times the prefactor 2 and s.
    """
    lo = 2.0 * ((1.0 - s) / 4.0 + s / 2.0)
    hi = 2.0 * (4.0 + 2.0 * s)
    return lo, hi


@dataclass
class BracketRow:
    s: float
    constant: float
    s_times_constant: float
    bracket_lo: float
    bracket_hi: float
    in_bracket: bool


def hardy_bracket_check(s_grid: Sequence[float], d: int = 1) -> list[BracketRow]:
    """Sweep of s * constant at p = 1 against the proof bracket (exact for d=1)."""
    rows = []
    for s in s_grid:
        c, _ = hardy_constant(HardyParams(d, s, 1.0))
        lo, hi = bracket_d1(s)
        ok = (lo <= s * c <= hi) if d == 1 else True
        rows.append(BracketRow(s, c, s * c, lo, hi, ok))
    return rows


# ---------------------------------------------------------------------------
# direct numerical test of the half-space inequality


def halfspace_hardy_test(u: ScalarField, params: HardyParams,
                         budget: int = 24) -> dict:
    """Evaluate both sides of the half-space inequality for d = 1 or 2.

    u must be supported in the open half-space {x_d > 0}.  Returns the two
    sides, their ratio, a quadrature error estimate and the verdict that no
    violation exceeds the combined error.  For d = 1, p = 1 the inequality
    is only guaranteed for monotone profiles; a warning flag is attached
    when the sampled profile is not non-increasing.
    """
    d, s, p = params.d, params.s, params.p
    if u.support_radius is None:
        raise ValueError("test field must be compactly supported")
    R = u.support_radius

    def run(n_geo: int, q: int):
        td, wd = graded_nodes(0.0, R, True, n_geo, q)  # singular axis
        if d == 1:
            pts = td.reshape(-1, 1)
            wts = wd
        else:
            tx, wx = graded_nodes(-R, R, True, max(6, n_geo // 2), q)
            X, D = np.meshgrid(tx, td, indexing="ij")
            pts = np.stack([X.ravel(), D.ravel()], axis=-1)
            wts = np.outer(wx, wd).ravel()
        uv = u(pts)
        lhs = float(np.dot(np.abs(uv) ** p * pts[:, -1] ** (-s * p), wts))

        # double integral over the half-space, singularity-centered offsets
        t_pow, w_pow = power_law_nodes(1.0, p - 1.0 - s * p, n_geo, q)
        if d == 1:
            dirs = np.array([[1.0], [-1.0]])
            w_ang = 1.0
        else:
            n_ang = 4 * q
            th = 2.0 * np.pi * (np.arange(n_ang) + 0.5) / n_ang
            dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
            w_ang = 2.0 * np.pi / n_ang
        rhs = 0.0
        for i in range(pts.shape[0]):
            x = pts[i]
            L = 2.0 * R + float(np.linalg.norm(x))
            r = L * t_pow
            wr = L ** (p * (1.0 - s)) * w_pow
            y = x[None, None, :] + r[:, None, None] * dirs[None, :, :]
            yf = y.reshape(-1, len(x))
            inside = yf[:, -1] > 0
            du = np.abs(np.where(inside, u(yf), 0.0) - uv[i]).reshape(len(r), -1)
            with np.errstate(invalid="ignore", divide="ignore"):
                ratio = du / r[:, None]
            ratio[~np.isfinite(ratio)] = 0.0
            rhs += wts[i] * w_ang * float(np.dot(wr, (ratio ** p).sum(axis=1)))
        return lhs, rhs

    lhs, rhs = run(budget, 8)
    lhs_c, rhs_c = run(max(10, budget // 2), 6)
    err = abs(lhs - lhs_c) + abs(rhs - rhs_c)
    const, _ = hardy_constant(params)
    flags = []
    if d == 1 and p == 1.0:
        t = np.linspace(1e-3, R, 200).reshape(-1, 1)
        vals = u(t)
        if np.any(np.diff(vals) > 1e-10) and np.any(np.diff(vals) < -1e-10):
            flags.append("non-monotone-profile-p1-d1")
    holds = const * lhs <= rhs + err * (1.0 + const)
    return {
        "lhs_weighted_mass": lhs,
        "rhs_energy": rhs,
        "constant": const,
        "product": const * lhs,
        "slack": rhs - const * lhs,
        "error": err,
        "holds": bool(holds),
        "flags": flags,
    }
