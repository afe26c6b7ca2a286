"""Quadrature building blocks shared by the measure and norm engines.

The boundary-singular weights d_x^-s are handled by the exact substitution
u = t^(1-s) in the boundary-normal coordinate, which absorbs both the
singularity and the 1-s prefactor; no amount of dyadic grading alone
resolves the mass concentration once s is close to 1.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def gauss_legendre(q: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(q)
    return x, w


def gauss_panel(a: float, b: float, q: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(q)
    h = 0.5 * (b - a)
    return a + h * (x + 1.0), w * h


def panels_graded(a: float, b: float, toward_a: bool, n_geo: int,
                  ratio: float = 0.5) -> list[tuple[float, float]]:
    """Geometrically graded panels of [a, b] refined toward one endpoint."""
    L = b - a
    cuts = [L * ratio ** k for k in range(1, n_geo + 1)]
    edges = [0.0] + cuts[::-1] + [L]
    if toward_a:
        return [(a + lo, a + hi) for lo, hi in zip(edges[:-1], edges[1:])]
    return [(b - hi, b - lo) for lo, hi in zip(edges[:-1], edges[1:])][::-1]


def graded_nodes(a: float, b: float, toward_a: bool, n_geo: int, q: int):
    pts, ws = [], []
    for lo, hi in panels_graded(a, b, toward_a, n_geo):
        x, w = gauss_panel(lo, hi, q)
        pts.append(x)
        ws.append(w)
    return np.concatenate(pts), np.concatenate(ws)


def power_law_nodes(T: float, beta: float, n_panels: int = 20, q: int = 8):
    """Nodes/weights with sum f(t_i) w_i ~ integral_0^T f(t) t^beta dt.

    Valid for beta > -1 and f smooth up to t=0.  Uses u = t^(1+beta), under
    which the weight integrates exactly; graded Gauss panels in u absorb the
    algebraic non-smoothness of f(u^(1/(1+beta))).
    """
    if beta <= -1.0:
        raise ValueError("power-law exponent must be > -1")
    gamma = 1.0 + beta
    U = T ** gamma
    # grade toward u=0 for the power kink and toward u=U where t(u) is steep
    panels = panels_graded(0.0, 0.5 * U, toward_a=True, n_geo=n_panels) \
        + panels_graded(0.5 * U, U, toward_a=False, n_geo=n_panels)
    pts, ws = [], []
    for lo, hi in panels:
        u, w = gauss_panel(lo, hi, q)
        t = u ** (1.0 / gamma)
        pts.append(t)
        ws.append(w / gamma)
    return np.concatenate(pts), np.concatenate(ws)


def tail_inversion_nodes(T: float, decay: float, n_panels: int = 16, q: int = 8):
    """Nodes/weights with sum f(t_i) w_i ~ integral_T^inf f(t) dt.

    Accurate when f(t) ~ t^(-1-decay) * (smooth in 1/t) with decay > 0.
    """
    if decay <= 0:
        raise ValueError("tail decay exponent must be positive")
    beta = decay - 1.0
    tau, v = power_law_nodes(1.0 / T, beta, n_panels, q)
    t = 1.0 / tau
    w = v * tau ** (-2.0 - beta)
    return t, w


def tensor_gauss(lo: np.ndarray, hi: np.ndarray, q: int):
    """Tensor Gauss nodes/weights on the box [lo, hi] in d = 1 or 2."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    d = lo.size
    if d == 1:
        x, w = gauss_panel(lo[0], hi[0], q)
        return x.reshape(-1, 1), w
    x0, w0 = gauss_panel(lo[0], hi[0], q)
    x1, w1 = gauss_panel(lo[1], hi[1], q)
    X0, X1 = np.meshgrid(x0, x1, indexing="ij")
    W = np.outer(w0, w1)
    return np.stack([X0.ravel(), X1.ravel()], axis=-1), W.ravel()


def angular_nodes(n: int):
    theta = 2.0 * np.pi * (np.arange(n) + 0.5) / n
    return theta, np.full(n, 2.0 * np.pi / n)


def signed_power(t: np.ndarray, p: float) -> np.ndarray:
    """|t|^(p-2) t evaluated as sign(t)|t|^(p-1); 0 at t=0 for p < 2."""
    out = np.sign(t) * np.abs(t) ** (p - 1.0)
    if p < 2.0:
        out = np.where(t == 0.0, 0.0, out)
    return out
