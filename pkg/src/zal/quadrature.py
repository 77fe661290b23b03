"""Gauss-Kronrod panels, used both as a fixed composite rule and adaptively.

Integrands are vectorised: ``f(x)`` receives a 1-D array of abscissas and
returns an array of the same length, so each adaptive sweep costs one call.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from zal.errors import QuadratureFailure

# 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1]
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

X15 = np.concatenate([-_XK[:-1], _XK[::-1]])
W15 = np.concatenate([_WK[:-1], _WK[::-1]])
# Gauss weights laid out on the 15 Kronrod nodes (zeros on Kronrod-only nodes)
W7 = np.zeros(15)
W7[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


@lru_cache(maxsize=32)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gk_panels(breaks) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes and Kronrod/Gauss weights for GK15 on each ``[breaks[i], breaks[i+1]]``.

    Returns ``(x, wk, wg)`` each of shape ``(P, 15)``.
    """
    b = np.asarray(breaks, dtype=float)
    return _nodes(b[:-1], b[1:])


def adaptive_gk(f, breaks, abs_tol: float, rel_tol: float = 0.0, max_panels: int = 200_000,
                min_width: float = 1e-13):
    """Globally adaptive GK15 over consecutive intervals of ``breaks``.

    A panel is accepted once ``|K15 - G7| <= tol * width / total_width``;
    returns ``(integral, error_estimate, n_evals)``. Complex integrands are fine.
    """
    b = np.asarray(breaks, dtype=float)
    if b.size < 2:
        return 0.0, 0.0, 0
    total_width = float(b[-1] - b[0])
    if total_width == 0:
        return 0.0, 0.0, 0
    lo, hi = b[:-1], b[1:]
    value, error, evals = 0.0, 0.0, 0
    while lo.size:
        x, wk, wg = _nodes(lo, hi)
        fx = np.asarray(f(x.ravel())).reshape(x.shape)
        evals += fx.size
        if not np.all(np.isfinite(fx)):
            raise QuadratureFailure("non-finite integrand value")
        k = (wk * fx).sum(axis=1)
        g = (wg * fx).sum(axis=1)
        e = np.abs(k - g)
        tol = max(abs_tol, rel_tol * abs(value + k.sum()))
        width = hi - lo
        ok = (e <= tol * width / total_width) | (width < min_width)
        value += k[ok].sum()
        error += float(e[ok].sum())
        lo, hi = lo[~ok], hi[~ok]
        if lo.size:
            mid = 0.5 * (lo + hi)
            lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
            order = np.argsort(lo, kind="stable")
            lo, hi = lo[order], hi[order]
        if lo.size > max_panels:
            raise QuadratureFailure(f"adaptive quadrature needs more than {max_panels} panels")
    return value.item() if hasattr(value, "item") else value, error, evals


def _nodes(lo, hi):
    half = 0.5 * (hi - lo)[:, None]
    x = 0.5 * (hi + lo)[:, None] + half * X15
    return x, half * W15, half * W7
