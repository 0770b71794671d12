"""Quadrature on the reference simplex and composite rules in time.

Rules are returned in barycentric form: ``(bary, weights)`` with
``bary`` of shape ``(m, k+1)`` and ``weights`` summing to one, so the
physical rule on a simplex of volume V uses ``V * weights``.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import product
from math import factorial

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

SUPPORTED_ORDERS = (1, 2, 3, 5)


def _perms3(a, b, c):
    pts = {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}
    return sorted(pts)


@lru_cache(maxsize=None)
def _triangle_rule(q):
    if q == 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if q == 2:
        pts = _perms3(2 / 3, 1 / 6, 1 / 6)
        return np.array(pts), np.full(3, 1 / 3)
    if q == 3:
        # Strang-Fix six point rule, all weights positive
        a, b = 0.659027622374092, 0.231933368553031
        c = 1.0 - a - b
        pts = _perms3(a, b, c)
        return np.array(pts), np.full(6, 1 / 6)
    if q == 5:
        s15 = np.sqrt(15.0)
        a1 = (6 - s15) / 21
        a2 = (6 + s15) / 21
        w1 = (155 - s15) / 1200
        w2 = (155 + s15) / 1200
        pts = [(1 / 3, 1 / 3, 1 / 3)]
        wts = [9 / 40]
        for a, w in ((a1, w1), (a2, w2)):
            for p in _perms3(1 - 2 * a, a, a):
                pts.append(p)
                wts.append(w)
        return np.array(pts), np.array(wts)
    raise ValueError(q)


@lru_cache(maxsize=None)
def _conical_rule(k, q):
    """Stroud conical product rule on the k-simplex, exact to degree q."""
    m = q // 2 + 1
    nodes, weights = [], []
    for j in range(k):
        # weight (1-u)^(k-1-j) on [0,1]
        alpha = k - 1 - j
        x, w = roots_jacobi(m, alpha, 0.0)
        nodes.append((x + 1) / 2)
        weights.append(w / 2 ** (alpha + 1))
    bary, wts = [], []
    for idx in product(range(m), repeat=k):
        u = [nodes[j][i] for j, i in enumerate(idx)]
        w = np.prod([weights[j][i] for j, i in enumerate(idx)])
        # collapsed coordinates to barycentric
        lam, rest = [], 1.0
        for uj in u:
            lam.append(rest * uj)
            rest *= 1 - uj
        lam.append(rest)
        bary.append(lam)
        wts.append(w)
    wts = np.array(wts) * factorial(k)
    return np.array(bary), wts


def simplex_rule(k: int, q: int):
    """Barycentric nodes and normalized weights exact to degree ``q`` on a k-simplex."""
    if q not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported quadrature order {q}; choose from {SUPPORTED_ORDERS}")
    if k < 0:
        raise ValueError("negative simplex dimension")
    if k == 0:
        return np.ones((1, 1)), np.ones(1)
    if k == 1:
        x, w = roots_legendre(q // 2 + 1)
        s = (x + 1) / 2
        return np.stack([1 - s, s], axis=1), w / 2
    if k == 2:
        bary, w = _triangle_rule(q)
        return bary.copy(), w.copy()
    bary, w = _conical_rule(k, q)
    return bary.copy(), w.copy()


def dirichlet_moment(exps) -> float:
    """Average of prod lambda_i^a_i over the simplex (exact)."""
    exps = [int(a) for a in exps]
    k = len(exps) - 1
    num = factorial(k)
    for a in exps:
        num *= factorial(a)
    return num / factorial(k + sum(exps))


def composite_weights(grid, a: float, b: float, rule: str = "simpson"):
    """Time-quadrature weights on ``grid`` for integrands supported in ``[a, b]``.

    The grid must be uniform. Simpson needs an even number of intervals
    between the support ends, which must both be grid nodes up to 1e-6 of
    the step.
    """
    grid = np.asarray(grid, float)
    dt = np.diff(grid)
    if len(grid) < 3 or np.ptp(dt) > 1e-9 * dt.mean():
        raise ValueError("composite time rules need a uniform grid with at least 3 nodes")
    h = dt.mean()
    ia = int(round((a - grid[0]) / h))
    ib = int(round((b - grid[0]) / h))
    if ia < 0 or ib >= len(grid) or abs(grid[ia] - a) > 1e-6 * h or abs(grid[ib] - b) > 1e-6 * h:
        raise ValueError(f"time grid does not cover the test support [{a}, {b}] on its nodes")
    npts = ib - ia
    if npts < 8:
        raise ValueError(f"time grid too coarse: {npts} intervals across the test support (need >= 8)")
    w = np.zeros(len(grid))
    if rule == "trapezoid":
        w[ia:ib + 1] = h
        w[ia] = w[ib] = h / 2
    elif rule == "simpson":
        if npts % 2:
            raise ValueError("Simpson needs an even number of intervals across the support")
        w[ia:ib + 1:2] = 2 * h / 3
        w[ia + 1:ib:2] = 4 * h / 3
        w[ia] = w[ib] = h / 3
    else:
        raise ValueError(f"unknown time rule {rule!r}")
    return w
