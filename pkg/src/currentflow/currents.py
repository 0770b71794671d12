"""Polyhedral and atomic currents.

Polyhedral currents carry exact simplicial boundaries. Atomic (discrete)
currents are lists of ``(x_i, tau_i)`` with ``tau_i`` a k-vector, the
quadrature realization of ``T = tau mu`` on which pairing, mass, wedge and
pushforward act.
"""

from __future__ import annotations

import math
from itertools import permutations
from math import factorial

import numpy as np

from .exterior import KVector, compound, mass_norm, multi_indices, simple_coeffs, wedge_coeffs
from .flow import VectorField, flow_batch
from .quadrature import simplex_rule

__all__ = [
    "PolyhedralCurrent",
    "DiscreteCurrent",
    "boundary",
    "discretize",
    "pair_current",
    "mass",
    "wedge_field",
    "push_atoms",
    "pushforward_flow",
    "product_interval",
    "subdivide",
    "polyline",
    "segment",
    "circle_polyline",
    "MERGE_ATOL",
]

MERGE_ATOL = 1e-14


def _perm_parity(order):
    order = list(order)
    sign = 1
    for i in range(len(order)):
        while order[i] != i:
            j = order[i]
            order[i], order[j] = order[j], order[i]
            sign = -sign
    return sign


def _edges(V):
    return V[:, 1:] - V[:, :1]


class PolyhedralCurrent:
    """Weighted oriented k-simplices in R^n.

    Parameters
    ----------
    vertices : array (S, k+1, n)
        Vertex order gives the orientation.
    weights : array (S,)
    integral : bool, optional
        Defaults to "all weights are integers".
    """

    def __init__(self, n: int, k: int, vertices, weights=None, integral: bool | None = None,
                 allow_degenerate: bool = False):
        V = np.asarray(vertices, float).reshape(-1, k + 1, n) if np.size(vertices) else np.zeros((0, k + 1, n))
        if not 0 <= k <= n:
            raise ValueError(f"simplex dimension {k} out of range for R^{n}")
        w = np.ones(len(V)) if weights is None else np.asarray(weights, float).reshape(-1)
        if len(w) != len(V):
            raise ValueError("one weight per simplex")
        if not np.all(np.isfinite(V)) or not np.all(np.isfinite(w)):
            raise ValueError("non-finite vertex or weight")
        self.n, self.k = n, k
        self.vertices, self.weights = V, w
        self.vertices.setflags(write=False)
        self.weights.setflags(write=False)
        if not allow_degenerate and k > 0 and len(V):
            if np.any(self.volumes() <= 0):
                raise ValueError("degenerate simplex (zero k-volume)")
        self.integral = bool(np.all(w == np.round(w))) if integral is None else bool(integral)

    def __len__(self):
        return len(self.weights)

    def volumes(self) -> np.ndarray:
        """Unsigned k-volumes of the simplices."""
        if self.k == 0:
            return np.ones(len(self))
        E = _edges(self.vertices)
        G = np.einsum("sin,sjn->sij", E, E)
        return np.sqrt(np.maximum(np.linalg.det(G), 0.0)) / factorial(self.k)

    def mass(self) -> float:
        return math.fsum(np.abs(self.weights) * self.volumes())

    def merged(self) -> "PolyhedralCurrent":
        """Sort vertices of every simplex, fold parity into weights, sum duplicates."""
        acc: dict = {}
        for V, w in zip(self.vertices, self.weights):
            keys = [tuple(v) for v in V]
            order = sorted(range(len(keys)), key=keys.__getitem__)
            key = tuple(keys[i] for i in order)
            acc[key] = acc.get(key, 0.0) + _perm_parity(order) * w
        items = [(k, w) for k, w in acc.items() if abs(w) >= MERGE_ATOL]
        if not items:
            return PolyhedralCurrent(self.n, self.k, [], [], self.integral)
        return PolyhedralCurrent(self.n, self.k, [k for k, _ in items], [w for _, w in items],
                                 self.integral, allow_degenerate=True)

    def scaled(self, s: float) -> "PolyhedralCurrent":
        return PolyhedralCurrent(self.n, self.k, self.vertices, s * self.weights, allow_degenerate=True)

    def __add__(self, other: "PolyhedralCurrent") -> "PolyhedralCurrent":
        if (self.n, self.k) != (other.n, other.k):
            raise ValueError("shape mismatch")
        return PolyhedralCurrent(self.n, self.k, np.concatenate([self.vertices, other.vertices]),
                                 np.concatenate([self.weights, other.weights]), allow_degenerate=True)

    def __neg__(self):
        return self.scaled(-1.0)

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k,
                "simplices": [{"vertices": V.tolist(), "weight": float(w)}
                              for V, w in zip(self.vertices, self.weights)]}

    @classmethod
    def from_dict(cls, data: dict) -> "PolyhedralCurrent":
        n, k = int(data["n"]), int(data["k"])
        S = data["simplices"]
        return cls(n, k, [s["vertices"] for s in S], [s.get("weight", 1.0) for s in S])

    def __repr__(self):
        return f"PolyhedralCurrent(n={self.n}, k={self.k}, simplices={len(self)})"


class DiscreteCurrent:
    """Atomic k-current: points ``(N, n)`` with k-vector coefficients ``(N, C(n,k))``."""

    def __init__(self, n: int, k: int, points, coeffs, simple: bool = False):
        P = np.asarray(points, float).reshape(-1, n)
        C = np.asarray(coeffs, float).reshape(len(P), math.comb(n, k))
        if C.shape[1] != math.comb(n, k):
            raise ValueError("coefficient width does not match C(n, k)")
        self.n, self.k = n, k
        self.points, self.coeffs = P, C
        self.points.setflags(write=False)
        self.coeffs.setflags(write=False)
        self.simple = bool(simple) or k in (0, 1, n - 1, n)

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls, n, k):
        return cls(n, k, np.zeros((0, n)), np.zeros((0, math.comb(n, k))), True)

    def atoms(self):
        for x, c in zip(self.points, self.coeffs):
            yield x, KVector(self.n, self.k, c)

    def pair(self, w) -> float:
        return pair_current(self, w)

    def mass(self) -> float:
        return mass(self)

    def scaled(self, s: float) -> "DiscreteCurrent":
        return DiscreteCurrent(self.n, self.k, self.points, s * self.coeffs, self.simple)

    def __add__(self, other: "DiscreteCurrent") -> "DiscreteCurrent":
        if (self.n, self.k) != (other.n, other.k):
            raise ValueError("shape mismatch")
        return DiscreteCurrent(self.n, self.k, np.concatenate([self.points, other.points]),
                               np.concatenate([self.coeffs, other.coeffs]), self.simple and other.simple)

    def __neg__(self):
        return self.scaled(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k,
                "atoms": [{"x": x.tolist(), "tau": {"n": self.n, "k": self.k, "coeffs": c.tolist()}}
                          for x, c in zip(self.points, self.coeffs)]}

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteCurrent":
        n, k = int(data["n"]), int(data["k"])
        A = data["atoms"]
        if not A:
            return cls.empty(n, k)
        return cls(n, k, [a["x"] for a in A], [a["tau"]["coeffs"] for a in A])

    def __repr__(self):
        return f"DiscreteCurrent(n={self.n}, k={self.k}, atoms={len(self)})"


def boundary(P: PolyhedralCurrent) -> PolyhedralCurrent:
    """Simplicial boundary with merged, cancelled faces."""
    if P.k == 0:
        raise ValueError("a 0-current has no boundary in this setting")
    faces, weights = [], []
    for i in range(P.k + 1):
        keep = [j for j in range(P.k + 1) if j != i]
        faces.append(P.vertices[:, keep])
        weights.append((-1) ** i * P.weights)
    raw = PolyhedralCurrent(P.n, P.k - 1, np.concatenate(faces) if faces else [],
                            np.concatenate(weights), P.integral, allow_degenerate=True)
    return raw.merged()


def discretize(P: PolyhedralCurrent, q: int = 3) -> DiscreteCurrent:
    """Atoms at quadrature nodes exact to degree ``q`` on each simplex."""
    bary, qw = simplex_rule(P.k, q)
    if len(P) == 0:
        return DiscreteCurrent.empty(P.n, P.k)
    pts = np.einsum("mj,sjn->smn", bary, P.vertices).reshape(-1, P.n)
    if P.k == 0:
        tau = P.weights[:, None]
    else:
        tau = simple_coeffs(np.swapaxes(_edges(P.vertices), 1, 2)) / factorial(P.k)
        tau = tau * P.weights[:, None]
    coeffs = (tau[:, None, :] * qw[None, :, None]).reshape(-1, tau.shape[1])
    return DiscreteCurrent(P.n, P.k, pts, coeffs, simple=True)


def _evaluate(w, X):
    if hasattr(w, "evaluate"):
        return w.evaluate(X)
    return np.asarray(w(X), float)


def pair_current(T: DiscreteCurrent, w) -> float:
    """``sum_i <tau_i, omega(x_i)>`` with compensated summation in atom order."""
    if (w.n, w.k) != (T.n, T.k):
        raise ValueError(f"cannot pair a ({T.n},{T.k}) current with a ({w.n},{w.k}) form")
    if len(T) == 0:
        return 0.0
    vals = _evaluate(w, T.points)
    return math.fsum(np.einsum("ij,ij->i", T.coeffs, vals))


def mass(T: DiscreteCurrent) -> float:
    """``sum_i M(tau_i)``; Euclidean norms for simple atoms."""
    if len(T) == 0:
        return 0.0
    if T.simple:
        return math.fsum(np.linalg.norm(T.coeffs, axis=1))
    return math.fsum(mass_norm(KVector(T.n, T.k, c)).value for c in T.coeffs)


def wedge_field(v, T: DiscreteCurrent) -> DiscreteCurrent:
    """Atoms ``(x_i, v(x_i) ^ tau_i)``."""
    if T.k + 1 > T.n:
        raise ValueError("grade overflow in v ^ T")
    V = v(T.points) if len(T) else np.zeros((0, T.n))
    C = wedge_coeffs(np.asarray(V, float), T.coeffs, T.n, 1, T.k)
    return DiscreteCurrent(T.n, T.k + 1, T.points, C, simple=T.simple)


def push_atoms(T: DiscreteCurrent, Y, J) -> DiscreteCurrent:
    """Move atoms to ``Y`` and apply ``Lambda^k J`` atom-wise."""
    Y = np.asarray(Y, float)
    n_out = Y.shape[1]
    if T.k == 0:
        C = T.coeffs.copy()
    else:
        C = np.einsum("nij,nj->ni", compound(J, T.k), T.coeffs)
    return DiscreteCurrent(n_out, T.k, Y, C, T.simple)


def pushforward_flow(T: DiscreteCurrent, b: VectorField, t: float, tol: float = 1e-10,
                     return_stats: bool = False):
    """``(Phi_t)_* T`` atom by atom via the flow and its Jacobian."""
    if len(T) == 0 or t == 0:
        out = DiscreteCurrent(T.n, T.k, T.points, T.coeffs, T.simple)
        stats = {"steps": 0, "est_error": 0.0, "max_opnorm": 1.0, "kink_distance": np.inf}
        return (out, stats) if return_stats else out
    Y, J, stats = flow_batch(b, T.points, t, tol, jacobian=T.k > 0)
    if J is None:
        J = np.broadcast_to(np.eye(T.n), (len(T), T.n, T.n))
    out = push_atoms(T, Y, J)
    stats = dict(stats, max_opnorm=float(np.max(np.linalg.norm(J, ord=2, axis=(1, 2)))))
    return (out, stats) if return_stats else out


def product_interval(a: float, b_: float, P: PolyhedralCurrent) -> PolyhedralCurrent:
    """``[[a, b_]] x P`` in R^{1+n}, time first, by the staircase prism split."""
    if not a < b_:
        raise ValueError("degenerate time interval")
    k, n = P.k, P.n
    S = len(P)
    lo = np.concatenate([np.full((S, k + 1, 1), a), P.vertices], axis=2)
    hi = np.concatenate([np.full((S, k + 1, 1), b_), P.vertices], axis=2)
    verts, wts = [], []
    for j in range(k + 1):
        verts.append(np.concatenate([lo[:, :j + 1], hi[:, j:]], axis=1))
        wts.append((-1) ** j * P.weights)
    if not S:
        return PolyhedralCurrent(n + 1, k + 1, [], [])
    return PolyhedralCurrent(n + 1, k + 1, np.concatenate(verts), np.concatenate(wts), P.integral)


def _red_triangle(V):
    v0, v1, v2 = V[:, 0], V[:, 1], V[:, 2]
    m01, m02, m12 = (v0 + v1) / 2, (v0 + v2) / 2, (v1 + v2) / 2
    kids = [(v0, m01, m02), (m01, v1, m12), (m02, m12, v2), (m01, m12, m02)]
    return [np.stack(c, axis=1) for c in kids], [1, 1, 1, 1]


def _barycentric(V):
    k = V.shape[1] - 1
    out, signs = [], []
    for perm in permutations(range(k + 1)):
        pts = []
        for m in range(1, k + 2):
            sub = sorted(perm[:m])
            pts.append(V[:, sub].mean(axis=1))
        out.append(np.stack(pts, axis=1))
        signs.append(_perm_parity(perm))
    return out, signs


def subdivide(P: PolyhedralCurrent, levels: int = 1) -> PolyhedralCurrent:
    """Edge-midpoint refinement for k <= 2, barycentric for k >= 3."""
    if levels < 0:
        raise ValueError("levels must be non-negative")
    cur = P
    for _ in range(levels):
        if cur.k == 0 or len(cur) == 0:
            return cur
        V, w = cur.vertices, cur.weights
        if cur.k == 1:
            m = (V[:, 0] + V[:, 1]) / 2
            kids, signs = [np.stack([V[:, 0], m], 1), np.stack([m, V[:, 1]], 1)], [1, 1]
        elif cur.k == 2:
            kids, signs = _red_triangle(V)
        else:
            kids, signs = _barycentric(V)
        cur = PolyhedralCurrent(cur.n, cur.k, np.concatenate(kids),
                                np.concatenate([s * w for s in signs]), cur.integral)
    return cur


def polyline(points, closed: bool = False, weight: float = 1.0) -> PolyhedralCurrent:
    """Oriented polygonal chain through ``points``."""
    P = np.asarray(points, float)
    nxt = np.roll(P, -1, axis=0) if closed else P[1:]
    cur = P if closed else P[:-1]
    return PolyhedralCurrent(P.shape[1], 1, np.stack([cur, nxt], axis=1), np.full(len(cur), weight))


def segment(a, b, weight: float = 1.0) -> PolyhedralCurrent:
    return polyline([a, b], weight=weight)


def circle_polyline(segments: int = 64, radius: float = 1.0, center=(0.0, 0.0)) -> PolyhedralCurrent:
    th = 2 * np.pi * np.arange(segments) / segments
    pts = np.asarray(center) + radius * np.stack([np.cos(th), np.sin(th)], axis=1)
    return polyline(pts, closed=True)
