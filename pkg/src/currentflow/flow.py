"""Vector field catalog and flow maps with Jacobian transport.

The integrator is classical RK4 with a fixed step, refined by repeated
halving until two successive resolutions agree to the requested
tolerance. The variational equation ``J' = Db(x) J`` is carried on the coarser of the
two accepted resolutions; the finer one certifies the endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .forms import Bump

__all__ = [
    "VectorField",
    "FlowResult",
    "StepUnderflow",
    "make_field",
    "mollify",
    "flow_batch",
    "flow_sweep",
    "advect",
    "jacobian_action",
    "semigroup_defect",
    "taylor_defect",
    "spacetime_jacobian",
    "empirical_lipschitz",
    "FIELD_KINDS",
]

FIELD_KINDS = ("constant", "rotation", "shear", "abs_shear", "gradient_bump", "grid", "mollified")
MAX_HALVINGS = 22
MAX_STEPS = 2 ** 22
TIME_BUCKETS = 8


class StepUnderflow(RuntimeError):
    """The step-halving loop ran out of room before meeting the tolerance."""

    def __init__(self, msg, steps, error):
        super().__init__(f"{msg} (steps={steps}, estimated error={error:.3e})")
        self.steps, self.error = steps, error


@dataclass(frozen=True)
class VectorField:
    """Autonomous Lipschitz field ``b`` on R^n with reported bounds.

    Parameters
    ----------
    n : int
        Ambient dimension.
    kind : str
        One of :data:`FIELD_KINDS`.
    params : dict
        Kind-specific parameters (kept for serialization).
    lip_bound, sup_bound : float
        Lipschitz constant and sup norm. For unbounded linear kinds the sup
        is taken over the ball of radius ``params["domain_radius"]``.
    """

    n: int
    kind: str
    params: dict
    lip_bound: float
    sup_bound: float
    _eval: object = field(repr=False, compare=False)
    _jac: object = field(repr=False, compare=False)
    _kink: object = field(default=None, repr=False, compare=False)

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        single = X.ndim == 1
        out = self._eval(np.atleast_2d(X))
        return out[0] if single else out

    def jacobian(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        single = X.ndim == 1
        out = self._jac(np.atleast_2d(X))
        return out[0] if single else out

    def kink_distance(self, X) -> np.ndarray:
        """Distance to the set where the field fails to be differentiable (inf if none)."""
        X = np.atleast_2d(np.asarray(X, float))
        if self._kink is None:
            return np.full(len(X), np.inf)
        return self._kink(X)

    @property
    def is_zero(self) -> bool:
        return self.kind == "constant" and not np.any(self.params["c"])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "params": _jsonable(self.params),
                "lip_bound": self.lip_bound, "sup_bound": self.sup_bound}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _constant(n, c=None, **_):
    c = np.zeros(n) if c is None else np.asarray(c, float)
    if c.shape != (n,):
        raise ValueError("constant field needs a vector of length n")
    ev = lambda X: np.broadcast_to(c, X.shape).copy()
    jac = lambda X: np.zeros((len(X), n, n))
    return ev, jac, 0.0, float(np.linalg.norm(c)), None, {"c": c.tolist()}


def _planar_matrix(n, plane, scale, kind):
    i, j = plane
    A = np.zeros((n, n))
    if kind == "rotation":
        A[i, j], A[j, i] = -scale, scale
    else:
        A[i, j] = scale
    return A


def _linear(n, kind, omega=1.0, plane=(0, 1), domain_radius=3.0, **_):
    scale = float(omega)
    A = _planar_matrix(n, tuple(plane), scale, kind)
    ev = lambda X: X @ A.T
    jac = lambda X: np.broadcast_to(A, (len(X), n, n)).copy()
    lip = abs(scale)
    return ev, jac, lip, lip * float(domain_radius), None, {
        "omega": scale, "plane": list(plane), "domain_radius": float(domain_radius)}


def _abs_shear(n, omega=1.0, plane=(0, 1), domain_radius=3.0, **_):
    i, j = plane
    s = float(omega)

    def ev(X):
        out = np.zeros_like(X)
        out[:, i] = s * np.abs(X[:, j])
        return out

    def jac(X):
        out = np.zeros((len(X), n, n))
        out[:, i, j] = s * np.sign(X[:, j])
        return out

    kink = lambda X: np.abs(X[:, j])
    return ev, jac, abs(s), abs(s) * float(domain_radius), kink, {
        "omega": s, "plane": list(plane), "domain_radius": float(domain_radius)}


def _gradient_bump(n, amplitude=1.0, sigma=0.5, center=None, swirl=True, plane=(0, 1), **_):
    """``b = amplitude * R grad exp(-|x-c|^2 / 2 sigma^2)``, R a quarter turn if ``swirl``."""
    c = np.zeros(n) if center is None else np.asarray(center, float)
    a, sg = float(amplitude), float(sigma)
    R = np.eye(n)
    if swirl:
        i, j = plane
        R = np.zeros((n, n))
        R[i, j], R[j, i] = -1.0, 1.0

    ones = np.ones(n)

    def gauss(d):
        # row norms via matmul: much faster than a short-axis reduction
        return np.exp((d * d) @ ones * (-0.5 / (sg * sg)))

    def ev(X):
        d = X - c
        return (d @ R.T) * (gauss(d) * (-a / sg ** 2))[:, None]

    def jac(X):
        # R (d d^T / s^2 - I) * a g / s^2
        d = X - c
        coef = gauss(d) * (a / sg ** 2)
        Rd = d @ R.T
        out = Rd[:, :, None] * (d * (coef / sg ** 2)[:, None])[:, None, :]
        out -= coef[:, None, None] * R
        return out

    # radial Hessian eigenvalue peaks at the center, tangential never exceeds it
    lip = abs(a) / sg ** 2
    sup = abs(a) / sg * np.exp(-0.5)
    return ev, jac, lip, sup, None, {"amplitude": a, "sigma": sg, "center": c.tolist(),
                                     "swirl": bool(swirl), "plane": list(plane)}


def _grid(n, origin, spacing, values=None, sample=None, shape=None, **_):
    origin = np.asarray(origin, float)
    spacing = np.broadcast_to(np.asarray(spacing, float), (n,)).copy()
    if values is None:
        if sample is None or shape is None:
            raise ValueError("grid field needs values or a sample spec with shape")
        axes = [origin[d] + spacing[d] * np.arange(shape[d]) for d in range(n)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
        src = make_field(sample)
        values = src(pts).reshape(*shape, n)
    V = np.asarray(values, float)
    shape = np.array(V.shape[:-1])
    if V.shape[-1] != n or len(shape) != n or np.any(shape < 2):
        raise ValueError("grid values must have shape (m_1, ..., m_n, n) with m_i >= 2")
    corners = np.array(np.meshgrid(*[[0, 1]] * n, indexing="ij")).reshape(n, -1).T

    def locate(X):
        u = (X - origin) / spacing
        inside = (u >= 0) & (u <= shape - 1)
        u = np.clip(u, 0, shape - 1)
        idx = np.minimum(np.floor(u).astype(int), shape - 2)
        return idx, u - idx, inside

    def ev(X):
        idx, f, _ = locate(X)
        out = np.zeros((len(X), n))
        for cnr in corners:
            w = np.prod(np.where(cnr, f, 1 - f), axis=1)
            out += w[:, None] * V[tuple((idx + cnr).T)]
        return out

    def jac(X):
        idx, f, inside = locate(X)
        out = np.zeros((len(X), n, n))
        for cnr in corners:
            vals = V[tuple((idx + cnr).T)]
            for d in range(n):
                w = np.prod(np.where(cnr, f, 1 - f)[:, [e for e in range(n) if e != d]], axis=1)
                sgn = 1.0 if cnr[d] else -1.0
                out[:, :, d] += (sgn / spacing[d] * w * inside[:, d])[:, None] * vals
        return out

    M = np.zeros((n, n))
    for d in range(n):
        diff = np.abs(np.diff(V, axis=d)) / spacing[d]
        M[:, d] = diff.reshape(-1, n).max(axis=0)
    lip = float(np.sqrt(np.sum(M ** 2)))
    sup = float(np.linalg.norm(V.reshape(-1, n), axis=1).max())
    return ev, jac, lip, sup, None, {"origin": origin.tolist(), "spacing": spacing.tolist(),
                                     "values": V.tolist()}


def _kernel_rule(n, nodes):
    """Positive quadrature for the normalized C^2 radial kernel on the unit ball."""
    from scipy.special import roots_legendre

    prof = Bump((0.0,) * n, 0.0, 1.0)
    x, w = roots_legendre(nodes)
    r = (x + 1) / 2
    wr = w / 2 * prof.profile(r * r) * r ** (n - 1)
    if n == 1:
        pts = np.concatenate([r, -r])[:, None]
        wts = np.concatenate([wr, wr])
    elif n == 2:
        m = 2 * nodes + 2
        th = 2 * np.pi * np.arange(m) / m
        pts = (r[:, None, None] * np.stack([np.cos(th), np.sin(th)], -1)[None]).reshape(-1, 2)
        wts = np.repeat(wr, m)
    else:
        g = np.concatenate([-r[::-1], r])
        gw = np.concatenate([w[::-1], w]) / 4
        mesh = np.stack(np.meshgrid(*[g] * n, indexing="ij"), -1).reshape(-1, n)
        mw = np.prod(np.stack(np.meshgrid(*[gw] * n, indexing="ij"), -1).reshape(-1, n), axis=1)
        rr = np.einsum("ij,ij->i", mesh, mesh)
        keep = rr < 1
        pts, wts = mesh[keep], mw[keep] * prof.profile(rr[keep])
    return pts, wts / wts.sum()


def mollify(b: VectorField, eps: float, nodes: int = 8) -> VectorField:
    """Field ``b_eps = b * K_eps`` by kernel quadrature (a positive average of shifts)."""
    if eps <= 0:
        return b
    pts, wts = _kernel_rule(b.n, nodes)
    shifts = eps * pts

    def spread(X):
        # all shifted copies in one batch, shift-major
        return (X[None] - shifts[:, None]).reshape(-1, b.n)

    def ev(X):
        return np.tensordot(wts, b(spread(X)).reshape(len(shifts), len(X), b.n), axes=1)

    def jac(X):
        return np.tensordot(wts, b.jacobian(spread(X)).reshape(len(shifts), len(X), b.n, b.n), axes=1)

    params = {"base": b.to_dict(), "eps": float(eps), "nodes": int(nodes)}
    return VectorField(b.n, "mollified", params, b.lip_bound, b.sup_bound, ev, jac, None)


def make_field(spec) -> VectorField:
    """Build a catalog field from ``{kind, n, params}``.

    Reported bounds are always recomputed; a spec may carry its own
    ``lip_bound``/``sup_bound`` only if they are at least the computed ones.
    """
    if isinstance(spec, VectorField):
        return spec
    kind, n = spec["kind"], int(spec.get("n", 2))
    params = dict(spec.get("params", {}))
    if kind == "mollified":
        return mollify(make_field(params["base"]), params["eps"], params.get("nodes", 8))
    if kind == "constant":
        parts = _constant(n, **params)
    elif kind in ("rotation", "shear"):
        if n < 2:
            raise ValueError(f"{kind} field needs n >= 2")
        parts = _linear(n, kind, **params)
    elif kind == "abs_shear":
        parts = _abs_shear(n, **params)
    elif kind == "gradient_bump":
        parts = _gradient_bump(n, **params)
    elif kind == "grid":
        parts = _grid(n, **params)
    else:
        raise ValueError(f"unknown field kind {kind!r}")
    ev, jac, lip, sup, kink, clean = parts
    for key, val in (("lip_bound", lip), ("sup_bound", sup)):
        if key in spec and spec[key] < val * (1 - 1e-12):
            raise ValueError(f"declared {key}={spec[key]} is below the computed bound {val}")
    lip = max(lip, spec.get("lip_bound", lip))
    sup = max(sup, spec.get("sup_bound", sup))
    return VectorField(n, kind, clean, float(lip), float(sup), ev, jac, kink)


@dataclass(frozen=True)
class FlowResult:
    """Endpoint (and Jacobian) of one trajectory with integrator stats."""

    endpoint: np.ndarray
    jacobian: np.ndarray | None
    steps: int
    est_error: float
    kink_distance: float = np.inf


def _rhs(b, x, J):
    v = b(x)
    if J is None:
        return v, None
    return v, b.jacobian(x) @ J


def _rk4(b, X, J, dt, steps):
    """``steps`` fixed RK4 steps with per-point step ``dt`` (shape (N,))."""
    kmin = np.full(len(X), np.inf)
    h = dt[:, None]
    hJ = dt[:, None, None]
    for _ in range(steps):
        if b._kink is not None:
            kmin = np.minimum(kmin, b.kink_distance(X))
        k1, l1 = _rhs(b, X, J)
        k2, l2 = _rhs(b, X + 0.5 * h * k1, None if J is None else J + 0.5 * hJ * l1)
        k3, l3 = _rhs(b, X + 0.5 * h * k2, None if J is None else J + 0.5 * hJ * l2)
        k4, l4 = _rhs(b, X + h * k3, None if J is None else J + hJ * l3)
        X = X + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if J is not None:
            J = J + hJ / 6 * (l1 + 2 * l2 + 2 * l3 + l4)
    if b._kink is not None:
        kmin = np.minimum(kmin, b.kink_distance(X))
    return X, J, kmin


def flow_batch(b: VectorField, X, t, tol: float = 1e-10, jacobian: bool = True, J0=None):
    """Flow many points, each for its own time ``t_i`` (scalar broadcasts).

    Returns ``(Y, J, stats)``; ``J`` is ``DPhi_t(x) @ J0`` (``J0`` defaults
    to the identity). The error estimate covers the endpoints.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    X = np.atleast_2d(np.asarray(X, float))
    N, n = X.shape
    if n != b.n:
        raise ValueError(f"points have dimension {n}, field lives on R^{b.n}")
    t = np.broadcast_to(np.asarray(t, float), (N,)).copy()
    if J0 is None:
        J0 = np.broadcast_to(np.eye(n), (N, n, n)).copy() if jacobian else None
    if N == 0 or b.kind == "constant" or np.ptp(np.abs(t)) == 0.0:
        return _flow_group(b, X, t, tol, J0)
    # Points flowed for short times need fewer steps: bucket by |t| so each
    # bucket gets its own step count from the same rule.
    order = np.argsort(np.abs(t), kind="stable")
    Y = np.empty_like(X)
    J = None if J0 is None else np.empty_like(J0)
    stats = {"steps": 0, "est_error": 0.0, "kink_distance": np.inf}
    for sel in np.array_split(order, min(TIME_BUCKETS, N)):
        Yg, Jg, sg = _flow_group(b, X[sel], t[sel], tol, None if J0 is None else J0[sel])
        Y[sel] = Yg
        if J is not None:
            J[sel] = Jg
        stats = {"steps": max(stats["steps"], sg["steps"]), "est_error": max(stats["est_error"], sg["est_error"]),
                 "kink_distance": min(stats["kink_distance"], sg["kink_distance"])}
    return Y, J, stats


def _flow_group(b, X, t, tol, J0):
    N = len(X)
    T = float(np.max(np.abs(t), initial=0.0))
    if T == 0.0 or N == 0 or (b.kind == "constant"):
        Y = X + t[:, None] * b(X) if N else X.copy()
        J = None if J0 is None else J0.copy()
        return Y, J, {"steps": 0, "est_error": 0.0, "kink_distance": float(np.min(b.kink_distance(X), initial=np.inf))}
    h0 = tol ** 0.25 / (1.0 + b.lip_bound)
    steps = max(1, ceil(T / h0))
    if steps > MAX_STEPS:
        raise StepUnderflow("tolerance needs more steps than allowed", steps, float("inf"))
    # The Jacobian rides on the coarse pass (already h <= h0); the halved
    # pass, without Jacobian, only certifies the endpoint. On failure the
    # Jacobian is recomputed at the next level.
    coarse = _rk4(b, X, J0, t / steps, steps)
    for _ in range(MAX_HALVINGS):
        fine = _rk4(b, X, None, t / (2 * steps), 2 * steps)
        err = float(np.max(np.linalg.norm(fine[0] - coarse[0], axis=1)))
        if err <= tol:
            kmin = np.minimum(coarse[2], fine[2])
            stats = {"steps": 2 * steps, "est_error": err, "kink_distance": float(np.min(kmin))}
            return fine[0], coarse[1], stats
        steps *= 2
        if 2 * steps > MAX_STEPS:
            break
        coarse = fine if J0 is None else _rk4(b, X, J0, t / steps, steps)
    raise StepUnderflow("step halving did not reach the tolerance", steps, err)


def flow_sweep(b: VectorField, X, times, tol: float = 1e-10, jacobian: bool = True, callback=None):
    """Record the flow of all points at increasing ``times`` (first may be 0).

    Returns arrays of shape ``(M, N, n)`` and ``(M, N, n, n)`` plus stats.
    With ``callback(m, Y, J)`` the states are handed over instead of stored.
    """
    times = np.asarray(times, float)
    if np.any(np.diff(times) < 0) or (len(times) and times[0] < 0):
        raise ValueError("sweep times must be non-negative and sorted")
    X = np.atleast_2d(np.asarray(X, float))
    N, n = X.shape
    store = callback is None
    Ys = np.empty((len(times), N, n)) if store else None
    Js = np.empty((len(times), N, n, n)) if (jacobian and store) else None
    cur, J = X.copy(), (np.broadcast_to(np.eye(n), (N, n, n)).copy() if jacobian else None)
    tcur, err, steps = 0.0, 0.0, 0
    kmin = float(np.min(b.kink_distance(X), initial=np.inf))
    for m, tm in enumerate(times):
        if tm > tcur:
            cur, J, st = flow_batch(b, cur, tm - tcur, tol, jacobian, J0=J)
            err += st["est_error"]
            steps += st["steps"]
            kmin = min(kmin, st["kink_distance"])
            tcur = tm
        if store:
            Ys[m] = cur
            if jacobian:
                Js[m] = J
        else:
            callback(m, cur, J)
    return Ys, Js, {"est_error": err, "steps": steps, "kink_distance": kmin}


def advect(b: VectorField, x, t: float, tol: float = 1e-10, jacobian: bool = True) -> FlowResult:
    """Endpoint ``Phi_t(x)`` (negative ``t`` flows backwards)."""
    x = np.asarray(x, float).reshape(1, -1)
    Y, J, st = flow_batch(b, x, t, tol, jacobian)
    return FlowResult(Y[0], None if J is None else J[0], st["steps"], st["est_error"], st["kink_distance"])


def jacobian_action(b: VectorField, x, t: float, tol: float = 1e-10) -> np.ndarray:
    """``DPhi_t(x)`` from the variational equation."""
    return advect(b, x, t, tol, True).jacobian


def semigroup_defect(b: VectorField, x, s: float, t: float, tol: float = 1e-10) -> float:
    """``|Phi_t(Phi_s(x)) - Phi_{t+s}(x)|``."""
    y = advect(b, x, s, tol, False).endpoint
    lhs = advect(b, y, t, tol, False).endpoint
    rhs = advect(b, x, s + t, tol, False).endpoint
    return float(np.linalg.norm(lhs - rhs))


def taylor_defect(b: VectorField, x, h: float, tol: float | None = None) -> float:
    """``|Phi_h(x) - x - h b(x)|`` with an integrator tolerance well below h^2."""
    if h == 0:
        raise ValueError("h must be nonzero")
    x = np.asarray(x, float)
    tol = tol if tol is not None else min(1e-12, 1e-4 * h * h)
    y = advect(b, x, h, tol, False).endpoint
    return float(np.linalg.norm(y - x - h * b(x)))


def spacetime_jacobian(b: VectorField, Y, DPhi) -> np.ndarray:
    """``DPsi(t, x)`` for ``Psi(t, x) = (t, Phi_t(x))`` given ``Y = Phi_t(x)`` and ``DPhi_t(x)``."""
    Y = np.atleast_2d(Y)
    N, n = Y.shape
    out = np.zeros((N, n + 1, n + 1))
    out[:, 0, 0] = 1.0
    out[:, 1:, 0] = b(Y)
    out[:, 1:, 1:] = DPhi
    return out


def empirical_lipschitz(b: VectorField, X) -> float:
    """Largest difference quotient over all pairs of sample points."""
    X = np.atleast_2d(np.asarray(X, float))
    V = b(X)
    dx = np.linalg.norm(X[:, None] - X[None], axis=2)
    dv = np.linalg.norm(V[:, None] - V[None], axis=2)
    mask = dx > 0
    return float(np.max(dv[mask] / dx[mask], initial=0.0))
