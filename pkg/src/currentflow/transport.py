"""Transport of currents along flows and the weak-formulation diagnostics.

A :class:`SolutionFamily` samples ``t -> T_t`` (and ``t -> dT_t``) on a
time grid. The pushforward family is built by :func:`solve_gte`; the
space-time currents ``Z``, ``U`` and ``W`` live on R^{1+d} with time as
coordinate 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .currents import (DiscreteCurrent, PolyhedralCurrent, boundary, discretize, pair_current, product_interval,
                       push_atoms, pushforward_flow, subdivide, wedge_field)
from .exterior import compound, multi_indices, wedge_coeffs
from .flow import VectorField, flow_batch, flow_sweep, make_field
from .forms import PolyForm, TensorForm, TimeTest, ext_d
from .quadrature import composite_weights

__all__ = [
    "SolutionFamily",
    "solve_gte",
    "frozen_family",
    "family_pairings",
    "lie_pair",
    "weak_residual",
    "weak_residual_refinement",
    "residual_integrand",
    "cylinder_Z",
    "embed_space",
    "spacetime_lift_U",
    "boundary_residual_spacetime",
    "lift_W",
    "verticality_residual",
    "constancy_profile",
    "constancy_diagnostic",
    "richardson_ratio",
]


@dataclass
class SolutionFamily:
    """Currents ``T_{t_i}`` and boundaries ``dT_{t_i}`` on a time grid."""

    grid: np.ndarray
    currents: list
    boundaries: list | None
    provenance: str = "pushforward"
    integral: bool = False
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, float)
        if len(self.grid) != len(self.currents):
            raise ValueError("one current per grid time")
        if self.boundaries is not None and len(self.boundaries) != len(self.currents):
            raise ValueError("one boundary per grid time")
        shapes = {(T.n, T.k) for T in self.currents}
        if len(shapes) > 1:
            raise ValueError("all currents of a family must share (n, k)")

    @property
    def n(self):
        return self.currents[0].n

    @property
    def k(self):
        return self.currents[0].k

    def subsample(self, stride: int) -> "SolutionFamily":
        idx = slice(None, None, stride)
        return SolutionFamily(self.grid[idx], self.currents[idx],
                              None if self.boundaries is None else self.boundaries[idx],
                              self.provenance, self.integral, dict(self.stats))

    def boundary_family(self) -> "SolutionFamily":
        """The family ``(dT_t)``; its own boundaries vanish."""
        if self.boundaries is None:
            raise ValueError("family has no boundary companion")
        k = self.k - 1
        empty = None if k == 0 else [DiscreteCurrent.empty(self.n, k - 1)] * len(self.grid)
        return SolutionFamily(self.grid, self.boundaries, empty, self.provenance, self.integral)

    def masses(self):
        return np.array([T.mass() for T in self.currents])


def _resolve(b):
    return b if isinstance(b, VectorField) else make_field(b)


def solve_gte(T0: PolyhedralCurrent, b, grid, L: int = 4, q: int = 3, tol: float = 1e-10) -> SolutionFamily:
    """Pushforward family ``T_t = (Phi_t)_* T0`` on ``grid`` (plus boundaries)."""
    b = _resolve(b)
    grid = np.asarray(grid, float)
    if np.any(grid < 0) or np.any(grid > 1) or np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be increasing inside [0, 1]")
    P = subdivide(T0, L)
    T = discretize(P, q)
    dT = discretize(boundary(P), q) if P.k > 0 else None
    N = len(T)
    X = T.points if dT is None else np.concatenate([T.points, dT.points])
    currents, bounds = [], ([] if dT is not None else None)
    need_jac = P.k > 0
    opnorms = []

    def record(m, Y, J):
        if J is None:
            J = np.broadcast_to(np.eye(P.n), (len(Y), P.n, P.n))
            opnorms.append(1.0)
        else:
            opnorms.append(float(np.max(np.linalg.norm(J[:N], ord=2, axis=(1, 2)), initial=0.0)))
        currents.append(push_atoms(T, Y[:N], J[:N]))
        if dT is not None:
            bounds.append(push_atoms(dT, Y[N:], J[N:]))

    _, _, stats = flow_sweep(b, X, grid, tol, jacobian=need_jac, callback=record)
    # sampled sup of |DPhi_t| over the atoms, per slice, and the initial mass
    stats = dict(stats, opnorm=opnorms, mass0=T.mass())
    return SolutionFamily(grid, currents, bounds, "pushforward", P.integral, stats)


def frozen_family(T0: PolyhedralCurrent, grid, L: int = 4, q: int = 3) -> SolutionFamily:
    """``T_t = T0`` for every t: a non-solution under any nonzero field."""
    P = subdivide(T0, L)
    T = discretize(P, q)
    dT = discretize(boundary(P), q) if P.k > 0 else None
    grid = np.asarray(grid, float)
    return SolutionFamily(grid, [T] * len(grid), None if dT is None else [dT] * len(grid), "external",
                          P.integral)


def family_pairings(currents, w, idx=None) -> np.ndarray:
    """``<T_i, omega>`` for the selected slices with one batched form evaluation."""
    idx = range(len(currents)) if idx is None else idx
    sel = [currents[i] for i in idx]
    out = np.zeros(len(sel))
    if not sel:
        return out
    if (w.n, w.k) != (sel[0].n, sel[0].k):
        raise ValueError(f"cannot pair ({sel[0].n},{sel[0].k}) currents with a ({w.n},{w.k}) form")
    sizes = [len(T) for T in sel]
    if sum(sizes) == 0:
        return out
    vals = w.evaluate(np.concatenate([T.points for T in sel]))
    prods = np.einsum("ij,ij->i", np.concatenate([T.coeffs for T in sel]), vals)
    start = 0
    for j, s in enumerate(sizes):
        out[j] = math.fsum(prods[start:start + s])
        start += s
    return out


def lie_pair(T: DiscreteCurrent, dT: DiscreteCurrent | None, b, w: PolyForm) -> float:
    """``-<b ^ dT, omega> - <b ^ T, d omega>``."""
    b = _resolve(b)
    if (w.n, w.k) != (T.n, T.k):
        raise ValueError("form and current grades differ")
    if T.k + 1 > T.n:
        return 0.0
    out = -pair_current(wedge_field(b, T), ext_d(w))
    if dT is not None and len(dT):
        out -= pair_current(wedge_field(b, dT), w)
    return out


def _check_coverage(F, psi):
    a, c = psi.support
    if a < F.grid[0] - 1e-12 or c > F.grid[-1] + 1e-12:
        raise ValueError("family grid does not cover the support of the time test")


def residual_integrand(F: SolutionFamily, b, psi: TimeTest, w: PolyForm):
    """Grid indices inside ``supp psi`` and the weak-form integrand there.

    The integrand is ``psi' <T,omega> + psi (<b^T, d omega> + <b^dT, omega>)``.
    """
    b = _resolve(b)
    _check_coverage(F, psi)
    a, c = psi.support
    idx = np.nonzero((F.grid > a) & (F.grid < c))[0]
    t = F.grid[idx]
    g = psi(t, 1) * family_pairings(F.currents, w, idx)
    if F.k + 1 <= F.n:
        dw = ext_d(w)
        bT = [wedge_field(b, F.currents[i]) for i in idx]
        lie = family_pairings(bT, dw)
        if F.boundaries is not None and F.k > 0:
            bdT = [wedge_field(b, F.boundaries[i]) for i in idx]
            lie = lie + family_pairings(bdT, w)
        g = g + psi(t) * lie
    return idx, g


def weak_residual(F: SolutionFamily, b, psi: TimeTest, w: PolyForm, rule: str = "simpson") -> float:
    """Time quadrature of ``psi' <T,omega> + psi (<b^T, d omega> + <b^dT, omega>)``."""
    return weak_residual_refinement(F, b, psi, w, (1,), rule)[0]


def weak_residual_refinement(F: SolutionFamily, b, psi: TimeTest, w: PolyForm, strides=(4, 2, 1),
                             rule: str = "simpson") -> list[float]:
    """Weak residuals on the sub-grids ``F.grid[::s]``, sharing one integrand evaluation."""
    _check_coverage(F, psi)
    wts = [composite_weights(F.grid[::s], *psi.support, rule=rule) for s in strides]
    idx, g = residual_integrand(F, b, psi, w)
    full = np.zeros(len(F.grid))
    full[idx] = g
    return [math.fsum(wt * full[::s]) for wt, s in zip(wts, strides)]


def richardson_ratio(values) -> float:
    """``|r(h) - r(h/2)| / |r(h/2) - r(h/4)|`` from three successive halvings."""
    r0, r1, r2 = (np.asarray(v, float) for v in values)
    return float(np.linalg.norm(r0 - r1) / np.linalg.norm(r1 - r2))


def embed_space(T: DiscreteCurrent) -> np.ndarray:
    """Coefficients of ``iota_* tau`` in Lambda_k R^{1+d} (time index 0 unused)."""
    n, k = T.n, T.k
    big = multi_indices(n + 1, k)
    pos = {I: j for j, I in enumerate(big)}
    cols = [pos[tuple(i + 1 for i in I)] for I in multi_indices(n, k)]
    out = np.zeros((len(T), len(big)))
    out[:, cols] = T.coeffs
    return out


def _time_fields(b, X):
    """(1, b(x)) as space-time vectors."""
    return np.concatenate([np.ones((len(X), 1)), b(X)], axis=1)


def spacetime_lift_U(F: SolutionFamily, b, rule: str = "simpson") -> DiscreteCurrent:
    """``U = [(1, b) ^ T_t] dt`` with composite time weights; atoms at t = 0, 1 are dropped."""
    b = _resolve(b)
    a, c = F.grid[0], F.grid[-1]
    wts = composite_weights(F.grid, a, c, rule=rule)
    n = F.n
    pts, cfs = [], []
    for i, (t, T) in enumerate(zip(F.grid, F.currents)):
        if t <= 0.0 or t >= 1.0 or wts[i] == 0 or len(T) == 0:
            continue
        emb = embed_space(T)
        v = _time_fields(b, T.points)
        cfs.append(wts[i] * wedge_coeffs(v, emb, n + 1, 1, T.k))
        pts.append(np.concatenate([np.full((len(T), 1), t), T.points], axis=1))
    if not pts:
        return DiscreteCurrent.empty(n + 1, F.k + 1)
    return DiscreteCurrent(n + 1, F.k + 1, np.concatenate(pts), np.concatenate(cfs), simple=True)


def boundary_residual_spacetime(U: DiscreteCurrent, panel) -> float:
    """``max |<U, d phi>|`` over a panel of space-time tensor forms."""
    vals = [abs(pair_current(U, phi.ext_d())) for phi in panel]
    return float(max(vals, default=0.0))


def cylinder_Z(T0: PolyhedralCurrent, b, slabs, L: int = 2, q: int = 5, tol: float = 1e-10,
               return_stats: bool = False):
    """``Z = Psi_*([[0,1]] x T0)`` with ``Psi(t,x) = (t, Phi_t(x))``.

    The cylinder is assembled slab by slab over ``slabs`` (a partition of
    [0, 1]), each slab a staircase prism product, then discretized and
    pushed atom by atom with ``DPsi = [[1, 0], [b(Phi_t x), DPhi_t(x)]]``.
    """
    b = _resolve(b)
    slabs = np.asarray(slabs, float)
    if slabs[0] != 0.0 or slabs[-1] != 1.0 or np.any(np.diff(slabs) <= 0):
        raise ValueError("slabs must partition [0, 1]")
    P = subdivide(T0, L)
    C = product_interval(slabs[0], slabs[1], P)
    for lo, hi in zip(slabs[1:-1], slabs[2:]):
        C = C + product_interval(lo, hi, P)
    A = discretize(C, q)
    t, x = A.points[:, 0], A.points[:, 1:]
    Y, DPhi, stats = flow_batch(b, x, t, tol, jacobian=True)
    n = P.n
    DPsi = np.zeros((len(A), n + 1, n + 1))
    DPsi[:, 0, 0] = 1.0
    DPsi[:, 1:, 0] = b(Y)
    DPsi[:, 1:, 1:] = DPhi
    Z = push_atoms(A, np.concatenate([t[:, None], Y], axis=1), DPsi)
    return (Z, stats) if return_stats else Z


def lift_W(U: DiscreteCurrent, b, tol: float = 1e-10, atol_vertical: float | None = None):
    """``W = (Psi^{-1})_* U`` and the worst per-atom defect of ``DPsi^{-1}(1, b(y)) = (1, 0)``."""
    b = _resolve(b)
    s, y = U.points[:, 0], U.points[:, 1:]
    n = U.n - 1
    Ys, Js, _ = flow_batch(b, y, -s, tol, jacobian=True)
    D = np.zeros((len(U), n + 1, n + 1))
    D[:, 0, 0] = 1.0
    D[:, 1:, 0] = -b(Ys)
    D[:, 1:, 1:] = Js
    lifted = np.einsum("nij,nj->ni", D, _time_fields(b, y))
    target = np.zeros(n + 1)
    target[0] = 1.0
    defect = float(np.max(np.linalg.norm(lifted - target, axis=1), initial=0.0))
    W = push_atoms(U, np.concatenate([s[:, None], Ys], axis=1), D)
    return W, defect


def verticality_residual(U: DiscreteCurrent, b, panel, tol: float = 1e-10):
    """``max |<W, t^*alpha ^ p^*d beta>|`` over the panel, plus the per-atom defect.

    ``panel`` holds tensor forms ``t^*alpha ^ p^*beta``; each is
    differentiated in space only before pairing with ``W``.
    """
    W, defect = lift_W(U, b, tol)
    vals = []
    for phi in panel:
        spatial = [type(term)(term.coef, term.time_degree, term.order, ext_d(term.beta)) for term in phi.terms]
        dphi = TensorForm(phi.psi, spatial, phi.d, phi.k + 1)
        vals.append(abs(pair_current(W, dphi)))
    return float(max(vals, default=0.0)), defect, W


def constancy_profile(F: SolutionFamily, b, betas, tol: float = 1e-10, idx=None) -> np.ndarray:
    """``m_i(beta) = <(Phi_{-t_i})_* T_{t_i}, beta>``, shape (times, panel)."""
    b = _resolve(b)
    idx = list(range(len(F.grid)) if idx is None else idx)
    sel = [F.currents[i] for i in idx]
    sizes = [len(T) for T in sel]
    if sum(sizes) == 0:
        return np.zeros((len(idx), len(betas)))
    # all slices go back in one batch, each atom with its own time
    stacked = DiscreteCurrent(F.n, F.k, np.concatenate([T.points for T in sel]),
                              np.concatenate([T.coeffs for T in sel]), all(T.simple for T in sel))
    times = np.repeat([-F.grid[i] for i in idx], sizes)
    Y, J, _ = flow_batch(b, stacked.points, times, tol, jacobian=F.k > 0)
    if J is None:
        J = np.broadcast_to(np.eye(F.n), (len(Y), F.n, F.n))
    back = push_atoms(stacked, Y, J)
    bounds = np.cumsum([0] + sizes)
    slices = [DiscreteCurrent(F.n, F.k, back.points[lo:hi], back.coeffs[lo:hi], back.simple)
              for lo, hi in zip(bounds[:-1], bounds[1:])]
    return np.stack([family_pairings(slices, beta) for beta in betas], axis=1)


def constancy_diagnostic(F: SolutionFamily, b, betas, tol: float = 1e-10, idx=None) -> float:
    """``max_{i, beta} |m_i(beta) - m_0(beta)|``."""
    prof = constancy_profile(F, b, betas, tol, idx)
    return float(np.max(np.abs(prof - prof[0]), initial=0.0))
