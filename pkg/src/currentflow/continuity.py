"""The k = 0 case: signed measures carried by the flow.

Particle measures are pushed forward exactly along trajectories; a
first-order donor-cell finite-volume scheme provides an independent grid
oracle for the same continuity equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import ceil

import numpy as np

from .flow import VectorField, flow_batch, flow_sweep, make_field, mollify
from .forms import Bump, PolyForm, Poly, TimeTest, ext_d, random_form
from .quadrature import composite_weights

__all__ = [
    "ParticleMeasure",
    "GridMeasure",
    "ParticleFamily",
    "push_measure",
    "push_family",
    "frozen_measure_family",
    "continuity_residual",
    "flowed_test_residual",
    "flowed_test_residuals",
    "directional_claim_defect",
    "fv_oracle",
    "dual_distance",
    "bump_density",
    "sample_particles",
    "grid_from_density",
    "test_panel",
]


@dataclass(frozen=True)
class ParticleMeasure:
    """``sum_i w_i delta_{x_i}`` with signed weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, float))
        w = np.asarray(self.weights, float).reshape(-1)
        if len(P) != len(w):
            raise ValueError("one weight per particle")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "weights", w)

    @property
    def d(self):
        return self.points.shape[1]

    def parts(self):
        """Positive and negative parts as nonnegative clouds."""
        pos, neg = self.weights > 0, self.weights < 0
        return (ParticleMeasure(self.points[pos], self.weights[pos]),
                ParticleMeasure(self.points[neg], -self.weights[neg]))

    def total_variation(self) -> float:
        return math.fsum(np.abs(self.weights))

    def total_mass(self) -> float:
        return math.fsum(self.weights)

    def pair(self, f) -> float:
        """``<mu, f>`` for a 0-form or any callable returning values per point."""
        vals = f.evaluate(self.points)[:, 0] if hasattr(f, "evaluate") else np.asarray(f(self.points), float)
        return math.fsum(self.weights * vals)

    def __add__(self, other):
        return ParticleMeasure(np.concatenate([self.points, other.points]),
                               np.concatenate([self.weights, other.weights]))

    def scaled(self, s):
        return ParticleMeasure(self.points, s * self.weights)

    def to_dict(self):
        return {"points": self.points.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["points"], data["weights"])


@dataclass(frozen=True)
class GridMeasure:
    """Cell densities on a uniform grid; cell ``(i, j)`` has lower corner ``origin + h (i, j)``."""

    origin: tuple
    h: float
    density: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "density", np.asarray(self.density, float))
        if self.density.ndim != len(self.origin):
            raise ValueError("density rank must match the grid dimension")

    @property
    def shape(self):
        return self.density.shape

    @property
    def cell_volume(self):
        return self.h ** self.density.ndim

    def centers(self) -> np.ndarray:
        axes = [self.origin[d] + self.h * (np.arange(m) + 0.5) for d, m in enumerate(self.shape)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(self.shape))

    def cell_masses(self) -> np.ndarray:
        return self.density * self.cell_volume

    def total_mass(self) -> float:
        return math.fsum(self.cell_masses().ravel())

    def total_variation(self) -> float:
        return math.fsum(np.abs(self.cell_masses()).ravel())

    def pair(self, f) -> float:
        """Cell-center midpoint pairing."""
        X = self.centers()
        vals = f.evaluate(X)[:, 0] if hasattr(f, "evaluate") else np.asarray(f(X), float)
        return math.fsum(self.cell_masses().ravel() * vals)

    def header(self) -> dict:
        return {"origin": list(self.origin), "h": self.h, "shape": list(self.shape),
                "dtype": "float64", "order": "row-major"}


@dataclass
class ParticleFamily:
    grid: np.ndarray
    measures: list
    provenance: str = "pushforward"

    def __add__(self, other):
        if not np.array_equal(self.grid, other.grid):
            raise ValueError("families must share their time grid")
        return ParticleFamily(self.grid, [a + b for a, b in zip(self.measures, other.measures)], "external")


def _field(b):
    return b if isinstance(b, VectorField) else make_field(b)


def push_measure(mu: ParticleMeasure, b, t: float, tol: float = 1e-10) -> ParticleMeasure:
    """``(Phi_t)_# mu``: points move, weights stay."""
    b = _field(b)
    if len(mu.weights) == 0 or t == 0:
        return mu
    Y, _, _ = flow_batch(b, mu.points, t, tol, jacobian=False)
    return ParticleMeasure(Y, mu.weights.copy())


def push_family(mu: ParticleMeasure, b, grid, tol: float = 1e-10) -> ParticleFamily:
    b = _field(b)
    Ys, _, _ = flow_sweep(b, mu.points, np.asarray(grid, float), tol, jacobian=False)
    return ParticleFamily(np.asarray(grid, float), [ParticleMeasure(Y, mu.weights.copy()) for Y in Ys])


def frozen_measure_family(mu: ParticleMeasure, grid) -> ParticleFamily:
    grid = np.asarray(grid, float)
    return ParticleFamily(grid, [mu] * len(grid), "external")


def _gradient_dot(b, beta: PolyForm, X):
    grad = ext_d(beta).evaluate(X)
    return np.einsum("ij,ij->i", b(X), grad)


def continuity_residual(fam: ParticleFamily, b, tests) -> float:
    """``int int (d_t psi + b . grad psi) d mu_t dt`` for ``psi = sum_j alpha_j(t) beta_j(x)``.

    ``tests`` is a list of ``(alpha, beta)`` with ``alpha`` a
    :class:`TimeTest` and ``beta`` a 0-form.
    """
    b = _field(b)
    total = []
    for alpha, beta in tests:
        a, c = alpha.support
        if a < fam.grid[0] - 1e-12 or c > fam.grid[-1] + 1e-12:
            raise ValueError("family does not cover the time support of the test")
        wts = composite_weights(fam.grid, a, c)
        for i in np.nonzero(wts)[0]:
            mu, t = fam.measures[i], fam.grid[i]
            vals = alpha(t, 1) * beta.evaluate(mu.points)[:, 0] + alpha(t) * _gradient_dot(b, beta, mu.points)
            total.append(wts[i] * math.fsum(mu.weights * vals))
    return math.fsum(total)


def flowed_test_residual(fam: ParticleFamily, b, alpha: TimeTest, beta: PolyForm, eps: float = 0.0,
                         tol: float = 1e-10, kernel_nodes: int = 6) -> float:
    """``int alpha'(t) <(Phi^eps_{-t})_# mu_t, beta> dt`` by back-flowing the particles.

    ``eps > 0`` swaps in the flow of the mollified field ``b_eps``.
    """
    return flowed_test_residuals(fam, b, [(alpha, beta)], eps, tol, kernel_nodes)[0]


def flowed_test_residuals(fam: ParticleFamily, b, tests, eps: float = 0.0, tol: float = 1e-10,
                          kernel_nodes: int = 6) -> list:
    """:func:`flowed_test_residual` for several ``(alpha, beta)`` pairs, sharing one back-flow."""
    b = _field(b)
    flow_field = mollify(b, eps, kernel_nodes) if eps > 0 else b
    wts = [composite_weights(fam.grid, *alpha.support) for alpha, _ in tests]
    idx = np.nonzero(np.any(np.array(wts) != 0, axis=0))[0] if tests else np.array([], int)
    sel = [fam.measures[i] for i in idx]
    sizes = [len(m.weights) for m in sel]
    back = dict(zip(idx, sel))
    if sum(sizes):
        # every needed slice goes back in one batch, each particle with its own time
        Y, _, _ = flow_batch(flow_field, np.concatenate([m.points for m in sel]), np.repeat(-fam.grid[idx], sizes),
                             tol, jacobian=False)
        bounds = np.cumsum([0] + sizes)
        back = {i: ParticleMeasure(Y[lo:hi], m.weights) for i, m, lo, hi in zip(idx, sel, bounds[:-1], bounds[1:])}
    out = []
    for (alpha, beta), w in zip(tests, wts):
        out.append(math.fsum(w[i] * alpha(fam.grid[i], 1) * back[i].pair(beta) for i in np.nonzero(w)[0]))
    return out


def directional_claim_defect(b, alpha: TimeTest, beta: PolyForm, t: float, x, h: float = 1e-4,
                             tol: float = 1e-12) -> float:
    """Central difference of ``alpha(t) beta(Phi_{-t} x)`` along ``(1, b(x))`` minus ``alpha'(t) beta(Phi_{-t} x)``."""
    b = _field(b)
    x = np.asarray(x, float)
    v = b(x)

    def psi(s, y):
        y0 = flow_batch(b, y[None], -s, tol, jacobian=False)[0]
        return alpha(s) * beta.evaluate(y0)[0, 0]

    fd = (psi(t + h, x + h * v) - psi(t - h, x - h * v)) / (2 * h)
    y0 = flow_batch(b, x[None], -t, tol, jacobian=False)[0]
    return float(abs(fd - alpha(t, 1) * beta.evaluate(y0)[0, 0]))


def fv_oracle(mu0: GridMeasure, b, t: float, cfl: float = 0.4, return_steps: bool = False):
    """Donor-cell upwind finite volumes for ``d_t rho + div(b rho) = 0`` on a closed box.

    Face velocities are the normal field components at face centers; the
    outer boundary carries zero flux, so cell sums telescope.
    """
    if cfl > 0.5 or cfl <= 0:
        raise ValueError("cfl must lie in (0, 0.5]")
    b = _field(b)
    rho = np.array(mu0.density, float)
    if rho.ndim != 2:
        raise ValueError("the finite-volume oracle is two-dimensional")
    nx, ny = rho.shape
    h = mu0.h
    ox, oy = mu0.origin
    # x-faces interior: (nx-1, ny), y-faces interior: (nx, ny-1)
    fx = np.stack(np.meshgrid(ox + h * np.arange(1, nx), oy + h * (np.arange(ny) + 0.5), indexing="ij"), -1)
    fy = np.stack(np.meshgrid(ox + h * (np.arange(nx) + 0.5), oy + h * np.arange(1, ny), indexing="ij"), -1)
    u = b(fx.reshape(-1, 2))[:, 0].reshape(nx - 1, ny)
    v = b(fy.reshape(-1, 2))[:, 1].reshape(nx, ny - 1)
    speed = max(np.abs(u).max(initial=0.0), 0.0) + max(np.abs(v).max(initial=0.0), 0.0)
    if t == 0 or speed == 0:
        out = GridMeasure(mu0.origin, h, rho)
        return (out, 0) if return_steps else out
    steps = max(1, ceil(abs(t) * speed / (cfl * h)))
    dt = t / steps
    if dt < 0:
        u, v = -u, -v
        dt = -dt
    up, um = np.maximum(u, 0), np.minimum(u, 0)
    vp, vm = np.maximum(v, 0), np.minimum(v, 0)
    lam = dt / h
    for _ in range(steps):
        Fx = up * rho[:-1] + um * rho[1:]
        Fy = vp * rho[:, :-1] + vm * rho[:, 1:]
        div = np.zeros_like(rho)
        div[:-1] += Fx
        div[1:] -= Fx
        div[:, :-1] += Fy
        div[:, 1:] -= Fy
        rho = rho - lam * div
    out = GridMeasure(mu0.origin, h, rho)
    return (out, steps) if return_steps else out


def dual_distance(mu: ParticleMeasure, nu: GridMeasure, panel) -> float:
    """``max_beta |<mu, beta> - <nu, beta>|`` over a panel of test functions."""
    if not panel:
        return 0.0
    return float(max(abs(mu.pair(beta) - nu.pair(beta)) for beta in panel))


def bump_density(center=(0.5, 0.0), radius: float = 0.35, height: float = 1.0):
    """Smooth compactly supported density as a 0-form."""
    return PolyForm.from_coeffs(len(center), 0, {(): height}, Bump(center, 0.0, radius))


def _cell_average(f, origin, h, shape, sub: int = 4):
    from scipy.special import roots_legendre

    x, w = roots_legendre(sub)
    x, w = (x + 1) / 2, w / 2
    d = len(shape)
    out = np.zeros(shape)
    centers_lo = [origin[i] + h * np.arange(shape[i]) for i in range(d)]
    for idx in np.ndindex(*([sub] * d)):
        axes = [centers_lo[i] + h * x[idx[i]] for i in range(d)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
        out += np.prod(w[list(idx)]) * f.evaluate(pts)[:, 0].reshape(shape)
    return out


def grid_from_density(density: PolyForm, h: float, box=(-1.0, 1.0), sub: int = 4) -> GridMeasure:
    """Cell averages of ``density`` on a uniform grid over ``box^2``."""
    lo, hi = box
    m = int(round((hi - lo) / h))
    if abs(m * h - (hi - lo)) > 1e-12:
        raise ValueError("h must divide the box length")
    origin = (lo,) * density.n
    return GridMeasure(origin, h, _cell_average(density, origin, h, (m,) * density.n, sub))


def sample_particles(density: PolyForm, h: float, box=(-1.0, 1.0), sub: int = 2) -> ParticleMeasure:
    """Tensor Gauss particles (``sub`` per axis per cell of size h) carrying the density mass."""
    from scipy.special import roots_legendre

    lo, hi = box
    m = int(round((hi - lo) / h))
    x, w = roots_legendre(sub)
    x, w = (x + 1) / 2, w / 2
    base = lo + h * np.arange(m)
    ax = (base[:, None] + h * x[None]).ravel()
    aw = np.tile(w, m) * h
    d = density.n
    pts = np.stack(np.meshgrid(*[ax] * d, indexing="ij"), -1).reshape(-1, d)
    wts = np.prod(np.stack(np.meshgrid(*[aw] * d, indexing="ij"), -1).reshape(-1, d), axis=1)
    vals = density.evaluate(pts)[:, 0] * wts
    keep = vals != 0
    return ParticleMeasure(pts[keep], vals[keep])


def test_panel(seed, size: int, d: int = 2, degree: int = 2, center_box=(-0.8, 0.8),
               r_in: float = 0.2, r_out: float = 0.9):
    """Seeded bounded-Lipschitz 0-forms (polynomial times bump)."""
    rng = np.random.default_rng(seed)
    lo, hi = center_box
    return [random_form(rng, d, 0, degree, Bump(rng.uniform(lo, hi, d), r_in, r_out)) for _ in range(size)]
