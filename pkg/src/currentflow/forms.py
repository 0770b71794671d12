"""Differential test forms with polynomial coefficients.

A form on R^n is stored as

    omega(x) = sum_m q^(m)(s(x)) * A_m(x),     s(x) = |x - c|^2,

where ``q`` is a C^2 radial cutoff profile (a quintic smoothstep in the
variable ``s``) and each ``A_m`` is a form with polynomial coefficients.
Since ``ds = 2 sum_i (x_i - c_i) dx^i`` is itself polynomial, the exterior
derivative stays inside this class and is computed exactly on
coefficients, so ``d(d(omega))`` cancels term by term.

Space-time test forms ``t^*alpha ^ p^*beta`` live in :class:`TensorForm`;
time coordinate is index 0 of R^{1+d}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Mapping

import numpy as np

from .exterior import KCovector, comass, index_of, multi_indices

__all__ = [
    "Poly",
    "Bump",
    "PolyForm",
    "TimeTest",
    "TensorForm",
    "eval_form",
    "ext_d",
    "wedge_forms",
    "tensor_form",
    "comass_sup",
    "random_poly",
    "random_form",
    "random_time_test",
    "form_panel",
    "tensor_panel",
]


class Poly:
    """Polynomial in n variables, ``{exponent tuple: coefficient}``."""

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: Mapping[tuple, float] | None = None):
        self.n = n
        clean = {}
        for e, c in (terms or {}).items():
            e = tuple(int(v) for v in e)
            if len(e) != n or min(e, default=0) < 0:
                raise ValueError(f"bad exponent {e} for {n} variables")
            if c != 0.0:
                clean[e] = clean.get(e, 0.0) + float(c)
        self.terms = {e: c for e, c in clean.items() if c != 0.0}

    @classmethod
    def const(cls, n, c=1.0):
        return cls(n, {(0,) * n: c})

    @classmethod
    def var(cls, n, i, c=1.0):
        e = [0] * n
        e[i] = 1
        return cls(n, {tuple(e): c})

    def __bool__(self):
        return bool(self.terms)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Poly(self.n, out)

    def __neg__(self):
        return Poly(self.n, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s: float) -> "Poly":
        return Poly(self.n, {e: s * c for e, c in self.terms.items()})

    def __mul__(self, other: "Poly") -> "Poly":
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return Poly(self.n, out)

    def deriv(self, i: int) -> "Poly":
        out = {}
        for e, c in self.terms.items():
            if e[i]:
                f = list(e)
                f[i] -= 1
                out[tuple(f)] = c * e[i]
        return Poly(self.n, out)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        out = np.zeros(len(X))
        if not self.terms:
            return out
        return _eval_monomials(self.terms, _power_table(X, self.degree), out)

    def __repr__(self):
        return f"Poly({self.terms})"


def _power_table(X, degree):
    P = np.empty((degree + 1,) + X.shape)
    P[0] = 1.0
    for j in range(1, degree + 1):
        P[j] = P[j - 1] * X
    return P


def _eval_monomials(terms, P, out):
    n = P.shape[2]
    for e, c in terms.items():
        m = np.full(P.shape[1], c)
        for i in range(n):
            if e[i]:
                m *= P[e[i], :, i]
        out += m
    return out


_SMOOTHSTEP = np.polynomial.Polynomial([0, 0, 0, 10, -15, 6])


@dataclass(frozen=True)
class Bump:
    """Radial C^2 cutoff: 1 inside ``r_in``, 0 outside ``r_out``.

    The profile is a quintic smoothstep in ``s = |x - c|^2``, so that its
    differential stays polynomial.
    """

    center: tuple
    r_in: float
    r_out: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not 0 <= self.r_in < self.r_out:
            raise ValueError("bump radii must satisfy 0 <= r_in < r_out")

    @property
    def n(self):
        return len(self.center)

    def s(self, X):
        d = np.asarray(X, float) - np.asarray(self.center)
        return np.einsum("...i,...i->...", d, d)

    def profile(self, s, order: int = 0) -> np.ndarray:
        """Derivative of the profile with respect to ``s``."""
        s = np.asarray(s, float)
        s_in, s_out = self.r_in ** 2, self.r_out ** 2
        width = s_out - s_in
        u = (s - s_in) / width
        step = _SMOOTHSTEP.deriv(order) if order else _SMOOTHSTEP
        shell = -step(np.clip(u, 0.0, 1.0)) / width ** order
        if order == 0:
            return np.where(u <= 0, 1.0, np.where(u >= 1, 0.0, 1.0 + shell))
        return np.where((u > 0) & (u < 1), shell, 0.0)

    def ds_form(self):
        """Coefficients of ds as a dict index -> Poly."""
        n = self.n
        return {(i,): Poly.var(n, i, 2.0) + Poly.const(n, -2.0 * self.center[i]) for i in range(n)}

    def __call__(self, X):
        return self.profile(self.s(X))


def _wedge_basis(I, J):
    """e^I ^ e^J as (sign, sorted index) or None."""
    if set(I) & set(J):
        return None
    merged = tuple(I) + tuple(J)
    inv = sum(1 for a in range(len(merged)) for b in range(a + 1, len(merged)) if merged[a] > merged[b])
    return (-1.0 if inv % 2 else 1.0), tuple(sorted(merged))


def _add_term(store, I, p):
    if not p:
        return
    cur = store.get(I)
    store[I] = p if cur is None else cur + p
    if not store[I]:
        del store[I]


class PolyForm:
    """k-form with polynomial coefficients, optionally times a radial bump.

    ``terms`` maps a profile-derivative order m to ``{multi-index: Poly}``;
    without a bump only order 0 is allowed.
    """

    def __init__(self, n: int, k: int, terms=None, bump: Bump | None = None):
        if not 0 <= k <= n:
            raise ValueError(f"form degree {k} out of range for n={n}")
        if bump is not None and bump.n != n:
            raise ValueError("bump center dimension mismatch")
        self.n, self.k, self.bump = n, k, bump
        clean: dict = {}
        for m, comp in (terms or {}).items():
            if m and bump is None:
                raise ValueError("profile derivatives need a bump")
            store: dict = {}
            for I, p in comp.items():
                I = tuple(I)
                if len(I) != k:
                    raise ValueError(f"index {I} has wrong length for a {k}-form")
                if len(set(I)) < len(I):
                    continue
                sign, J = _wedge_basis((), I)
                index_of(n, J)
                _add_term(store, J, p.scale(sign) if sign < 0 else p)
            if store:
                clean[int(m)] = store
        self.terms = clean

    @classmethod
    def from_coeffs(cls, n, k, coeffs: Mapping, bump=None):
        """Build from ``{multi-index: Poly | float}`` at profile order 0."""
        comp = {tuple(I): (p if isinstance(p, Poly) else Poly.const(n, p)) for I, p in coeffs.items()}
        return cls(n, k, {0: comp}, bump)

    @property
    def degree(self) -> int:
        return max((p.degree for comp in self.terms.values() for p in comp.values()), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "PolyForm") -> "PolyForm":
        if (self.n, self.k) != (other.n, other.k):
            raise ValueError("form shape mismatch")
        if self.bump != other.bump and not (self.is_zero() or other.is_zero()):
            if self.bump is not None and other.bump is not None:
                raise ValueError("cannot add forms with different bumps")
        bump = self.bump or other.bump
        out: dict = {}
        for src in (self.terms, other.terms):
            for m, comp in src.items():
                store = out.setdefault(m, {})
                for I, p in comp.items():
                    _add_term(store, I, p)
        return PolyForm(self.n, self.k, out, bump)

    def scale(self, s: float) -> "PolyForm":
        return PolyForm(self.n, self.k,
                        {m: {I: p.scale(s) for I, p in comp.items()} for m, comp in self.terms.items()},
                        self.bump)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def evaluate(self, X) -> np.ndarray:
        """Coefficient array of shape ``(N, C(n, k))`` at points ``X``."""
        X = np.atleast_2d(np.asarray(X, float))
        if X.shape[1] != self.n:
            raise ValueError(f"points have dimension {X.shape[1]}, form lives on R^{self.n}")
        out = np.zeros((len(X), comb(self.n, self.k)))
        if self.bump is not None:
            s = self.bump.s(X)
            live = s < self.bump.r_out ** 2
            if not np.any(live):
                return out
            if not np.all(live):
                out[live] = self.evaluate(X[live])
                return out
        P = _power_table(X, self.degree)
        for m, comp in self.terms.items():
            prof = self.bump.profile(s, m) if self.bump is not None else 1.0
            for I, p in comp.items():
                out[:, index_of(self.n, I)] += prof * _eval_monomials(p.terms, P, np.zeros(len(X)))
        return out

    def __call__(self, x) -> KCovector:
        return eval_form(self, x)

    def __repr__(self):
        return f"PolyForm(n={self.n}, k={self.k}, terms={self.terms}, bump={self.bump})"


def eval_form(w: PolyForm, x) -> KCovector:
    """Pointwise value of a form as a k-covector."""
    x = np.asarray(x, float).reshape(-1)
    if x.size != w.n:
        raise ValueError(f"point has dimension {x.size}, form lives on R^{w.n}")
    return KCovector(w.n, w.k, w.evaluate(x[None])[0])


def ext_d(w: PolyForm) -> PolyForm:
    """Exterior derivative, exact on coefficients (product rule through the bump)."""
    n, k = w.n, w.k
    if k >= n:
        raise ValueError(f"d of a top-degree form (k={k}, n={n}) is not a form of this space")
    ds = w.bump.ds_form() if w.bump is not None else None
    out: dict = {}
    for m, comp in w.terms.items():
        for I, p in comp.items():
            for i in range(n):
                hit = _wedge_basis((i,), I)
                if hit is None:
                    continue
                sign, J = hit
                _add_term(out.setdefault(m, {}), J, p.deriv(i).scale(sign))
                if ds is not None:
                    _add_term(out.setdefault(m + 1, {}), J, (ds[(i,)] * p).scale(sign))
    return PolyForm(n, k + 1, {m: c for m, c in out.items() if c}, w.bump)


def wedge_forms(a: PolyForm, b: PolyForm) -> PolyForm:
    """Wedge product; at most one factor may carry a bump."""
    if a.n != b.n:
        raise ValueError("dimension mismatch")
    if a.k + b.k > a.n:
        raise ValueError("grade overflow")
    if a.bump is not None and b.bump is not None:
        raise ValueError("wedge of two bump forms is not representable")
    bump = a.bump or b.bump
    out: dict = {}
    for ma, ca in a.terms.items():
        for mb, cb in b.terms.items():
            m = ma + mb
            for I, p in ca.items():
                for J, r in cb.items():
                    hit = _wedge_basis(I, J)
                    if hit is None:
                        continue
                    sign, K = hit
                    _add_term(out.setdefault(m, {}), K, (p * r).scale(sign))
    return PolyForm(a.n, a.k + b.k, {m: c for m, c in out.items() if c}, bump)


def comass_sup(w: PolyForm, sample_grid=None, box=None, points_per_axis: int = 41, rng=None) -> float:
    """Largest pointwise comass over a sample grid (a lower bound for the sup norm).

    Without an explicit grid the samples span the bump's outer ball, or the
    given bounding ``box = (lo, hi)``.
    """
    if sample_grid is None:
        if box is None:
            if w.bump is None:
                raise ValueError("form without compact support needs a bounding box or grid")
            c, r = np.asarray(w.bump.center), w.bump.r_out
            box = (c - r, c + r)
        lo, hi = (np.broadcast_to(np.asarray(v, float), (w.n,)) for v in box)
        axes = [np.linspace(lo[i], hi[i], points_per_axis) for i in range(w.n)]
        sample_grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, w.n)
    vals = w.evaluate(sample_grid)
    if w.k in (0, 1, w.n - 1, w.n):
        return float(np.max(np.linalg.norm(vals, axis=1)))
    best = 0.0
    for row in vals:
        if np.any(row):
            best = max(best, comass(KCovector(w.n, w.k, row), rng=rng, restarts=8).value)
    return best


@dataclass(frozen=True)
class TimeTest:
    """Scalar time test function psi in C^1_c((0, 1)).

    ``psi(t) = ((t - a)(b - t))^power * P(t) / scale`` on ``[a, b]`` and zero
    elsewhere; ``power=2`` gives a C^1 profile whose second derivative jumps
    at the support ends.
    """

    a: float
    b: float
    power: int = 2
    modulation: tuple = (1.0,)
    _poly: np.polynomial.Polynomial = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 < self.a < self.b < 1.0:
            raise ValueError("time test support must lie strictly inside (0, 1)")
        if self.power < 2:
            raise ValueError("power >= 2 is needed for a C^1 profile")
        P = np.polynomial.Polynomial
        base = (P([-self.a, 1.0]) * P([self.b, -1.0])) ** self.power
        half = ((self.b - self.a) / 2.0) ** (2 * self.power)
        object.__setattr__(self, "_poly", base * P(list(self.modulation)) / half)

    @property
    def support(self):
        return (self.a, self.b)

    def __call__(self, t, order: int = 0) -> np.ndarray:
        t = np.asarray(t, float)
        inside = (t > self.a) & (t < self.b)
        tc = np.clip(t, self.a, self.b)
        if order == 0:
            # factored form: no cancellation near the support ends
            half = ((self.b - self.a) / 2.0) ** (2 * self.power)
            mod = np.polynomial.Polynomial(list(self.modulation))(tc)
            return np.where(inside, ((tc - self.a) * (self.b - tc)) ** self.power * mod / half, 0.0)
        return np.where(inside, self._poly.deriv(order)(tc), 0.0)

    def deriv(self, t):
        return self(t, 1)

    def integral_of_derivative(self) -> float:
        """psi(b) - psi(a) from the profile; zero because psi vanishes at both ends."""
        return float(self(self.b) - self(self.a))


@dataclass(frozen=True)
class _TensorTerm:
    coef: float
    time_degree: int  # 0: psi^(order)(t); 1: psi^(order)(t) dt
    order: int
    beta: PolyForm


class TensorForm:
    """Sum of space-time forms ``c * t^*(psi^(o) [dt]) ^ p^*beta`` on R^{1+d}."""

    def __init__(self, psi: TimeTest, terms, d: int, k: int):
        self.psi, self.terms, self.d, self.k = psi, tuple(terms), d, k
        for term in self.terms:
            if term.time_degree + term.beta.k != k or term.beta.n != d:
                raise ValueError("inconsistent tensor form term")

    @property
    def n(self):
        return self.d + 1

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        if X.shape[1] != self.n:
            raise ValueError(f"space-time points must have dimension {self.n}")
        t, x = X[:, 0], X[:, 1:]
        out = np.zeros((len(X), comb(self.n, self.k)))
        for term in self.terms:
            if term.beta.is_zero():
                continue
            tf = term.coef * self.psi(t, term.order)
            live = tf != 0.0
            if not np.any(live):
                continue
            bvals = np.zeros((len(X), comb(self.d, term.beta.k)))
            bvals[live] = term.beta.evaluate(x[live])
            for j, I in enumerate(multi_indices(self.d, term.beta.k)):
                J = tuple(i + 1 for i in I)
                if term.time_degree:
                    J = (0,) + J
                out[:, index_of(self.n, J)] += tf * bvals[:, j]
        return out

    def ext_d(self) -> "TensorForm":
        """d(t^*a ^ p^*b) = t^*da ^ p^*b + (-1)^deg(a) t^*a ^ p^*db."""
        if self.k >= self.n:
            raise ValueError("top-degree form has no differential here")
        out = []
        for term in self.terms:
            if term.time_degree == 0:
                out.append(_TensorTerm(term.coef, 1, term.order + 1, term.beta))
            if term.beta.k < self.d:
                sign = -1.0 if term.time_degree else 1.0
                out.append(_TensorTerm(sign * term.coef, term.time_degree, term.order, ext_d(term.beta)))
        return TensorForm(self.psi, out, self.d, self.k + 1)

    def __neg__(self):
        return TensorForm(self.psi, [_TensorTerm(-t.coef, t.time_degree, t.order, t.beta) for t in self.terms],
                          self.d, self.k)


def tensor_form(psi: TimeTest, beta: PolyForm, time_degree: int = 0, order: int = 0) -> TensorForm:
    """``t^*alpha ^ p^*beta`` with alpha = psi^(order) (0-form) or psi^(order) dt (1-form)."""
    if time_degree not in (0, 1):
        raise ValueError("time factor must be a 0-form or a 1-form")
    return TensorForm(psi, [_TensorTerm(1.0, time_degree, order, beta)], beta.n, beta.k + time_degree)


def random_poly(rng, n: int, degree: int) -> Poly:
    terms = {}
    for total in range(degree + 1):
        for e in _exponents(n, total):
            terms[e] = rng.uniform(-1.0, 1.0)
    return Poly(n, terms)


def _exponents(n, total):
    if n == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _exponents(n - 1, total - first):
            yield (first,) + rest


def random_form(seed, n: int, k: int, degree: int = 3, bump: Bump | None = None) -> PolyForm:
    """Library form addressed by ``(seed, n, k, degree)``: coefficients uniform in [-1, 1]."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    comp = {I: random_poly(rng, n, degree) for I in multi_indices(n, k)}
    return PolyForm(n, k, {0: comp}, bump)


def random_time_test(rng, grid_step: float = 0.1, min_width: float = 0.3) -> TimeTest:
    """Time test with support endpoints on multiples of ``grid_step``."""
    slots = int(round(1.0 / grid_step))
    width_slots = max(1, int(np.ceil(min_width / grid_step - 1e-12)))
    a = int(rng.integers(1, slots - width_slots))
    b = int(rng.integers(a + width_slots, slots))
    mod = (1.0, float(rng.uniform(-1, 1)))
    return TimeTest(a * grid_step, b * grid_step, 2, mod)


def form_panel(seed, n: int, k: int, size: int, degree: int = 3, center_box=(-1.0, 1.0),
               r_in: float = 0.5, r_out: float = 1.5) -> list[PolyForm]:
    """Seeded panel of bump-supported library forms."""
    rng = np.random.default_rng(seed)
    lo, hi = center_box
    return [random_form(rng, n, k, degree, Bump(rng.uniform(lo, hi, n), r_in, r_out)) for _ in range(size)]


def tensor_panel(seed, d: int, k: int, size: int, **kw) -> list[TensorForm]:
    """Tensor forms of total degree k on R^{1+d}, alternating both degree splits."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(size):
        tdeg = i % 2 if k >= 1 else 0
        if k - tdeg > d:
            tdeg = 1
        psi = random_time_test(rng)
        beta = form_panel(int(rng.integers(2 ** 31)), d, k - tdeg, 1, **kw)[0]
        out.append(tensor_form(psi, beta, tdeg))
    return out
