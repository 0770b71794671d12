"""Exterior algebra over R^n with dense coefficients.

k-vectors and k-covectors are stored on the lexicographically ordered
multi-indices ``(i_1 < ... < i_k)`` of ``{0, ..., n-1}``.  The basis
``e_I`` is orthonormal, and ``e^I`` is its dual basis, so the duality
pairing is the Euclidean dot product of coefficient arrays.

Most heavy lifting is done on raw coefficient arrays (``wedge_coeffs``,
``compound``) so that currents with thousands of atoms can be processed
in one vectorized call; the ``KVector``/``KCovector`` classes are thin
immutable wrappers for single elements.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
from scipy.optimize import linprog

MAX_DIM = 16
RANK_RTOL = 1e-10

__all__ = [
    "MAX_DIM",
    "multi_indices",
    "index_of",
    "KVector",
    "KCovector",
    "LinearMap",
    "NormEstimate",
    "wedge",
    "wedge_coeffs",
    "pair",
    "compound",
    "push_linear",
    "pull_linear",
    "span_of",
    "contraction_matrix",
    "simple_coeffs",
    "comass",
    "mass_norm",
    "is_simple",
]


def _check_dim(n, k):
    if not 0 < n <= MAX_DIM:
        raise ValueError(f"ambient dimension must be in 1..{MAX_DIM}, got {n}")
    if not 0 <= k <= n:
        raise ValueError(f"grade must satisfy 0 <= k <= n, got k={k}, n={n}")


@lru_cache(maxsize=None)
def multi_indices(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """Strictly increasing k-tuples of ``range(n)`` in lexicographic order."""
    _check_dim(n, k)
    return tuple(itertools.combinations(range(n), k))


@lru_cache(maxsize=None)
def _position(n, k):
    return {idx: i for i, idx in enumerate(multi_indices(n, k))}


def index_of(n: int, idx) -> int:
    """Position of the multi-index ``idx`` in the lexicographic basis."""
    idx = tuple(idx)
    if any(a >= b for a, b in zip(idx, idx[1:])):
        raise ValueError(f"multi-index must be strictly increasing: {idx}")
    try:
        return _position(n, len(idx))[idx]
    except KeyError:
        raise ValueError(f"multi-index {idx} out of range for n={n}") from None


def _perm_sign(seq):
    # parity by counting inversions; sequences are short
    inv = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inv += 1
    return -1.0 if inv % 2 else 1.0


@lru_cache(maxsize=None)
def _wedge_tensor(n, j, k):
    """Dense structure constants W[a, b, c] with e_A ^ e_B = sum_c W e_C."""
    if j + k > n:
        raise ValueError(f"grade overflow: {j} + {k} > {n}")
    left, right = multi_indices(n, j), multi_indices(n, k)
    pos = _position(n, j + k)
    W = np.zeros((len(left), len(right), comb(n, j + k)))
    for a, A in enumerate(left):
        sa = set(A)
        for b, B in enumerate(right):
            if sa.intersection(B):
                continue
            merged = A + B
            W[a, b, pos[tuple(sorted(merged))]] = _perm_sign(merged)
    W.setflags(write=False)
    return W


def wedge_coeffs(a, b, n: int, j: int, k: int) -> np.ndarray:
    """Wedge product on coefficient arrays, broadcasting over leading axes."""
    W = _wedge_tensor(n, j, k)
    return np.einsum("...a,...b,abc->...c", np.asarray(a, float), np.asarray(b, float), W)


@lru_cache(maxsize=None)
def _minor_rows(n, k):
    return np.array(multi_indices(n, k), dtype=int).reshape(-1, k)


def compound(S, k: int) -> np.ndarray:
    """k-th compound matrix of S (the matrix of Lambda^k S).

    ``S`` may carry leading batch axes, shape ``(..., m, n)``.  The result has
    shape ``(..., C(m, k), C(n, k))`` with entry ``det S[I, J]``.
    """
    S = np.asarray(S, dtype=float)
    m, n = S.shape[-2:]
    batch = S.shape[:-2]
    if k == 0:
        return np.ones(batch + (1, 1))
    if k == 1:
        return S.copy()
    rows, cols = _minor_rows(m, k), _minor_rows(n, k)
    sub = S[..., rows[:, None, :, None], cols[None, :, None, :]]
    return np.linalg.det(sub)


def simple_coeffs(frame) -> np.ndarray:
    """Coefficients of ``v_1 ^ ... ^ v_k`` for frames of shape ``(..., n, k)``."""
    frame = np.asarray(frame, dtype=float)
    return compound(frame, frame.shape[-1])[..., 0]


class _Graded:
    """Shared storage for k-vectors and k-covectors."""

    __slots__ = ("n", "k", "coeffs")

    def __init__(self, n: int, k: int, coeffs=None):
        _check_dim(n, k)
        size = comb(n, k)
        if coeffs is None:
            arr = np.zeros(size)
        else:
            arr = np.array(coeffs, dtype=float).reshape(-1)
            if arr.size != size:
                raise ValueError(f"expected {size} coefficients for (n={n}, k={k}), got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("coefficients must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    @classmethod
    def basis(cls, n: int, idx):
        """Basis element for the 0-based multi-index ``idx``."""
        idx = tuple(idx)
        out = np.zeros(comb(n, len(idx)))
        out[index_of(n, idx)] = 1.0
        return cls(n, len(idx), out)

    @classmethod
    def zero(cls, n: int, k: int):
        return cls(n, k)

    @classmethod
    def from_dict(cls, data: dict):
        return cls(int(data["n"]), int(data["k"]), data["coeffs"])

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "coeffs": [float(c) for c in self.coeffs]}

    def norm(self) -> float:
        """Euclidean norm of the coefficient vector."""
        return float(np.linalg.norm(self.coeffs))

    def terms(self):
        return {I: float(c) for I, c in zip(multi_indices(self.n, self.k), self.coeffs) if c != 0.0}

    def _same(self, other):
        if type(other) is not type(self):
            return False
        if (other.n, other.k) != (self.n, self.k):
            raise ValueError(
                f"shape mismatch: (n={self.n}, k={self.k}) vs (n={other.n}, k={other.k})"
            )
        return True

    def __add__(self, other):
        if not self._same(other):
            return NotImplemented
        return type(self)(self.n, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other):
        if not self._same(other):
            return NotImplemented
        return type(self)(self.n, self.k, self.coeffs - other.coeffs)

    def __neg__(self):
        return type(self)(self.n, self.k, -self.coeffs)

    def __mul__(self, s):
        if isinstance(s, _Graded):
            return NotImplemented
        return type(self)(self.n, self.k, float(s) * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, s):
        return type(self)(self.n, self.k, self.coeffs / float(s))

    def __xor__(self, other):
        return wedge(self, other)

    def allclose(self, other, atol=1e-12) -> bool:
        return self._same(other) and bool(np.allclose(self.coeffs, other.coeffs, rtol=0, atol=atol))

    def __repr__(self):
        name = "e" if isinstance(self, KVector) else "e^"
        parts = [f"{c:+.6g}*{name}{''.join(str(i + 1) for i in I) or '()'}" for I, c in self.terms().items()]
        return f"{type(self).__name__}(n={self.n}, k={self.k}: {' '.join(parts) or '0'})"


class KVector(_Graded):
    """Element of Lambda_k R^n."""

    __slots__ = ()


class KCovector(_Graded):
    """Element of Lambda^k R^n (dual basis e^I)."""

    __slots__ = ()


@dataclass(frozen=True)
class LinearMap:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("linear map must be a 2-d matrix")
        if not np.all(np.isfinite(m)):
            raise ValueError("linear map entries must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_in(self):
        return self.matrix.shape[1]

    @property
    def n_out(self):
        return self.matrix.shape[0]

    def __matmul__(self, other: "LinearMap") -> "LinearMap":
        return LinearMap(self.matrix @ other.matrix)


def _as_matrix(S):
    return S.matrix if isinstance(S, LinearMap) else np.asarray(S, dtype=float)


def wedge(a, b):
    """Exterior product of two k-vectors (or two k-covectors)."""
    if type(a) is not type(b) or not isinstance(a, _Graded):
        raise TypeError("wedge needs two KVectors or two KCovectors")
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    if a.k + b.k > a.n:
        raise ValueError(f"grade overflow: {a.k} + {b.k} > {a.n}")
    return type(a)(a.n, a.k + b.k, wedge_coeffs(a.coeffs, b.coeffs, a.n, a.k, b.k))


def pair(v: KVector, a: KCovector) -> float:
    """Duality pairing <v, a>."""
    if not isinstance(v, KVector) or not isinstance(a, KCovector):
        raise TypeError("pair expects (KVector, KCovector)")
    if (v.n, v.k) != (a.n, a.k):
        raise ValueError(f"shape mismatch: (n={v.n}, k={v.k}) vs (n={a.n}, k={a.k})")
    return float(v.coeffs @ a.coeffs)


def push_linear(S, v: KVector) -> KVector:
    """Lambda^k S applied to v."""
    M = _as_matrix(S)
    if M.shape[1] != v.n:
        raise ValueError(f"map input dimension {M.shape[1]} != vector dimension {v.n}")
    return KVector(M.shape[0], v.k, compound(M, v.k) @ v.coeffs)


def pull_linear(S, a: KCovector) -> KCovector:
    """Pullback S^* a, defined by <v, S^* a> = <Lambda^k S v, a>."""
    M = _as_matrix(S)
    if M.shape[0] != a.n:
        raise ValueError(f"map output dimension {M.shape[0]} != covector dimension {a.n}")
    return KCovector(M.shape[1], a.k, compound(M, a.k).T @ a.coeffs)


def contraction_matrix(coeffs, n: int, k: int) -> np.ndarray:
    """Matrix with entries <v, e^i ^ e^J>, rows i in range(n), columns J of grade k-1.

    Its column space is span(v).
    """
    W = _wedge_tensor(n, 1, k - 1)
    return np.einsum("iJc,c->iJ", W, np.asarray(coeffs, float))


def span_of(v) -> np.ndarray:
    """Orthonormal basis (as columns, shape ``(n, r)``) of the span of v."""
    if v.k == 0:
        raise ValueError("span of a 0-vector is not defined here")
    if not np.any(v.coeffs):
        raise ValueError("span of the zero vector is not defined")
    C = contraction_matrix(v.coeffs, v.n, v.k)
    U, s, _ = np.linalg.svd(C, full_matrices=False)
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    return U[:, :rank]


def is_simple(v) -> bool:
    if v.k in (0, 1, v.n - 1, v.n) or not np.any(v.coeffs):
        return True
    return span_of(v).shape[1] == v.k


@dataclass(frozen=True)
class NormEstimate:
    """Outcome of a mass or comass computation.

    ``value`` is the reported norm.  For comass it is the best objective
    found, hence a lower bound.  For mass it is the dual lower bound
    ``<eta, alpha> / comass(alpha)``; ``upper`` is the value of an explicit
    decomposition into simple vectors.
    """

    value: float
    agreement: int = 0
    restarts: int = 0
    converged: bool = True
    exact: bool = False
    upper: float = float("nan")
    frame: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __float__(self):
        return self.value


def _rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(0 if rng is None else rng)


def _random_frames(rng, R, n, k):
    Q, _ = np.linalg.qr(rng.standard_normal((R, n, k)))
    return Q


def _frame_ascent(alpha, n, k, frames, rtol, max_sweeps):
    """Block coordinate ascent of <v_1^...^v_k, alpha> over orthonormal frames.

    Each column update maximizes the (linear) objective in that column over
    unit vectors orthogonal to the remaining ones, so the objective never
    decreases.  Restarts are frozen individually once their relative
    improvement per sweep drops below ``rtol``.
    """
    M = np.einsum("iJc,c->iJ", _wedge_tensor(n, 1, k - 1), alpha)
    V = frames.copy()
    f = simple_coeffs(V) @ alpha
    active = np.arange(len(V))
    for _ in range(max_sweeps):
        X = V[active]
        for j in range(k):
            others = np.delete(X, j, axis=2)
            g = (-1.0) ** j * (simple_coeffs(others) @ M.T)
            g -= np.einsum("rik,rk->ri", others, np.einsum("rik,ri->rk", others, g))
            norm = np.linalg.norm(g, axis=1)
            ok = norm > 0
            X[ok, :, j] = g[ok] / norm[ok, None]
        # re-orthonormalize against drift; QR keeps column order and spans
        Q, Rm = np.linalg.qr(X)
        X = Q * np.sign(np.diagonal(Rm, axis1=1, axis2=2))[:, None, :]
        V[active] = X
        f_new = simple_coeffs(X) @ alpha
        still = f_new - f[active] > rtol * np.maximum(np.abs(f_new), 1e-300)
        f[active] = f_new
        active = active[still]
        if active.size == 0:
            return V, f, True
    return V, f, False


@lru_cache(maxsize=None)
def _hodge_table(n, k):
    # e_I -> sign * e_{I^c}; an isometry taking unit simple vectors to unit simple vectors
    pos = _position(n, n - k)
    perm = np.empty(comb(n, k), dtype=int)
    sign = np.empty(comb(n, k))
    for i, I in enumerate(multi_indices(n, k)):
        Ic = tuple(j for j in range(n) if j not in I)
        perm[i] = pos[Ic]
        sign[i] = _perm_sign(I + Ic)
    return perm, sign


def _hodge(coeffs, n, k):
    perm, sign = _hodge_table(n, k)
    out = np.empty(comb(n, n - k))
    out[perm] = sign * coeffs
    return out


def _skew_spectrum(coeffs, n, k):
    """Normal-form magnitudes of a grade-2 (or grade n-2) element.

    A 2-vector is orthogonally equivalent to sum_j lam_j e_{2j-1, 2j}; the
    lam_j are the singular values of its skew matrix, each appearing twice.
    """
    if k == n - 2 and k != 2:
        coeffs, k = _hodge(coeffs, n, k), 2
    A = np.zeros((n, n))
    for c, (i, j) in zip(coeffs, multi_indices(n, 2)):
        A[i, j], A[j, i] = c, -c
    s = np.linalg.svd(A, compute_uv=False)
    return s[0::2][: n // 2]


def _has_closed_form(n, k):
    return k in (0, 1, 2, n - 2, n - 1, n)


def comass(alpha: KCovector, rng=None, restarts: int = 64, rtol: float = 1e-10,
           max_sweeps: int = 5000, agree_rtol: float = 1e-6, warm=None,
           method: str = "auto") -> NormEstimate:
    """Comass of a k-covector: sup of <xi, alpha> over unit simple k-vectors xi.

    Grades 0, 1, n-1 and n are handled in closed form (every element is
    simple there), as are grades 2 and n-2 with ``method="auto"`` (largest
    normal-form coefficient).  Otherwise a multi-start ascent over
    orthonormal frames is run; the result is a certified lower bound
    together with the number of restarts that reached it.
    """
    n, k, a = alpha.n, alpha.k, alpha.coeffs
    if method not in ("auto", "numeric"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto" and k in (2, n - 2) and k not in (0, 1, n - 1, n) and np.any(a):
        val = float(_skew_spectrum(a, n, k)[0])
        return NormEstimate(val, restarts, restarts, True, True, val)
    if k in (0, 1, n - 1, n) or not np.any(a):
        frame = None
        if k == 1 and np.any(a):
            frame = (a / np.linalg.norm(a))[:, None]
        return NormEstimate(float(np.linalg.norm(a)), restarts, restarts, True, True,
                            float(np.linalg.norm(a)), frame)
    gen = _rng(rng)
    frames = _random_frames(gen, restarts, n, k)
    if warm is not None:
        warm = np.asarray(warm, float).reshape(-1, n, k)
        frames = np.concatenate([warm, frames[len(warm):]]) if len(warm) < restarts else warm
    V, vals, converged = _frame_ascent(a, n, k, frames, rtol, max_sweeps)
    best = int(np.argmax(vals))
    top = float(vals[best])
    agree = int(np.sum(vals >= top - agree_rtol * max(abs(top), 1e-300)))
    return NormEstimate(top, agree, len(vals), converged, False, float("nan"), V[best])


def mass_norm(eta: KVector, rng=None, restarts: int = 64, rtol: float = 1e-7,
              max_iter: int = 300, inner_restarts: int = 16, method: str = "auto") -> NormEstimate:
    """Mass norm: sup of <eta, alpha> over covectors of comass at most one.

    Simple vectors (detected through the rank of span_of) have mass equal to
    their Euclidean norm, and grades 2 and n-2 use the sum of normal-form
    coefficients unless ``method="numeric"``.  Otherwise a cutting-plane scheme alternates a
    linear program over a growing set of unit simple vectors with comass
    evaluations of the LP maximizer; each comass call either certifies the
    current covector or returns violated simple directions to add as cuts.

    The LP value over any finite cut set bounds the mass from above (its
    dual is an explicit decomposition into simple vectors); the comass of
    the LP maximizer gives the lower bound reported as ``value``.
    """
    n, k, e = eta.n, eta.k, eta.coeffs
    if method not in ("auto", "numeric"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto" and k in (2, n - 2) and np.any(e):
        val = float(np.sum(_skew_spectrum(e, n, k)))
        return NormEstimate(val, restarts, restarts, True, True, val)
    if is_simple(eta):
        val = float(np.linalg.norm(e))
        return NormEstimate(val, restarts, restarts, True, True, val)
    gen = _rng(rng)
    size = e.size
    cuts = [np.eye(size), simple_coeffs(_random_frames(gen, 4 * size, n, k))]
    lower, upper, best_alpha = 0.0, np.inf, None
    warm = None
    converged = False
    agree = 0
    for _ in range(max_iter):
        A = np.concatenate(cuts)
        res = linprog(-e, A_ub=np.concatenate([A, -A]), b_ub=np.ones(2 * len(A)),
                      bounds=[(None, None)] * size, method="highs")
        if res.status != 0:
            break
        alpha = res.x
        upper = min(upper, -res.fun)
        V, vals = _ascent_all(alpha, n, k, gen, inner_restarts, warm)
        top = float(vals.max())
        if upper - float(e @ alpha) / top <= rtol * upper:
            # candidate optimum: certify with the full restart budget
            cert = comass(KCovector(n, k, alpha), rng=gen, restarts=restarts,
                          warm=V[np.argmax(vals)][None], method="numeric")
            agree = cert.agreement
            if cert.value <= top * (1 + 1e-12):
                lower, best_alpha = float(e @ alpha) / cert.value, alpha
                converged = True
                break
            V, vals = cert.frame[None], np.array([cert.value])
            top = cert.value
        cand = float(e @ alpha) / top
        if cand > lower:
            lower, best_alpha = cand, alpha
        violated = vals > 1.0 + 1e-12
        warm = V[np.argsort(vals)[::-1][: max(1, inner_restarts // 4)]]
        cuts.append(simple_coeffs(V[violated]))
    if not converged and best_alpha is not None:
        cert = comass(KCovector(n, k, best_alpha), rng=gen, restarts=restarts, method="numeric")
        lower, agree = float(e @ best_alpha) / cert.value, cert.agreement
    return NormEstimate(lower, agree, restarts, converged, False, upper,
                        None if best_alpha is None else np.asarray(best_alpha))


def _ascent_all(alpha, n, k, gen, restarts, warm):
    frames = _random_frames(gen, restarts, n, k)
    if warm is not None:
        frames[: len(warm)] = warm
    V, vals, _ = _frame_ascent(alpha, n, k, frames, 1e-9, 300)
    return V, vals
