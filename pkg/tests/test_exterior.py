import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from currentflow import exterior as ex
from currentflow.exterior import KCovector, KVector, comass, mass_norm, pair, wedge


def e(n, *idx):
    return KVector.basis(n, [i - 1 for i in idx])


def ec(n, *idx):
    return KCovector.basis(n, [i - 1 for i in idx])


# ---- oracles -------------------------------------------------------------

def frame_sampling_comass(alpha, samples, rng):
    """Brute force: best <v_1 ^ ... ^ v_k, alpha> over random orthonormal frames."""
    n, k = alpha.n, alpha.k
    Q, _ = np.linalg.qr(rng.standard_normal((samples, n, k)))
    return float(np.max(ex.simple_coeffs(Q) @ alpha.coeffs))


def leibniz_det_pair(vectors, covectors):
    """<v_1 ^ ... ^ v_k, a_1 ^ ... ^ a_k> = det(a_i(v_j))."""
    return float(np.linalg.det(np.asarray(covectors) @ np.asarray(vectors).T))


# ---- multi-indices and storage ---------------------------------------------

def test_multi_indices_lexicographic():
    assert ex.multi_indices(4, 2) == ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
    assert ex.index_of(4, (1, 3)) == 4


def test_dimension_guard():
    with pytest.raises(ValueError):
        KVector(17, 1)
    with pytest.raises(ValueError):
        KVector(3, 4)


def test_coefficient_length_checked():
    with pytest.raises(ValueError):
        KVector(3, 2, [1.0, 2.0])


def test_debug_dump_roundtrip():
    v = 2 * e(4, 1, 2) + 3 * e(4, 3, 4)
    d = v.to_dict()
    assert d == {"n": 4, "k": 2, "coeffs": [2.0, 0.0, 0.0, 0.0, 0.0, 3.0]}
    assert KVector.from_dict(d).allclose(v)


# ---- wedge ----------------------------------------------------------------

def test_wedge_basis():
    assert wedge(e(2, 1), e(2, 2)).allclose(e(2, 1, 2))


def test_wedge_alternation():
    assert wedge(e(3, 1), e(3, 1)).allclose(KVector.zero(3, 2))


def test_wedge_bilinear_alternation():
    assert wedge(e(2, 1) + e(2, 2), e(2, 2)).allclose(e(2, 1, 2))


def test_wedge_sign_convention():
    assert wedge(e(2, 2), e(2, 1)).allclose(-e(2, 1, 2))


def test_wedge_grade_overflow_rejected():
    with pytest.raises(ValueError):
        wedge(e(3, 1, 2), e(3, 2, 3))


def test_wedge_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        wedge(e(3, 1), e(4, 1))


def test_wedge_matches_determinant_oracle():
    rng = np.random.default_rng(0)
    for n, k in [(3, 2), (4, 2), (5, 3), (6, 3)]:
        V = rng.standard_normal((k, n))
        A = rng.standard_normal((k, n))
        v = KVector(n, 1, V[0])
        a = KCovector(n, 1, A[0])
        for i in range(1, k):
            v = v ^ KVector(n, 1, V[i])
            a = a ^ KCovector(n, 1, A[i])
        assert pair(v, a) == pytest.approx(leibniz_det_pair(V, A), abs=1e-12)


grades = st.integers(2, 6).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, n)).flatmap(
        lambda t: st.tuples(st.just(t[0]), st.just(t[1]), st.integers(0, t[0] - t[1]),
                            st.integers(0, 2 ** 31))))


@settings(max_examples=60, deadline=None)
@given(grades)
def test_wedge_graded_anticommutative(args):
    n, j, k, seed = args
    rng = np.random.default_rng(seed)
    a = KVector(n, j, rng.standard_normal(math.comb(n, j)))
    b = KVector(n, k, rng.standard_normal(math.comb(n, k)))
    assert np.max(np.abs((a ^ b).coeffs - (-1) ** (j * k) * (b ^ a).coeffs), initial=0) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2 ** 31))
def test_wedge_associative(n, seed):
    rng = np.random.default_rng(seed)
    j = int(rng.integers(0, n + 1))
    k = int(rng.integers(0, n - j + 1))
    m = int(rng.integers(0, n - j - k + 1))
    a, b, c = (KVector(n, g, rng.standard_normal(math.comb(n, g))) for g in (j, k, m))
    assert np.max(np.abs(((a ^ b) ^ c).coeffs - (a ^ (b ^ c)).coeffs), initial=0) <= 1e-12


# ---- pairing ----------------------------------------------------------------

def test_pair_examples():
    assert pair(e(2, 1, 2), ec(2, 1, 2)) == 1.0
    assert pair(e(3, 1, 2), ec(3, 1, 3)) == 0.0
    assert pair(2 * e(4, 1, 2) + 3 * e(4, 3, 4), ec(4, 3, 4)) == 3.0


def test_pair_mismatch_rejected():
    with pytest.raises(ValueError):
        pair(e(3, 1, 2), ec(3, 1))
    with pytest.raises(TypeError):
        pair(ec(3, 1), e(3, 1))


# ---- wedges against orthogonal factors -------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_wedge_pair_factorizes_when_alpha_kills_span(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    k = int(rng.integers(1, min(3, n - 1) + 1))
    m = int(rng.integers(k, n))
    B = rng.standard_normal((n, m))
    sigma = KVector(n, k, sum(ex.simple_coeffs(B @ rng.standard_normal((m, k))) for _ in range(2)))
    Q = ex.span_of(sigma)
    a = rng.standard_normal(n)
    a -= Q @ (Q.T @ a)
    alpha = KCovector(n, 1, a)
    tau = KVector(n, 1, rng.standard_normal(n))
    beta = KCovector(n, k, rng.standard_normal(math.comb(n, k)))
    lhs = pair(tau ^ sigma, alpha ^ beta)
    assert abs(lhs - pair(tau, alpha) * pair(sigma, beta)) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_wedge_pair_vanishes_for_tau_orthogonal_to_span_alpha(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 7))
    k = int(rng.integers(1, min(3, n - 2) + 1))
    alpha = KCovector(n, k + 1, ex.simple_coeffs(rng.standard_normal((n, k + 1))))
    Q = ex.span_of(alpha)
    v = rng.standard_normal(n)
    v -= Q @ (Q.T @ v)
    sigma = KVector(n, k, rng.standard_normal(math.comb(n, k)))
    assert abs(pair(KVector(n, 1, v) ^ sigma, alpha)) <= 1e-10


def test_factorization_fails_without_orthogonality():
    # the hypothesis matters: alpha = e^1 does not vanish on span(e_1)
    tau, sigma = e(2, 2), e(2, 1)
    alpha, beta = ec(2, 1), ec(2, 2)
    assert pair(tau ^ sigma, alpha ^ beta) == -1.0
    assert pair(tau, alpha) * pair(sigma, beta) == 0.0


# ---- push / pull --------------------------------------------------------------

def test_push_identity():
    v = KVector(4, 2, np.arange(6.0))
    assert ex.push_linear(np.eye(4), v).allclose(v)


def test_push_diag_scales_by_determinant():
    assert ex.push_linear(np.diag([2.0, 3.0]), e(2, 1, 2)).allclose(6 * e(2, 1, 2))


def test_push_rotation_preserves_plane_area():
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1]])
    assert ex.push_linear(R, e(3, 1, 2)).allclose(e(3, 1, 2))


def test_push_on_simple_is_wedge_of_images():
    rng = np.random.default_rng(3)
    S = rng.standard_normal((5, 4))
    V = rng.standard_normal((4, 3))
    lhs = ex.push_linear(S, KVector(4, 3, ex.simple_coeffs(V)))
    assert np.allclose(lhs.coeffs, ex.simple_coeffs(S @ V), atol=1e-12)


def test_push_functorial():
    rng = np.random.default_rng(4)
    S, T = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    v = KVector(4, 2, rng.standard_normal(6))
    assert ex.push_linear(S @ T, v).allclose(ex.push_linear(S, ex.push_linear(T, v)), atol=1e-12)


def test_pull_examples():
    a = ec(2, 1, 2)
    assert ex.pull_linear(np.eye(2), a).allclose(a)
    assert ex.pull_linear(np.diag([2.0, 3.0]), a).allclose(6 * a)


def test_pull_adjoint_on_basis():
    rng = np.random.default_rng(5)
    for n, k in [(3, 1), (3, 2), (4, 2), (5, 3)]:
        S = rng.standard_normal((n, n))
        worst = 0.0
        for I in ex.multi_indices(n, k):
            for J in ex.multi_indices(n, k):
                v, a = KVector.basis(n, I), KCovector.basis(n, J)
                worst = max(worst, abs(pair(v, ex.pull_linear(S, a)) - pair(ex.push_linear(S, v), a)))
        assert worst <= 1e-12


def test_push_dimension_mismatch():
    with pytest.raises(ValueError):
        ex.push_linear(np.eye(3), e(2, 1))


# ---- span ------------------------------------------------------------------

def test_span_of_basis_plane():
    Q = ex.span_of(e(3, 1, 2))
    assert Q.shape == (3, 2)
    P = Q @ Q.T
    assert np.allclose(P, np.diag([1.0, 1.0, 0.0]), atol=1e-12)


def test_span_of_non_simple_is_four_dimensional():
    assert ex.span_of(e(4, 1, 2) + e(4, 3, 4)).shape[1] == 4
    assert not ex.is_simple(e(4, 1, 2) + e(4, 3, 4))


def test_span_of_simple_contains_factors():
    v = (e(3, 1) + e(3, 2)) ^ e(3, 3)
    Q = ex.span_of(v)
    assert Q.shape[1] == 2
    for w in (np.array([0, 0, 1.0]), np.array([1.0, 1.0, 0]) / np.sqrt(2)):
        assert np.linalg.norm(Q @ (Q.T @ w) - w) <= 1e-12


def test_span_of_zero_rejected():
    with pytest.raises(ValueError):
        ex.span_of(KVector.zero(3, 2))


# ---- comass / mass --------------------------------------------------------------

def test_comass_examples():
    assert comass(ec(4, 1, 2)).value == pytest.approx(1.0)
    assert comass(2 * ec(4, 1, 2)).value == pytest.approx(2.0)


def test_comass_e12_plus_e34_against_frame_sampling():
    alpha = ec(4, 1, 2) + ec(4, 3, 4)
    rng = np.random.default_rng(0)
    oracle = frame_sampling_comass(alpha, 200_000, rng)
    val = comass(alpha, rng).value
    assert abs(val - 1.0) <= 1e-3
    # sampling never exceeds the reported value and approaches it
    assert oracle <= val + 1e-12
    assert oracle >= 1.0 - 5e-3


def test_comass_numeric_route_matches_closed_form():
    rng = np.random.default_rng(1)
    for _ in range(5):
        a = KCovector(5, 2, rng.standard_normal(10))
        closed = comass(a, rng).value
        numeric = comass(a, rng, method="numeric").value
        assert numeric == pytest.approx(closed, rel=1e-8)


def test_comass_numeric_grade_three_in_six_against_sampling():
    rng = np.random.default_rng(2)
    a = KCovector(6, 3, rng.standard_normal(20))
    est = comass(a, rng)
    assert not est.exact
    assert frame_sampling_comass(a, 50_000, rng) <= est.value + 1e-12
    assert est.agreement >= 2


def test_mass_examples():
    assert mass_norm(e(4, 1, 2)).value == pytest.approx(1.0)
    assert mass_norm(KVector.zero(4, 2)).value == 0.0
    assert mass_norm(e(4, 1, 2) + e(4, 3, 4)).value == pytest.approx(2.0, abs=1e-3)


def test_mass_e12_plus_e34_numeric_route():
    rng = np.random.default_rng(3)
    est = mass_norm(e(4, 1, 2) + e(4, 3, 4), rng, method="numeric")
    assert est.value == pytest.approx(2.0, abs=1e-3)
    assert est.upper >= est.value - 1e-9


def test_mass_lower_bounds():
    rng = np.random.default_rng(4)
    for n, k in [(4, 2), (5, 2), (5, 3), (6, 2)]:
        v = KVector(n, k, rng.standard_normal(math.comb(n, k)))
        m = mass_norm(v, rng).value
        assert m >= v.norm() / math.sqrt(math.comb(n, k)) - 1e-12
        assert m >= v.norm() - 1e-12  # mass dominates the Euclidean norm


def test_mass_numeric_matches_closed_form_grade_two():
    rng = np.random.default_rng(5)
    v = KVector(4, 2, rng.standard_normal(6))
    assert mass_norm(v, rng, method="numeric").value == pytest.approx(mass_norm(v).value, rel=1e-6)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2 ** 31))
def test_cauchy_schwarz_mass_comass(n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, n))
    v = KVector(n, k, rng.standard_normal(math.comb(n, k)))
    a = KCovector(n, k, rng.standard_normal(math.comb(n, k)))
    assert abs(pair(v, a)) <= mass_norm(v, rng).value * comass(a, rng).value * (1 + 1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2 ** 31))
def test_simple_vectors_have_euclidean_mass(n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, n + 1))
    v = KVector(n, k, ex.simple_coeffs(rng.standard_normal((n, k))))
    assert abs(mass_norm(v, rng).value - v.norm()) <= 1e-6 * v.norm()
