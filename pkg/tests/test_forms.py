import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from currentflow.exterior import KCovector, KVector, pair
from currentflow.forms import (
    Bump,
    Poly,
    PolyForm,
    TimeTest,
    comass_sup,
    eval_form,
    ext_d,
    form_panel,
    random_form,
    random_time_test,
    tensor_form,
    wedge_forms,
)


def x1_e2(bump=None):
    return PolyForm.from_coeffs(2, 1, {(1,): Poly.var(2, 0)}, bump)


def fd_coeffs(w, x, h=1e-5):
    """Central-difference oracle for the coefficients of d(w) at x (k = 1 only)."""
    n = w.n
    grad = np.zeros((n, n))  # grad[i, j] = d_i of coefficient j
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        grad[i] = (w.evaluate(x + e)[0] - w.evaluate(x - e)[0]) / (2 * h)
    # (dw)_{ij} = d_i w_j - d_j w_i for i < j
    return np.array([grad[i, j] - grad[j, i] for i in range(n) for j in range(i + 1, n)])


# ---- evaluation -----------------------------------------------------------------

def test_eval_x1_e2():
    assert eval_form(x1_e2(), [3.0, 0.0]).allclose(3 * KCovector.basis(2, (1,)))


def test_eval_outside_bump_is_zero():
    w = x1_e2(Bump((0.0, 0.0), 0.3, 1.0))
    assert np.all(eval_form(w, [1.5, 0.2]).coeffs == 0.0)
    assert np.all(w.evaluate(np.array([[1.0, 0.0], [0.0, -2.0]])) == 0.0)


def test_eval_constant_form():
    w = PolyForm.from_coeffs(2, 2, {(0, 1): 1.0})
    for x in ([0, 0], [5, -3], [1e3, 2]):
        assert eval_form(w, x).allclose(KCovector.basis(2, (0, 1)))


def test_eval_dimension_mismatch():
    with pytest.raises(ValueError):
        eval_form(x1_e2(), [1.0, 2.0, 3.0])


def test_bump_profile_plateau_and_support():
    b = Bump((0.0, 0.0), 0.5, 1.0)
    assert b(np.array([[0.2, 0.1]]))[0] == 1.0
    assert b(np.array([[1.0, 0.0]]))[0] == 0.0
    r = np.linspace(0.5, 1.0, 101)
    vals = b(np.stack([r, 0 * r], 1))
    assert np.all(np.diff(vals) <= 1e-15)


def test_bump_is_c2_at_knots():
    b = Bump((0.0,), 0.4, 0.9)
    for knot in (0.4 ** 2, 0.9 ** 2):
        for order in (1, 2):
            lo = b.profile(knot - 1e-9, order)
            hi = b.profile(knot + 1e-9, order)
            assert abs(lo - hi) <= 1e-6


# ---- exterior derivative -----------------------------------------------------------

def test_d_x1_e2():
    d = ext_d(x1_e2())
    assert d.k == 2
    for x in ([0, 0], [1.3, -2.0]):
        assert eval_form(d, x).allclose(KCovector.basis(2, (0, 1)))


def test_d_of_top_form_rejected():
    with pytest.raises(ValueError):
        ext_d(PolyForm.from_coeffs(2, 2, {(0, 1): 1.0}))


def test_dd_zero_polynomial_function():
    f = random_form(1, 3, 0, 3)
    dd = ext_d(ext_d(f))
    pts = np.random.default_rng(0).uniform(-2, 2, (50, 3))
    assert np.max(np.abs(dd.evaluate(pts))) <= 1e-12


def test_d_bump_e1_matches_finite_differences():
    w = PolyForm.from_coeffs(2, 1, {(0,): 1.0}, Bump((0.1, -0.2), 0.3, 1.1))
    d = ext_d(w)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1.2, 1.2, (20, 2))
    err = max(np.max(np.abs(d.evaluate(x[None])[0] - fd_coeffs(w, x))) for x in pts)
    assert err <= 1e-6


def test_d_random_form_matches_finite_differences_in_3d():
    w = random_form(3, 3, 1, 3, Bump((0, 0, 0), 0.4, 1.3))
    d = ext_d(w)
    pts = np.random.default_rng(2).uniform(-1, 1, (20, 3))
    err = max(np.max(np.abs(d.evaluate(x[None])[0] - fd_coeffs(w, x))) for x in pts)
    assert err <= 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2 ** 31))
def test_dd_vanishes(n, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(0, n - 1))
    bump = Bump(rng.uniform(-0.5, 0.5, n), 0.4, 1.2) if rng.random() < 0.7 else None
    w = random_form(rng, n, k, 3, bump)
    dd = ext_d(ext_d(w))
    pts = rng.uniform(-1.3, 1.3, (30, n))
    assert np.max(np.abs(dd.evaluate(pts)), initial=0.0) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2 ** 31))
def test_leibniz_rule(n, seed):
    rng = np.random.default_rng(seed)
    ka = int(rng.integers(0, n))
    kb = int(rng.integers(0, n - ka))
    a = random_form(rng, n, ka, 2, Bump(rng.uniform(-0.3, 0.3, n), 0.5, 1.4))
    b = random_form(rng, n, kb, 2)
    lhs = ext_d(wedge_forms(a, b))
    rhs = wedge_forms(ext_d(a), b) + wedge_forms(a, ext_d(b)).scale((-1.0) ** ka)
    for x in rng.uniform(-1.2, 1.2, (5, n)):
        v = KVector(n, ka + kb + 1, rng.standard_normal(lhs.evaluate(x[None]).shape[1]))
        assert abs(pair(v, eval_form(lhs, x)) - pair(v, eval_form(rhs, x))) <= 1e-10 * (1 + v.norm())


# ---- time tests --------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_time_test_vanishes_at_ends(seed):
    psi = random_time_test(np.random.default_rng(seed))
    assert psi(1e-12) == 0.0 and psi(1 - 1e-12) == 0.0
    assert abs(psi.integral_of_derivative()) <= 1e-14
    a, b = psi.support
    assert abs(psi(a + 1e-9)) <= 1e-12 and abs(psi(b - 1e-9)) <= 1e-12
    # C^1: derivative continuous at the support ends
    assert abs(psi.deriv(a + 1e-9)) <= 1e-6 and abs(psi.deriv(b - 1e-9)) <= 1e-6


def test_time_test_normalized_peak():
    psi = TimeTest(0.2, 0.6)
    assert psi(0.4) == pytest.approx(1.0)


def test_time_test_rejects_bad_support():
    with pytest.raises(ValueError):
        TimeTest(0.0, 0.5)
    with pytest.raises(ValueError):
        TimeTest(0.3, 0.2)


def test_time_test_derivative_integrates_to_zero_numerically():
    from scipy.integrate import quad

    psi = TimeTest(0.15, 0.85, 2, (1.0, -0.4))
    val, _ = quad(lambda t: float(psi.deriv(t)), 0, 1, points=[0.15, 0.85], epsabs=1e-12)
    assert abs(val) <= 1e-13


# ---- tensor forms --------------------------------------------------------------------

def test_tensor_zero_form_time_factor():
    psi = TimeTest(0.2, 0.8)
    beta = PolyForm.from_coeffs(2, 1, {(0,): 1.0})
    T = tensor_form(psi, beta)
    val = T.evaluate(np.array([[0.5, 0.3, 0.4]]))[0]
    # on R^{1+2} the 1-form lands on the dx^1 slot (index 1), no dt part
    assert val == pytest.approx([0.0, float(psi(0.5)), 0.0])


def test_tensor_dt_times_constant_form():
    psi = TimeTest(0.2, 0.8)
    beta = PolyForm.from_coeffs(2, 1, {(1,): 1.0})
    T = tensor_form(psi, beta, time_degree=1)
    dT = T.ext_d()
    X = np.random.default_rng(0).uniform([0, -1, -1], [1, 1, 1], (10, 3))
    assert np.max(np.abs(dT.evaluate(X))) == 0.0


def test_tensor_dt_leibniz_sign():
    psi = TimeTest(0.2, 0.8)
    beta = x1_e2()  # d beta = e^{12}
    dT = tensor_form(psi, beta, time_degree=1).ext_d()
    X = np.array([[0.5, 0.7, -0.2]])
    out = dT.evaluate(X)[0]
    # d(psi dt ^ x1 e^2) = -psi dt ^ e^{12}: only the (0,1,2) slot
    assert out == pytest.approx([-float(psi(0.5))])


def test_tensor_pairing_with_spacetime_vector():
    rng = np.random.default_rng(3)
    psi = TimeTest(0.1, 0.9)
    beta = random_form(rng, 2, 1, 2)
    T = tensor_form(psi, beta, time_degree=0)
    t, x = 0.37, rng.uniform(-1, 1, 2)
    b = rng.standard_normal(2)
    # (1, b) ^ sigma with sigma space-like; here k = 0 so sigma = 1 and (1,b) is a 1-vector
    v = KVector(3, 1, np.r_[1.0, b])
    lhs = pair(v, KCovector(3, 1, T.evaluate(np.r_[t, x][None])[0]))
    rhs = float(psi(t)) * pair(KVector(2, 1, b), eval_form(beta, x))
    assert lhs == pytest.approx(rhs, abs=1e-13)


def test_tensor_exterior_derivative_against_finite_differences():
    rng = np.random.default_rng(5)
    psi = TimeTest(0.2, 0.8, 2, (1.0, 0.3))
    beta = random_form(rng, 2, 0, 3, Bump((0, 0), 0.5, 1.5))
    T = tensor_form(psi, beta)  # a 0-form on R^3
    dT = T.ext_d()
    h = 1e-6
    for _ in range(10):
        X = np.r_[rng.uniform(0.25, 0.75), rng.uniform(-1, 1, 2)]
        g = [(T.evaluate((X + h * e)[None])[0, 0] - T.evaluate((X - h * e)[None])[0, 0]) / (2 * h)
             for e in np.eye(3)]
        assert dT.evaluate(X[None])[0] == pytest.approx(g, abs=1e-6)


# ---- comass sup --------------------------------------------------------------------

def test_comass_sup_constant_and_homogeneity():
    box = ((-1, -1), (1, 1))
    e12 = PolyForm.from_coeffs(2, 2, {(0, 1): 1.0})
    assert comass_sup(e12, box=box, points_per_axis=5) == pytest.approx(1.0)
    assert comass_sup(e12.scale(2.0), box=box, points_per_axis=5) == pytest.approx(2.0)


def test_comass_sup_needs_support():
    with pytest.raises(ValueError):
        comass_sup(x1_e2())


def test_comass_sup_dense_grid_oracle():
    bump = Bump((0.0, 0.0), 0.0, 1.0)
    w = x1_e2(bump)
    r = np.linspace(0, 1, 20001)
    oracle = np.max(r * bump(np.stack([r, 0 * r], 1)))
    got = comass_sup(w, points_per_axis=201)
    assert got <= oracle + 1e-12
    assert got == pytest.approx(oracle, rel=1e-3)


def test_form_panel_deterministic():
    a = form_panel(11, 2, 1, 4)
    b = form_panel(11, 2, 1, 4)
    X = np.random.default_rng(0).uniform(-2, 2, (20, 2))
    for u, v in zip(a, b):
        assert np.array_equal(u.evaluate(X), v.evaluate(X))
