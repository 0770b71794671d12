import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from currentflow import continuity as cty
from currentflow.continuity import (
    GridMeasure,
    ParticleFamily,
    ParticleMeasure,
    bump_density,
    continuity_residual,
    directional_claim_defect,
    dual_distance,
    flowed_test_residual,
    flowed_test_residuals,
    frozen_measure_family,
    fv_oracle,
    grid_from_density,
    push_family,
    push_measure,
    sample_particles,
)
from currentflow.flow import make_field
from currentflow.forms import Bump, Poly, PolyForm, TimeTest, random_form

ROT = make_field({"kind": "rotation"})
SWIRL = make_field({"kind": "gradient_bump", "params": {"amplitude": 0.5, "sigma": 0.5}})


def rotation(theta):
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


def coordinate(j, n=2, bump=None):
    return PolyForm(n, 0, {0: {(): Poly.var(n, j)}}, bump)


# ---- measures ------------------------------------------------------------------------

def test_particle_measure_validation_and_parts():
    with pytest.raises(ValueError):
        ParticleMeasure([[0, 0], [1, 1]], [1.0])
    mu = ParticleMeasure([[0, 0], [1, 0], [0, 1]], [2.0, -0.5, 0.25])
    pos, neg = mu.parts()
    assert pos.total_mass() == 2.25 and neg.total_mass() == 0.5
    assert mu.total_variation() == 2.75
    assert mu.total_mass() == 1.75
    assert mu.pair(coordinate(0)) == -0.5


def test_grid_measure_rank_checked():
    with pytest.raises(ValueError):
        GridMeasure((0.0, 0.0), 0.1, np.zeros(5))


def test_grid_measure_centers_and_pairing():
    g = GridMeasure((-1.0, 0.0), 0.5, np.ones((4, 2)))
    c = g.centers()
    assert c[0] == pytest.approx([-0.75, 0.25]) and c[-1] == pytest.approx([0.75, 0.75])
    assert g.total_mass() == pytest.approx(2.0)
    # midpoint rule integrates x_1 over [-1, 1] x [0, 1] exactly
    assert g.pair(coordinate(0)) == pytest.approx(0.0, abs=1e-15)
    assert g.pair(coordinate(1)) == pytest.approx(1.0)


def test_bump_density_mass_closed_form():
    # smoothstep averages to 1/2, so the mass is pi R^2 / 2
    dens = bump_density((0.5, 0.0), 0.35)
    mu = sample_particles(dens, 1 / 128, (-1.0, 1.0), 2)
    assert mu.total_mass() == pytest.approx(math.pi * 0.35 ** 2 / 2, rel=1e-6)
    assert np.all(mu.weights > 0)
    assert np.all(np.linalg.norm(mu.points - [0.5, 0.0], axis=1) < 0.35)


def test_grid_from_density_mass_closed_form():
    g = grid_from_density(bump_density((0.0, 0.0), 0.5), 1 / 64)
    assert g.total_mass() == pytest.approx(math.pi * 0.25 / 2, rel=1e-6)


def test_grid_from_density_rejects_bad_h():
    with pytest.raises(ValueError):
        grid_from_density(bump_density(), 0.3)


def test_panel_is_seeded():
    a, b = cty.test_panel(5, 3), cty.test_panel(5, 3)
    X = np.random.default_rng(0).uniform(-1, 1, (10, 2))
    for u, v in zip(a, b):
        assert np.array_equal(u.evaluate(X), v.evaluate(X))


# ---- particle pushforward --------------------------------------------------------------

def test_push_measure_rotation_exact_points():
    mu = ParticleMeasure(np.random.default_rng(1).uniform(-1, 1, (40, 2)), np.arange(40.0))
    out = push_measure(mu, ROT, 0.7, 1e-11)
    assert np.max(np.abs(out.points - mu.points @ rotation(0.7).T)) <= 1e-10
    assert np.array_equal(out.weights, mu.weights)


def test_push_measure_zero_time_is_identity():
    mu = ParticleMeasure([[0.3, 0.1]], [1.0])
    assert push_measure(mu, ROT, 0.0) is mu


def test_pushforward_pairing_is_pullback_pairing():
    # <Phi_# mu, beta> = <mu, beta o Phi>
    mu = sample_particles(bump_density((0.2, 0.1), 0.4), 1 / 32)
    beta = random_form(np.random.default_rng(3), 2, 0, 2, Bump((0, 0), 0.3, 1.5))
    t = 0.6
    lhs = push_measure(mu, ROT, t).pair(beta)
    rhs = mu.pair(lambda X: beta.evaluate(X @ rotation(t).T)[:, 0])
    assert lhs == pytest.approx(rhs, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-1, 1))
def test_push_preserves_mass_and_variation(seed, t):
    rng = np.random.default_rng(seed)
    mu = ParticleMeasure(rng.uniform(-1, 1, (15, 2)), rng.standard_normal(15))
    out = push_measure(mu, SWIRL, t)
    assert out.total_mass() == mu.total_mass()
    assert out.total_variation() == mu.total_variation()


def test_push_family_matches_push_measure():
    mu = ParticleMeasure(np.random.default_rng(2).uniform(-1, 1, (10, 2)), np.ones(10))
    fam = push_family(mu, SWIRL, [0.0, 0.5, 1.0])
    for t, m in zip(fam.grid, fam.measures):
        assert np.max(np.abs(m.points - push_measure(mu, SWIRL, t).points)) <= 1e-9


def test_family_addition_requires_shared_grid():
    mu = ParticleMeasure([[0.0, 0.0]], [1.0])
    a = frozen_measure_family(mu, [0.0, 1.0])
    assert (a + a).measures[1].total_mass() == 2.0
    with pytest.raises(ValueError):
        a + frozen_measure_family(mu, [0.0, 0.5])


# ---- finite volumes -------------------------------------------------------------------

def test_fv_rejects_bad_cfl():
    g = grid_from_density(bump_density(), 1 / 16)
    with pytest.raises(ValueError):
        fv_oracle(g, ROT, 0.1, cfl=0.6)


def test_fv_zero_field_unchanged():
    g = grid_from_density(bump_density(), 1 / 16)
    out = fv_oracle(g, make_field({"kind": "constant", "params": {"c": [0.0, 0.0]}}), 0.5)
    assert np.array_equal(out.density, g.density)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-0.5, 0.5))
def test_fv_conserves_mass_and_positivity(seed, t):
    rng = np.random.default_rng(seed)
    g = GridMeasure((-1.0, -1.0), 1 / 16, rng.uniform(0, 1, (32, 32)))
    out = fv_oracle(g, SWIRL, t)
    assert abs(out.total_mass() - g.total_mass()) <= 1e-12
    assert np.all(out.density >= -1e-15)


def test_fv_constant_field_moves_center_of_mass_exactly():
    # donor cell with a constant positive velocity shifts the first moment exactly
    c = np.array([0.4, 0.2])
    g = grid_from_density(bump_density((-0.3, -0.2), 0.3), 1 / 32)
    out, steps = fv_oracle(g, make_field({"kind": "constant", "params": {"c": c.tolist()}}), 0.5, return_steps=True)
    assert steps > 0
    m0 = np.array([g.pair(coordinate(j)) for j in range(2)]) / g.total_mass()
    m1 = np.array([out.pair(coordinate(j)) for j in range(2)]) / out.total_mass()
    assert m1 - m0 == pytest.approx(0.5 * c, abs=1e-12)


def test_fv_converges_to_particles_under_rotation():
    dens = bump_density((0.5, 0.0), 0.35)
    mu = push_measure(sample_particles(dens, 1 / 128), ROT, 0.5)
    panel = cty.test_panel(17, 6)
    d = [dual_distance(mu, fv_oracle(grid_from_density(dens, h), ROT, 0.5), panel) for h in (1 / 32, 1 / 64)]
    assert d[1] < d[0]


# ---- dual distance ----------------------------------------------------------------------

def test_dual_distance_particles_at_centers_is_zero():
    g = grid_from_density(bump_density(), 1 / 16)
    mu = ParticleMeasure(g.centers(), g.cell_masses().ravel())
    assert dual_distance(mu, g, cty.test_panel(3, 5)) <= 1e-15


def test_dual_distance_empty_panel():
    g = grid_from_density(bump_density(), 1 / 16)
    assert dual_distance(ParticleMeasure(np.zeros((0, 2)), []), g, []) == 0.0


# ---- residuals --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def rot_family():
    mu = sample_particles(bump_density((0.5, 0.0), 0.35), 1 / 16)
    return mu, push_family(mu, ROT, np.linspace(0, 1, 101))


def test_continuity_residual_small_for_pushforward(rot_family):
    _, fam = rot_family
    alpha = TimeTest(0.2, 0.8, 2, (1.0, 0.5))
    beta = random_form(np.random.default_rng(4), 2, 0, 2, Bump((0.2, 0.2), 0.3, 1.2))
    assert abs(continuity_residual(fam, ROT, [(alpha, beta)])) <= 1e-6


def test_continuity_residual_frozen_detects_motion(rot_family):
    mu, _ = rot_family
    frozen = frozen_measure_family(mu, np.linspace(0, 1, 101))
    alpha = TimeTest(0.2, 0.8)
    beta = coordinate(1, bump=Bump((0.0, 0.0), 2.0, 3.0))
    # b . grad x_2 = x_1, so the residual is int alpha dt * <mu, x_1>; int alpha = 0.6 * 16 / 30,
    # and Simpson on the quartic alpha overshoots by 0.6 h^4 alpha / 180 with alpha = 24 / 0.3^4
    simpson = 0.6 * 16 / 30 + 0.6 * 0.01 ** 4 * (24 / 0.3 ** 4) / 180
    oracle = mu.pair(coordinate(0)) * simpson
    assert continuity_residual(frozen, ROT, [(alpha, beta)]) == pytest.approx(oracle, rel=1e-10)
    assert abs(oracle) >= 0.01


def test_continuity_residual_requires_cover(rot_family):
    mu, _ = rot_family
    short = frozen_measure_family(mu, np.linspace(0, 0.5, 51))
    with pytest.raises(ValueError):
        continuity_residual(short, ROT, [(TimeTest(0.2, 0.8), coordinate(0))])


def test_flowed_test_residual_small_for_pushforward(rot_family):
    _, fam = rot_family
    alpha = TimeTest(0.1, 0.9, 2, (1.0, -0.3))
    beta = random_form(np.random.default_rng(5), 2, 0, 2, Bump((0.0, 0.3), 0.3, 1.2))
    assert abs(flowed_test_residual(fam, ROT, alpha, beta)) <= 1e-6


def test_flowed_residuals_batch_matches_single(rot_family):
    _, fam = rot_family
    rng = np.random.default_rng(6)
    tests = [(TimeTest(0.1, 0.5), random_form(rng, 2, 0, 2, Bump((0, 0), 0.3, 1.2))),
             (TimeTest(0.4, 0.9, 2, (1.0, 0.2)), random_form(rng, 2, 0, 2, Bump((0.2, 0), 0.3, 1.2)))]
    batch = flowed_test_residuals(fam, ROT, tests)
    single = [flowed_test_residual(fam, ROT, a, b) for a, b in tests]
    assert batch == pytest.approx(single, abs=1e-13)


def test_flowed_residual_frozen_nonzero(rot_family):
    mu, _ = rot_family
    frozen = frozen_measure_family(mu, np.linspace(0, 1, 101))
    beta = coordinate(1, bump=Bump((0.0, 0.0), 2.0, 3.0))
    assert abs(flowed_test_residual(frozen, ROT, TimeTest(0.2, 0.8), beta)) >= 1e-3


def test_flowed_residual_mollified_linear_field_matches():
    # mollifying a linear field changes nothing, so both residuals agree
    mu = ParticleMeasure(np.random.default_rng(9).uniform(-0.5, 0.5, (6, 2)), np.ones(6))
    fam = push_family(mu, ROT, np.linspace(0, 1, 101))
    alpha, beta = TimeTest(0.2, 0.8), coordinate(0, bump=Bump((0.0, 0.0), 1.0, 2.0))
    plain = flowed_test_residual(fam, ROT, alpha, beta)
    moll = flowed_test_residual(fam, ROT, alpha, beta, eps=0.05)
    assert moll == pytest.approx(plain, abs=1e-9)


def test_directional_claim_rotation():
    alpha = TimeTest(0.2, 0.8, 2, (1.0, 0.4))
    beta = random_form(np.random.default_rng(8), 2, 0, 2, Bump((0, 0), 0.3, 1.2))
    for x in ([0.3, 0.2], [-0.5, 0.1]):
        assert directional_claim_defect(ROT, alpha, beta, 0.5, x) <= 1e-4


def test_empty_family_residual_zero():
    fam = ParticleFamily(np.linspace(0, 1, 101), [ParticleMeasure(np.zeros((0, 2)), [])] * 101)
    assert flowed_test_residual(fam, ROT, TimeTest(0.2, 0.8), coordinate(0)) == 0.0
