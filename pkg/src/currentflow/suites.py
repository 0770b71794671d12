"""Verification suites: scenario checks and per-module property sweeps.

Every check reduces to one number compared against a tolerance, so the
command line, the report and the acceptance tests all read the same
records. Suites never raise on a failed comparison; they return failing
:class:`Check` objects instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import exterior as ex
from .continuity import (ParticleMeasure, bump_density, continuity_residual, directional_claim_defect,
                         dual_distance, flowed_test_residuals, frozen_measure_family, fv_oracle,
                         grid_from_density, push_family, push_measure, sample_particles, test_panel)
from .currents import (PolyhedralCurrent, boundary, circle_polyline, discretize, mass, pair_current, polyline,
                       product_interval, pushforward_flow, segment, subdivide, wedge_field)
from .flow import empirical_lipschitz, flow_batch, make_field, mollify, taylor_defect
from .forms import Bump, Poly, PolyForm, TimeTest, ext_d, form_panel, random_form, random_time_test, tensor_form, \
    tensor_panel
from .quadrature import composite_weights
from .transport import (boundary_residual_spacetime, constancy_diagnostic, cylinder_Z, family_pairings,
                        frozen_family, lie_pair, richardson_ratio, solve_gte, spacetime_lift_U,
                        verticality_residual, weak_residual, weak_residual_refinement)

__all__ = [
    "Check",
    "SuiteResult",
    "Scenario",
    "SCENARIO_SUITES",
    "VERIFY_SUITES",
    "DEFAULT_TOLERANCES",
    "run_suite",
    "verify",
    "loglog_slope",
    "catalog_fields",
]


@dataclass
class Check:
    """One comparison. ``relation`` is ``le``, ``ge`` or ``band`` (relative to ``target``)."""

    name: str
    value: float
    tolerance: float
    relation: str = "le"
    target: float | None = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        v = self.value
        if v is None or not math.isfinite(v):
            return False
        if self.relation == "le":
            return v <= self.tolerance
        if self.relation == "ge":
            return v >= self.tolerance
        if self.relation == "band":
            return abs(v - self.target) <= self.tolerance * abs(self.target)
        raise ValueError(f"unknown relation {self.relation!r}")

    def to_dict(self) -> dict:
        out = {"value": _num(self.value), "tolerance": _num(self.tolerance), "relation": self.relation,
               "pass": self.passed}
        if self.target is not None:
            out["target"] = _num(self.target)
        if self.detail:
            out["detail"] = self.detail
        return out

    def line(self) -> str:
        sym = {"le": "<=", "ge": ">=", "band": "within"}[self.relation]
        bound = f"{self.tolerance:.3g}" if self.relation != "band" else f"{self.target:g} +/- {100 * self.tolerance:g}%"
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.value:.6g} {sym} {bound}"


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass
class SuiteResult:
    suite: str
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)   # csv name -> (header, rows)
    studies: dict = field(default_factory=dict)  # name -> refinement study

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, *args, **kw) -> Check:
        c = Check(*args, **kw)
        self.checks.append(c)
        return c


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _local_slopes(x, y):
    out = [None]
    for i in range(1, len(x)):
        if x[i] > 0 and x[i - 1] > 0 and y[i] > 0 and y[i - 1] > 0:
            out.append(math.log(y[i] / y[i - 1]) / math.log(x[i] / x[i - 1]))
        else:
            out.append(None)
    return out


def _study(refinement, residual, band, label):
    return {"refinement": [float(r) for r in refinement], "residual": [float(r) for r in residual],
            "slope": _num(loglog_slope(refinement, residual)), "band": [_num(band[0]), _num(band[1])],
            "label": label}


def _monotone_ratio(values, floor=1e-12) -> float:
    """Largest ``d_{i+1} / d_i``; values below ``floor`` count as converged (ratio 0)."""
    worst = 0.0
    for prev, cur in zip(values[:-1], values[1:]):
        if cur <= floor:
            continue
        worst = max(worst, cur / prev if prev > 0 else float("inf"))
    return worst


# ---------------------------------------------------------------- scenarios

DEFAULT_TOLERANCES = {
    "weak_residual": 1e-4,
    "richardson": 0.2,
    "boundary_family_residual": 1e-4,
    "mass_bound": 1e-6,
    "mass_reference": 1e-6,
    "z_slices": 1e-5,
    "u_boundary": 1e-4,
    "u_counterexample": 1e-2,
    "u_mass_bound": 1e-9,
    "w_verticality": 1e-4,
    "w_atom_defect": 1e-6,
    "constancy": 1e-5,
    "frozen_constancy": 1e-2,
    "mollified_final": 5e-4,
    "dual_order": 0.8,
    "fv_mass_drift": 1e-13,
    "continuity_residual": 1e-6,
    "frozen_continuity": 1e-2,
    "flowed_residual": 1e-6,
    "directional_claim": 1e-4,
}

DEFAULT_RESOLUTION = {"dt": 1e-3, "L": 4, "q": 3, "tol": 1e-10}
DEFAULT_PANELS = {"size": 10, "degree": 3, "center_box": [-1.0, 1.0], "r_in": 0.5, "r_out": 1.5}
DEFAULT_SPACETIME = {"dt": 0.01, "L": 2, "slabs": 10, "z_L": 2, "z_q": 5, "panel_size": 6,
                     "counterexample": [[0.2, -0.3], [0.9, 0.4]]}
DEFAULT_UNIQUENESS = {"eps": [0.1, 0.05, 0.025], "kernel_nodes": 3, "panel_size": 6}
DEFAULT_CONTINUITY = {"center": [0.5, 0.0], "radius": 0.35, "t": 0.5, "h": [1 / 64, 1 / 128, 1 / 256],
                      "particle_h": 1 / 256, "particle_sub": 2, "box": [-1.0, 1.0], "panel_size": 8,
                      "family_h": 1 / 32, "family_sub": 2, "family_dt": 0.01, "tests": 6}


def _uniform_grid(dt: float) -> np.ndarray:
    m = int(round(1.0 / dt))
    if m < 2 or abs(m * dt - 1.0) > 1e-9:
        raise ValueError(f"dt={dt} must divide [0, 1]")
    return np.linspace(0.0, 1.0, m + 1)


def build_initial(spec, base_dir=None) -> PolyhedralCurrent | None:
    """Initial current from a scenario ``initial`` block."""
    if spec is None:
        return None
    kind = spec["type"]
    if kind == "segment":
        return segment(spec["a"], spec["b"], spec.get("weight", 1.0))
    if kind == "polyline":
        return polyline(spec["points"], spec.get("closed", False), spec.get("weight", 1.0))
    if kind == "circle":
        return circle_polyline(spec.get("segments", 64), spec.get("radius", 1.0), spec.get("center", [0.0, 0.0]))
    if kind == "simplices":
        return PolyhedralCurrent.from_dict(spec)
    if kind == "file":
        from .io import load_current

        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        cur = load_current(path)
        if not isinstance(cur, PolyhedralCurrent):
            raise ValueError("initial current files must hold simplices")
        return cur
    raise ValueError(f"unknown initial current type {kind!r}")


class Scenario:
    """Resolved scenario: field, initial data, panels, resolutions and cached families."""

    def __init__(self, config: dict, base_dir=None):
        self.config = config
        self.name = config.get("name", "scenario")
        self.seed = int(config["seed"])
        self.field = make_field(config["field"])
        self.n = self.field.n
        self.initial = build_initial(config.get("initial"), base_dir)
        self.res = {**DEFAULT_RESOLUTION, **config.get("resolution", {})}
        self.panels = {**DEFAULT_PANELS, **config.get("panels", {})}
        self.panel_seed = int(self.panels.get("seed", self.seed))
        self.tolerances = {**DEFAULT_TOLERANCES, **config.get("tolerances", {})}
        self.spacetime = {**DEFAULT_SPACETIME, **config.get("spacetime", {})}
        self.uniqueness = {**DEFAULT_UNIQUENESS, **config.get("uniqueness", {})}
        self.continuity = {**DEFAULT_CONTINUITY, **config.get("continuity", {})}
        self.mass_reference = config.get("mass_reference", "none")
        self.richardson = bool(config.get("richardson", True))
        if self.initial is not None and self.initial.n != self.n:
            raise ValueError("initial current and field live in different dimensions")

    def tol(self, name):
        return float(self.tolerances[name])

    @property
    def k(self):
        return self.initial.k

    def _panel_kw(self):
        p = self.panels
        return {"degree": int(p["degree"]), "center_box": tuple(p["center_box"]),
                "r_in": float(p["r_in"]), "r_out": float(p["r_out"])}

    def forms(self, k, size, offset=0):
        return form_panel(self.panel_seed + offset, self.n, k, size, **self._panel_kw())

    def time_tests(self, size, offset=0):
        rng = np.random.default_rng(self.panel_seed + 1000 + offset)
        return [random_time_test(rng) for _ in range(size)]

    @cached_property
    def family(self):
        r = self.res
        return solve_gte(self.initial, self.field, _uniform_grid(r["dt"]), int(r["L"]), int(r["q"]), r["tol"])

    @cached_property
    def st_family(self):
        s = self.spacetime
        return solve_gte(self.initial, self.field, _uniform_grid(s["dt"]), int(s["L"]), int(self.res["q"]),
                         self.res["tol"])

    @cached_property
    def closed(self) -> bool:
        return self.initial.k == 0 or len(boundary(self.initial).weights) == 0


def existence_suite(sc: Scenario) -> SuiteResult:
    out = SuiteResult("existence")
    F, b, k = sc.family, sc.field, sc.k
    size = int(sc.panels["size"])
    forms, psis = sc.forms(k, size), sc.time_tests(size)
    simpson, trap = [], []
    strides = (4, 2, 1)
    for psi, w in zip(psis, forms):
        simpson.append(weak_residual(F, b, psi, w))
        if sc.richardson:
            trap.append(weak_residual_refinement(F, b, psi, w, strides, rule="trapezoid"))
    out.add("weak_residual", max(abs(v) for v in simpson), sc.tol("weak_residual"),
            detail=f"max over {size} (psi, omega) pairs, Simpson in time")
    if sc.richardson:
        trap = np.array(trap)
        ratio = richardson_ratio(trap.T)
        out.add("richardson_ratio", ratio, sc.tol("richardson"), "band", 4.0,
                detail="trapezoid residual differences under dt halving")
        dts = [s * float(sc.res["dt"]) for s in strides]
        res = [float(np.max(np.abs(trap[:, i]))) for i in range(len(strides))]
        out.tables["residual_vs_refinement"] = (["dt", "residual", "slope"],
                                                [[d, r, s] for d, r, s in zip(dts, res, _local_slopes(dts, res))])
        out.studies["residual_vs_dt"] = _study(dts, res, (1.6, 2.4), "weak residual (trapezoid) vs dt")
    if k >= 1:
        Fb = F.boundary_family()
        bforms = sc.forms(k - 1, size, offset=1)
        vals = [abs(weak_residual(Fb, b, psi, w)) for psi, w in zip(psis, bforms)]
        empty = all(len(T) == 0 for T in Fb.currents)
        out.add("boundary_family_residual", max(vals), sc.tol("boundary_family_residual"),
                detail="empty boundary family" if empty else f"max over {size} pairs")
    if sc.initial.integral:
        out.add("integrality_preserved", 0.0 if F.integral else 1.0, 0.0,
                detail="pushforward of an integral current keeps integer weights")
    return out


def mass_suite(sc: Scenario) -> SuiteResult:
    out = SuiteResult("mass")
    F, k = sc.family, sc.k
    m0 = F.stats["mass0"]
    masses = F.masses()
    bound = np.asarray(F.stats["opnorm"]) ** k * m0
    ratio = float(np.max(masses / bound)) if m0 > 0 else 0.0
    out.add("pushforward_mass_bound", ratio - 1.0, sc.tol("mass_bound"),
            detail="max_t M(T_t) / (sup|DPhi_t|^k M(T_0)) - 1")
    ref = None
    if sc.mass_reference == "isometry":
        ref = np.full(len(F.grid), m0)
    elif sc.mass_reference == "shear_sqrt":
        ref = m0 * np.sqrt(1.0 + F.grid ** 2)
    elif sc.mass_reference != "none":
        raise ValueError(f"unknown mass reference {sc.mass_reference!r}")
    if ref is not None:
        out.add(f"mass_curve_{sc.mass_reference}", float(np.max(np.abs(masses - ref))), sc.tol("mass_reference"))
    rows = [[t, m, bd] + ([r] if ref is not None else []) for t, m, bd, r in
            zip(F.grid, masses, bound, ref if ref is not None else [None] * len(masses))]
    out.tables["mass_vs_t"] = (["t", "mass", "bound"] + (["reference"] if ref is not None else []), rows)
    return out


def _simpson_full(grid, values, a, c):
    w = composite_weights(grid, a, c)
    return math.fsum(w * values)


def spacetime_suite(sc: Scenario) -> SuiteResult:
    out = SuiteResult("spacetime")
    b, k, n, s = sc.field, sc.k, sc.n, sc.spacetime
    F2 = sc.st_family
    tol = sc.res["tol"]
    size = int(s["panel_size"])
    # cylinder slices
    if k + 1 <= n:
        Z = cylinder_Z(sc.initial, b, np.linspace(0.0, 1.0, int(s["slabs"]) + 1), int(s["z_L"]), int(s["z_q"]), tol)
        worst = 0.0
        bT = [wedge_field(b, T) for T in F2.currents]
        for psi, beta in zip(sc.time_tests(size, 2), sc.forms(k, size, offset=2)):
            a, c = psi.support
            dbeta = ext_d(beta)
            lhs1 = pair_current(Z, tensor_form(psi, beta, 1, 1))
            rhs1 = _simpson_full(F2.grid, psi(F2.grid, 1) * family_pairings(F2.currents, beta), a, c)
            lhs2 = pair_current(Z, tensor_form(psi, dbeta, 0, 0))
            rhs2 = _simpson_full(F2.grid, psi(F2.grid) * family_pairings(bT, dbeta), a, c)
            worst = max(worst, abs(lhs1 - rhs1), abs(lhs2 - rhs2))
        out.add("z_slice_identities", worst, sc.tol("z_slices"), detail=f"max over {size} (psi, beta) pairs")
    U = spacetime_lift_U(F2, b)
    panel = tensor_panel(sc.panel_seed + 3, n, k, size, **sc._panel_kw())
    wts = composite_weights(F2.grid, F2.grid[0], F2.grid[-1])
    inner = [i for i, t in enumerate(F2.grid) if 0.0 < t < 1.0]
    mass_budget = (1.0 + b.sup_bound) * math.fsum(wts[i] * F2.currents[i].mass() for i in inner)
    out.add("u_mass_bound", (U.mass() / mass_budget - 1.0) if mass_budget > 0 else 0.0, sc.tol("u_mass_bound"),
            detail="M(U) / ((1 + |b|_inf) sum_i w_i M(T_i)) - 1")
    if sc.closed:
        out.add("u_boundary_residual", boundary_residual_spacetime(U, panel), sc.tol("u_boundary"))
        vres, defect, _ = verticality_residual(U, b, panel, tol)
        out.add("w_verticality", vres, sc.tol("w_verticality"))
        out.add("w_atom_defect", defect, sc.tol("w_atom_defect"))
        ce = segment(*s["counterexample"]) if n == 2 and k == 1 else None
        if ce is not None:
            Fc = solve_gte(ce, b, F2.grid, int(s["L"]), int(sc.res["q"]), tol)
            second = _second_case_panel(sc, 0, size)
            out.add("u_counterexample_open_segment", boundary_residual_spacetime(spacetime_lift_U(Fc, b), second),
                    sc.tol("u_counterexample"), "ge", detail="open segment, time-degree-one test forms")
    else:
        second = _second_case_panel(sc, k - 1, size)
        out.add("u_counterexample_open_current", boundary_residual_spacetime(U, second), sc.tol("u_counterexample"),
                "ge", detail="initial current has a boundary; time-degree-one test forms")
        _, defect = _lift_defect(U, b, tol)
        out.add("w_atom_defect", defect, sc.tol("w_atom_defect"))
    return out


def _lift_defect(U, b, tol):
    from .transport import lift_W

    return lift_W(U, b, tol)


def _second_case_panel(sc, kb, size):
    psis = sc.time_tests(size, 4)
    betas = form_panel(sc.panel_seed + 4, sc.n, kb, size, **sc._panel_kw())
    return [tensor_form(psi, beta, 1) for psi, beta in zip(psis, betas)]


def _designed_betas(sc):
    """``x_1 * bump * e^I`` around the initial current, for the frozen counterexample."""
    V = sc.initial.vertices.reshape(-1, sc.n)
    c = V.mean(axis=0)
    R = float(np.max(np.linalg.norm(V - c, axis=1)))
    bump = Bump(c, 0.25 * R, 1.5 * R + 0.5)
    out = []
    for I in ex.multi_indices(sc.n, sc.k):
        out.append(PolyForm(sc.n, sc.k, {0: {I: Poly.var(sc.n, 0)}}, bump))
    return out


def uniqueness_suite(sc: Scenario) -> SuiteResult:
    out = SuiteResult("uniqueness")
    b, k, u = sc.field, sc.k, sc.uniqueness
    F2 = sc.st_family
    tol = sc.res["tol"]
    size = int(u["panel_size"])
    betas = sc.forms(k, size, offset=5)
    out.add("constancy_pushforward", constancy_diagnostic(F2, b, betas, tol), sc.tol("constancy"))
    frozen = frozen_family(sc.initial, F2.grid, int(sc.spacetime["L"]), int(sc.res["q"]))
    out.add("constancy_frozen", constancy_diagnostic(frozen, b, betas + _designed_betas(sc), tol),
            sc.tol("frozen_constancy"), "ge", detail="frozen family T_t = T_0")
    eps = [float(e) for e in u["eps"]]
    if eps:
        ref = np.stack([family_pairings(F2.currents, w) for w in betas])
        diffs = []
        for e in eps:
            Fe = solve_gte(sc.initial, mollify(b, e, int(u["kernel_nodes"])), F2.grid, int(sc.spacetime["L"]),
                           int(sc.res["q"]), tol)
            pe = np.stack([family_pairings(Fe.currents, w) for w in betas])
            diffs.append(float(np.max(np.abs(pe - ref))))
        out.add("mollified_monotone", _monotone_ratio(diffs), 1.0,
                detail="largest ratio of successive panel differences (below 1 means shrinking)")
        out.add("mollified_final", diffs[-1], sc.tol("mollified_final"), detail=f"eps={eps[-1]}")
        out.tables["mollified_vs_eps"] = (["eps", "difference", "slope"],
                                          [[e, d, s] for e, d, s in zip(eps, diffs, _local_slopes(eps, diffs))])
        if all(d > 1e-12 for d in diffs):
            out.studies["difference_vs_eps"] = _study(eps, diffs, (1.0, None), "mollified-field family difference")
    return out


def _continuity_data(sc):
    c = sc.continuity
    return bump_density(tuple(c["center"]), float(c["radius"])), tuple(c["box"])


def continuity_suite(sc: Scenario) -> SuiteResult:
    out = SuiteResult("continuity")
    b, c, tol = sc.field, sc.continuity, sc.res["tol"]
    dens, box = _continuity_data(sc)
    t = float(c["t"])
    panel = test_panel(sc.panel_seed + 6, int(c["panel_size"]), sc.n)
    # particles against the finite-volume oracle
    mu = sample_particles(dens, float(c["particle_h"]), box, int(c["particle_sub"]))
    mu_t = push_measure(mu, b, t, tol)
    hs = [float(h) for h in c["h"]]
    dists, drift = [], 0.0
    for h in hs:
        g0 = grid_from_density(dens, h, box)
        gt = fv_oracle(g0, b, t)
        drift = max(drift, abs(gt.total_mass() - g0.total_mass()))
        dists.append(dual_distance(mu_t, gt, panel))
    order = loglog_slope(hs, dists)
    out.add("dual_distance_decreasing", _monotone_ratio(dists, floor=0.0), 1.0,
            detail="largest ratio of successive distances under h halving")
    out.add("dual_distance_order", order, sc.tol("dual_order"), "ge")
    out.add("fv_mass_drift", drift, sc.tol("fv_mass_drift"))
    out.tables["dual_distance_vs_h"] = (["h", "distance", "slope"],
                                        [[h, d, s] for h, d, s in zip(hs, dists, _local_slopes(hs, dists))])
    out.studies["dual_distance_vs_h"] = _study(hs, dists, (0.8, None), "particles vs finite volumes")
    # distributional and flowed-test residuals on a light particle family
    small = sample_particles(dens, float(c["family_h"]), box, int(c["family_sub"]))
    fam = push_family(small, b, _uniform_grid(float(c["family_dt"])), tol)
    rng = np.random.default_rng(sc.panel_seed + 7)
    ntest = int(c["tests"])
    alphas = [random_time_test(rng) for _ in range(ntest)]
    betas = test_panel(sc.panel_seed + 8, ntest, sc.n)
    tests = list(zip(alphas, betas))
    out.add("continuity_residual", max(abs(continuity_residual(fam, b, [p])) for p in tests),
            sc.tol("continuity_residual"), detail=f"{len(small.weights)} particles")
    out.add("flowed_test_residual", max(abs(r) for r in flowed_test_residuals(fam, b, tests, 0.0, tol)),
            sc.tol("flowed_residual"))
    frozen = frozen_measure_family(small, fam.grid)
    designed = [(TimeTest(0.2, 0.8), PolyForm(sc.n, 0, {0: {(): Poly.var(sc.n, j)}}, Bump(np.zeros(sc.n), 2.0, 3.0)))
                for j in range(sc.n)]
    out.add("continuity_residual_frozen", max(abs(continuity_residual(frozen, b, [p])) for p in designed),
            sc.tol("frozen_continuity"), "ge", detail="frozen family, beta = x_j on a wide bump")
    pts = mu.points[np.argsort(-mu.weights)[:5]]
    out.add("directional_claim", max(directional_claim_defect(b, alphas[0], betas[0], 0.5 * sum(alphas[0].support), x)
                                     for x in pts), sc.tol("directional_claim"))
    return out


SCENARIO_SUITES = {
    "existence": existence_suite,
    "mass": mass_suite,
    "spacetime": spacetime_suite,
    "uniqueness": uniqueness_suite,
    "continuity": continuity_suite,
}


# ---------------------------------------------------------------- property sweeps

def _rand_covec(rng, n, k):
    return ex.KCovector(n, k, rng.standard_normal(math.comb(n, k)))


def _rand_vec(rng, n, k):
    return ex.KVector(n, k, rng.standard_normal(math.comb(n, k)))


def algebra_suite(seed: int, instances: int = 1000) -> SuiteResult:
    out = SuiteResult("algebra")
    rng = np.random.default_rng(seed)
    worst_i = worst_ii = worst_anti = worst_assoc = worst_cs = worst_simple = worst_adj = 0.0
    for _ in range(instances):
        # (i): alpha vanishes on span(sigma)
        n = int(rng.integers(2, 7))
        k = int(rng.integers(1, min(3, n - 1) + 1))
        m = int(rng.integers(k, n))
        basis = rng.standard_normal((n, m))
        parts = int(rng.integers(1, 4))
        sig = ex.KVector(n, k, sum(ex.simple_coeffs(basis @ rng.standard_normal((m, k))) for _ in range(parts)))
        Q = ex.span_of(sig)
        a = rng.standard_normal(n)
        a -= Q @ (Q.T @ a)
        alpha = ex.KCovector(n, 1, a)
        tau, beta = _rand_vec(rng, n, 1), _rand_covec(rng, n, k)
        lhs = ex.pair(ex.wedge(tau, sig), ex.wedge(alpha, beta))
        worst_i = max(worst_i, abs(lhs - ex.pair(tau, alpha) * ex.pair(sig, beta)))
        # (ii): tau orthogonal to span(alpha), alpha simple
        n = int(rng.integers(3, 7))
        k = int(rng.integers(1, min(3, n - 2) + 1))
        alpha = ex.KCovector(n, k + 1, ex.simple_coeffs(rng.standard_normal((n, k + 1))))
        Q = ex.span_of(alpha)
        v = rng.standard_normal(n)
        v -= Q @ (Q.T @ v)
        worst_ii = max(worst_ii, abs(ex.pair(ex.wedge(ex.KVector(n, 1, v), _rand_vec(rng, n, k)), alpha)))
        # graded anticommutativity and associativity
        n = int(rng.integers(2, 7))
        j = int(rng.integers(0, n + 1))
        k = int(rng.integers(0, n - j + 1))
        l = int(rng.integers(0, n - j - k + 1))
        x, y, z = _rand_vec(rng, n, j), _rand_vec(rng, n, k), _rand_vec(rng, n, l)
        d = ex.wedge(x, y).coeffs - (-1) ** (j * k) * ex.wedge(y, x).coeffs
        worst_anti = max(worst_anti, float(np.max(np.abs(d))))
        d = ex.wedge(ex.wedge(x, y), z).coeffs - ex.wedge(x, ex.wedge(y, z)).coeffs
        worst_assoc = max(worst_assoc, float(np.max(np.abs(d))))
        # Cauchy-Schwarz between mass and comass
        n = int(rng.integers(2, 6))
        k = int(rng.integers(1, n))
        eta, om = _rand_vec(rng, n, k), _rand_covec(rng, n, k)
        bound = ex.mass_norm(eta, rng).value * ex.comass(om, rng).value
        worst_cs = max(worst_cs, abs(ex.pair(eta, om)) / bound - 1.0)
        # simple vectors: mass equals the Euclidean norm
        simple = ex.KVector(n, k, ex.simple_coeffs(rng.standard_normal((n, k))))
        worst_simple = max(worst_simple, abs(ex.mass_norm(simple, rng).value - simple.norm()) / simple.norm())
        # push/pull adjointness on basis pairs
        S = rng.standard_normal((n, n))
        P = ex.compound(S, k)
        worst_adj = max(worst_adj, float(np.max(np.abs(
            np.stack([ex.pull_linear(S, ex.KCovector.basis(n, I)).coeffs for I in ex.multi_indices(n, k)]) - P))))
    out.add("wedge_laplace", worst_i, 1e-10, detail=f"{instances} instances, n<=6, k<=3")
    out.add("wedge_orthogonal", worst_ii, 1e-10, detail=f"{instances} instances")
    out.add("wedge_anticommutativity", worst_anti, 1e-12)
    out.add("wedge_associativity", worst_assoc, 1e-12)
    out.add("cauchy_schwarz_excess", worst_cs, 1e-9, detail=f"{instances} random pairs, n<=5")
    out.add("simple_mass_equals_norm", worst_simple, 1e-6)
    out.add("push_pull_adjoint", worst_adj, 1e-12)
    e12_34 = ex.KCovector.basis(4, (0, 1)) + ex.KCovector.basis(4, (2, 3))
    out.add("comass_e12_plus_e34", ex.comass(e12_34, rng).value, 1e-3, "band", 1.0)
    out.add("mass_e12_plus_e34", ex.mass_norm(ex.KVector(4, 2, e12_34.coeffs), rng).value, 1e-3 / 2, "band", 2.0)
    return out


def catalog_fields() -> dict:
    """One representative of every field kind (the grid kind samples the rotation)."""
    return {
        "constant": {"kind": "constant", "n": 2, "params": {"c": [0.3, -0.2]}},
        "rotation": {"kind": "rotation", "n": 2},
        "shear": {"kind": "shear", "n": 2},
        "abs_shear": {"kind": "abs_shear", "n": 2},
        "gradient_bump": {"kind": "gradient_bump", "n": 2, "params": {"amplitude": 0.5, "sigma": 0.5}},
        "grid": {"kind": "grid", "n": 2, "params": {"origin": [-3.0, -3.0], "spacing": 0.25, "shape": [25, 25],
                                                    "sample": {"kind": "rotation", "n": 2}}},
    }


TAYLOR_POINTS = {"rotation": (1.0, 0.0), "gradient_bump": (0.3, 0.2), "grid": (1.0, 0.0)}


def flow_suite(seed: int, samples: int = 100, tol: float = 1e-10) -> SuiteResult:
    out = SuiteResult("flow")
    rng = np.random.default_rng(seed)
    for name, spec in catalog_fields().items():
        b = make_field(spec)
        X = rng.uniform(-1, 1, (samples, b.n))
        s = rng.uniform(-0.5, 0.5, samples)
        t = rng.uniform(-0.5, 0.5, samples)
        Ys, _, _ = flow_batch(b, X, s, tol, jacobian=False)
        Yts, _, _ = flow_batch(b, Ys, t, tol, jacobian=False)
        Yst, _, _ = flow_batch(b, X, s + t, tol, jacobian=False)
        out.add(f"semigroup_{name}", float(np.max(np.linalg.norm(Yts - Yst, axis=1))), 10 * tol)
        Y, J, _ = flow_batch(b, X, t, tol, jacobian=True)
        lhs = np.einsum("nij,nj->ni", J, b(X))
        out.add(f"jacobian_transports_field_{name}", float(np.max(np.linalg.norm(lhs - b(Y), axis=1))), 1e-6)
        # time derivative of (t, Phi_t x) is (1, b(Phi_t x))
        h = 1e-3
        Yp, _, _ = flow_batch(b, X[:20], t[:20] + h, tol, jacobian=False)
        Ym, _, _ = flow_batch(b, X[:20], t[:20] - h, tol, jacobian=False)
        fd = (Yp - Ym) / (2 * h)
        out.add(f"spacetime_time_derivative_{name}", float(np.max(np.linalg.norm(fd - b(Y[:20]), axis=1))), 1e-5)
        if name in TAYLOR_POINTS:
            hs = [1e-1, 1e-2, 1e-3]
            d = [taylor_defect(b, TAYLOR_POINTS[name], hh) for hh in hs]
            out.add(f"taylor_slope_{name}", loglog_slope(hs, d), 0.1 / 2, "band", 2.0)
        if name == "grid":
            out.add("grid_empirical_lipschitz_margin", empirical_lipschitz(b, rng.uniform(-2.9, 2.9, (400, 2)))
                    - b.lip_bound, 0.0)
    return out


def _random_chain(rng, n, k, simplices):
    V = rng.standard_normal((simplices, k + 1, n))
    w = rng.integers(-3, 4, simplices).astype(float)
    w[w == 0] = 1.0
    return PolyhedralCurrent(n, k, V, w)


def _triangle_strip(rng):
    # glued triangles so interior edges cancel
    P = rng.standard_normal((4, 3))
    return PolyhedralCurrent(3, 2, np.array([[P[0], P[1], P[2]], [P[0], P[2], P[3]]]), [1.0, 1.0])


def currents_suite(seed: int) -> SuiteResult:
    out = SuiteResult("currents")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n, k in [(2, 2), (3, 2), (3, 3), (4, 2), (4, 3), (4, 4), (5, 3)]:
        for _ in range(5):
            P = _random_chain(rng, n, k, 6)
            dd = boundary(boundary(P))
            worst = max(worst, float(np.max(np.abs(dd.weights), initial=0.0)))
            Q = subdivide(P, 1)
            dd = boundary(boundary(Q))
            worst = max(worst, float(np.max(np.abs(dd.weights), initial=0.0)))
    out.add("boundary_squared_zero", worst, 1e-14, detail="merged coefficients on seeded chains")
    # boundary of a product, restricted to (0,1) x R^n, against a 20-form panel
    worst = 0.0
    for n, k in [(2, 1), (3, 2)]:
        # canonical vertex order, so merging never flips a lateral staircase diagonal
        P = (polyline(rng.uniform(-0.8, 0.8, (5, 2))) if k == 1 else _triangle_strip(rng)).merged()
        slabs = np.linspace(0.0, 1.0, 11)
        C = product_interval(slabs[0], slabs[1], P)
        side = product_interval(slabs[0], slabs[1], boundary(P))
        for lo, hi in zip(slabs[1:-1], slabs[2:]):
            C = C + product_interval(lo, hi, P)
            side = side + product_interval(lo, hi, boundary(P))
        lhs = discretize(boundary(C), 5)
        rhs = discretize(side.scaled(-1.0), 5)
        for phi in tensor_panel(int(rng.integers(2 ** 31)), n, k, 20, center_box=(-0.5, 0.5)):
            worst = max(worst, abs(pair_current(lhs, phi) - pair_current(rhs, phi)))
    out.add("boundary_of_product", worst, 1e-8, detail="20 tensor forms per chain")
    # Stokes on polynomial forms within quadrature exactness, and subdivision invariance
    worst_s = worst_sub = 0.0
    for n, k in [(2, 1), (3, 1), (3, 2), (4, 3)]:
        P = _random_chain(rng, n, k, 4)
        for _ in range(3):
            w = random_form(rng, n, k - 1, 3)
            lhs = pair_current(discretize(P, 3), ext_d(w))
            rhs = pair_current(discretize(boundary(P), 3), w)
            worst_s = max(worst_s, abs(lhs - rhs) / max(1.0, abs(lhs)))
            w3 = random_form(rng, n, k, 3)
            a = pair_current(discretize(P, 3), w3)
            c = pair_current(discretize(subdivide(P, 1), 3), w3)
            worst_sub = max(worst_sub, abs(a - c) / max(1.0, abs(a)))
    out.add("discrete_stokes", worst_s, 1e-10)
    out.add("subdivision_pairing_invariance", worst_sub, 1e-12)
    # mass bounds for the pushforward and the field wedge
    b = make_field(catalog_fields()["gradient_bump"])
    tri = PolyhedralCurrent(2, 2, rng.uniform(-0.8, 0.8, (1, 3, 2)), [1.0])
    T = discretize(subdivide(tri, 3), 3)
    Tt, st = pushforward_flow(T, b, 0.7, return_stats=True)
    out.add("pushforward_mass_bound", Tt.mass() / (st["max_opnorm"] ** 2 * T.mass()) - 1.0, 1e-6)
    S = discretize(subdivide(polyline(rng.uniform(-0.8, 0.8, (4, 2))), 2), 3)
    out.add("wedge_field_mass_bound", mass(wedge_field(b, S)) / (b.sup_bound * mass(S)) - 1.0, 1e-9)
    # naturality: chord boundary of the pushed subdivision vs pushed boundary
    errs, Ls = [], [1, 2, 3, 4]
    panel = form_panel(int(rng.integers(2 ** 31)), 2, 1, 5, center_box=(-0.5, 0.5))
    for L in Ls:
        Q = subdivide(tri, L)
        Y, _, _ = flow_batch(b, Q.vertices.reshape(-1, 2), 0.7, 1e-12, jacobian=False)
        moved = PolyhedralCurrent(2, 2, Y.reshape(Q.vertices.shape), Q.weights, allow_degenerate=True)
        chord = discretize(boundary(moved), 3)
        exact = pushforward_flow(discretize(boundary(Q), 5), b, 0.7, 1e-12)
        errs.append(max(abs(pair_current(chord, w) - pair_current(exact, w)) for w in panel))
    hs = [2.0 ** -L for L in Ls]
    out.add("pushforward_naturality_order", loglog_slope(hs, errs), 1.0, "ge",
            detail="chord boundary vs pushed boundary, slope in 2^-L")
    out.tables["naturality_vs_L"] = (["h", "difference", "slope"],
                                     [[h, e, s] for h, e, s in zip(hs, errs, _local_slopes(hs, errs))])
    return out


def _small_rotation_scenario(seed):
    return Scenario({"schema_version": 1, "name": "verify-transport", "seed": seed,
                     "field": {"kind": "rotation", "n": 2},
                     "initial": {"type": "circle", "segments": 16, "center": [0.5, 0.25]},
                     "resolution": {"dt": 0.01, "L": 2, "q": 3, "tol": 1e-10},
                     "panels": {"seed": seed, "size": 4},
                     "spacetime": {"dt": 0.01, "L": 2, "slabs": 10, "z_L": 3, "panel_size": 3},
                     "uniqueness": {"eps": [], "panel_size": 3},
                     "richardson": False})


def transport_suite(seed: int) -> SuiteResult:
    out = SuiteResult("transport")
    sc = _small_rotation_scenario(seed)
    for sub in (existence_suite(sc), spacetime_suite(sc), uniqueness_suite(sc)):
        out.checks.extend(sub.checks)
    # centered difference of pairings against the Cartan pairing
    F, b = sc.family, sc.field
    w = sc.forms(1, 1, offset=9)[0]
    i, h = 50, float(F.grid[1] - F.grid[0])
    fd = (F.currents[i + 1].pair(w) - F.currents[i - 1].pair(w)) / (2 * h)
    out.add("lie_pair_centered_difference", abs(fd + lie_pair(F.currents[i], F.boundaries[i], b, w)), 1e-3,
            detail=f"h={h}")
    zero = make_field({"kind": "constant", "n": 2})
    out.add("lie_pair_zero_field", abs(lie_pair(F.currents[i], F.boundaries[i], zero, w)), 0.0)
    return out


def continuity_verify_suite(seed: int) -> SuiteResult:
    out = SuiteResult("continuity")
    rng = np.random.default_rng(seed)
    b = make_field({"kind": "rotation", "n": 2})
    pts = rng.uniform(-1, 1, (50, 2))
    w = rng.standard_normal(50)
    mu = ParticleMeasure(pts, w)
    mt = push_measure(mu, b, 0.8)
    out.add("total_variation_invariant", abs(mt.total_variation() - mu.total_variation()), 0.0)
    one = push_measure(ParticleMeasure(pts[:1], w[:1]), b, math.pi)
    out.add("rotation_half_turn", float(np.linalg.norm(one.points[0] + pts[0])), 1e-9)
    dens = bump_density((0.5, 0.0), 0.35)
    g0 = grid_from_density(dens, 1 / 32)
    g1, steps = fv_oracle(g0, b, 0.5, return_steps=True)
    out.add("fv_mass_drift", abs(g1.total_mass() - g0.total_mass()), 1e-13, detail=f"{steps} steps")
    small = sample_particles(dens, 1 / 16)
    grid = _uniform_grid(0.01)
    fam = push_family(small, b, grid)
    tests = [(random_time_test(rng), beta) for beta in test_panel(seed, 3)]
    out.add("continuity_residual", max(abs(continuity_residual(fam, b, [p])) for p in tests), 1e-6)
    out.add("flowed_test_residual", max(abs(r) for r in flowed_test_residuals(fam, b, tests)), 1e-6)
    other = push_family(ParticleMeasure(rng.uniform(-0.5, 0.5, (20, 2)), rng.standard_normal(20)), b, grid)
    r1, r2 = continuity_residual(fam, b, tests), continuity_residual(other, b, tests)
    out.add("residual_linearity", abs(continuity_residual(fam + other, b, tests) - r1 - r2), 1e-12)
    return out


VERIFY_SUITES = {
    "algebra": algebra_suite,
    "flow": flow_suite,
    "currents": currents_suite,
    "transport": transport_suite,
    "continuity": continuity_verify_suite,
}


def verify(name: str, seed: int) -> SuiteResult:
    if name not in VERIFY_SUITES:
        raise KeyError(name)
    return VERIFY_SUITES[name](int(seed))


def run_suite(name: str, sc: Scenario) -> SuiteResult:
    """Scenario suite by name; the module sweeps run at the scenario seed."""
    if name in SCENARIO_SUITES:
        if name != "continuity" and sc.initial is None:
            raise ValueError(f"suite {name!r} needs an initial current")
        return SCENARIO_SUITES[name](sc)
    if name in ("algebra", "flow", "currents"):
        return VERIFY_SUITES[name](sc.seed)
    raise KeyError(name)
