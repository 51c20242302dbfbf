"""End-to-end acceptance checks, one test per criterion.

Each test asserts its tolerance and its runtime budget. The terminal summary
prints one PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest

from conegreen import (
    TorusGrid,
    WindowPolicy,
    check_a1,
    check_a2,
    eval_p,
    exit_law_dp,
    functional_eq_residual,
    grad_p,
    green_dp,
    green_mc,
    harmonic_h,
    harmonicity_residual,
    killed_green_quadrature,
    predict_green,
    prefactor_select,
    ray_study,
    run_killed_dp,
    solve_alpha,
)
from conegreen.genfun import find_interior_min, ray_boundary
from conegreen.model import default_window

from oracles import m1_alpha_e1_bisection

RADII = [20, 30, 40, 60]
DIRECTIONS = {
    "e1-adjacent": (3.0, 1.0),
    "diagonal": (1.0, 1.0),
    "e2-adjacent": (1.0, 3.0),
}


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


@pytest.fixture(scope="module")
def studies(m1):
    """Ray studies from k = (1,1) and k = (2,2) along each test direction, window 140."""
    out = {}
    with Timer() as t:
        for name, u in DIRECTIONS.items():
            for k in [(1, 1), (2, 2)]:
                out[name, k] = ray_study(m1, k, _unit(u), RADII, WindowPolicy(fixed=140))
    out["elapsed"] = t.elapsed
    return out


def test_criterion_1_alpha_solver(m1):
    rng = np.random.default_rng(20240601)
    with Timer() as t:
        dirs = rng.standard_normal((100, 2))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        worst_p, worst_angle = 0.0, 0.0
        for u in dirs:
            bd = solve_alpha(m1.measure, u)
            g = grad_p(m1.measure, bd.alpha)
            along = float(g @ u)
            worst_p = max(worst_p, abs(eval_p(m1.measure, bd.alpha) - 1.0))
            worst_angle = max(worst_angle, math.atan2(float(np.linalg.norm(g - along * u)), along))
        alpha_e1 = solve_alpha(m1.measure, [1.0, 0.0]).alpha
    assert worst_p <= 1e-10
    assert worst_angle <= 1e-8
    assert np.max(np.abs(alpha_e1 - m1_alpha_e1_bisection())) <= 1e-7
    assert t.elapsed < 5


def test_criterion_2_one_dimensional_closed_forms(m0):
    with Timer() as t:
        g11 = green_dp(m0, 1, [1], 100)[(1,)].value
        g360 = green_dp(m0, 3, [60], 200)[(60,)].value
        law = exit_law_dp(m0, 3, 100)
        bd = solve_alpha(m0.measure, [1.0])
        h3 = harmonic_h(m0, bd, 3, "series", 100).value
        preds = [predict_green(bd, h3, 3, 60, v).value for v in ("paper", "lclt")]
    assert abs(g11 - 1.5) <= 1e-9
    assert abs(g360 - 2.625) <= 1e-2
    assert set(law.entries) == {(0,)} and abs(law.entries[(0,)] - 0.125) <= 1e-10
    assert abs(h3 - 0.875) <= 1e-10
    for p in preds:
        assert abs(p - 2.625) <= 1e-12
    assert t.elapsed < 10


def test_criterion_3_functional_equation(m0, m1):
    points = [(0.6, 0.7j), (0.5 + 0.2j, 0.9), (-0.4, 0.8 - 0.1j), (0.7j, -0.6), (0.3 + 0.3j, 1.1)]
    with Timer() as t:
        r0 = functional_eq_residual(m0, 1, [0.8], 200)
        r1 = [functional_eq_residual(m1, (1, 1), x, 60) for x in points]
    assert r0.residual < 1e-8
    for res in r1:
        assert res.residual < res.bound
    assert t.elapsed < 60


def test_criterion_4_integral_representation(m1):
    rng = np.random.default_rng(4)
    with Timer() as t:
        run = run_killed_dp(m1, (1, 1), 100)
        law = run.exit_law()
        grid = TorusGrid.centred(m1.measure, 256)
        diffs = [abs(killed_green_quadrature(m1, (1, 1), m, grid, law) - run.value(m))
                 for m in [(4, 3), (6, 2), (5, 5)]]
        a0 = find_interior_min(m1.measure)
        dirs = rng.standard_normal((5, 2))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        reach = ray_boundary(m1.measure, dirs, a0)
        bases = np.exp(a0 + (rng.uniform(0.05, 0.8, 5) * reach)[:, None] * dirs)
        vals = [killed_green_quadrature(m1, (1, 1), (4, 3), TorusGrid(2, 256, b), law) for b in bases]
    assert max(diffs) <= 1e-5
    assert max(vals) - min(vals) <= 1e-8
    assert t.elapsed < 60


def test_criterion_5_harmonicity(m1):
    with Timer() as t:
        bd = solve_alpha(m1.measure, [1.0, 0.0])
        residuals = [harmonicity_residual(m1, bd, k, 80) for k in [(2, 2), (3, 1), (1, 3)]]
        series = harmonic_h(m1, bd, (2, 2), "series", 80)
        mc = harmonic_h(m1, bd, (2, 2), "mc", n_samples=1_000_000, seed=12345, threads=4)
    assert max(residuals) <= 1e-6
    assert abs(series.value - mc.value) <= 3 * math.hypot(series.combined_sigma(), mc.combined_sigma())
    assert t.elapsed < 180


def test_criterion_6_ratio_convergence(studies):
    verdicts = {}
    for name in DIRECTIONS:
        study = studies[name, (1, 1)]
        verdict = prefactor_select(study)
        verdicts[name] = verdict
        err = study.ratio_errors(verdict.variant)
        assert err[-3] > err[-2] > err[-1]
        assert err[-1] <= 0.10
        assert verdict.relative_errors[verdict.variant] < 0.10
    assert len({v.variant for v in verdicts.values()}) == 1
    assert studies["elapsed"] < 600


def test_criterion_7_martin_kernel(studies):
    with Timer() as t:
        for name in DIRECTIONS:
            num = studies[name, (2, 2)].rows[-1]
            den = studies[name, (1, 1)].rows[-1]
            assert num.m == den.m and num.R == 60
            kernel = num.g.value / den.g.value
            assert abs(kernel - num.h.value / den.h.value) <= 0.05
    assert t.elapsed + studies["elapsed"] < 120


def test_criterion_8_nonconvex_cone(m1_rev):
    with Timer() as t:
        assert check_a1(m1_rev.measure).ok
        assert check_a2(m1_rev, default_window(m1_rev.cone, 30), (-1, -1))
        for k, m in [((-1, -1), (-1, -1)), ((-1, 2), (-3, 1)), ((2, -1), (1, -2))]:
            dp = green_dp(m1_rev, k, [m], 80)[m]
            mc = green_mc(m1_rev, k, m, n_traj=40_000, horizon=400, seed=8)
            assert abs(dp.value - mc.value) <= 3 * mc.error.ci_half_width + dp.error.bound
        study = ray_study(m1_rev, (-1, -1), _unit((-3.0, -1.0)), [20, 30])
        assert len(study) == 2
        assert all(np.isfinite(r.c_emp) and r.g.value > 0 for r in study.rows)
    assert t.elapsed < 180
