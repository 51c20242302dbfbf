import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conegreen import (
    TorusGrid,
    eval_calp,
    eval_f_truncated,
    eval_h_truncated,
    free_green_dp,
    free_green_quadrature,
    functional_eq_residual,
    killed_green_quadrature,
    run_killed_dp,
    solve_alpha,
)
from conegreen.errors import DomainError
from conegreen.genfun import eval_p, find_interior_min, ray_boundary
from conegreen.green import ExitLaw
from conegreen.series import killed_green_table

from oracles import gamblers_ruin_green


def _empty_law(d):
    z = np.zeros((0, d), dtype=np.int64)
    return ExitLaw((1,) * d, z, np.zeros(0), z, np.zeros(0))


def _random_interior_bases(measure, n, seed):
    rng = np.random.default_rng(seed)
    a0 = find_interior_min(measure)
    dirs = rng.standard_normal((n, measure.dimension))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t = ray_boundary(measure, dirs, a0)
    frac = rng.uniform(0.05, 0.8, size=n)
    return np.exp(a0 + (frac * t)[:, None] * dirs)


@pytest.fixture(scope="module")
def m1_run(m1):
    return run_killed_dp(m1, (1, 1), 100)


def test_calp_at_one(m0, m1):
    assert eval_calp(m0.measure, [1.0]) == pytest.approx(1.0)
    assert eval_calp(m1.measure, [1.0, 1.0]) == pytest.approx(1.0)


def test_calp_on_boundary(m1):
    for u in ([1.0, 0.0], [0.6, 0.8], [-0.8, 0.6]):
        bd = solve_alpha(m1.measure, u)
        assert abs(eval_calp(m1.measure, bd.r) - 1.0) <= 1e-8


@settings(max_examples=500, deadline=None)
@given(
    mod=st.lists(st.floats(0.2, 3.0), min_size=2, max_size=2),
    arg=st.lists(st.floats(-np.pi, np.pi), min_size=2, max_size=2),
)
def test_calp_modulus_inequality(m1, mod, arg):
    x = np.array(mod) * np.exp(1j * np.array(arg))
    assert abs(eval_calp(m1.measure, x)) <= eval_calp(m1.measure, np.abs(x)).real * (1 + 1e-14)


def test_calp_vectorised(m1):
    x = np.array([[0.5, 1.0], [1.0, 1.0j]])
    out = eval_calp(m1.measure, x)
    assert out.shape == (2,)
    assert out[1] == pytest.approx(eval_calp(m1.measure, x[1]))


def test_f_truncated(m0):
    law = run_killed_dp(m0, 1, 100).exit_law()
    val, trunc = eval_f_truncated(law, 0.9)
    assert val == pytest.approx(0.5, abs=1e-12)
    assert trunc < 1e-12
    assert eval_f_truncated(_empty_law(1), 0.9).value == 0


def test_h_truncated_matches_closed_form(m0):
    run = run_killed_dp(m0, 1, 200)
    for x in (0.5, 0.8, -0.7 + 0.3j):
        expected = sum(gamblers_ruin_green(1, m) * x ** m for m in range(1, 400))
        assert eval_h_truncated(run, [x]).value == pytest.approx(expected, abs=1e-10)


def test_h_truncated_2d_matches_direct_sum(m1, m1_run):
    x = np.array([0.6, 0.7j])
    pts = m1_run.window.points().reshape(-1, 2)
    direct = np.sum(m1_run.visits.reshape(-1) * np.prod(x ** pts, axis=1))
    assert eval_h_truncated(m1_run, x).value == pytest.approx(direct, rel=1e-12)


def test_functional_equation_m0(m0):
    res = functional_eq_residual(m0, 1, [0.8], 200)
    assert res.residual < 1e-8
    assert res.ok
    # the same identity in closed form
    f = 0.5
    h = sum(gamblers_ruin_green(1, m) * 0.8 ** m for m in range(1, 500))
    assert h * (1 - eval_calp(m0.measure, [0.8])) == pytest.approx(0.8 - f, abs=1e-12)


def test_functional_equation_domain(m0, m1):
    with pytest.raises(DomainError):
        functional_eq_residual(m0, 1, [0.4], 50)
    with pytest.raises(DomainError):
        functional_eq_residual(m1, (1, 1), [2.0, 1.0j], 50)


@pytest.mark.parametrize("x", [(0.6, 0.7j), (0.5 + 0.2j, 0.9), (-0.4, 0.8 - 0.1j)])
def test_functional_equation_m1(m1, x):
    res = functional_eq_residual(m1, (1, 1), x, 60)
    assert res.residual <= res.bound


def test_functional_equation_residual_shrinks_with_window(m0, m1):
    r1 = [functional_eq_residual(m0, 1, [0.8], w).residual for w in (50, 100, 200)]
    assert r1[0] > r1[1] > r1[2] or r1[2] < 1e-14
    assert r1[0] > 1e-8 and r1[2] < 1e-14
    x = (0.5 + 0.3j, 0.6 + 0.5j)
    r2 = [functional_eq_residual(m1, (1, 1), x, w) for w in (30, 60)]
    assert r2[1].residual <= r2[0].residual + 1e-15
    assert r2[1].bound < r2[0].bound


def test_grid_invariants(m1):
    with pytest.raises(DomainError):
        TorusGrid(2, 100, np.array([0.5, 0.8]))
    with pytest.raises(DomainError):
        TorusGrid(2, 64, np.array([-0.5, 0.8]))
    bad = TorusGrid(2, 64, np.array([1.0, 1.0]))  # calP = 1 on the unit torus
    with pytest.raises(DomainError):
        free_green_quadrature(m1.measure, (0, 0), (0, 0), bad)


def test_free_quadrature_against_dp(m1):
    grid = TorusGrid.centred(m1.measure, 256)
    free = free_green_dp(m1.measure, (0, 0), 120)
    for m in [(0, 0), (3, 1), (-2, 4)]:
        assert free_green_quadrature(m1.measure, (0, 0), m, grid) == pytest.approx(free.value(m), abs=1e-6)


def test_free_quadrature_far_target_nonnegative(m1):
    grid = TorusGrid.centred(m1.measure, 128)
    assert free_green_quadrature(m1.measure, (0, 0), (-40, -40), grid) >= -1e-12


def test_free_quadrature_grid_doubling(m1):
    a = free_green_quadrature(m1.measure, (0, 0), (2, 1), TorusGrid.centred(m1.measure, 128))
    b = free_green_quadrature(m1.measure, (0, 0), (2, 1), TorusGrid.centred(m1.measure, 256))
    assert abs(a - b) < 1e-9


def test_free_quadrature_m0_closed_form(m0):
    # transient 1D walk: G(0, m) = 1/(p - q) for m >= 0 and (q/p)^{-m}/(p - q) below
    grid = TorusGrid.centred(m0.measure, 256)
    for m, expected in [(0, 3.0), (5, 3.0), (-3, 3.0 / 8)]:
        assert free_green_quadrature(m0.measure, (0,), (m,), grid) == pytest.approx(expected, abs=1e-12)


def test_killed_quadrature_m0(m0):
    run = run_killed_dp(m0, 1, 200)
    grid = TorusGrid(1, 256, np.array([0.8]))
    assert killed_green_quadrature(m0, 1, 3, grid, run.exit_law()) == pytest.approx(run.value((3,)), abs=1e-6)


@pytest.mark.parametrize("m", [(4, 3), (6, 2), (5, 5)])
def test_killed_quadrature_m1(m1, m1_run, m):
    grid = TorusGrid.centred(m1.measure, 256)
    q = killed_green_quadrature(m1, (1, 1), m, grid, m1_run.exit_law())
    assert abs(q - m1_run.value(m)) <= 1e-5


def test_killed_quadrature_contour_independence(m1, m1_run):
    law = m1_run.exit_law()
    vals = []
    for base in _random_interior_bases(m1.measure, 5, seed=12):
        assert eval_p(m1.measure, np.log(base)) < 1 - 1e-9
        vals.append(killed_green_quadrature(m1, (1, 1), (4, 3), TorusGrid(2, 256, base), law))
    assert max(vals) - min(vals) <= 1e-8


def test_quadrature_is_real(m1, m1_run):
    table = killed_green_table(m1, (1, 1), TorusGrid.centred(m1.measure, 128), m1_run.exit_law())
    for m in [(1, 1), (4, 3), (10, 2), (3, 12), (20, 20)]:
        assert abs(table.complex_value(m).imag) <= 1e-10


def test_exit_law_start_must_match(m1, m1_run):
    with pytest.raises(DomainError):
        killed_green_quadrature(m1, (2, 2), (4, 3), TorusGrid.centred(m1.measure, 64), m1_run.exit_law())


def test_spectral_convergence(m1):
    ref = free_green_quadrature(m1.measure, (0, 0), (1, 1), TorusGrid.centred(m1.measure, 512))
    errs = [abs(free_green_quadrature(m1.measure, (0, 0), (1, 1), TorusGrid.centred(m1.measure, n)) - ref)
            for n in (4, 8, 16, 32)]
    ratios = [b / a for a, b in zip(errs, errs[1:])]
    # geometric convergence in n: each doubling gains more than the last
    assert ratios[0] > ratios[1] > ratios[2]
    assert ratios[2] < 2.0 ** -12
