import math

import numpy as np
import pytest

from conegreen import (
    Cone,
    JumpMeasure,
    WalkModel,
    eval_p,
    exit_law_dp,
    free_green_dp,
    green_dp,
    green_mc,
    harmonic_h,
    harmonicity_residual,
    run_killed_dp,
    solve_alpha,
    survival_mc,
)
from conegreen.errors import DomainError, TruncationError
from conegreen.green import ever_exit_bound, face_decay_rates

from oracles import (
    M1_STEPS,
    gamblers_ruin_exit,
    gamblers_ruin_green,
    gamblers_ruin_h,
    linear_green,
    m1_harmonic,
    quadrant_inside,
)


def _unit(*v):
    v = np.array(v, dtype=float)
    return v / np.linalg.norm(v)


@pytest.fixture(scope="module")
def m1_oracle_row():
    return linear_green(M1_STEPS, quadrant_inside, 70, (1, 1))


def test_m0_first_visits(m0):
    est = green_dp(m0, 1, [1], 100)[(1,)]
    assert est.value == pytest.approx(1.5, abs=1e-9)
    assert est.method == "dp"


@pytest.mark.parametrize("k", [1, 2, 5])
@pytest.mark.parametrize("m", [1, 3, 4, 10, 25])
def test_m0_green_closed_form(m0, k, m):
    est = run_killed_dp(m0, k, 120).estimate((m,))
    lo, hi = est.interval
    oracle = gamblers_ruin_green(k, m)
    assert lo - 1e-13 <= oracle <= hi + 1e-13


def test_m0_far_target(m0):
    assert green_dp(m0, 3, [60], 200)[(60,)].value == pytest.approx(2.625, abs=1e-2)


def test_m0_exit_law(m0):
    law = exit_law_dp(m0, 3, 100)
    assert set(law.entries) == {(0,)}
    assert law.entries[(0,)] == pytest.approx(gamblers_ruin_exit(3), abs=1e-10)
    assert law.truncation_bound < 1e-12


def test_targets_outside_cone_are_zero(m0, m1):
    assert green_dp(m0, 2, [0, -3], 40)[(0,)].value == 0.0
    assert green_dp(m1, (1, 1), [(0, 4)], 40)[(0, 4)].value == 0.0


def test_start_outside_cone(m1):
    with pytest.raises(DomainError):
        run_killed_dp(m1, (0, 1), 20)


def test_target_outside_window(m1):
    with pytest.raises(TruncationError):
        green_dp(m1, (1, 1), [(50, 50)], 20)


def test_m1_against_linear_solve(m1, m1_oracle_row):
    run = run_killed_dp(m1, (1, 1), 100)
    for m in [(1, 1), (4, 3), (6, 2), (5, 5), (12, 4), (20, 9)]:
        est = run.estimate(m)
        assert est.value == pytest.approx(m1_oracle_row[m], rel=1e-11, abs=1e-15)
        assert est.error.bound < 1e-10


def test_certificate_is_honest_on_small_window(m1, m1_oracle_row):
    # a tight window leaves real truncation; the certified interval must still hold the truth
    run = run_killed_dp(m1, (1, 1), 12)
    for m in [(4, 3), (8, 8), (10, 2)]:
        lo, hi = run.estimate(m).interval
        assert lo <= m1_oracle_row[m] <= hi
        assert hi - lo > 1e-8


def test_domination_by_free_walk(m1):
    killed = run_killed_dp(m1, (2, 2), 60)
    free = free_green_dp(m1.measure, (2, 2), 60)
    for m in [(2, 2), (3, 1), (5, 6), (10, 3), (1, 1)]:
        assert killed.value(m) <= free.value(m) + 1e-14


def test_window_monotonicity(m1):
    targets = [(4, 3), (9, 9), (12, 2)]
    small = green_dp(m1, (1, 1), targets, 15)
    large = green_dp(m1, (1, 1), targets, 40)
    for t in targets:
        assert large[t].value >= small[t].value
        (a, b), (c, d) = small[t].interval, large[t].interval
        assert max(a, c) <= min(b, d)


def test_swap_symmetry():
    steps = ((1, 0), (0, 1), (-1, 0), (0, -1))
    probs = (0.35, 0.35, 0.15, 0.15)
    quadrant = Cone((((1.0, 0.0), (0.0, 1.0)),))
    model = WalkModel(JumpMeasure(steps, probs), quadrant, "sym")
    # listing the steps in swapped order reproduces the summation order exactly
    swapped = WalkModel(JumpMeasure(tuple(s[::-1] for s in steps), probs), quadrant, "sym-swapped")
    a = run_killed_dp(model, (2, 5), 30)
    b = run_killed_dp(swapped, (5, 2), 30)
    c = run_killed_dp(model, (5, 2), 30)
    for m in [(1, 1), (3, 7), (10, 4)]:
        assert a.value(m) == b.value(m[::-1])
        assert a.value(m) == pytest.approx(c.value(m[::-1]), rel=1e-15)


def test_m0_exit_mass_plus_survival(m0):
    for k in (1, 2, 4, 7):
        law = exit_law_dp(m0, k, 100)
        assert law.total_mass + (1 - (1 / 2) ** k) == pytest.approx(1.0, abs=1e-10)


def test_exit_mass_and_survival_bracket(m1):
    u = _unit(0.3, 0.1)  # alpha(u) = 0, so the twisted walk is the walk itself
    bd = solve_alpha(m1.measure, u)
    assert np.allclose(bd.alpha, 0.0, atol=1e-10)
    law = exit_law_dp(m1, (2, 1), 80)
    s = survival_mc(m1, bd, (2, 1), horizon=300, escape_radius=10, seed=3, n_samples=20_000)
    assert s.lower <= s.upper
    assert law.total_mass + s.lower <= 1 + 3 * s.std_error + law.truncation_bound


def test_survival_deep_start(m1):
    bd = solve_alpha(m1.measure, _unit(1, 1))
    s = survival_mc(m1, bd, (100, 100), horizon=100, escape_radius=20, seed=11, n_samples=5_000)
    assert s.lower > 0.99


@pytest.mark.parametrize("k, m", [((1, 1), (1, 1)), ((1, 1), (3, 2)), ((2, 3), (2, 4))])
def test_dp_mc_agreement_m1(m1, k, m):
    dp = green_dp(m1, k, [m], 80)[m]
    mc = green_mc(m1, k, m, n_traj=40_000, horizon=400, seed=17)
    assert abs(dp.value - mc.value) <= 3 * mc.error.ci_half_width + dp.error.bound


@pytest.mark.parametrize("k, m", [(1, 1), (2, 5), (4, 2)])
def test_dp_mc_agreement_m0(m0, k, m):
    dp = green_dp(m0, k, [m], 100)[(m,)]
    mc = green_mc(m0, k, m, n_traj=40_000, horizon=400, seed=5)
    assert abs(dp.value - mc.value) <= 3 * mc.error.ci_half_width + dp.error.bound


def test_mc_thread_count_does_not_change_results(m1):
    a = green_mc(m1, (1, 1), (2, 2), n_traj=120_000, horizon=200, seed=9, threads=1)
    b = green_mc(m1, (1, 1), (2, 2), n_traj=120_000, horizon=200, seed=9, threads=3)
    assert a.value == b.value and a.error == b.error


@pytest.mark.parametrize("k", [1, 2, 3, 8])
def test_m0_harmonic_closed_form(m0, k):
    bd = solve_alpha(m0.measure, [1.0])
    est = harmonic_h(m0, bd, k, window=100)
    assert est.value == pytest.approx(gamblers_ruin_h(k), abs=1e-10)
    exact = gamblers_ruin_h(k, float(bd.alpha[0]))
    assert est.value - est.error <= exact <= est.value + est.error


@pytest.mark.parametrize("u", [_unit(3, 1), _unit(1, 1), _unit(1, 3), _unit(1, 0.05)])
@pytest.mark.parametrize("k", [(1, 1), (2, 2), (3, 1), (1, 4)])
def test_m1_harmonic_product_form(m1, u, k):
    bd = solve_alpha(m1.measure, u)
    est = harmonic_h(m1, bd, k, window=80)
    exact = m1_harmonic(bd.alpha, k)
    assert est.value - est.error - 1e-12 <= exact <= est.value + 1e-12
    assert est.value > 0


def test_harmonic_positivity_complement(m1_rev):
    bd = solve_alpha(m1_rev.measure, _unit(-1, 0.5))
    for k in [(-1, 1), (-3, -3), (2, -1), (-1, 6)]:
        est = harmonic_h(m1_rev, bd, k, window=50)
        assert est.value - est.error > 0


def test_harmonicity_residual_interior(m1):
    bd = solve_alpha(m1.measure, _unit(1, 1))
    assert harmonicity_residual(m1, bd, (3, 3), 80) <= 1e-6


def test_harmonicity_residual_boundary_direction(m1):
    bd = solve_alpha(m1.measure, [1.0, 0.0])
    assert harmonicity_residual(m1, bd, (3, 3), 80) <= 1e-6


def test_pure_exponential_is_harmonic_away_from_boundary(m1):
    bd = solve_alpha(m1.measure, _unit(2, 1))
    k = np.array([10, 10])
    lhs = sum(p * math.exp(bd.alpha @ (k + np.array(s))) for s, p in M1_STEPS.items())
    assert lhs == pytest.approx(math.exp(bd.alpha @ k) * eval_p(m1.measure, bd.alpha), rel=1e-15)
    assert abs(lhs - math.exp(bd.alpha @ k)) <= 1e-9 * math.exp(bd.alpha @ k)


def test_harmonic_mc_needs_seed(m1):
    bd = solve_alpha(m1.measure, _unit(1, 1))
    with pytest.raises(DomainError):
        harmonic_h(m1, bd, (1, 1), method="mc")


def test_harmonic_direction_outside_cone(m1):
    bd = solve_alpha(m1.measure, [-1.0, 0.0])
    with pytest.raises(DomainError):
        harmonic_h(m1, bd, (1, 1))


def test_harmonic_mc_agrees_with_series(m1):
    bd = solve_alpha(m1.measure, _unit(1, 1))
    s = harmonic_h(m1, bd, (2, 2), window=80)
    mc = harmonic_h(m1, bd, (2, 2), "mc", n_samples=100_000, seed=4)
    assert abs(s.value - mc.value) <= 3 * math.hypot(s.combined_sigma(), mc.combined_sigma())


def test_face_decay_rates(m0):
    theta = face_decay_rates(m0.measure, np.array([[1.0]]))
    # E exp(-theta S) = 1 has the nonzero root theta = log(p / q)
    assert theta[0] == pytest.approx(math.log(2), rel=1e-10)


def test_ever_exit_bound_is_valid_for_m0(m0):
    pts = np.array([[1.0], [5.0], [20.0]])
    eb = ever_exit_bound(m0.cone, m0.measure, pts)
    exact = np.array([gamblers_ruin_exit(int(y)) for y in pts[:, 0]])
    assert np.all(eb >= exact * (1 - 1e-9))
