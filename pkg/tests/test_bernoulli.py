"""Solutions of the interior free-boundary problem: construction, refusals,
trivial solutions, the admissible zero-set family, and verification."""

import numpy as np
import pytest

from infbern import (CompactMask, MembershipError, NonexistenceError,
                     admissible_family_check, characterize, check_nonexistence,
                     distance_field, make_trivial_solution,
                     solve_interior_bernoulli, verify_fb_location,
                     verify_gradient_bound, verify_sandwich)
from infbern.bernoulli import scenario_domain, zero_set_nesting
from infbern.geometry import (closed_parallel_component_union, grid_interior,
                              parallel_mask)


@pytest.fixture(scope="module")
def ball32():
    dom = scenario_domain("ball")
    grid = dom.grid_for(1 / 32)
    d = distance_field(dom, grid)
    return dom, grid, d


@pytest.fixture(scope="module")
def square32():
    dom = scenario_domain("square")
    grid = dom.grid_for(1 / 32)
    d = distance_field(dom, grid)
    return dom, grid, d


@pytest.fixture(scope="module")
def ball_solution(ball32):
    dom, grid, d = ball32
    return solve_interior_bernoulli(dom, 3.0, grid, d=d)


@pytest.fixture(scope="module")
def square_solution(square32):
    dom, grid, d = square32
    return solve_interior_bernoulli(dom, 1.0, grid, d=d)


def test_ball_solution_matches_closed_form(ball32, ball_solution):
    dom, grid, d = ball32
    sol = ball_solution
    assert sol.kind == "nontrivial"
    X, Y = grid.meshgrid()
    r = np.hypot(X, Y)
    exact = np.clip(1.0 - 3.0 * (1.0 - r), 0.0, 1.0)
    band = d.inside & (d.values <= 1 / 3)
    assert np.abs(sol.u.values - exact)[band].max() <= 5 * grid.h * 3.0
    # the zero set contains the closed parallel mask it was built from
    K = sol.potential.K
    assert not (K.member & ~sol.zero_set.member).any()


def test_ball_battery_passes(ball_solution):
    assert verify_gradient_bound(ball_solution).passed
    rep = verify_fb_location(ball_solution)
    assert rep.passed
    assert rep.details["min_distance"] == pytest.approx(1 / 3, abs=5 / 32 * 3)
    assert verify_sandwich(ball_solution).passed


def test_gradient_attains_lambda_on_ball(ball_solution):
    g = ball_solution.potential.upwind_gradient()
    pos = ball_solution.d.inside & (ball_solution.u.values
                                    > ball_solution.tau_zero)
    h = ball_solution.u.grid.h
    assert g[pos].max() == pytest.approx(3.0, abs=5 * h * 3.0)


def test_refusal_below_threshold(ball32):
    dom, grid, d = ball32
    with pytest.raises(NonexistenceError) as err:
        solve_interior_bernoulli(dom, 0.9, grid, d=d)
    cert = err.value.certificate
    assert cert["lambda"] == 0.9
    assert cert["inv_inradius"] == pytest.approx(1.0, abs=2 * grid.h)


def test_refusal_at_threshold_is_trivial_only_regime(ball32):
    dom, grid, d = ball32
    with pytest.raises(NonexistenceError):
        solve_interior_bernoulli(dom, 1.0, grid, d=d)
    # but the high-ridge point generates a valid trivial solution
    member = np.zeros(grid.shape, bool)
    i = int(round((0 - grid.x0) / grid.h))
    j = int(round((0 - grid.y0) / grid.h))
    member[j, i] = True
    sol = make_trivial_solution(dom, 1.0, CompactMask(grid, member), grid, d=d)
    assert sol.kind == "trivial"
    X, Y = grid.meshgrid()
    r = np.hypot(X, Y)
    err = np.abs(sol.u.values - r)[sol.potential.free_mask].max()
    assert err <= 0.02   # w = |x| for the center point at lambda = 1/R
    assert verify_fb_location(sol).passed


def test_check_nonexistence_certificates():
    ball = scenario_domain("ball")
    cert = check_nonexistence(ball, 0.5, ball.grid_for(1 / 32))
    assert cert["inv_inradius"] == pytest.approx(1.0, abs=0.05)

    sq = scenario_domain("square")
    cert2 = check_nonexistence(sq, 0.4, sq.grid_for(1 / 32))
    assert cert2["inv_inradius"] == pytest.approx(0.5, abs=0.02)

    db = scenario_domain("nonconn")
    cert3 = check_nonexistence(db, 0.3, db.grid_for(0.1))
    assert cert3["inv_inradius"] == pytest.approx(1 / 3, abs=0.02)

    with pytest.raises(ValueError):
        check_nonexistence(ball, 1.5, ball.grid_for(1 / 32))


def test_square_solution_zero_set_and_slack(square32, square_solution):
    dom, grid, d = square32
    sol = square_solution
    assert sol.kind == "nontrivial"
    assert verify_gradient_bound(sol).passed
    assert verify_fb_location(sol).passed
    rep = verify_sandwich(sol)
    assert rep.passed
    # interior zero nodes match the open parallel square
    inner = grid_interior(sol.zero_set.member)
    open_mask = parallel_mask(d, 1.0).member
    sym = inner ^ open_mask
    assert np.all(np.abs(d.values[sym] - 1.0) <= 3 * grid.h)


def test_trivial_segment_zero_set(square32):
    dom, grid, d = square32
    member = np.zeros(grid.shape, bool)
    i = int(round((0 - grid.x0) / grid.h))
    j0 = int(round((-0.5 - grid.y0) / grid.h))
    j1 = int(round((0.5 - grid.y0) / grid.h))
    member[j0:j1 + 1, i] = True
    K = CompactMask(grid, member)
    sol = make_trivial_solution(dom, 1.0, K, grid, d=d)
    assert sol.kind == "trivial"
    assert verify_gradient_bound(sol).passed
    rep = verify_fb_location(sol)
    assert rep.passed
    assert rep.details["min_distance"] == pytest.approx(1.5, abs=2 * grid.h)


def test_trivial_rejects_fat_K(square32):
    dom, grid, d = square32
    X, Y = grid.meshgrid()
    fat = d.inside & (np.abs(X) <= 0.5) & (np.abs(Y) <= 0.5)
    with pytest.raises(MembershipError, match="interior"):
        make_trivial_solution(dom, 1.0, CompactMask(grid, fat), grid, d=d)


def test_trivial_rejects_K_close_to_boundary(square32):
    dom, grid, d = square32
    member = np.zeros(grid.shape, bool)
    i = int(round((1.8 - grid.x0) / grid.h))
    j = int(round((0.0 - grid.y0) / grid.h))
    member[j, i] = True                      # d = 0.2 < 1 = 1/lambda
    with pytest.raises(MembershipError, match="1/lambda"):
        make_trivial_solution(dom, 1.0, CompactMask(grid, member), grid, d=d)


def test_admissible_family_square(square32):
    dom, grid, d = square32
    K = closed_parallel_component_union(d, 1.0)
    conds = admissible_family_check(dom, 1.0, K, d=d)
    assert conds["cond_i"] and conds["cond_ii"] and conds["cond_iii"]


def test_admissible_family_rejects_wrong_level(square32):
    # a fat K whose interior is a parallel component at a different level
    dom, grid, d = square32
    K = closed_parallel_component_union(d, 0.5)
    conds = admissible_family_check(dom, 1.0, K, d=d)
    assert not conds["cond_i"]       # sticks out of {d >= 1}
    assert not conds["cond_ii"]      # interior is not a component of {d > 1}


def test_admissible_family_detects_enclosed_pocket(square32):
    dom, grid, d = square32
    X, Y = grid.meshgrid()
    ring = (np.maximum(np.abs(X), np.abs(Y)) <= 0.8) \
        & (np.maximum(np.abs(X), np.abs(Y)) >= 0.8 - 1.01 * grid.h)
    K = CompactMask(grid, ring & d.inside)
    conds = admissible_family_check(dom, 1.0, K, d=d)
    assert conds["cond_i"] and conds["cond_ii"]
    assert not conds["cond_iii"]
    assert conds["violators_iii"].any()


def test_characterize_valid_and_invalid(square32):
    dom, grid, d = square32
    K = closed_parallel_component_union(d, 1.0)
    sol, reports = characterize(dom, 1.0, K, grid, d=d)
    assert all(r.passed for r in reports.values())
    assert sol.kind == "nontrivial"

    bad = closed_parallel_component_union(d, 0.5)
    with pytest.raises(MembershipError):
        characterize(dom, 1.0, bad, grid, d=d)


def test_zero_sets_nest_in_lambda(ball32):
    dom, grid, d = ball32
    lo = solve_interior_bernoulli(dom, 2.0, grid, d=d)
    hi = solve_interior_bernoulli(dom, 3.0, grid, d=d)
    assert zero_set_nesting(lo, hi)
