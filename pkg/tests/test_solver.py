"""Wide-stencil solver: closed-form comparisons, monotone-scheme invariants,
residuals, determinism, and the structural verifications."""

import math

import numpy as np
import pytest

from infbern import (CompactMask, SolveOptions, SolverError, StencilConfig,
                     distance_field, residual, solve_dirichlet,
                     solve_potential, verify_affine_on_rays,
                     verify_cone_comparison, verify_harnack,
                     verify_slope_estimates)
from infbern.bernoulli import scenario_domain
from infbern.geometry import (ScalarField, closed_parallel_component_union,
                              stencil_offsets)
from infbern.solver import field_residuals, wrap_field


@pytest.fixture(scope="module")
def ball32():
    dom = scenario_domain("ball")
    grid = dom.grid_for(1 / 32)
    d = distance_field(dom, grid)
    return dom, grid, d


@pytest.fixture(scope="module")
def annulus32(ball32):
    dom, grid, d = ball32
    K = closed_parallel_component_union(d, 0.5)
    pot = solve_potential(dom, K, grid, d=d)
    return dom, grid, d, K, pot


def center_node_mask(grid):
    m = np.zeros(grid.shape, bool)
    i = int(round((0 - grid.x0) / grid.h))
    j = int(round((0 - grid.y0) / grid.h))
    m[j, i] = True
    return CompactMask(grid, m)


def test_stencil_directions_symmetric_coprime():
    offs = stencil_offsets(3)
    assert len(offs) == 32
    s = {tuple(o) for o in offs}
    assert all((-a, -b) in s for a, b in s)
    assert all(math.gcd(abs(a), abs(b)) == 1 for a, b in s)


def test_annulus_matches_affine_radial_solution(annulus32):
    dom, grid, d, K, pot = annulus32
    X, Y = grid.meshgrid()
    r = np.hypot(X, Y)
    exact = np.clip((r - 0.5) / 0.5, 0.0, 1.0)
    err = np.abs(pot.field.values - exact)[pot.free_mask].max()
    assert err <= 0.01
    assert pot.residual <= 1e-8


def test_cone_matches_distance_to_vertex(ball32):
    dom, grid, d = ball32
    pot = solve_potential(dom, center_node_mask(grid), grid, d=d)
    X, Y = grid.meshgrid()
    r = np.hypot(X, Y)
    err = np.abs(pot.field.values - r)[pot.free_mask].max()
    assert err <= 0.01


def test_filling_K_leaves_only_boundary_collar(ball32):
    dom, grid, d = ball32
    member = d.inside & (d.values >= 1.5 * grid.h)
    pot = solve_potential(dom, CompactMask(grid, member), grid, d=d)
    pts = pot.free_points()
    assert dom.boundary_distance(pts).max() <= 1.5 * grid.h + 1e-12
    vals = pot.field.values[pot.free_mask]
    assert np.all((vals >= 0) & (vals <= 1))


def test_residual_of_exact_cone_scales_with_h():
    dom = scenario_domain("ball")
    for h in (1 / 32, 1 / 64):
        grid = dom.grid_for(h)
        d = distance_field(dom, grid)
        K = center_node_mask(grid)
        pot = solve_potential(dom, K, grid, d=d)
        X, Y = grid.meshgrid()
        cone = np.hypot(X - h / 3, Y + h / 3)   # vertex off-grid
        res = field_residuals(pot, cone)
        away = pot.free_mask & (np.hypot(X, Y) > 0.2) & (d.values > 0.15)
        assert res[away].max() <= 3 * h


def test_residual_positive_for_wrong_field(annulus32):
    dom, grid, d, K, pot = annulus32
    ones = np.ones(grid.shape)
    res = field_residuals(pot, ones)
    assert res.max() > 0.5        # slopes toward the zero set are unbalanced
    assert residual(pot) <= 1e-8  # while the converged field satisfies tol


def test_comparison_principle_random_data(ball32):
    dom, grid, d = ball32
    rng = np.random.default_rng(5)
    for _ in range(5):
        c = rng.normal(size=5)

        def f(x, y, c=c):
            th = np.arctan2(y, x)
            return c[0] + c[1] * np.cos(th) + c[2] * np.sin(2 * th)

        def g(x, y, c=c):
            th = np.arctan2(y, x)
            return f(x, y) + 0.2 + np.abs(c[3]) * np.cos(th) ** 2 \
                + np.abs(c[4]) * np.sin(th) ** 2

        uf = solve_dirichlet(dom, grid, f, d=d)
        ug = solve_dirichlet(dom, grid, g, d=d)
        assert (uf.field.values - ug.field.values)[uf.free_mask].max() <= 1e-6


def test_solution_bounded_by_data_hull(ball32):
    dom, grid, d = ball32

    def f(x, y):
        return 0.3 + 0.4 * np.sin(3 * np.arctan2(y, x))

    pot = solve_dirichlet(dom, grid, f, d=d)
    vals = pot.field.values[pot.free_mask]
    assert vals.min() >= -0.1 - 1e-9 and vals.max() <= 0.7 + 1e-9


def test_deterministic_serial_is_bit_reproducible(ball32):
    dom, grid, d = ball32
    K = closed_parallel_component_union(d, 0.5)
    p1 = solve_potential(dom, K, grid, d=d)
    p2 = solve_potential(dom, K, grid, d=d)
    assert np.array_equal(p1.field.values, p2.field.values)
    assert p1.sweeps_used == p2.sweeps_used


def test_parallel_jacobi_meets_residual_contract():
    dom = scenario_domain("ball")
    grid = dom.grid_for(1 / 16)
    d = distance_field(dom, grid)
    K = closed_parallel_component_union(d, 0.5)
    gs = solve_potential(dom, K, grid, d=d)
    ja = solve_potential(dom, K, grid, d=d,
                         opts=SolveOptions(mode="parallel-jacobi"))
    assert ja.residual <= 1e-8
    diff = np.abs(gs.field.values - ja.field.values)[gs.free_mask].max()
    assert diff <= 1e-6


def test_nonconvergence_reports_residual():
    dom = scenario_domain("ball")
    grid = dom.grid_for(1 / 32)
    d = distance_field(dom, grid)
    K = closed_parallel_component_union(d, 0.5)
    with pytest.raises(SolverError) as err:
        solve_potential(dom, K, grid, d=d, opts=SolveOptions(max_sweeps=2))
    assert err.value.residual is not None


def test_empty_K_rejected(ball32):
    dom, grid, d = ball32
    with pytest.raises(ValueError):
        solve_potential(dom, CompactMask(grid, np.zeros(grid.shape, bool)),
                        grid, d=d)


# ---------------------------------------------------------------------------
# verifications
# ---------------------------------------------------------------------------

def test_cone_comparison_on_solved_potential(annulus32):
    dom, grid, d, K, pot = annulus32
    rep = verify_cone_comparison(pot.field, pot.free_mask, trials=60,
                                 rng=np.random.default_rng(2))
    assert rep.passed


def test_cone_comparison_affine_exact(ball32):
    dom, grid, d = ball32
    X, Y = grid.meshgrid()
    u = ScalarField(grid, 0.4 * X + 0.1 * Y, d.inside)
    rep = verify_cone_comparison(u, d.inside, trials=40,
                                 rng=np.random.default_rng(4), tol=1e-9)
    assert rep.worst_violation <= 1e-12


def test_slope_estimates_pass_and_negative_control(annulus32):
    dom, grid, d, K, pot = annulus32
    assert verify_slope_estimates(pot).passed
    rng = np.random.default_rng(9)
    vals = pot.field.values.copy()
    vals[pot.free_mask] = rng.uniform(0, 1, int(pot.free_mask.sum()))
    bad = wrap_field(dom, K, grid, vals, d=d)
    assert not verify_slope_estimates(bad).passed


def test_harnack_annulus_closed_form(annulus32):
    dom, grid, d, K, pot = annulus32
    rep = verify_harnack(pot, (0.75, 0.0), [(0.75, 0.0), (1.0, 0.0)])
    assert rep.passed
    assert rep.details["delta"] == pytest.approx(0.25, abs=1e-9)
    assert rep.details["bound"] == pytest.approx(math.exp(-1.0), abs=1e-9)
    assert rep.details["value"] == pytest.approx(0.5, abs=10 * grid.h)


def test_harnack_boundary_point_trivial(annulus32):
    dom, grid, d, K, pot = annulus32
    rep = verify_harnack(pot, (1.0, 0.0), [(1.0, 0.0)])
    assert rep.passed and rep.details["L"] == 0.0


def test_harnack_rejects_touching_polyline(annulus32):
    dom, grid, d, K, pot = annulus32
    with pytest.raises(ValueError):
        verify_harnack(pot, (0.5, 0.0), [(0.5, 0.0), (1.0, 0.0)])


def test_affine_on_rays_annulus(annulus32):
    dom, grid, d, K, pot = annulus32
    rep = verify_affine_on_rays(pot, tol=10 * grid.h)
    assert rep.passed
    assert rep.details["gap"] == pytest.approx(0.5, abs=2 * grid.h)


def test_affine_on_rays_point_zero_set(ball32):
    dom, grid, d = ball32
    pot = solve_potential(dom, center_node_mask(grid), grid, d=d)
    rep = verify_affine_on_rays(pot, tol=10 * grid.h)
    assert rep.passed      # the potential of the center is |x|/R on radii


def test_affine_on_rays_square_midside():
    dom = scenario_domain("square")
    grid = dom.grid_for(1 / 32)
    d = distance_field(dom, grid)
    K = closed_parallel_component_union(d, 1.0)
    pot = solve_potential(dom, K, grid, d=d)
    rep = verify_affine_on_rays(pot, tol=10 * grid.h)
    assert rep.passed
    assert rep.details["gap"] == pytest.approx(1.0, abs=2 * grid.h)
