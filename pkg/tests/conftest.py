"""Shared fixtures: the expensive reference solves are session-scoped so the
acceptance criteria and unit tests reuse them."""

import time

import numpy as np
import pytest

from infbern import (CompactMask, SolveOptions, StencilConfig, distance_field,
                     scenario, solve_potential)
from infbern.bernoulli import scenario_domain
from infbern.geometry import closed_parallel_component_union


@pytest.fixture(scope="session")
def ball128():
    """Canonical ball solution, lambda=3, h=1/128, with solve timing."""
    t0 = time.perf_counter()
    bundle = scenario("ball", lam=3.0, h=1 / 128)
    bundle["solve_seconds"] = time.perf_counter() - t0
    return bundle


@pytest.fixture(scope="session")
def square64():
    """Canonical square solution, lambda=1, h=1/64."""
    return scenario("square", lam=1.0, h=1 / 64)


@pytest.fixture(scope="session")
def nonconn_bundle():
    """Dumbbell with disconnected parallel set, lambda=1, h=0.05."""
    return scenario("nonconn", lam=1.0, h=0.05)


@pytest.fixture(scope="session")
def nonreg_bundle():
    """Dumbbell with irregular parallel closure, lambda=1, h=0.05."""
    return scenario("nonreg", lam=1.0, h=0.05)


@pytest.fixture(scope="session")
def convergence_errors():
    """Max errors vs the cone and annulus closed forms on refining grids.

    Fixed-width stencils converge to a directionally perturbed operator, so
    the study widens the stencil as h shrinks; the solves run at
    tol_residual=1e-6, three orders below the smallest measured error.
    """
    dom = scenario_domain("ball")
    opts = SolveOptions(tol_residual=1e-6)
    errs_cone, errs_ann = [], []
    for h, w in ((1 / 32, 3), (1 / 64, 4), (1 / 128, 5)):
        grid = dom.grid_for(h, margin=w + 1)
        d = distance_field(dom, grid)
        st = StencilConfig(width=w)
        X, Y = grid.meshgrid()
        r = np.hypot(X, Y)

        member = np.zeros(grid.shape, bool)
        i0 = int(round((0 - grid.x0) / h))
        j0 = int(round((0 - grid.y0) / h))
        member[j0, i0] = True
        pot = solve_potential(dom, CompactMask(grid, member), grid, d=d,
                              stencil=st, opts=opts)
        errs_cone.append(float(np.abs(pot.field.values - r)[pot.free_mask].max()))

        K = closed_parallel_component_union(d, 0.5)
        pot2 = solve_potential(dom, K, grid, d=d, stencil=st, opts=opts)
        exact = np.clip((r - 0.5) / 0.5, 0.0, 1.0)
        errs_ann.append(float(np.abs(pot2.field.values - exact)[pot2.free_mask].max()))
    return {"cone": errs_cone, "annulus": errs_ann}
