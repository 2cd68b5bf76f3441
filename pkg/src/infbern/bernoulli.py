"""Construction and verification of interior Bernoulli free-boundary
solutions driven by the infinity Laplacian.

A solution is a potential u with u = 1 on the domain boundary, u = 0 on a
compact zero set, infinity-harmonic in between, whose free boundary carries
the overdetermined slope condition |grad u| = lambda.  The pointwise
viscosity form of that condition has no canonical grid analogue, so it is
verified through its proved consequences: the gradient bound, the free
boundary location, the two-sided distance bounds with equality on minimal
rays, and affinity along rays.  Reports state this explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import solver
from .geometry import (CompactMask, Disk, Domain, Grid, Rect, ScalarField,
                       TAU_RAY_CELLS, check_closure_regularity,
                       closed_component_masks, closed_parallel_component_union,
                       component_masks, distance_field, grid_interior, inradius,
                       mask_distance, minimal_ray_mask, parallel_distance_field,
                       parallel_mask)
from .reports import VerificationReport, all_pass
from .solver import Potential, SolveOptions, StencilConfig, solve_potential

VERIFICATION_DOCTRINE = (
    "free-boundary conditions are verified through their consequences: "
    "gradient bound, free-boundary location, two-sided distance bounds, "
    "affinity on minimal rays")


class NonexistenceError(ValueError):
    """Requested lambda admits no non-constant solution; carries the
    incompatibility certificate (lambda, 1/inradius)."""

    def __init__(self, message, certificate):
        super().__init__(message)
        self.certificate = certificate


class MembershipError(ValueError):
    """Candidate zero set fails the admissible-family conditions."""


@dataclass
class BernoulliSolution:
    lam: float
    potential: Potential
    u: ScalarField
    zero_set: CompactMask
    free_boundary: np.ndarray
    kind: str
    d: ScalarField
    tau_zero: float

    @property
    def domain(self):
        return self.potential.domain


def _classify(potential, d, lam, opts):
    tau_zero = 10.0 * opts.tol_residual
    u = potential.field
    zero = d.inside & (u.values <= tau_zero)
    m = zero
    positive = d.inside & ~zero
    fb = np.zeros_like(zero)
    fb[1:-1, 1:-1] = m[1:-1, 1:-1] & (positive[:-2, 1:-1] | positive[2:, 1:-1]
                                      | positive[1:-1, :-2] | positive[1:-1, 2:])
    kind = "nontrivial" if grid_interior(zero).any() else "trivial"
    return BernoulliSolution(lam, potential, u, CompactMask(d.grid, zero),
                             fb, kind, d, tau_zero)


def check_nonexistence(domain, lam, grid, d=None):
    """Certificate that lambda is below the existence threshold.

    Any solution has sup |grad u| >= 1/inradius, while the gradient bound
    caps it at lambda; lambda < 1/inradius is therefore incompatible.  The
    inradius is only known to within h on a grid, so certification demands
    lam*(R+h) < 1.
    """
    if d is None:
        d = distance_field(domain, grid)
    R = inradius(d)
    h = d.grid.h
    if lam * (R + h) >= 1.0:
        raise ValueError(
            f"certificate not applicable: lambda={lam} is not below "
            f"1/(inradius+h)={1.0 / (R + h):.6g}")
    return {
        "lambda": lam,
        "inv_inradius": 1.0 / R,
        "inradius": R,
        "h_uncertainty": h,
        "reason": ("any non-constant solution needs sup|grad u| >= "
                   "1/inradius > lambda, contradicting the gradient bound"),
    }


def solve_interior_bernoulli(domain, lam, grid, opts=None, stencil=None, d=None):
    """The canonical non-trivial solution: potential of the closure of the
    parallel set at distance 1/lambda.

    Refuses when lambda is not safely above 1/inradius (within the grid's h
    uncertainty); at or below the threshold only trivial solutions exist.
    """
    opts = opts or SolveOptions()
    if d is None:
        d = distance_field(domain, grid)
    R = inradius(d)
    h = d.grid.h
    if lam * (R - h) <= 1.0:
        try:
            cert = check_nonexistence(domain, lam, grid, d=d)
        except ValueError:
            cert = {"lambda": lam, "inv_inradius": 1.0 / R, "inradius": R,
                    "h_uncertainty": h,
                    "reason": "lambda within h-uncertainty of 1/inradius: "
                              "trivial-only regime"}
        raise NonexistenceError(
            f"lambda={lam} <= 1/(inradius-h): no non-trivial solution", cert)
    r = 1.0 / lam
    K = closed_parallel_component_union(d, r)
    pot = solve_potential(domain, K, grid, opts=opts, stencil=stencil, d=d)
    sol = _classify(pot, d, lam, opts)
    if sol.kind != "nontrivial":
        raise solver.SolverError("parallel-set potential came out trivial; "
                                 "grid too coarse for r=1/lambda")
    return sol


def verify_gradient_bound(sol, tol=None):
    """|grad u| <= lambda + tol at every node where u > 0."""
    h = sol.u.grid.h
    lam = sol.lam
    if tol is None:
        tol = 5 * h * lam
    g = sol.potential.upwind_gradient()
    pos = sol.d.inside & (sol.u.values > sol.tau_zero)
    worst = float((g[pos] - lam).max()) if pos.any() else -lam
    loc = None
    if pos.any():
        flat = np.where(pos, g, -np.inf)
        jj, ii = np.unravel_index(np.argmax(flat), flat.shape)
        loc = sol.u.grid.point(ii, jj)
    return VerificationReport("gradient-bound", worst, float(tol), location=loc,
                              citation="gradient-bound",
                              details={"lambda": lam, "max_gradient":
                                       float(g[pos].max()) if pos.any() else 0.0,
                                       "doctrine": VERIFICATION_DOCTRINE})


def verify_fb_location(sol, tol=None):
    """dist(free boundary, domain boundary) >= 1/lambda, with equality when
    the zero set has interior."""
    h = sol.u.grid.h
    lam = sol.lam
    if tol is None:
        tol = 5 * h * lam
    fb = sol.free_boundary
    if not fb.any():
        raise ValueError("empty free boundary")
    dvals = sol.d.values[fb]
    dmin = float(dvals.min())
    target = 1.0 / lam
    worst = target - dmin
    if sol.kind == "nontrivial":
        worst = max(worst, dmin - target)
    jj, ii = np.nonzero(fb)
    k = int(np.argmin(sol.d.values[fb]))
    loc = sol.u.grid.point(ii[k], jj[k])
    return VerificationReport("free-boundary-location", float(worst), float(tol),
                              location=loc, citation="free-boundary-location",
                              details={"min_distance": dmin, "target": target,
                                       "kind": sol.kind})


def verify_sandwich(sol, dpar=None, ray_mask=None, tol=None):
    """1 - lambda*d <= u <= lambda*dist(., parallel set) on the closure of
    the band between the boundary and the parallel set, with equality on the
    minimal-ray region."""
    lam = sol.lam
    h = sol.u.grid.h
    r = 1.0 / lam
    if tol is None:
        tol = 5 * h * lam
    d = sol.d
    if dpar is None:
        dpar = parallel_distance_field(d, r)
    if ray_mask is None:
        ray_mask = minimal_ray_mask(d, dpar, r)
    band = d.inside & (d.values <= r + 1e-9 * (1 + r))
    u = sol.u.values
    lower = 1.0 - lam * d.values
    upper = lam * dpar.values
    v_low = float((lower - u)[band].max())
    v_up = float((u - upper)[band].max())
    eq = ray_mask.member
    v_eq = 0.0
    if eq.any():
        v_eq = max(float(np.abs(u - lower)[eq].max()),
                   float(np.abs(u - upper)[eq].max()))
    worst = max(v_low, v_up, v_eq)
    return VerificationReport("distance-sandwich", worst, float(tol),
                              citation="two-sided-distance-bounds",
                              details={"lower_violation": v_low,
                                       "upper_violation": v_up,
                                       "equality_violation": v_eq,
                                       "band_nodes": int(band.sum()),
                                       "ray_nodes": int(eq.sum())})


def slack_outside_rays(sol, dpar=None, ray_mask=None):
    """Largest one-sided slack in the sandwich bounds off the ray region."""
    lam = sol.lam
    r = 1.0 / lam
    d = sol.d
    if dpar is None:
        dpar = parallel_distance_field(d, r)
    if ray_mask is None:
        ray_mask = minimal_ray_mask(d, dpar, r)
    band = d.inside & (d.values <= r) & ~ray_mask.member \
        & ~closed_parallel_component_union(d, r).member
    if not band.any():
        return 0.0
    u = sol.u.values
    slack_low = (u - (1.0 - lam * d.values))[band]
    slack_up = (lam * dpar.values - u)[band]
    return float(max(slack_low.max(), slack_up.max()))


# ---------------------------------------------------------------------------
# trivial solutions and the admissible family
# ---------------------------------------------------------------------------

def _complement_reaches_boundary(d, K):
    """True iff every in-domain node outside K is joined to the domain
    boundary by a 4-connected path avoiding K."""
    inside = d.inside
    compl = inside & ~K.member
    if not compl.any():
        return True, np.zeros_like(compl)
    labels, count = ndimage.label(compl, structure=np.array([[0, 1, 0],
                                                             [1, 1, 1],
                                                             [0, 1, 0]]))
    near_bd = np.zeros_like(inside)
    near_bd[1:-1, 1:-1] = inside[1:-1, 1:-1] & (
        ~inside[:-2, 1:-1] | ~inside[2:, 1:-1]
        | ~inside[1:-1, :-2] | ~inside[1:-1, 2:])
    # nodes on the array rim are boundary-adjacent by construction of margins
    reached_labels = np.unique(labels[compl & near_bd])
    stranded = compl & ~np.isin(labels, reached_labels)
    return not stranded.any(), stranded


def admissible_family_check(domain, lam, K, d=None, grid=None):
    """The three conditions for a compact K to generate a solution:

    (i)   K lies in {d >= 1/lambda} (within the 2h membership tolerance);
    (ii)  every component of the grid interior of K matches a component of
          the open parallel set, up to an O(h) shell;
    (iii) the complement of K reaches the domain boundary everywhere (no
          enclosed pockets forced to zero).
    """
    if d is None:
        d = distance_field(domain, grid or K.grid)
    h = d.grid.h
    r = 1.0 / lam
    tau = TAU_RAY_CELLS * h

    viol_i = K.member & ~(d.inside & (d.values >= r - tau))
    cond_i = not viol_i.any()

    interior = grid_interior(K.member)
    cond_ii = True
    viol_ii = np.zeros_like(K.member)
    if interior.any():
        open_comps = component_masks(parallel_mask(d, r, closed=False))
        labels, count = ndimage.label(interior, structure=np.array(
            [[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
        shell_tol = 3.0 * h
        for lab in range(1, count + 1):
            comp = labels == lab
            best = None
            best_overlap = 0
            for oc in open_comps:
                ov = int((comp & oc.member).sum())
                if ov > best_overlap:
                    best_overlap = ov
                    best = oc
            if best is None:
                cond_ii = False
                viol_ii |= comp
                continue
            sym = comp ^ best.member
            bad = sym & (np.abs(d.values - r) > shell_tol)
            if bad.any():
                cond_ii = False
                viol_ii |= bad

    cond_iii, stranded = _complement_reaches_boundary(d, K)

    return {"cond_i": cond_i, "cond_ii": cond_ii, "cond_iii": cond_iii,
            "violators_i": viol_i, "violators_ii": viol_ii,
            "violators_iii": stranded}


def make_trivial_solution(domain, lam, K, grid, opts=None, stencil=None, d=None):
    """Potential of a compact K with empty grid interior inside
    {d >= 1/lambda}; every such K yields a (trivial) solution provided its
    complement reaches the boundary."""
    opts = opts or SolveOptions()
    if d is None:
        d = distance_field(domain, grid)
    h = d.grid.h
    r = 1.0 / lam
    failures = []
    if not K.member.any():
        failures.append("K is empty")
    if (K.member & ~(d.inside & (d.values >= r - TAU_RAY_CELLS * h))).any():
        failures.append("K not contained in {d >= 1/lambda}")
    if grid_interior(K.member).any():
        failures.append("K has non-empty grid interior")
    ok, _ = _complement_reaches_boundary(d, K)
    if not ok:
        failures.append("complement of K has pockets not reaching the boundary")
    if failures:
        raise MembershipError("; ".join(failures))
    pot = solve_potential(domain, K, grid, opts=opts, stencil=stencil, d=d)
    sol = _classify(pot, d, lam, opts)
    return sol


def characterize(domain, lam, K, grid, opts=None, stencil=None, d=None):
    """Solve the potential of an admissible K and verify it: gradient bound,
    free-boundary location and the zero-set identity {u = 0} = K."""
    opts = opts or SolveOptions()
    if d is None:
        d = distance_field(domain, grid)
    conds = admissible_family_check(domain, lam, K, d=d)
    if not (conds["cond_i"] and conds["cond_ii"] and conds["cond_iii"]):
        bad = [name for name in ("cond_i", "cond_ii", "cond_iii")
               if not conds[name]]
        raise MembershipError(f"K fails admissibility: {', '.join(bad)}")
    pot = solve_potential(domain, K, grid, opts=opts, stencil=stencil, d=d)
    sol = _classify(pot, d, lam, opts)

    h = grid.h
    spurious = sol.zero_set.member & ~K.member
    if spurious.any():
        distK = mask_distance(K)
        worst = float(distK[spurious].max())
    else:
        worst = 0.0
    rep_zero = VerificationReport("zero-set-identity", worst, 2.0 * h,
                                  citation="zero-set-identity",
                                  details={"zero_nodes": sol.zero_set.count,
                                           "K_nodes": K.count})
    reports = {
        "zero_set": rep_zero,
        "gradient": verify_gradient_bound(sol),
        "fb_location": verify_fb_location(sol),
    }
    return sol, reports


def zero_set_nesting(sol_lo, sol_hi, tol_cells=2.0):
    """Zero sets grow with lambda: zero(lam1) subset of zero(lam2) for
    lam1 < lam2, up to an O(h) shell around the lam1 level."""
    if sol_lo.lam > sol_hi.lam:
        sol_lo, sol_hi = sol_hi, sol_lo
    h = sol_lo.u.grid.h
    r1 = 1.0 / sol_lo.lam
    escaped = sol_lo.zero_set.member & ~sol_hi.zero_set.member
    off_shell = escaped & (np.abs(sol_lo.d.values - r1) > tol_cells * h)
    return not off_shell.any()


# ---------------------------------------------------------------------------
# scenario construction
# ---------------------------------------------------------------------------

SQRT8 = 2.0 * math.sqrt(2.0)


def scenario_domain(name):
    if name == "ball":
        return Domain([Disk(0.0, 0.0, 1.0)])
    if name == "square":
        return Domain([Rect(-2.0, -2.0, 2.0, 2.0)])
    if name == "nonconn":
        return Domain([Disk(-4.0, 0.0, 3.0), Disk(4.0, 0.0, 3.0),
                       Rect(-4.0, -1.0, 4.0, 1.0)])
    if name == "nonreg":
        return Domain([Disk(-4.0, 0.0, 3.0), Disk(4.0, 0.0, 1.0),
                       Rect(-4.0, -1.0, 4.0, 1.0)])
    raise ValueError(f"unknown scenario {name!r}")


def axis_segment_nodes(d, xlo, xhi, r, alternating=True):
    """Nodes on the y ~ 0 grid row with x in [xlo, xhi] sitting on the
    level {d = r}; every second node when alternating."""
    g = d.grid
    ys = g.ys()
    j = int(np.argmin(np.abs(ys)))
    xs = g.xs()
    sel = (xs >= xlo - 1e-9) & (xs <= xhi + 1e-9)
    ii = np.nonzero(sel)[0]
    member = np.zeros(g.shape, bool)
    tol = 1e-6 * max(1.0, r)
    for count, i in enumerate(ii):
        if alternating and count % 2 == 1:
            continue
        if d.inside[j, i] and d.values[j, i] >= r - tol:
            member[j, i] = True
    return CompactMask(g, member)


def sup_diff(field_a, field_b, region):
    if not region.any():
        return 0.0
    return float(np.abs(field_a.values - field_b.values)[region].max())


def scenario(name, lam=None, h=None, opts=None, stencil=None):
    """Build a named example domain, construct its designated solution
    family and run the verification battery.  Returns a bundle dict."""
    defaults = {"ball": (3.0, 1 / 128), "square": (1.0, 1 / 64),
                "nonconn": (1.0, 0.05), "nonreg": (1.0, 0.05)}
    if name not in defaults:
        raise ValueError(f"unknown scenario {name!r}")
    lam = defaults[name][0] if lam is None else float(lam)
    h = defaults[name][1] if h is None else float(h)
    opts = opts or SolveOptions()
    dom = scenario_domain(name)
    grid = dom.grid_for(h)
    d = distance_field(dom, grid)
    r = 1.0 / lam
    bundle = {"name": name, "lambda": lam, "h": h, "domain": dom,
              "grid": grid, "d": d, "solutions": {}, "reports": {},
              "extras": {}}

    def battery(tag, sol, with_sandwich=True):
        reps = {"gradient": verify_gradient_bound(sol),
                "fb_location": verify_fb_location(sol)}
        if with_sandwich and sol.kind == "nontrivial":
            dpar = parallel_distance_field(d, r)
            rays = minimal_ray_mask(d, dpar, r)
            reps["sandwich"] = verify_sandwich(sol, dpar=dpar, ray_mask=rays)
            bundle["extras"].setdefault("ray_mask", rays)
            bundle["extras"].setdefault("dpar", dpar)
        bundle["solutions"][tag] = sol
        bundle["reports"][tag] = reps
        return sol

    if name in ("ball", "square"):
        sol = solve_interior_bernoulli(dom, lam, grid, opts=opts,
                                       stencil=stencil, d=d)
        battery("canonical", sol)
        if name == "ball":
            X, Y = grid.meshgrid()
            rad = np.hypot(X, Y)
            exact = np.clip(1.0 - lam * (1.0 - rad), 0.0, 1.0)
            band = d.inside & (d.values <= r)
            bundle["extras"]["closed_form_sup_error"] = float(
                np.abs(sol.u.values - exact)[band].max())
        if name == "square":
            bundle["extras"]["off_ray_slack"] = slack_outside_rays(
                sol, dpar=bundle["extras"].get("dpar"),
                ray_mask=bundle["extras"].get("ray_mask"))
        return bundle

    # dumbbell scenarios
    comps = closed_component_masks(d, r)
    bundle["extras"]["parallel_components"] = len(comps)
    w1 = solve_interior_bernoulli(dom, lam, grid, opts=opts, stencil=stencil,
                                  d=d)
    battery("canonical", w1)

    if name == "nonconn":
        left, right = comps[0], comps[-1]
        sol_l, reps_l = characterize(dom, lam, left, grid, opts=opts,
                                     stencil=stencil, d=d)
        sol_r, reps_r = characterize(dom, lam, right, grid, opts=opts,
                                     stencil=stencil, d=d)
        for tag, sol, reps in (("left", sol_l, reps_l), ("right", sol_r, reps_r)):
            reps["gradient"] = verify_gradient_bound(sol)
            reps["fb_location"] = verify_fb_location(sol)
            bundle["solutions"][tag] = sol
            bundle["reports"][tag] = reps
        X, _ = grid.meshgrid()
        p_x = SQRT8 - 4.0
        a_minus = d.inside & ~w1.potential.K.member & (X < p_x)
        tau_eq = 5 * h * lam
        bundle["extras"]["a_minus_sup"] = sup_diff(sol_l.u, w1.u, a_minus)
        bundle["extras"]["tau_eq"] = tau_eq
        pair_sups = {
            "left_vs_right": sup_diff(sol_l.u, sol_r.u, d.inside),
            "left_vs_canonical": sup_diff(sol_l.u, w1.u, d.inside),
            "right_vs_canonical": sup_diff(sol_r.u, w1.u, d.inside),
        }
        bundle["extras"]["pairwise_sup"] = pair_sups
        rep_eq = VerificationReport(
            "one-sided-potential-matches-on-far-side",
            bundle["extras"]["a_minus_sup"], tau_eq,
            citation="potential-along-rays",
            details={"region": "x < 2*sqrt(2)-4 off the zero set"})
        bundle["reports"]["left"]["far_side_equality"] = rep_eq

    if name == "nonreg":
        h2_ok, flagged = check_closure_regularity(d, r)
        bundle["extras"]["closure_regular"] = h2_ok
        bundle["extras"]["closure_flagged"] = flagged
        base = comps[0]
        q_x = 4.0
        p_x = SQRT8 - 4.0
        ticks = axis_segment_nodes(d, p_x, q_x, r, alternating=True)
        K = base.union(ticks)
        sol_c, reps_c = characterize(dom, lam, K, grid, opts=opts,
                                     stencil=stencil, d=d)
        bundle["solutions"]["augmented"] = sol_c
        bundle["reports"]["augmented"] = reps_c
        bundle["extras"]["augmented_K"] = K
        bundle["extras"]["membership"] = admissible_family_check(dom, lam, K, d=d)

    return bundle
