"""Monotone wide-stencil solver for the Dirichlet problem of the infinity
Laplacian, plus the structural verifications that characterize its
solutions (comparison with cones, slope estimates, the Harnack lower bound
and affinity along minimal rays).

The scheme enforces the discrete mid-slope condition at every free node:
the maximal and minimal difference quotients over the stencil must cancel.
Stencil rays that cross the domain boundary or the zero set carry their
Dirichlet values at the exact crossing distance (cut cells), so no mesh
fitting is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import core
from .geometry import (CompactMask, Domain, Grid, ScalarField, distance_field,
                       mask_distance, stencil_offsets)
from .reports import VerificationReport


class SolverError(RuntimeError):
    """Solve failed; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class StencilConfig:
    """Neighbours within Chebyshev radius `width`, coprime directions only."""

    width: int = 3

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("stencil width must be >= 1")

    def offsets(self):
        return stencil_offsets(self.width)


@dataclass(frozen=True)
class SolveOptions:
    """tol_residual is relative to the Dirichlet data range."""

    tol_residual: float = 1e-8
    max_sweeps: int = 50000
    mode: str = "deterministic-serial"

    def __post_init__(self):
        if self.tol_residual <= 0:
            raise ValueError("tol_residual must be positive")
        if self.mode not in ("deterministic-serial", "parallel-jacobi"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class Potential:
    """Solved field with its zero set and the discrete solve metadata."""

    field: ScalarField
    K: CompactMask
    residual: float
    sweeps_used: int
    domain: Domain = None
    _free_j: np.ndarray = None
    _free_i: np.ndarray = None
    _kind: np.ndarray = None
    _nidx: np.ndarray = None
    _nval: np.ndarray = None
    _ndist: np.ndarray = None
    _u: np.ndarray = None

    @property
    def free_mask(self):
        m = np.zeros(self.field.grid.shape, bool)
        m[self._free_j, self._free_i] = True
        return m

    def free_points(self):
        g = self.field.grid
        return np.stack([g.x0 + g.h * self._free_i,
                         g.y0 + g.h * self._free_j], axis=1)

    def upwind_gradient(self):
        """Cut-cell aware upwind gradient on free nodes, as a grid array."""
        g = core.upwind_grad_free(self._u, self._kind, self._nidx,
                                  self._nval, self._ndist)
        out = np.zeros(self.field.grid.shape)
        out[self._free_j, self._free_i] = g
        return out

    def slopes(self):
        return core.stencil_slopes(self._u, self._kind, self._nidx,
                                   self._nval, self._ndist)


def _prepare(domain, grid, K, stencil, d=None):
    if d is None:
        d = distance_field(domain, grid)
    inside = d.inside
    if K is None:
        member = np.zeros(grid.shape, bool)
        level = None
    else:
        if K.grid != grid:
            raise ValueError("K mask lives on a different grid")
        member = K.member
        if (member & ~inside).any():
            raise ValueError("K has nodes outside the domain")
        level = K.level
    free = inside & ~member
    fj, fi = np.nonzero(free)
    if fj.size == 0:
        raise SolverError("no free nodes on this grid")
    free_index = np.full(grid.shape, -1, np.int64)
    free_index[fj, fi] = np.arange(fj.size)
    offs = stencil.offsets()
    kind, nidx, ndist, src, bx, by = core.build_stencil(
        fj.astype(np.int64), fi.astype(np.int64), free_index,
        inside.astype(np.uint8), member.astype(np.uint8), offs,
        grid.x0, grid.y0, grid.h, grid.nx, grid.ny,
        domain.prims, domain.pieces,
        level is not None, -1.0 if level is None else float(level))
    return d, free, fj, fi, kind, nidx, ndist, src, bx, by


def _iterate(u, kind, nidx, nval, ndist, opts, data_range):
    tol = opts.tol_residual * max(data_range, 1e-300)
    order_f = np.arange(u.size, dtype=np.int64)
    order_r = order_f[::-1].copy()
    res = np.inf
    for it in range(1, opts.max_sweeps + 1):
        if opts.mode == "deterministic-serial":
            c1 = core.gs_sweep(u, kind, nidx, nval, ndist, order_f)
            c2 = core.gs_sweep(u, kind, nidx, nval, ndist, order_r)
            change = max(c1, c2)
        else:
            unew = np.empty_like(u)
            core.jacobi_sweep(u, unew, kind, nidx, nval, ndist)
            change = float(np.max(np.abs(unew - u)))
            u[:] = unew
        if change <= tol:
            res, _ = core.residual_max(u, kind, nidx, nval, ndist)
            if res <= tol:
                return it, float(res)
    res, _ = core.residual_max(u, kind, nidx, nval, ndist)
    raise SolverError(f"no convergence in {opts.max_sweeps} sweeps "
                      f"(residual {res:.3e}, tol {tol:.3e})", residual=float(res))


CASCADE_MIN_FREE = 3000
CASCADE_MAX_DEPTH = 6


def _coarsen(grid, K):
    """Index-subsampled coarse grid (every second node) and K restriction."""
    cg = Grid(grid.x0, grid.y0, 2 * grid.h,
              (grid.nx + 1) // 2, (grid.ny + 1) // 2)
    if cg.nx < 8 or cg.ny < 8:
        return None
    member = K.member[::2, ::2]
    if not member.any():
        return None
    return cg, CompactMask(cg, member.copy(), level=K.level)


def solve_potential(domain, K, grid, opts=None, stencil=None, d=None, _depth=0):
    """Potential of the compact set K: value 1 on the domain boundary, 0 on
    K, discrete mid-slope balance at every free node.

    When K carries a parallel-set level, stencil rays locate the exact level
    crossing, which keeps the zero boundary sub-cell accurate.  Large grids
    start from the interpolated solution of an index-coarsened solve
    (cascadic initialization: same discrete system and residual contract,
    far fewer fine sweeps); the coarsest level starts from the distance
    ratio dist(.,K) / (dist(.,K) + d), which is exact along minimal rays.
    """
    opts = opts or SolveOptions()
    stencil = stencil or StencilConfig()
    if K is None or not K.member.any():
        raise ValueError("K must be a nonempty mask")
    d, free, fj, fi, kind, nidx, ndist, src, bx, by = _prepare(
        domain, grid, K, stencil, d)
    nval = np.where(src == core.SRC_BOUNDARY, 1.0, 0.0)
    nval[kind != core.KIND_FIXED] = 0.0

    init_field = None
    if fj.size > CASCADE_MIN_FREE and _depth < CASCADE_MAX_DEPTH:
        coarse = _coarsen(grid, K)
        if coarse is not None:
            try:
                cpot = solve_potential(domain, coarse[1], coarse[0], opts=opts,
                                       stencil=stencil, _depth=_depth + 1)
                init_field = cpot.field
            except SolverError:
                init_field = None
    if init_field is not None:
        g = grid
        pts = np.stack([g.x0 + g.h * fi, g.y0 + g.h * fj], axis=1)
        u = np.clip(init_field.interp(pts), 0.0, 1.0).astype(np.float64)
    else:
        distK = mask_distance(K)
        denom = distK + d.values
        ratio = np.where(denom > 0, distK / np.where(denom > 0, denom, 1.0), 0.0)
        u = np.clip(ratio[fj, fi], 0.0, 1.0).astype(np.float64)

    sweeps, res = _iterate(u, kind, nidx, nval, ndist, opts, 1.0)

    values = np.ones(grid.shape)          # Dirichlet datum outside
    values[d.inside] = 0.0
    values[fj, fi] = u
    fld = ScalarField(grid, values, d.inside, quantity="potential")
    return Potential(fld, K, res, sweeps, domain=domain, _free_j=fj, _free_i=fi,
                     _kind=kind, _nidx=nidx, _nval=nval, _ndist=ndist, _u=u)


def solve_dirichlet(domain, grid, boundary_fn, K=None, opts=None, stencil=None,
                    d=None):
    """General Dirichlet solve: boundary_fn(x, y) on the outer boundary
    (evaluated at exact crossing points), 0 on K if given."""
    opts = opts or SolveOptions()
    stencil = stencil or StencilConfig()
    d, free, fj, fi, kind, nidx, ndist, src, bx, by = _prepare(
        domain, grid, K, stencil, d)
    nval = np.zeros(kind.shape)
    outer = (kind == core.KIND_FIXED) & (src == core.SRC_BOUNDARY)
    if outer.any():
        nval[outer] = boundary_fn(bx[outer], by[outer])
    vals = nval[kind == core.KIND_FIXED]
    lo = float(vals.min()) if vals.size else 0.0
    hi = float(vals.max()) if vals.size else 0.0
    u = np.full(fj.size, 0.5 * (lo + hi))
    sweeps, res = _iterate(u, kind, nidx, nval, ndist, opts, max(hi - lo, 1e-12))

    g = grid
    values = np.zeros(g.shape)
    X, Y = g.meshgrid()
    out_nodes = ~d.inside
    values[out_nodes] = boundary_fn(X[out_nodes], Y[out_nodes])
    values[fj, fi] = u
    fld = ScalarField(grid, values, d.inside, quantity="dirichlet solution")
    return Potential(fld, K if K is not None else CompactMask(grid, np.zeros(g.shape, bool)),
                     res, sweeps, domain=domain, _free_j=fj, _free_i=fi,
                     _kind=kind, _nidx=nidx, _nval=nval, _ndist=ndist, _u=u)


def wrap_field(domain, K, grid, values, d=None, stencil=None):
    """Wrap existing node values in a Potential (no iteration): builds the
    stencil for K and computes the residual of the given field."""
    stencil = stencil or StencilConfig()
    d, free, fj, fi, kind, nidx, ndist, src, bx, by = _prepare(
        domain, grid, K, stencil, d)
    nval = np.where(src == core.SRC_BOUNDARY, 1.0, 0.0)
    nval[kind != core.KIND_FIXED] = 0.0
    u = np.asarray(values, float)[fj, fi].copy()
    res, _ = core.residual_max(u, kind, nidx, nval, ndist)
    vals = np.array(values, float, copy=True)
    fld = ScalarField(grid, vals, d.inside, quantity="wrapped field")
    return Potential(fld, K, float(res), 0, domain=domain, _free_j=fj,
                     _free_i=fi, _kind=kind, _nidx=nidx, _nval=nval,
                     _ndist=ndist, _u=u)


def residual(p):
    """Max over free nodes of |max-slope + min-slope|."""
    res, _ = core.residual_max(p._u, p._kind, p._nidx, p._nval, p._ndist)
    return float(res)


def residual_of_field(p, values):
    """Residual of arbitrary node values pushed through p's stencil."""
    u = values[p._free_j, p._free_i].astype(np.float64)
    res, arg = core.residual_max(u, p._kind, p._nidx, p._nval, p._ndist)
    return float(res)


def field_residuals(p, values=None):
    """Per-free-node |max-slope + min-slope| as a grid array."""
    u = p._u if values is None else values[p._free_j, p._free_i].astype(float)
    smax, smin = core.stencil_slopes(u, p._kind, p._nidx, p._nval, p._ndist)
    out = np.zeros(p.field.grid.shape)
    out[p._free_j, p._free_i] = np.abs(smax + smin)
    return out


def upwind_gradient_field(field, width=3, valid=None):
    """Mask-based upwind gradient of a ScalarField (grid-node neighbours)."""
    offs = stencil_offsets(width)
    v = field.inside if valid is None else valid
    return core.upwind_grad_mask(field.values, v.astype(np.uint8), offs,
                                 field.grid.h)


# ---------------------------------------------------------------------------
# structural verifications
# ---------------------------------------------------------------------------

def verify_cone_comparison(field, free, trials=100, rng=None, tol=None,
                           box_range=(8, 20)):
    """Comparison with cones on random sub-boxes.

    For random boxes w of free nodes, random vertices x0 and random slopes b,
    the cone C(x) = a + b|x - x0| is pinned from above on the box boundary
    (and on a one-node neighbourhood of x0, the discrete puncture); the
    violation is max(u - C) over the remaining interior.  Checked for u and
    -u.  Pass iff the worst violation stays within tol.
    """
    rng = rng or np.random.default_rng(0)
    g = field.grid
    h = g.h
    if tol is None:
        rangev = float(field.values[field.inside].max()
                       - field.values[field.inside].min())
        tol = 5 * h * max(rangev, 1e-12)
    X, Y = g.meshgrid()
    worst = -np.inf
    worst_loc = None
    done = 0
    attempts = 0
    while done < trials and attempts < 50 * trials:
        attempts += 1
        size = rng.integers(box_range[0], box_range[1] + 1)
        i0 = rng.integers(0, max(1, g.nx - size))
        j0 = rng.integers(0, max(1, g.ny - size))
        box = np.s_[j0:j0 + size, i0:i0 + size]
        if not free[box].all():
            continue
        done += 1
        u = field.values[box]
        xb = X[box]
        yb = Y[box]
        ci = rng.integers(1, size - 1)
        cj = rng.integers(1, size - 1)
        x0 = (xb[cj, ci], yb[cj, ci])
        rad = np.hypot(xb - x0[0], yb - x0[1])
        bnd = np.zeros((size, size), bool)
        bnd[0, :] = bnd[-1, :] = bnd[:, 0] = bnd[:, -1] = True
        puncture = (np.abs(np.arange(size)[:, None] - cj) <= 1) & \
                   (np.abs(np.arange(size)[None, :] - ci) <= 1)
        pinned = bnd | puncture
        interior = ~pinned
        for w in (u, -u):
            b = rng.uniform(-2.0, 2.0) / max(size * h, h)
            a = np.max(w[pinned] - b * rad[pinned])
            cone = a + b * rad
            viol = np.max(w[interior] - cone[interior])
            if viol > worst:
                worst = viol
                jj, ii = np.unravel_index(np.argmax((w - cone) * interior),
                                          w.shape)
                worst_loc = (float(xb[jj, ii]), float(yb[jj, ii]))
    if done == 0:
        raise SolverError("could not draw any all-free sub-box")
    return VerificationReport("cone-comparison", float(worst), float(tol),
                              location=worst_loc,
                              citation="comparison-with-cones",
                              details={"trials": int(done)})


def verify_slope_estimates(p, tol=None):
    """Slope estimates on interior nodes with a full stencil.

    The upwind gradient must not exceed the max slope nor the negated min
    slope over the stencil, and it must not exceed the gradient at the
    argmax neighbour (increasing slope estimate).
    """
    h = p.field.grid.h
    if tol is None:
        tol = 5 * h
    full = (p._kind == core.KIND_FREE).all(axis=1)
    if not full.any():
        raise SolverError("no interior nodes with a full stencil")
    smax, smin = p.slopes()
    g = core.upwind_grad_free(p._u, p._kind, p._nidx, p._nval, p._ndist)

    # argmax neighbour of each full-stencil node
    F, D = p._kind.shape
    viol = -np.inf
    loc = None
    fj, fi = p._free_j, p._free_i
    gx = p.field.grid
    for f in np.nonzero(full)[0]:
        v1 = g[f] - (smax[f] + tol)
        v2 = g[f] - (-smin[f] + tol)
        slopes = np.where(p._kind[f] == core.KIND_FREE,
                          (p._u[p._nidx[f]] - p._u[f]) / p._ndist[f], -np.inf)
        karg = int(np.argmax(slopes))
        v3 = g[f] - (g[p._nidx[f, karg]] + tol)
        m = max(v1, v2, v3)
        if m > viol:
            viol = m
            loc = gx.point(fi[f], fj[f])
    return VerificationReport("slope-estimates", float(viol + tol), float(tol),
                              location=loc, citation="increasing-slope-estimates",
                              details={"nodes": int(full.sum())})


def polyline_length(polyline):
    pl = np.asarray(polyline, float)
    return float(np.sum(np.hypot(np.diff(pl[:, 0]), np.diff(pl[:, 1]))))


def verify_harnack(p, x0, polyline, tol=None):
    """Lower bound exp(-L/delta) for the potential at x0, where L is the
    length of a path to the boundary and delta its distance to the zero set."""
    h = p.field.grid.h
    if tol is None:
        tol = 5 * h
    pl = np.asarray(polyline, float)
    L = polyline_length(pl)
    # densely sample the polyline
    samples = [pl[:1]]
    for a, b in zip(pl[:-1], pl[1:]):
        n = max(2, int(math.ceil(np.hypot(*(b - a)) / (h / 4))) + 1)
        t = np.linspace(0, 1, n)[1:, None]
        samples.append(a + t * (b - a))
    samples = np.concatenate(samples, axis=0)
    kj, ki = np.nonzero(p.K.member)
    g = p.field.grid
    kpts = np.stack([g.x0 + g.h * ki, g.y0 + g.h * kj], axis=1)
    delta = float(cKDTree(kpts).query(samples)[0].min())
    if delta <= 10 * np.finfo(float).eps:
        raise ValueError("polyline touches the zero set (delta <= 0)")
    bound = math.exp(-L / delta)
    w0 = float(p.field.interp(np.asarray(x0, float))[0])
    violation = bound - tol - w0  # pass iff w0 >= bound - tol
    return VerificationReport("harnack-lower-bound", float(violation), 0.0,
                              location=tuple(np.asarray(x0, float)),
                              citation="harnack-lower-bound",
                              details={"L": L, "delta": delta, "bound": bound,
                                       "value": w0, "tol": tol})


def minimal_gap_pairs(domain, K, step=None, slack=None, max_pairs=32):
    """(y, z) pairs with y on the boundary, z in K, |y-z| within slack of
    dist(boundary, K); found by brute force over boundary samples and K
    nodes, then thinned to at most max_pairs well-separated pairs."""
    g = K.grid
    h = g.h
    step = step or h / 2
    slack = slack if slack is not None else h / 2
    bpts = domain.boundary_samples(step)
    kj, ki = np.nonzero(K.member)
    kpts = np.stack([g.x0 + g.h * ki, g.y0 + g.h * kj], axis=1)
    tree = cKDTree(kpts)
    dist, idx = tree.query(bpts)
    gap = dist.min()
    qual = np.nonzero(dist <= gap + slack)[0]
    pairs = []
    for q in qual:
        y = bpts[q]
        z = kpts[idx[q]]
        if all(np.hypot(*(y - py)) > 4 * h for py, _ in pairs):
            pairs.append((y, z))
        if len(pairs) >= max_pairs:
            break
    return gap, pairs


def verify_affine_on_rays(p, tol, step_frac=0.25):
    """Along every minimal segment from the boundary to K the potential must
    be affine: 1 at the boundary end, 0 at the K end."""
    gap, pairs = minimal_gap_pairs(p.domain, p.K)
    if not pairs:
        raise SolverError("no minimizing boundary-to-K pair found")
    h = p.field.grid.h
    worst = -np.inf
    loc = None
    for y, z in pairs:
        seg = z - y
        L = float(np.hypot(*seg))
        tlo = min(0.45, (1.5 * h) / L)
        ts = np.linspace(tlo, 1 - tlo, max(5, int(1 / step_frac)))
        pts = y + ts[:, None] * seg
        vals = p.field.interp(pts)
        affine = 1.0 - ts * L / gap
        dev = float(np.max(np.abs(vals - affine)))
        if dev > worst:
            worst = dev
            loc = tuple(y)
    return VerificationReport("affine-on-minimal-rays", worst, float(tol),
                              location=loc, citation="potential-along-rays",
                              details={"gap": gap, "pairs": len(pairs)})
