"""Domains built from geometric primitives, exact distance fields, parallel
sets, projections and the cut-locus approximation.

A domain is the open union of disks and axis-aligned rectangles.  Its
boundary decomposes into finitely many circular arcs and line segments:
a point of a primitive's boundary is retained iff it is not strictly
interior to any other primitive.  Distances are computed exactly against
these trimmed pieces (no eikonal marching), so the only O(h) errors in the
pipeline come from the PDE solver itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import core

TAU_GEOM_SCALE = 1e-9   # geometric predicate tolerance, relative to diameter
TAU_PROJ_CELLS = 2.0    # projection tolerance, in units of h
TAU_RAY_CELLS = 2.0     # ray / membership tolerance, in units of h
C_H2 = 3.0              # closure-regularity flag threshold, in units of h


class GeometryError(ValueError):
    """Invalid primitive, spec or grid input."""


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    r: float


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float


@dataclass(frozen=True)
class Grid:
    """Uniform node lattice; node (i, j) sits at (x0 + i*h, y0 + j*h)."""

    x0: float
    y0: float
    h: float
    nx: int
    ny: int

    @classmethod
    def cover(cls, bbox, h, margin=4):
        """Grid covering bbox with `margin` extra cells on every side."""
        if h <= 0:
            raise GeometryError("grid spacing must be positive")
        xmin, ymin, xmax, ymax = bbox
        nx = int(math.ceil((xmax - xmin) / h - 1e-12)) + 2 * margin + 1
        ny = int(math.ceil((ymax - ymin) / h - 1e-12)) + 2 * margin + 1
        return cls(xmin - margin * h, ymin - margin * h, h, nx, ny)

    @property
    def shape(self):
        return (self.ny, self.nx)

    def xs(self):
        return self.x0 + self.h * np.arange(self.nx)

    def ys(self):
        return self.y0 + self.h * np.arange(self.ny)

    def meshgrid(self):
        return np.meshgrid(self.xs(), self.ys())

    def point(self, i, j):
        return (self.x0 + i * self.h, self.y0 + j * self.h)


@dataclass
class ScalarField:
    """Node values plus the in-domain mask; `quantity` says what is stored."""

    grid: Grid
    values: np.ndarray
    inside: np.ndarray
    quantity: str = ""

    def __post_init__(self):
        if self.values.shape != self.grid.shape or self.inside.shape != self.grid.shape:
            raise GeometryError("field arrays do not match the grid shape")
        if not np.all(np.isfinite(self.values[self.inside])):
            raise GeometryError("non-finite values on inside nodes")

    def interp(self, pts):
        """Bilinear interpolation at arbitrary points (clamped to the grid)."""
        pts = np.atleast_2d(np.asarray(pts, float))
        g = self.grid
        gx = np.clip((pts[:, 0] - g.x0) / g.h, 0.0, g.nx - 1.0)
        gy = np.clip((pts[:, 1] - g.y0) / g.h, 0.0, g.ny - 1.0)
        i0 = np.clip(np.floor(gx).astype(int), 0, g.nx - 2)
        j0 = np.clip(np.floor(gy).astype(int), 0, g.ny - 2)
        fx = gx - i0
        fy = gy - j0
        v = self.values
        return ((1 - fx) * (1 - fy) * v[j0, i0] + fx * (1 - fy) * v[j0, i0 + 1]
                + (1 - fx) * fy * v[j0 + 1, i0] + fx * fy * v[j0 + 1, i0 + 1])


@dataclass
class CompactMask:
    """Grid representation of a compact subset of the domain.

    `level` is set when the mask is (a component closure of) a parallel set
    {d >= level}; the solver then locates its boundary to sub-cell accuracy.
    """

    grid: Grid
    member: np.ndarray
    level: float | None = None

    def __post_init__(self):
        if self.member.shape != self.grid.shape:
            raise GeometryError("mask array does not match the grid shape")
        self.member = self.member.astype(bool)

    @property
    def count(self):
        return int(self.member.sum())

    def union(self, other):
        if other.grid != self.grid:
            raise GeometryError("masks live on different grids")
        lev = self.level if self.level is not None else other.level
        return CompactMask(self.grid, self.member | other.member, lev)


class Domain:
    """Open union of primitives with an exact trimmed boundary."""

    def __init__(self, primitives):
        primitives = tuple(primitives)
        if not primitives:
            raise GeometryError("empty primitive list")
        for p in primitives:
            if isinstance(p, Disk):
                if not (p.r > 0):
                    raise GeometryError(f"degenerate disk radius {p.r}")
            elif isinstance(p, Rect):
                if not (p.xmax > p.xmin and p.ymax > p.ymin):
                    raise GeometryError("inverted rectangle")
            else:
                raise GeometryError(f"unknown primitive {p!r}")
        self.primitives = primitives
        xs, ys = [], []
        for p in primitives:
            if isinstance(p, Disk):
                xs += [p.cx - p.r, p.cx + p.r]
                ys += [p.cy - p.r, p.cy + p.r]
            else:
                xs += [p.xmin, p.xmax]
                ys += [p.ymin, p.ymax]
        self.bbox = (min(xs), min(ys), max(xs), max(ys))
        self.diameter = math.hypot(self.bbox[2] - self.bbox[0],
                                   self.bbox[3] - self.bbox[1])
        self.tau_geom = TAU_GEOM_SCALE * self.diameter
        self.prims = _prims_array(primitives)
        self.pieces = _trim_boundary(primitives, self.prims)

    def inside(self, pts):
        """Strict inside test, vectorized over an (N, 2) array of points."""
        pts = np.atleast_2d(np.asarray(pts, float))
        out = np.zeros(len(pts), bool)
        for k in range(len(pts)):
            out[k] = core.point_inside(pts[k, 0], pts[k, 1], self.prims)
        return out

    def boundary_distance(self, pts):
        """Exact distance from points to the trimmed boundary."""
        pts = np.atleast_2d(np.asarray(pts, float))
        out = np.empty(len(pts))
        for k in range(len(pts)):
            out[k] = core.piece_distance(pts[k, 0], pts[k, 1], self.pieces)
        return out

    def boundary_samples(self, step):
        """Points sampled on every retained boundary piece, spacing <= step."""
        out = []
        for row in self.pieces:
            if row[0] == core.PIECE_SEGMENT:
                p0 = row[1:3]
                p1 = row[3:5]
                n = max(2, int(math.ceil(np.hypot(*(p1 - p0)) / step)) + 1)
                t = np.linspace(0.0, 1.0, n)[:, None]
                out.append(p0 + t * (p1 - p0))
            else:
                cx, cy, r, a0, a1 = row[1:6]
                n = max(2, int(math.ceil(r * (a1 - a0) / step)) + 1)
                th = np.linspace(a0, a1, n)
                out.append(np.stack([cx + r * np.cos(th), cy + r * np.sin(th)], axis=1))
        return np.concatenate(out, axis=0)

    def grid_for(self, h, margin=None):
        if margin is None:
            margin = 4
        return Grid.cover(self.bbox, h, margin=margin)


def _prims_array(primitives):
    arr = np.zeros((len(primitives), 5))
    for m, p in enumerate(primitives):
        if isinstance(p, Disk):
            arr[m] = (core.PRIM_DISK, p.cx, p.cy, p.r, 0.0)
        else:
            arr[m] = (core.PRIM_RECT, p.xmin, p.ymin, p.xmax, p.ymax)
    return arr


def _strictly_inside_other(x, y, prims, skip):
    for m in range(prims.shape[0]):
        if m == skip:
            continue
        if prims[m, 0] == core.PRIM_DISK:
            dx = x - prims[m, 1]
            dy = y - prims[m, 2]
            if dx * dx + dy * dy < prims[m, 3] ** 2:
                return True
        else:
            if prims[m, 1] < x < prims[m, 3] and prims[m, 2] < y < prims[m, 4]:
                return True
    return False


def _circle_candidate_angles(disk, other):
    """Angles on `disk`'s circle where another primitive's boundary crosses."""
    out = []
    if isinstance(other, Disk):
        dx = other.cx - disk.cx
        dy = other.cy - disk.cy
        dd = math.hypot(dx, dy)
        if dd > 0:
            cosv = (disk.r ** 2 + dd ** 2 - other.r ** 2) / (2 * disk.r * dd)
            if -1.0 < cosv < 1.0:
                base = math.atan2(dy, dx)
                a = math.acos(cosv)
                out += [base - a, base + a]
    else:
        for X in (other.xmin, other.xmax):
            c = (X - disk.cx) / disk.r
            if -1.0 <= c <= 1.0:
                a = math.acos(c)
                out += [a, -a]
        for Y in (other.ymin, other.ymax):
            s = (Y - disk.cy) / disk.r
            if -1.0 <= s <= 1.0:
                a = math.asin(s)
                out += [a, math.pi - a]
    return out


def _segment_candidate_ts(p0, p1, other):
    """Parameters t in (0,1) where another primitive's boundary crosses."""
    out = []
    dx = p1[0] - p0[0]
    dy = p1[1] - p0[1]
    if isinstance(other, Disk):
        ax = p0[0] - other.cx
        ay = p0[1] - other.cy
        A = dx * dx + dy * dy
        B = 2 * (ax * dx + ay * dy)
        C = ax * ax + ay * ay - other.r ** 2
        disc = B * B - 4 * A * C
        if disc > 0 and A > 0:
            sq = math.sqrt(disc)
            for t in ((-B - sq) / (2 * A), (-B + sq) / (2 * A)):
                if 0 < t < 1:
                    out.append(t)
    else:
        if dx != 0:
            for X in (other.xmin, other.xmax):
                t = (X - p0[0]) / dx
                if 0 < t < 1:
                    out.append(t)
        if dy != 0:
            for Y in (other.ymin, other.ymax):
                t = (Y - p0[1]) / dy
                if 0 < t < 1:
                    out.append(t)
    return out


def _trim_boundary(primitives, prims):
    """Retained arcs/segments of every primitive boundary.

    A boundary point survives iff it is not strictly interior to any other
    primitive; intervals between crossing candidates are classified by their
    midpoints.
    """
    rows = []
    for m, p in enumerate(primitives):
        others = [q for qi, q in enumerate(primitives) if qi != m]
        if isinstance(p, Disk):
            cands = []
            for q in others:
                cands += _circle_candidate_angles(p, q)
            cands = sorted({(a % core.TWO_PI) for a in cands})
            if not cands:
                spans = [(0.0, core.TWO_PI)]
                mid = 0.0
                x = p.cx + p.r * math.cos(mid)
                y = p.cy + p.r * math.sin(mid)
                if _strictly_inside_other(x, y, prims, m):
                    spans = []
            else:
                spans = []
                for k in range(len(cands)):
                    a0 = cands[k]
                    a1 = cands[(k + 1) % len(cands)]
                    if k == len(cands) - 1:
                        a1 += core.TWO_PI
                    mid = 0.5 * (a0 + a1)
                    x = p.cx + p.r * math.cos(mid)
                    y = p.cy + p.r * math.sin(mid)
                    if not _strictly_inside_other(x, y, prims, m):
                        spans.append((a0, a1))
                spans = _merge_spans(spans)
            for a0, a1 in spans:
                for b0, b1 in _split_wrap(a0, a1):
                    if b1 - b0 > 1e-12:
                        rows.append((core.PIECE_ARC, p.cx, p.cy, p.r, b0, b1))
        else:
            corners = [(p.xmin, p.ymin), (p.xmax, p.ymin),
                       (p.xmax, p.ymax), (p.xmin, p.ymax)]
            for c0, c1 in zip(corners, corners[1:] + corners[:1]):
                cands = []
                for q in others:
                    cands += _segment_candidate_ts(c0, c1, q)
                cands = sorted(set(cands))
                ts = [0.0] + cands + [1.0]
                for t0, t1 in zip(ts[:-1], ts[1:]):
                    if t1 - t0 <= 1e-12:
                        continue
                    tm = 0.5 * (t0 + t1)
                    x = c0[0] + tm * (c1[0] - c0[0])
                    y = c0[1] + tm * (c1[1] - c0[1])
                    if not _strictly_inside_other(x, y, prims, m):
                        rows.append((core.PIECE_SEGMENT,
                                     c0[0] + t0 * (c1[0] - c0[0]),
                                     c0[1] + t0 * (c1[1] - c0[1]),
                                     c0[0] + t1 * (c1[0] - c0[0]),
                                     c0[1] + t1 * (c1[1] - c0[1])))
    if not rows:
        raise GeometryError("union has no retained boundary (fully nested primitives?)")
    out = np.zeros((len(rows), 6))
    for k, row in enumerate(rows):
        out[k, :len(row)] = row
    return out


def _merge_spans(spans):
    """Merge adjacent angular spans (a0, a1) that share an endpoint."""
    if not spans:
        return spans
    spans = sorted(spans)
    merged = [list(spans[0])]
    for a0, a1 in spans[1:]:
        if abs(a0 - merged[-1][1]) < 1e-12:
            merged[-1][1] = a1
        else:
            merged.append([a0, a1])
    # wrap-around merge
    if len(merged) > 1 and abs((merged[0][0] + core.TWO_PI) - merged[-1][1]) < 1e-12:
        merged[0][0] = merged[-1][0] - core.TWO_PI
        merged.pop()
    return [tuple(s) for s in merged]


def _split_wrap(a0, a1):
    """Normalize an angular span into pieces inside [0, 2*pi]."""
    a0 = a0 % core.TWO_PI
    width = a1 - a0 if a1 >= a0 else (a1 % core.TWO_PI) - a0
    a1 = a0 + (width % (core.TWO_PI + 1e-15) if width > 0 else width + core.TWO_PI)
    if a1 <= core.TWO_PI:
        return [(a0, a1)]
    return [(a0, core.TWO_PI), (0.0, a1 - core.TWO_PI)]


# ---------------------------------------------------------------------------
# domain spec files
# ---------------------------------------------------------------------------

def build_domain(spec):
    """Build a Domain from primitives, a spec dict, or spec JSON text.

    The structured text format is JSON:
    {"primitives": [{"kind": "disk", "center": [x, y], "radius": r},
                    {"kind": "rect", "corner_min": [x, y], "corner_max": [x, y]}],
     "grid": {"h": 0.05, "margin": 4}}
    The grid block is optional and only used by the CLI.
    """
    if isinstance(spec, Domain):
        return spec
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as e:
            raise GeometryError(f"malformed domain spec: {e}") from e
    if isinstance(spec, dict):
        spec = spec.get("primitives", [])
    prims = []
    for item in spec:
        if isinstance(item, (Disk, Rect)):
            prims.append(item)
            continue
        kind = item.get("kind")
        if kind == "disk":
            cx, cy = item["center"]
            prims.append(Disk(float(cx), float(cy), float(item["radius"])))
        elif kind == "rect":
            x0, y0 = item["corner_min"]
            x1, y1 = item["corner_max"]
            prims.append(Rect(float(x0), float(y0), float(x1), float(y1)))
        else:
            raise GeometryError(f"unknown primitive kind {kind!r}")
    return Domain(prims)


def parse_domain_spec(text):
    """Parse spec JSON text; returns (Domain, grid_params dict)."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise GeometryError(f"malformed domain spec: {e}") from e
    dom = build_domain(data)
    return dom, dict(data.get("grid", {}))


# ---------------------------------------------------------------------------
# fields and parallel sets
# ---------------------------------------------------------------------------

def distance_field(domain, grid):
    """Exact distance to the trimmed boundary at every inside node."""
    vals, inside = core.distance_grid(grid.x0, grid.y0, grid.h, grid.nx,
                                      grid.ny, domain.prims, domain.pieces,
                                      domain.tau_geom)
    inside = inside.astype(bool)
    if not inside.any():
        raise GeometryError("grid too coarse: no nodes fall inside the domain")
    return ScalarField(grid, vals, inside, quantity="boundary distance")


def inradius(d):
    """Max of the distance field over inside nodes (true value within +-h)."""
    return float(d.values[d.inside].max())


def parallel_mask(d, r, closed=False, tau=None):
    """Node mask of the parallel set {d > r} (open) or {d >= r - tau} (closed).

    The closed variant defaults to the geometric tolerance so that nodes
    sitting exactly on the level set are kept despite roundoff; it does not
    fatten the set by any grid-scale amount.
    """
    rmax = inradius(d)
    if r < 0 or r > rmax + d.grid.h:
        raise GeometryError(f"parallel level r={r} outside [0, inradius={rmax:.6g}]")
    if closed:
        if tau is None:
            tau = TAU_GEOM_SCALE * (rmax + d.grid.h) * 1e3  # absolute, tiny
        member = d.inside & (d.values >= r - tau)
    else:
        member = d.inside & (d.values > r)
    return CompactMask(d.grid, member, level=r)


def connected_components(mask, connectivity=4):
    """4-connectivity labelling; returns (count, labels array)."""
    if connectivity == 4:
        structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    else:
        structure = np.ones((3, 3))
    labels, count = ndimage.label(mask.member, structure=structure)
    return count, labels


def component_masks(mask, connectivity=4):
    """Per-component masks, ordered by ascending centroid x coordinate."""
    count, labels = connected_components(mask, connectivity)
    out = []
    for lab in range(1, count + 1):
        m = labels == lab
        xs = np.nonzero(m)[1]
        out.append((xs.mean() if xs.size else 0.0,
                    CompactMask(mask.grid, m, level=mask.level)))
    out.sort(key=lambda t: t[0])
    return [m for _, m in out]


def closed_component_masks(d, r):
    """Grid closures of the connected components of {d > r}.

    Each open component is grown by the single layer of {d >= r} nodes that
    are 8-adjacent to it.  This is the node analogue of taking the closure of
    one component; it deliberately does not absorb distant parts of the level
    set {d = r} (which belong to {d >= r} but not to any component closure).
    """
    open_mask = parallel_mask(d, r, closed=False)
    level_nodes = parallel_mask(d, r, closed=True).member
    out = []
    for comp in component_masks(open_mask):
        grown = ndimage.binary_dilation(comp.member, structure=np.ones((3, 3)))
        closure = comp.member | (grown & level_nodes)
        out.append(CompactMask(d.grid, closure, level=r))
    return out


def closed_parallel_component_union(d, r):
    """Union of the component closures of {d > r}."""
    masks = closed_component_masks(d, r)
    if not masks:
        raise GeometryError(f"parallel set at r={r} is empty on the grid")
    m = masks[0]
    for other in masks[1:]:
        m = m.union(other)
    return m


def parallel_distance_field(d, r, mask=None):
    """Distance to the closed parallel set, from an exact Euclidean
    distance transform of its node mask (O(h) accurate)."""
    if mask is None:
        mask = closed_parallel_component_union(d, r)
    dt = ndimage.distance_transform_edt(~mask.member, sampling=d.grid.h)
    return ScalarField(d.grid, dt, d.inside, quantity=f"distance to parallel set r={r}")


def mask_distance(mask):
    """Euclidean distance transform to a mask's member nodes."""
    return ndimage.distance_transform_edt(~mask.member, sampling=mask.grid.h)


def check_closure_regularity(d, r, c_flag=C_H2):
    """Flags nodes of {d >= r} that sit far from the open set {d > r}.

    The level set {d >= r} should be the closure of {d > r}; nodes further
    than c_flag*h from any open-set node witness a failure (strays such as
    isolated ridges at the level distance).  Returns (passes, flagged_mask).
    """
    h = d.grid.h
    closed = parallel_mask(d, r, closed=True).member
    open_ = parallel_mask(d, r, closed=False).member
    if not open_.any():
        dist = np.full(d.grid.shape, np.inf)
    else:
        dist = ndimage.distance_transform_edt(~open_, sampling=h)
    flagged = closed & (dist > c_flag * h)
    return (not flagged.any()), CompactMask(d.grid, flagged)


# ---------------------------------------------------------------------------
# projections and rays
# ---------------------------------------------------------------------------

def _piece_closest(piece, pts):
    """Closest point and distance from pts (N,2) to one boundary piece."""
    if piece[0] == core.PIECE_SEGMENT:
        p0 = piece[1:3]
        w = piece[3:5] - p0
        ww = float(w @ w)
        t = ((pts - p0) @ w) / ww if ww > 0 else np.zeros(len(pts))
        t = np.clip(t, 0.0, 1.0)
        c = p0 + t[:, None] * w
    else:
        cx, cy, r, a0, a1 = piece[1:6]
        v = pts - (cx, cy)
        dv = np.hypot(v[:, 0], v[:, 1])
        th = np.mod(np.arctan2(v[:, 1], v[:, 0]), core.TWO_PI)
        inspan = (th >= a0) & (th <= a1)
        safe = np.where(dv > 0, dv, 1.0)
        c = np.where(inspan[:, None],
                     (cx, cy) + (r / safe)[:, None] * v,
                     _nearer_arc_endpoint(pts, cx, cy, r, a0, a1))
    dist = np.hypot(pts[:, 0] - c[:, 0], pts[:, 1] - c[:, 1])
    return c, dist


def _nearer_arc_endpoint(pts, cx, cy, r, a0, a1):
    e0 = np.array([cx + r * math.cos(a0), cy + r * math.sin(a0)])
    e1 = np.array([cx + r * math.cos(a1), cy + r * math.sin(a1)])
    d0 = np.hypot(pts[:, 0] - e0[0], pts[:, 1] - e0[1])
    d1 = np.hypot(pts[:, 0] - e1[0], pts[:, 1] - e1[1])
    return np.where((d0 <= d1)[:, None], e0, e1)


def projections(domain, x, tol):
    """Boundary points within `tol` of the minimum distance from x.

    Returns the per-piece minimizers of qualifying pieces, deduplicated.
    """
    x = np.asarray(x, float).reshape(1, 2)
    pts, dists = [], []
    for piece in domain.pieces:
        c, dist = _piece_closest(piece, x)
        pts.append(c[0])
        dists.append(dist[0])
    dists = np.array(dists)
    dmin = dists.min()
    out = []
    for p, dist in zip(pts, dists):
        if dist <= dmin + tol:
            if not any(np.hypot(*(p - q)) < 10 * domain.tau_geom for q in out):
                out.append(p)
    return np.array(out)


def minimal_ray_mask(d, dpar, r, tau=None):
    """Nodes lying on minimal segments from the parallel-set boundary to its
    projections on the domain boundary.

    On such a segment the two distances are taut: d(x) + dist(x, K_r) = r.
    The criterion |d + dpar - r| <= tau (tau = 2h by default) is the grid
    form of that equality; ">= r" always holds by the 1-Lipschitz bound, and
    equality forces x to be collinear with its projections.
    """
    if tau is None:
        tau = TAU_RAY_CELLS * d.grid.h
    closure = closed_parallel_component_union(d, r)
    in_band = d.inside & ~closure.member & (d.values <= r + tau)
    member = in_band & (np.abs(d.values + dpar.values - r) <= tau)
    return CompactMask(d.grid, member)


def cutlocus_mask(domain, d, c_sigma=1.0, angle_deg=60.0, tol=None):
    """Grid approximation of the closure of the non-differentiability set of
    the boundary distance.

    A node is flagged when either (a) it has two near-minimal boundary
    projections separated by more than `angle_deg` as seen from the node, or
    (b) the centered-difference gradient magnitude of d drops below
    1 - c_sigma*sqrt(h).  Both thresholds are heuristics exposed as
    parameters; (a) includes near-minimizing arc spans when the node is
    within 3h of an arc center, which is where a single arc carries multiple
    projections.
    """
    g = d.grid
    h = g.h
    if tol is None:
        tol = TAU_PROJ_CELLS * h
    X, Y = g.meshgrid()
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    closest, dists = [], []
    for piece in domain.pieces:
        c, dist = _piece_closest(piece, pts)
        closest.append(c)
        dists.append(dist)
    dists = np.stack(dists, axis=0)            # (P, N)
    dmin = dists.min(axis=0)
    qual = dists <= dmin + tol                 # near-minimal pieces per node

    cand_vx, cand_vy, cand_ok = [], [], []
    for p_i, piece in enumerate(domain.pieces):
        c = closest[p_i]
        vx = c[:, 0] - pts[:, 0]
        vy = c[:, 1] - pts[:, 1]
        nrm = np.hypot(vx, vy)
        ok = qual[p_i] & (nrm > 0)
        nrm = np.where(nrm > 0, nrm, 1.0)
        cand_vx.append(vx / nrm)
        cand_vy.append(vy / nrm)
        cand_ok.append(ok)
        if piece[0] == core.PIECE_ARC:
            cx, cy, r, a0, a1 = piece[1:6]
            dv = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
            near_center = qual[p_i] & (dv <= 3 * h)
            if near_center.any():
                for ang in (a0, a1):
                    ex = cx + r * math.cos(ang)
                    ey = cy + r * math.sin(ang)
                    wx = ex - pts[:, 0]
                    wy = ey - pts[:, 1]
                    nw = np.hypot(wx, wy)
                    okc = near_center & (nw > 0)
                    nw = np.where(nw > 0, nw, 1.0)
                    cand_vx.append(wx / nw)
                    cand_vy.append(wy / nw)
                    cand_ok.append(okc)

    cos_thr = math.cos(math.radians(angle_deg))
    wide = np.zeros(len(pts), bool)
    nc = len(cand_vx)
    for a in range(nc):
        for b in range(a + 1, nc):
            both = cand_ok[a] & cand_ok[b]
            if not both.any():
                continue
            cosang = cand_vx[a] * cand_vx[b] + cand_vy[a] * cand_vy[b]
            wide |= both & (cosang < cos_thr)
    wide = wide.reshape(g.shape) & d.inside

    offs = stencil_offsets(3)
    cg, ok = core.centered_grad_mask(d.values, d.inside.astype(np.uint8), offs, h)
    deficit = d.inside & ok.astype(bool) & (cg < 1.0 - c_sigma * math.sqrt(h))
    return CompactMask(g, wide | deficit)


def stencil_offsets(width):
    """Coprime integer offsets within Chebyshev radius `width`, sign-symmetric."""
    offs = []
    for a in range(-width, width + 1):
        for b in range(-width, width + 1):
            if a == 0 and b == 0:
                continue
            if math.gcd(abs(a), abs(b)) != 1:
                continue
            offs.append((a, b))
    return np.array(sorted(offs), np.int64)


def check_connected(domain, grid):
    """Verify on the grid that the inside node set is 4-connected."""
    d = distance_field(domain, grid)
    count, _ = connected_components(CompactMask(grid, d.inside))
    return count == 1, count


def grid_interior(member):
    """Nodes of a mask whose four axis neighbours are all members."""
    m = member
    interior = np.zeros_like(m)
    interior[1:-1, 1:-1] = (m[1:-1, 1:-1] & m[:-2, 1:-1] & m[2:, 1:-1]
                            & m[1:-1, :-2] & m[1:-1, 2:])
    return interior
