"""Number-crunching kernels shared by the geometry and solver layers.

Everything in this module is jit-compiled with numba and works on plain
float64 / int64 / uint8 arrays:

* exact point classification against a union of primitives,
* exact point-to-boundary distance over trimmed arcs and segments,
* exact first-exit computation for segments leaving the domain,
* construction of the wide-stencil neighbour tables, including cut-cell
  boundary points at their exact sub-cell distances,
* Gauss-Seidel / Jacobi relaxation sweeps for the mid-slope update,
* upwind and centered difference gradients on node masks.

Array encodings
---------------
``prims``  : (M, 5) float64, one primitive per row.
             disk: (0, cx, cy, r, 0); rectangle: (1, xmin, ymin, xmax, ymax).
``pieces`` : (P, 6) float64, one trimmed boundary piece per row.
             segment: (0, x0, y0, x1, y1, 0); arc: (1, cx, cy, r, th0, th1)
             with 0 <= th0 <= th1 <= 2*pi (arcs never wrap).
"""

import math

import numba as nb
import numpy as np

TWO_PI = 2.0 * math.pi

PRIM_DISK = 0.0
PRIM_RECT = 1.0
PIECE_SEGMENT = 0.0
PIECE_ARC = 1.0

# stencil entry kinds
KIND_FREE = 1
KIND_FIXED = 2

# dirichlet sources
SRC_BOUNDARY = 1
SRC_ZERO = 2


@nb.njit(cache=True)
def point_inside(x, y, prims):
    """Strict membership in the open union of primitives."""
    for m in range(prims.shape[0]):
        if prims[m, 0] == PRIM_DISK:
            dx = x - prims[m, 1]
            dy = y - prims[m, 2]
            if dx * dx + dy * dy < prims[m, 3] * prims[m, 3]:
                return True
        else:
            if prims[m, 1] < x < prims[m, 3] and prims[m, 2] < y < prims[m, 4]:
                return True
    return False


@nb.njit(cache=True)
def piece_distance(x, y, pieces):
    """Exact distance from (x, y) to the nearest trimmed boundary piece."""
    best = 1.0e300
    for m in range(pieces.shape[0]):
        if pieces[m, 0] == PIECE_SEGMENT:
            x0 = pieces[m, 1]
            y0 = pieces[m, 2]
            wx = pieces[m, 3] - x0
            wy = pieces[m, 4] - y0
            ww = wx * wx + wy * wy
            t = 0.0
            if ww > 0.0:
                t = ((x - x0) * wx + (y - y0) * wy) / ww
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            dx = x - (x0 + t * wx)
            dy = y - (y0 + t * wy)
            d = math.sqrt(dx * dx + dy * dy)
        else:
            cx = pieces[m, 1]
            cy = pieces[m, 2]
            r = pieces[m, 3]
            a0 = pieces[m, 4]
            a1 = pieces[m, 5]
            vx = x - cx
            vy = y - cy
            dv = math.sqrt(vx * vx + vy * vy)
            th = math.atan2(vy, vx)
            if th < 0.0:
                th += TWO_PI
            if a0 <= th <= a1:
                d = abs(dv - r)
            else:
                d0 = math.hypot(x - (cx + r * math.cos(a0)), y - (cy + r * math.sin(a0)))
                d1 = math.hypot(x - (cx + r * math.cos(a1)), y - (cy + r * math.sin(a1)))
                d = d0 if d0 < d1 else d1
        if d < best:
            best = d
    return best


@nb.njit(cache=True)
def distance_grid(x0, y0, h, nx, ny, prims, pieces, tau):
    """Exact distance to the trimmed boundary at every inside node.

    Returns (values, inside) where values is 0.0 at outside nodes and
    inside is a uint8 mask.  Nodes within tau of the boundary count as
    outside: they are "exactly on the boundary" up to roundoff, and keeping
    them free would make the stencil slopes ill-conditioned.
    """
    vals = np.zeros((ny, nx), np.float64)
    inside = np.zeros((ny, nx), np.uint8)
    for j in range(ny):
        y = y0 + j * h
        for i in range(nx):
            x = x0 + i * h
            if point_inside(x, y, prims):
                dd = piece_distance(x, y, pieces)
                if dd > tau:
                    inside[j, i] = 1
                    vals[j, i] = dd
    return vals, inside


@nb.njit(cache=True)
def exit_time(px, py, qx, qy, prims):
    """First t in (0, 1] where the segment p -> q leaves the open union.

    Assumes p is strictly inside.  Returns 2.0 when the whole segment stays
    inside.  Candidate crossings come from exact primitive/segment
    intersections; sub-intervals are classified by their midpoints.
    """
    dx = qx - px
    dy = qy - py
    cand = np.empty(160, np.float64)
    nc = 0
    for m in range(prims.shape[0]):
        if prims[m, 0] == PRIM_DISK:
            ax = px - prims[m, 1]
            ay = py - prims[m, 2]
            r = prims[m, 3]
            A = dx * dx + dy * dy
            B = 2.0 * (ax * dx + ay * dy)
            C = ax * ax + ay * ay - r * r
            disc = B * B - 4.0 * A * C
            if disc > 0.0 and A > 0.0:
                sq = math.sqrt(disc)
                t1 = (-B - sq) / (2.0 * A)
                t2 = (-B + sq) / (2.0 * A)
                if 0.0 < t1 < 1.0:
                    cand[nc] = t1
                    nc += 1
                if 0.0 < t2 < 1.0:
                    cand[nc] = t2
                    nc += 1
        else:
            if dx != 0.0:
                t = (prims[m, 1] - px) / dx
                if 0.0 < t < 1.0:
                    cand[nc] = t
                    nc += 1
                t = (prims[m, 3] - px) / dx
                if 0.0 < t < 1.0:
                    cand[nc] = t
                    nc += 1
            if dy != 0.0:
                t = (prims[m, 2] - py) / dy
                if 0.0 < t < 1.0:
                    cand[nc] = t
                    nc += 1
                t = (prims[m, 4] - py) / dy
                if 0.0 < t < 1.0:
                    cand[nc] = t
                    nc += 1
    c = cand[:nc]
    c.sort()
    prev = 0.0
    for k in range(nc):
        mid = 0.5 * (prev + c[k])
        if not point_inside(px + mid * dx, py + mid * dy, prims):
            return prev
        prev = c[k]
    mid = 0.5 * (prev + 1.0)
    if not point_inside(px + mid * dx, py + mid * dy, prims):
        return prev
    if not point_inside(qx, qy, prims):
        return 1.0
    return 2.0


@nb.njit(cache=True)
def _member_near(x, y, member, gx0, gy0, gh, nx, ny, rad):
    ic = int(round((x - gx0) / gh))
    jc = int(round((y - gy0) / gh))
    i0 = ic - rad
    i1 = ic + rad
    j0 = jc - rad
    j1 = jc + rad
    if i0 < 0:
        i0 = 0
    if j0 < 0:
        j0 = 0
    if i1 > nx - 1:
        i1 = nx - 1
    if j1 > ny - 1:
        j1 = ny - 1
    for j in range(j0, j1 + 1):
        for i in range(i0, i1 + 1):
            if member[j, i]:
                return True
    return False


@nb.njit(cache=True)
def first_level_crossing(px, py, qx, qy, pieces, level, member,
                         gx0, gy0, gh, nx, ny):
    """First t in (0, 1] where the segment enters {dist(.,boundary) >= level}.

    Only crossings that are transversal (the distance stays above the level
    just past the crossing) and that happen near actual member nodes count;
    grazes of measure-zero ridges and incursions into non-member components
    of the level set are skipped.  Returns 2.0 when there is no crossing.
    """
    ddx = qx - px
    ddy = qy - py
    L = math.hypot(ddx, ddy)
    S = 8 + int(L / (0.25 * gh))
    t_lo = 0.0
    for s in range(1, S + 1):
        t = s / S
        cx = px + t * ddx
        cy = py + t * ddy
        if piece_distance(cx, cy, pieces) >= level:
            a = t_lo
            b = t
            for _ in range(60):
                mmid = 0.5 * (a + b)
                if piece_distance(px + mmid * ddx, py + mmid * ddy, pieces) >= level:
                    b = mmid
                else:
                    a = mmid
            tc = b
            tq = tc + 0.25 * gh / max(L, 1.0e-300)
            if tq >= 1.0:
                genuine = _member_near(qx, qy, member, gx0, gy0, gh, nx, ny, 1)
            else:
                genuine = piece_distance(px + tq * ddx, py + tq * ddy, pieces) >= level
            if genuine:
                ccx = px + tc * ddx
                ccy = py + tc * ddy
                if _member_near(ccx, ccy, member, gx0, gy0, gh, nx, ny, 3):
                    return tc
        else:
            t_lo = t
    return 2.0


@nb.njit(cache=True)
def build_stencil(free_j, free_i, free_index, inside, member, offs,
                  x0, y0, h, nx, ny, prims, pieces, has_level, level):
    """Neighbour tables for every free node and stencil direction.

    Returns (kind, nidx, ndist, src, bx, by):
      kind  : 1 free link, 2 fixed (Dirichlet) entry
      nidx  : free-node index of the linked node (kind 1)
      ndist : exact euclidean distance to the entry
      src   : 1 outer boundary crossing, 2 zero-set entry (kind 2 only)
      bx,by : coordinates of the Dirichlet point (kind 2 only)
    """
    F = free_j.shape[0]
    D = offs.shape[0]
    kind = np.zeros((F, D), np.uint8)
    nidx = np.full((F, D), -1, np.int64)
    ndist = np.zeros((F, D), np.float64)
    src = np.zeros((F, D), np.uint8)
    bx = np.zeros((F, D), np.float64)
    by = np.zeros((F, D), np.float64)
    # sub-1% cut distances are clamped: the O(0.01*h) value perturbation is
    # negligible while the difference quotients stay well conditioned
    dmin = 1.0e-2 * h
    for f in range(F):
        j = free_j[f]
        i = free_i[f]
        px = x0 + i * h
        py = y0 + j * h
        for k in range(D):
            a = offs[k, 0]
            b = offs[k, 1]
            qx = px + a * h
            qy = py + b * h
            L = math.hypot(a * h, b * h)
            t_exit = exit_time(px, py, qx, qy, prims)
            t_k = 2.0
            if has_level:
                t_k = first_level_crossing(px, py, qx, qy, pieces, level,
                                           member, x0, y0, h, nx, ny)
            if t_k < t_exit and t_k <= 1.0:
                kind[f, k] = KIND_FIXED
                src[f, k] = SRC_ZERO
                ndist[f, k] = max(t_k * L, dmin)
                bx[f, k] = px + t_k * (qx - px)
                by[f, k] = py + t_k * (qy - py)
            elif t_exit <= 1.0:
                kind[f, k] = KIND_FIXED
                src[f, k] = SRC_BOUNDARY
                ndist[f, k] = max(t_exit * L, dmin)
                bx[f, k] = px + t_exit * (qx - px)
                by[f, k] = py + t_exit * (qy - py)
            else:
                ii = i + a
                jj = j + b
                if ii < 0 or ii >= nx or jj < 0 or jj >= ny:
                    kind[f, k] = KIND_FIXED
                    src[f, k] = SRC_BOUNDARY
                    ndist[f, k] = L
                    bx[f, k] = qx
                    by[f, k] = qy
                elif member[jj, ii]:
                    kind[f, k] = KIND_FIXED
                    src[f, k] = SRC_ZERO
                    ndist[f, k] = L
                    bx[f, k] = qx
                    by[f, k] = qy
                elif inside[jj, ii]:
                    kind[f, k] = KIND_FREE
                    nidx[f, k] = free_index[jj, ii]
                    ndist[f, k] = L
                else:
                    kind[f, k] = KIND_FIXED
                    src[f, k] = SRC_BOUNDARY
                    ndist[f, k] = L
                    bx[f, k] = qx
                    by[f, k] = qy
    return kind, nidx, ndist, src, bx, by


@nb.njit(cache=True)
def _node_update(u, kind, nidx, nval, ndist, f):
    """Exact mid-slope balance at node f, neighbours frozen.

    Solves max_i (v_i - t)/d_i + min_j (v_j - t)/d_j = 0.  In terms of the
    balanced slope s >= 0 this reads A(s) = B(s) with A(s) = max(v_i - s*d_i)
    (convex, decreasing) and B(s) = min(v_j + s*d_j) (concave, increasing);
    Newton on the active pair starting from s = 0 increases monotonically and
    terminates on a repeated pair, giving the exact root.  The result is the
    two-point average (d- * v+ + d+ * v-) / (d+ + d-) of the final pair.
    """
    D = kind.shape[1]
    s = 0.0
    t = u[f]
    for _ in range(D + 2):
        amax = -1.0e300
        bmin = 1.0e300
        va = 0.0
        da = 1.0
        vb = 0.0
        db = 1.0
        for k in range(D):
            if kind[f, k] == KIND_FREE:
                v = u[nidx[f, k]]
            else:
                v = nval[f, k]
            dist = ndist[f, k]
            a = v - s * dist
            b = v + s * dist
            if a > amax:
                amax = a
                va = v
                da = dist
            if b < bmin:
                bmin = b
                vb = v
                db = dist
        t = (da * vb + db * va) / (da + db)
        if amax - bmin <= 0.0:
            break
        s_new = (va - vb) / (da + db)
        if s_new <= s:
            break
        s = s_new
    return t


@nb.njit(cache=True)
def gs_sweep(u, kind, nidx, nval, ndist, order):
    """One Gauss-Seidel pass of the exact mid-slope update in the given
    order.  Returns the max nodal change."""
    mx = 0.0
    for oi in range(order.shape[0]):
        f = order[oi]
        un = _node_update(u, kind, nidx, nval, ndist, f)
        ch = abs(un - u[f])
        if ch > mx:
            mx = ch
        u[f] = un
    return mx


@nb.njit(cache=True, parallel=True)
def jacobi_sweep(u, unew, kind, nidx, nval, ndist):
    """One Jacobi pass of the exact mid-slope update (reads u, writes unew)."""
    F = kind.shape[0]
    for f in nb.prange(F):
        unew[f] = _node_update(u, kind, nidx, nval, ndist, f)


@nb.njit(cache=True)
def residual_max(u, kind, nidx, nval, ndist):
    """Max over free nodes of |max-slope + min-slope| and its arg node."""
    F = kind.shape[0]
    D = kind.shape[1]
    worst = 0.0
    arg = -1
    for f in range(F):
        uf = u[f]
        sp = -1.0e300
        sm = 1.0e300
        for k in range(D):
            kd = kind[f, k]
            if kd == KIND_FREE:
                v = u[nidx[f, k]]
            else:
                v = nval[f, k]
            s = (v - uf) / ndist[f, k]
            if s > sp:
                sp = s
            if s < sm:
                sm = s
        r = abs(sp + sm)
        if r > worst:
            worst = r
            arg = f
    return worst, arg


@nb.njit(cache=True)
def stencil_slopes(u, kind, nidx, nval, ndist):
    """Per-node (max_slope, min_slope) over the stencil."""
    F = kind.shape[0]
    D = kind.shape[1]
    smax = np.empty(F, np.float64)
    smin = np.empty(F, np.float64)
    for f in range(F):
        uf = u[f]
        sp = -1.0e300
        sm = 1.0e300
        for k in range(D):
            kd = kind[f, k]
            if kd == KIND_FREE:
                v = u[nidx[f, k]]
            else:
                v = nval[f, k]
            s = (v - uf) / ndist[f, k]
            if s > sp:
                sp = s
            if s < sm:
                sm = s
        smax[f] = sp
        smin[f] = sm
    return smax, smin


@nb.njit(cache=True)
def upwind_grad_free(u, kind, nidx, nval, ndist):
    """Upwind gradient max_y (u(x)-u(y))^+ / |x-y| over the stencil."""
    F = kind.shape[0]
    D = kind.shape[1]
    g = np.zeros(F, np.float64)
    for f in range(F):
        uf = u[f]
        best = 0.0
        for k in range(D):
            kd = kind[f, k]
            if kd == KIND_FREE:
                v = u[nidx[f, k]]
            else:
                v = nval[f, k]
            s = (uf - v) / ndist[f, k]
            if s > best:
                best = s
        g[f] = best
    return g


@nb.njit(cache=True)
def upwind_grad_mask(values, valid, offs, h):
    """Mask-based upwind gradient using only grid-node neighbours."""
    ny, nx = values.shape
    D = offs.shape[0]
    g = np.zeros((ny, nx), np.float64)
    for j in range(ny):
        for i in range(nx):
            if not valid[j, i]:
                continue
            uf = values[j, i]
            best = 0.0
            for k in range(D):
                ii = i + offs[k, 0]
                jj = j + offs[k, 1]
                if ii < 0 or ii >= nx or jj < 0 or jj >= ny:
                    continue
                if not valid[jj, ii]:
                    continue
                dist = h * math.hypot(offs[k, 0], offs[k, 1])
                s = (uf - values[jj, ii]) / dist
                if s > best:
                    best = s
            g[j, i] = best
    return g


@nb.njit(cache=True)
def centered_grad_mask(values, valid, offs, h):
    """Max over stencil lines of |u(x+o) - u(x-o)| / (2|o|).

    Second return value flags nodes where every stencil line fit in the
    mask; with lines missing (near the boundary) the max is a tangential
    underestimate and must not be used as a gradient proxy.
    """
    ny, nx = values.shape
    D = offs.shape[0]
    g = np.zeros((ny, nx), np.float64)
    ok = np.zeros((ny, nx), np.uint8)
    for j in range(ny):
        for i in range(nx):
            if not valid[j, i]:
                continue
            best = 0.0
            all_lines = True
            for k in range(D):
                a = offs[k, 0]
                b = offs[k, 1]
                if a < 0 or (a == 0 and b <= 0):
                    continue
                ip = i + a
                jp = j + b
                im = i - a
                jm = j - b
                if (ip < 0 or ip >= nx or jp < 0 or jp >= ny
                        or im < 0 or im >= nx or jm < 0 or jm >= ny
                        or not valid[jp, ip] or not valid[jm, im]):
                    all_lines = False
                    continue
                dist = 2.0 * h * math.hypot(a, b)
                s = abs(values[jp, ip] - values[jm, im]) / dist
                if s > best:
                    best = s
            g[j, i] = best
            if all_lines:
                ok[j, i] = 1
    return g, ok
