"""Compiled clipping and integration kernels.

Cells are held in boundary form: 2D cells as a ccw vertex ring with one tag
per edge (edge k runs from vertex k to vertex k+1), 3D cells as a list of
planar faces, each a ccw (seen from outside) vertex ring with one tag per
face. All coordinates inside the kernels are relative to the generator of
the cell being built.

Tags >= 0 index the candidate point set; tags < 0 are box walls,
``-(1 + 2*axis + side)`` with side 0 for the lower wall.
"""

import numpy as np
from numba import njit, prange

# return codes of the clip routines
UNCHANGED = -2
OVERFLOW = -1

# cell status codes
OK = 0
NEED_MORE = 1
TOO_COMPLEX = 2

MAXV2 = 512
MAXF3 = 256
MAXV3 = 128


@njit(cache=True)
def wall_tag(axis, side):
    return -(1 + 2 * axis + side)


# ---------------------------------------------------------------- 2D


@njit(cache=True)
def _emit2(ov, ot, cnt, x, y, tag, tol):
    if cnt > 0:
        dx = ov[cnt - 1, 0] - x
        dy = ov[cnt - 1, 1] - y
        if dx * dx + dy * dy <= tol * tol:
            ot[cnt - 1] = tag
            return cnt
    if cnt >= ov.shape[0]:
        return -1
    ov[cnt, 0] = x
    ov[cnt, 1] = y
    ot[cnt] = tag
    return cnt + 1


@njit(cache=True)
def _cut2(ax, ay, sa, bx, by, sb):
    # canonical endpoint order so both neighbours compute identical points
    if ax > bx or (ax == bx and ay > by):
        ax, bx = bx, ax
        ay, by = by, ay
        sa, sb = sb, sa
    t = sa / (sa - sb)
    return ax + t * (bx - ax), ay + t * (by - ay)


@njit(cache=True)
def clip_polygon(pv, pt, m, nx, ny, c, tag, tol, ov, ot):
    """Clip ring ``pv[:m]`` by ``nx*x + ny*y <= c`` into ``ov``/``ot``.

    Returns the new vertex count, 0 for an empty result, UNCHANGED when the
    half-space does not cut, OVERFLOW when ``ov`` is too small.
    """
    smax = -np.inf
    smin = np.inf
    for k in range(m):
        s = nx * pv[k, 0] + ny * pv[k, 1] - c
        if s > smax:
            smax = s
        if s < smin:
            smin = s
    if smax <= tol:
        return UNCHANGED
    if smin >= -tol:
        return 0
    cnt = 0
    for k in range(m):
        k1 = k + 1
        if k1 == m:
            k1 = 0
        ax = pv[k, 0]
        ay = pv[k, 1]
        bx = pv[k1, 0]
        by = pv[k1, 1]
        sa = nx * ax + ny * ay - c
        sb = nx * bx + ny * by - c
        if sa <= tol:
            if sb > tol:
                if sa >= -tol:
                    cnt = _emit2(ov, ot, cnt, ax, ay, tag, tol)
                else:
                    cnt = _emit2(ov, ot, cnt, ax, ay, pt[k], tol)
                    if cnt < 0:
                        return OVERFLOW
                    px, py = _cut2(ax, ay, sa, bx, by, sb)
                    cnt = _emit2(ov, ot, cnt, px, py, tag, tol)
            else:
                cnt = _emit2(ov, ot, cnt, ax, ay, pt[k], tol)
        elif sb < -tol:
            px, py = _cut2(ax, ay, sa, bx, by, sb)
            cnt = _emit2(ov, ot, cnt, px, py, pt[k], tol)
        if cnt < 0:
            return OVERFLOW
    if cnt > 1:
        dx = ov[cnt - 1, 0] - ov[0, 0]
        dy = ov[cnt - 1, 1] - ov[0, 1]
        if dx * dx + dy * dy <= tol * tol:
            cnt -= 1
    if cnt < 3:
        return 0
    return cnt


@njit(cache=True)
def polygon_measures(pv, m, ox, oy, lengths):
    """Area, centroid and second moment about (ox, oy) of ring ``pv[:m]``.

    Edge lengths are written to ``lengths``. Integration is a triangle fan
    from the vertex mean.
    """
    if m < 3:
        return 0.0, 0.0, 0.0, 0.0
    cx = 0.0
    cy = 0.0
    for k in range(m):
        cx += pv[k, 0]
        cy += pv[k, 1]
    cx /= m
    cy /= m
    area = 0.0
    mx = 0.0
    my = 0.0
    m2 = 0.0
    ux0 = cx - ox
    uy0 = cy - oy
    for k in range(m):
        k1 = k + 1
        if k1 == m:
            k1 = 0
        ax = pv[k, 0] - ox
        ay = pv[k, 1] - oy
        bx = pv[k1, 0] - ox
        by = pv[k1, 1] - oy
        ex = pv[k1, 0] - pv[k, 0]
        ey = pv[k1, 1] - pv[k, 1]
        lengths[k] = np.sqrt(ex * ex + ey * ey)
        a = 0.5 * ((ax - ux0) * (by - uy0) - (ay - uy0) * (bx - ux0))
        area += a
        sx = ux0 + ax + bx
        sy = uy0 + ay + by
        mx += a * sx / 3.0
        my += a * sy / 3.0
        q = ux0 * ux0 + uy0 * uy0 + ax * ax + ay * ay + bx * bx + by * by
        m2 += a / 12.0 * (q + sx * sx + sy * sy)
    if area <= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    return area, mx / area + ox, my / area + oy, m2


@njit(cache=True)
def _polygon_inset(pv, m, px, py):
    # distance from (px, py) to the nearest edge line
    best = np.inf
    for k in range(m):
        k1 = k + 1
        if k1 == m:
            k1 = 0
        ex = pv[k1, 0] - pv[k, 0]
        ey = pv[k1, 1] - pv[k, 1]
        ln = np.sqrt(ex * ex + ey * ey)
        if ln == 0.0:
            continue
        d = ((px - pv[k, 0]) * ey - (py - pv[k, 1]) * ex) / ln
        # ccw ring: interior has d <= 0
        if -d < best:
            best = -d
    return best


@njit(cache=True)
def build_cell_2d(xi, wi, i, lo, hi, Q, QW, Qown, cand, nc, bound, wmax,
                  tol, use_term, pv, pt, ov, ot):
    """Build the power cell of generator ``i``; returns (count, status)."""
    # start from the box, relative to the generator
    pv[0, 0] = lo[0] - xi[0]
    pv[0, 1] = lo[1] - xi[1]
    pv[1, 0] = hi[0] - xi[0]
    pv[1, 1] = lo[1] - xi[1]
    pv[2, 0] = hi[0] - xi[0]
    pv[2, 1] = hi[1] - xi[1]
    pv[3, 0] = lo[0] - xi[0]
    pv[3, 1] = hi[1] - xi[1]
    pt[0] = wall_tag(1, 0)
    pt[1] = wall_tag(0, 1)
    pt[2] = wall_tag(1, 1)
    pt[3] = wall_tag(0, 0)
    m = 4
    r2 = 0.0
    for k in range(4):
        q = pv[k, 0] * pv[k, 0] + pv[k, 1] * pv[k, 1]
        if q > r2:
            r2 = q
    rad = np.sqrt(r2)
    done = False
    for a in range(nc):
        j = cand[a]
        if Qown[j] == i:
            continue
        dx = Q[j, 0] - xi[0]
        dy = Q[j, 1] - xi[1]
        d2 = dx * dx + dy * dy
        d = np.sqrt(d2)
        if use_term and (d2 + wi - wmax) >= 2.0 * d * rad:
            done = True
            break
        c = (d2 + wi - QW[j]) / (2.0 * d)
        if c >= rad:
            continue
        r = clip_polygon(pv, pt, m, dx / d, dy / d, c, j, tol, ov, ot)
        if r == UNCHANGED:
            continue
        if r == OVERFLOW:
            return m, TOO_COMPLEX
        m = r
        if m == 0:
            return 0, OK
        r2 = 0.0
        for k in range(m):
            pv[k, 0] = ov[k, 0]
            pv[k, 1] = ov[k, 1]
            pt[k] = ot[k]
            q = ov[k, 0] * ov[k, 0] + ov[k, 1] * ov[k, 1]
            if q > r2:
                r2 = q
        rad = np.sqrt(r2)
    if use_term and not done:
        b = bound
        if not (b * b + wi - wmax >= 2.0 * b * rad):
            return m, NEED_MORE
    return m, OK


@njit(cache=True, parallel=True)
def cells_2d(P, W, Q, QW, Qown, cand, bound, lo_all, hi_all, wmax, tol,
             use_term, which, vol, cen, m2, cdist, surf, nfo, ftag, farea,
             status, scale):
    """Measure the cells listed in ``which``; outputs are indexed by cell."""
    nw = which.shape[0]
    nchunk = min(nw, 64)
    maxf = ftag.shape[1]
    for ch in prange(nchunk):
        pv = np.empty((MAXV2 * scale, 2))
        pt = np.empty(MAXV2 * scale, np.int64)
        ov = np.empty((MAXV2 * scale, 2))
        ot = np.empty(MAXV2 * scale, np.int64)
        lens = np.empty(MAXV2 * scale)
        for t in range(ch, nw, nchunk):
            i = which[t]
            row = cand[t]
            nc = 0
            while nc < row.shape[0] and row[nc] < Q.shape[0]:
                nc += 1
            m, st = build_cell_2d(P[i], W[i], i, lo_all[i], hi_all[i], Q, QW,
                                  Qown, row, nc, bound[t], wmax, tol,
                                  use_term, pv, pt, ov, ot)
            status[i] = st
            nfo[i] = 0
            if st != OK or m == 0:
                vol[i] = 0.0
                cen[i, 0] = np.nan
                cen[i, 1] = np.nan
                m2[i] = 0.0
                cdist[i] = 0.0
                surf[i] = 0.0
                continue
            a, cx, cy, s2 = polygon_measures(pv, m, 0.0, 0.0, lens)
            vol[i] = a
            cen[i, 0] = cx + P[i, 0]
            cen[i, 1] = cy + P[i, 1]
            m2[i] = s2
            cdist[i] = _polygon_inset(pv, m, cx, cy)
            per = 0.0
            if m > maxf:
                # face table too narrow: report the width needed
                status[i] = TOO_COMPLEX
                nfo[i] = m
                continue
            for k in range(m):
                ftag[i, k] = pt[k]
                farea[i, k] = lens[k]
                per += lens[k]
            nfo[i] = m
            surf[i] = per


# ---------------------------------------------------------------- 3D


@njit(cache=True)
def _cut3(a, sa, b, sb, out):
    swap = False
    if a[0] > b[0]:
        swap = True
    elif a[0] == b[0]:
        if a[1] > b[1]:
            swap = True
        elif a[1] == b[1] and a[2] > b[2]:
            swap = True
    if swap:
        t = sb / (sb - sa)
        for q in range(3):
            out[q] = b[q] + t * (a[q] - b[q])
    else:
        t = sa / (sa - sb)
        for q in range(3):
            out[q] = a[q] + t * (b[q] - a[q])


@njit(cache=True)
def _push3(buf, cnt, x, y, z, tol):
    if cnt > 0:
        dx = buf[cnt - 1, 0] - x
        dy = buf[cnt - 1, 1] - y
        dz = buf[cnt - 1, 2] - z
        if dx * dx + dy * dy + dz * dz <= tol * tol:
            return cnt
    if cnt >= buf.shape[0]:
        return -1
    buf[cnt, 0] = x
    buf[cnt, 1] = y
    buf[cnt, 2] = z
    return cnt + 1


@njit(cache=True)
def clip_polyhedron(fv, fc, ft, nf, n0, n1, n2, c, tag, tol, tmp, cap, capk,
                    angles):
    """Clip faces ``fv[:nf]`` in place by ``n.x <= c`` (``n`` unit length).

    Returns the new face count, 0 for an empty result, UNCHANGED when the
    plane does not cut, OVERFLOW when buffers are exhausted.
    """
    smax = -np.inf
    smin = np.inf
    for f in range(nf):
        for k in range(fc[f]):
            s = n0 * fv[f, k, 0] + n1 * fv[f, k, 1] + n2 * fv[f, k, 2] - c
            if s > smax:
                smax = s
            if s < smin:
                smin = s
    if smax <= tol:
        return UNCHANGED
    if smin >= -tol:
        return 0
    p = np.empty(3)
    ncap = 0
    nf2 = 0
    for f in range(nf):
        m = fc[f]
        cnt = 0
        for k in range(m):
            k1 = k + 1
            if k1 == m:
                k1 = 0
            a = fv[f, k]
            b = fv[f, k1]
            sa = n0 * a[0] + n1 * a[1] + n2 * a[2] - c
            sb = n0 * b[0] + n1 * b[1] + n2 * b[2] - c
            if sa <= tol:
                cnt = _push3(tmp, cnt, a[0], a[1], a[2], tol)
                if cnt < 0:
                    return OVERFLOW
                if sa >= -tol:
                    ncap = _push3(cap, ncap, a[0], a[1], a[2], 0.0)
                elif sb > tol:
                    _cut3(a, sa, b, sb, p)
                    cnt = _push3(tmp, cnt, p[0], p[1], p[2], tol)
                    ncap = _push3(cap, ncap, p[0], p[1], p[2], 0.0)
            elif sb < -tol:
                _cut3(a, sa, b, sb, p)
                cnt = _push3(tmp, cnt, p[0], p[1], p[2], tol)
                ncap = _push3(cap, ncap, p[0], p[1], p[2], 0.0)
            if cnt < 0 or ncap < 0:
                return OVERFLOW
        if cnt > 1:
            dx = tmp[cnt - 1, 0] - tmp[0, 0]
            dy = tmp[cnt - 1, 1] - tmp[0, 1]
            dz = tmp[cnt - 1, 2] - tmp[0, 2]
            if dx * dx + dy * dy + dz * dz <= tol * tol:
                cnt -= 1
        if cnt >= 3:
            if cnt > fv.shape[1]:
                return OVERFLOW
            for k in range(cnt):
                fv[nf2, k, 0] = tmp[k, 0]
                fv[nf2, k, 1] = tmp[k, 1]
                fv[nf2, k, 2] = tmp[k, 2]
            fc[nf2] = cnt
            ft[nf2] = ft[f]
            nf2 += 1
    # merge duplicate cap points
    nk = 0
    for q in range(ncap):
        dup = False
        for r in range(nk):
            dx = capk[r, 0] - cap[q, 0]
            dy = capk[r, 1] - cap[q, 1]
            dz = capk[r, 2] - cap[q, 2]
            if dx * dx + dy * dy + dz * dz <= tol * tol:
                dup = True
                break
        if not dup:
            capk[nk, 0] = cap[q, 0]
            capk[nk, 1] = cap[q, 1]
            capk[nk, 2] = cap[q, 2]
            nk += 1
    if nk >= 3:
        if nf2 >= fv.shape[0] or nk > fv.shape[1]:
            return OVERFLOW
        # in-plane basis (u, v) with u x v = n
        if abs(n0) < 0.9:
            u0, u1, u2 = 0.0, n2, -n1
        else:
            u0, u1, u2 = -n2, 0.0, n0
        un = np.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
        u0 /= un
        u1 /= un
        u2 /= un
        v0 = n1 * u2 - n2 * u1
        v1 = n2 * u0 - n0 * u2
        v2 = n0 * u1 - n1 * u0
        mx = 0.0
        my = 0.0
        mz = 0.0
        for q in range(nk):
            mx += capk[q, 0]
            my += capk[q, 1]
            mz += capk[q, 2]
        mx /= nk
        my /= nk
        mz /= nk
        for q in range(nk):
            dx = capk[q, 0] - mx
            dy = capk[q, 1] - my
            dz = capk[q, 2] - mz
            angles[q] = np.arctan2(dx * v0 + dy * v1 + dz * v2,
                                   dx * u0 + dy * u1 + dz * u2)
        srt = np.argsort(angles[:nk])
        for q in range(nk):
            r = srt[q]
            fv[nf2, q, 0] = capk[r, 0]
            fv[nf2, q, 1] = capk[r, 1]
            fv[nf2, q, 2] = capk[r, 2]
        fc[nf2] = nk
        ft[nf2] = tag
        nf2 += 1
    if nf2 < 4:
        return 0
    return nf2


@njit(cache=True)
def polyhedron_measures(fv, fc, nf, areas):
    """Volume, centroid and second moment about the origin of a polyhedron.

    Face areas are written to ``areas``. Integration is a tetrahedral fan
    from the mean of the face vertices.
    """
    ox = 0.0
    oy = 0.0
    oz = 0.0
    cnt = 0
    for f in range(nf):
        for k in range(fc[f]):
            ox += fv[f, k, 0]
            oy += fv[f, k, 1]
            oz += fv[f, k, 2]
            cnt += 1
    if cnt == 0:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    ox /= cnt
    oy /= cnt
    oz /= cnt
    vol = 0.0
    mx = 0.0
    my = 0.0
    mz = 0.0
    m2 = 0.0
    for f in range(nf):
        m = fc[f]
        a0 = fv[f, 0]
        sx = 0.0
        sy = 0.0
        sz = 0.0
        for k in range(1, m - 1):
            b = fv[f, k]
            e = fv[f, k + 1]
            # face area vector
            p0 = b[0] - a0[0]
            p1 = b[1] - a0[1]
            p2 = b[2] - a0[2]
            q0 = e[0] - a0[0]
            q1 = e[1] - a0[1]
            q2 = e[2] - a0[2]
            sx += p1 * q2 - p2 * q1
            sy += p2 * q0 - p0 * q2
            sz += p0 * q1 - p1 * q0
            # tetrahedron (o, a0, b, e)
            x0 = a0[0] - ox
            y0 = a0[1] - oy
            z0 = a0[2] - oz
            x1 = b[0] - ox
            y1 = b[1] - oy
            z1 = b[2] - oz
            x2 = e[0] - ox
            y2 = e[1] - oy
            z2 = e[2] - oz
            det = (x0 * (y1 * z2 - z1 * y2) - y0 * (x1 * z2 - z1 * x2)
                   + z0 * (x1 * y2 - y1 * x2))
            v = det / 6.0
            vol += v
            tx = ox + a0[0] + b[0] + e[0]
            ty = oy + a0[1] + b[1] + e[1]
            tz = oz + a0[2] + b[2] + e[2]
            mx += v * tx / 4.0
            my += v * ty / 4.0
            mz += v * tz / 4.0
            qq = (ox * ox + oy * oy + oz * oz
                  + a0[0] * a0[0] + a0[1] * a0[1] + a0[2] * a0[2]
                  + b[0] * b[0] + b[1] * b[1] + b[2] * b[2]
                  + e[0] * e[0] + e[1] * e[1] + e[2] * e[2])
            m2 += v / 20.0 * (qq + tx * tx + ty * ty + tz * tz)
        areas[f] = 0.5 * np.sqrt(sx * sx + sy * sy + sz * sz)
    if vol <= 0.0:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    return vol, mx / vol, my / vol, mz / vol, m2


@njit(cache=True)
def _polyhedron_inset(fv, fc, nf, px, py, pz):
    best = np.inf
    for f in range(nf):
        m = fc[f]
        a0 = fv[f, 0]
        sx = 0.0
        sy = 0.0
        sz = 0.0
        for k in range(1, m - 1):
            b = fv[f, k]
            e = fv[f, k + 1]
            p0 = b[0] - a0[0]
            p1 = b[1] - a0[1]
            p2 = b[2] - a0[2]
            q0 = e[0] - a0[0]
            q1 = e[1] - a0[1]
            q2 = e[2] - a0[2]
            sx += p1 * q2 - p2 * q1
            sy += p2 * q0 - p0 * q2
            sz += p0 * q1 - p1 * q0
        ln = np.sqrt(sx * sx + sy * sy + sz * sz)
        if ln == 0.0:
            continue
        d = ((a0[0] - px) * sx + (a0[1] - py) * sy + (a0[2] - pz) * sz) / ln
        if d < best:
            best = d
    return best


@njit(cache=True)
def init_box_3d(fv, fc, ft, lo, hi):
    """Write the box [lo, hi] into face buffers with outward ccw faces."""
    # corners indexed by bits (x, y, z)
    corners = np.empty((8, 3))
    for b in range(8):
        corners[b, 0] = hi[0] if b & 1 else lo[0]
        corners[b, 1] = hi[1] if b & 2 else lo[1]
        corners[b, 2] = hi[2] if b & 4 else lo[2]
    rings = np.array([
        [0, 4, 6, 2],  # x lo
        [1, 3, 7, 5],  # x hi
        [0, 1, 5, 4],  # y lo
        [2, 6, 7, 3],  # y hi
        [0, 2, 3, 1],  # z lo
        [4, 5, 7, 6],  # z hi
    ])
    for f in range(6):
        for k in range(4):
            for q in range(3):
                fv[f, k, q] = corners[rings[f, k], q]
        fc[f] = 4
        ft[f] = wall_tag(f // 2, f % 2)
    return 6


@njit(cache=True)
def build_cell_3d(xi, wi, i, lo, hi, Q, QW, Qown, cand, nc, bound, wmax,
                  tol, use_term, fv, fc, ft, tmp, cap, capk, angles):
    """Build the power cell of generator ``i``; returns (faces, status)."""
    rlo = np.empty(3)
    rhi = np.empty(3)
    for q in range(3):
        rlo[q] = lo[q] - xi[q]
        rhi[q] = hi[q] - xi[q]
    nf = init_box_3d(fv, fc, ft, rlo, rhi)
    r2 = 0.0
    for q in range(3):
        r2 += max(rlo[q] * rlo[q], rhi[q] * rhi[q])
    rad = np.sqrt(r2)
    done = False
    for a in range(nc):
        j = cand[a]
        if Qown[j] == i:
            continue
        dx = Q[j, 0] - xi[0]
        dy = Q[j, 1] - xi[1]
        dz = Q[j, 2] - xi[2]
        d2 = dx * dx + dy * dy + dz * dz
        d = np.sqrt(d2)
        if use_term and (d2 + wi - wmax) >= 2.0 * d * rad:
            done = True
            break
        c = (d2 + wi - QW[j]) / (2.0 * d)
        if c >= rad:
            continue
        r = clip_polyhedron(fv, fc, ft, nf, dx / d, dy / d, dz / d, c, j,
                            tol, tmp, cap, capk, angles)
        if r == UNCHANGED:
            continue
        if r == OVERFLOW:
            return nf, TOO_COMPLEX
        nf = r
        if nf == 0:
            return 0, OK
        r2 = 0.0
        for f in range(nf):
            for k in range(fc[f]):
                q = (fv[f, k, 0] * fv[f, k, 0] + fv[f, k, 1] * fv[f, k, 1]
                     + fv[f, k, 2] * fv[f, k, 2])
                if q > r2:
                    r2 = q
        rad = np.sqrt(r2)
    if use_term and not done:
        b = bound
        if not (b * b + wi - wmax >= 2.0 * b * rad):
            return nf, NEED_MORE
    return nf, OK


@njit(cache=True, parallel=True)
def cells_3d(P, W, Q, QW, Qown, cand, bound, lo_all, hi_all, wmax, tol,
             use_term, which, vol, cen, m2, cdist, surf, nfo, ftag, farea,
             status, scale):
    """Measure the cells listed in ``which``; outputs are indexed by cell."""
    nw = which.shape[0]
    nchunk = min(nw, 64)
    maxf = ftag.shape[1]
    for ch in prange(nchunk):
        fv = np.empty((MAXF3 * scale, MAXV3 * scale, 3))
        fc = np.empty(MAXF3 * scale, np.int64)
        ft = np.empty(MAXF3 * scale, np.int64)
        tmp = np.empty((MAXV3 * scale, 3))
        cap = np.empty((4 * MAXV3 * scale, 3))
        capk = np.empty((4 * MAXV3 * scale, 3))
        angles = np.empty(4 * MAXV3 * scale)
        areas = np.empty(MAXF3 * scale)
        for t in range(ch, nw, nchunk):
            i = which[t]
            row = cand[t]
            nc = 0
            while nc < row.shape[0] and row[nc] < Q.shape[0]:
                nc += 1
            nf, st = build_cell_3d(P[i], W[i], i, lo_all[i], hi_all[i], Q, QW,
                                   Qown, row, nc, bound[t], wmax, tol,
                                   use_term, fv, fc, ft, tmp, cap, capk,
                                   angles)
            status[i] = st
            nfo[i] = 0
            if st != OK or nf == 0:
                vol[i] = 0.0
                for q in range(3):
                    cen[i, q] = np.nan
                m2[i] = 0.0
                cdist[i] = 0.0
                surf[i] = 0.0
                continue
            v, cx, cy, cz, s2 = polyhedron_measures(fv, fc, nf, areas)
            vol[i] = v
            if v == 0.0:
                for q in range(3):
                    cen[i, q] = np.nan
                m2[i] = 0.0
                cdist[i] = 0.0
                surf[i] = 0.0
                continue
            cen[i, 0] = cx + P[i, 0]
            cen[i, 1] = cy + P[i, 1]
            cen[i, 2] = cz + P[i, 2]
            m2[i] = s2
            cdist[i] = _polyhedron_inset(fv, fc, nf, cx, cy, cz)
            if nf > maxf:
                status[i] = TOO_COMPLEX
                nfo[i] = nf
                continue
            tot = 0.0
            for f in range(nf):
                ftag[i, f] = ft[f]
                farea[i, f] = areas[f]
                tot += areas[f]
            nfo[i] = nf
            surf[i] = tot


@njit(cache=True)
def cell_geometry_3d(xi, wi, i, lo, hi, Q, QW, Qown, cand, bound, wmax, tol,
                     use_term, scale):
    """Full face geometry (absolute coordinates) of one 3D cell."""
    fv = np.empty((MAXF3 * scale, MAXV3 * scale, 3))
    fc = np.empty(MAXF3 * scale, np.int64)
    ft = np.empty(MAXF3 * scale, np.int64)
    tmp = np.empty((MAXV3 * scale, 3))
    cap = np.empty((4 * MAXV3 * scale, 3))
    capk = np.empty((4 * MAXV3 * scale, 3))
    angles = np.empty(4 * MAXV3 * scale)
    nc = 0
    while nc < cand.shape[0] and cand[nc] < Q.shape[0]:
        nc += 1
    nf, st = build_cell_3d(xi, wi, i, lo, hi, Q, QW, Qown, cand, nc, bound,
                           wmax, tol, use_term, fv, fc, ft, tmp, cap, capk,
                           angles)
    for f in range(nf):
        for k in range(fc[f]):
            for q in range(3):
                fv[f, k, q] += xi[q]
    return fv[:nf].copy(), fc[:nf].copy(), ft[:nf].copy(), st


@njit(cache=True)
def cell_geometry_2d(xi, wi, i, lo, hi, Q, QW, Qown, cand, bound, wmax, tol,
                     use_term, scale):
    """Vertex ring and edge tags (absolute coordinates) of one 2D cell."""
    pv = np.empty((MAXV2 * scale, 2))
    pt = np.empty(MAXV2 * scale, np.int64)
    ov = np.empty((MAXV2 * scale, 2))
    ot = np.empty(MAXV2 * scale, np.int64)
    nc = 0
    while nc < cand.shape[0] and cand[nc] < Q.shape[0]:
        nc += 1
    m, st = build_cell_2d(xi, wi, i, lo, hi, Q, QW, Qown, cand, nc, bound,
                          wmax, tol, use_term, pv, pt, ov, ot)
    for k in range(m):
        pv[k, 0] += xi[0]
        pv[k, 1] += xi[1]
    return pv[:m].copy(), pt[:m].copy(), st


# ------------------------------------------------ polytope-level helpers


@njit(cache=True)
def clip_faces_3d(fv, fc, ft, nf, normal, offset, tag, tol):
    """Clip a standalone polyhedron (copies buffers, absolute coordinates)."""
    wv = np.empty((MAXF3, MAXV3, 3))
    wc = np.empty(MAXF3, np.int64)
    wt = np.empty(MAXF3, np.int64)
    for f in range(nf):
        for k in range(fc[f]):
            for q in range(3):
                wv[f, k, q] = fv[f, k, q]
        wc[f] = fc[f]
        wt[f] = ft[f]
    ln = np.sqrt(normal[0] ** 2 + normal[1] ** 2 + normal[2] ** 2)
    tmp = np.empty((MAXV3, 3))
    cap = np.empty((4 * MAXV3, 3))
    capk = np.empty((4 * MAXV3, 3))
    angles = np.empty(4 * MAXV3)
    r = clip_polyhedron(wv, wc, wt, nf, normal[0] / ln, normal[1] / ln,
                        normal[2] / ln, offset / ln, tag, tol, tmp, cap, capk,
                        angles)
    if r == UNCHANGED:
        r = nf
    if r < 0:
        return wv[:0].copy(), wc[:0].copy(), wt[:0].copy(), False
    return wv[:r].copy(), wc[:r].copy(), wt[:r].copy(), True


@njit(cache=True)
def clip_ring_2d(pv, pt, normal, offset, tag, tol):
    m = pv.shape[0]
    ov = np.empty((2 * m + 4, 2))
    ot = np.empty(2 * m + 4, np.int64)
    ln = np.sqrt(normal[0] ** 2 + normal[1] ** 2)
    r = clip_polygon(pv, pt, m, normal[0] / ln, normal[1] / ln, offset / ln,
                     tag, tol, ov, ot)
    if r == UNCHANGED:
        return pv.copy(), pt.copy(), True
    if r < 0:
        return ov[:0].copy(), ot[:0].copy(), False
    return ov[:r].copy(), ot[:r].copy(), True


@njit(cache=True)
def measures_faces_3d(fv, fc, nf, p):
    """(volume, centroid, second moment about p, face areas) of a polyhedron."""
    rv = np.empty((nf, fv.shape[1], 3))
    for f in range(nf):
        for k in range(fc[f]):
            for q in range(3):
                rv[f, k, q] = fv[f, k, q] - p[q]
    areas = np.zeros(max(nf, 1))
    v, cx, cy, cz, s2 = polyhedron_measures(rv, fc, nf, areas)
    cen = np.array([cx + p[0], cy + p[1], cz + p[2]])
    return v, cen, s2, areas[:nf].copy()


@njit(cache=True)
def measures_ring_2d(pv, p):
    m = pv.shape[0]
    lens = np.zeros(max(m, 1))
    a, cx, cy, s2 = polygon_measures(pv, m, p[0], p[1], lens)
    return a, np.array([cx, cy]), s2, lens[:m].copy()
