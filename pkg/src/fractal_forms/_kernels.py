"""Compiled inner loops: ball measures along polygons and on the arc tree.

All routines are deterministic; parallel loops write disjoint outputs.
"""
import math
import os

import numba
import numpy as np
from numba import njit, prange

_threads = os.environ.get("FRACTAL_FORMS_THREADS")
if _threads:
    numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))


@njit(cache=True)
def polyline_ball_profile(cx, cy, radii, ax, ay, bx, by, dens, out):
    """out[i] = sum_e dens_e * length(e ∩ B(c, radii[i])); ``radii`` ascending."""
    nr = radii.shape[0]
    diff = np.zeros(nr + 1)
    for i in range(nr):
        out[i] = 0.0
    for e in range(ax.shape[0]):
        dx = bx[e] - ax[e]
        dy = by[e] - ay[e]
        L = math.sqrt(dx * dx + dy * dy)
        if L == 0.0:
            continue
        ux = dx / L
        uy = dy / L
        px = cx - ax[e]
        py = cy - ay[e]
        t0 = px * ux + py * uy
        dn = px * uy - py * ux
        d2 = dn * dn
        for side in range(2):
            if side == 0:
                s = t0 if t0 > 0.0 else 0.0
                if s >= L:
                    continue
                off = s - t0
                ln = L - s
            else:
                s = t0 if t0 < L else L
                if s <= 0.0:
                    continue
                off = t0 - s
                ln = s
            rs = math.sqrt(d2 + off * off)
            re = math.sqrt(d2 + (off + ln) * (off + ln))
            i0 = np.searchsorted(radii, rs, side="right")
            i1 = np.searchsorted(radii, re, side="left")
            de = dens[e]
            for i in range(i0, i1):
                r = radii[i]
                v = math.sqrt(max(r * r - d2, 0.0)) - off
                if v < 0.0:
                    v = 0.0
                elif v > ln:
                    v = ln
                out[i] += de * v
            diff[i1] += de * ln
    acc = 0.0
    for i in range(nr):
        acc += diff[i]
        out[i] += acc


@njit(cache=True)
def _koch_children(p0x, p0y, p1x, p1y, p, h, cx, cy):
    dx = p1x - p0x
    dy = p1y - p0y
    cx[0] = p0x
    cy[0] = p0y
    cx[1] = p0x + p * dx
    cy[1] = p0y + p * dy
    cx[2] = p0x + 0.5 * dx - h * dy
    cy[2] = p0y + 0.5 * dy + h * dx
    cx[3] = p0x + (1.0 - p) * dx
    cy[3] = p0y + (1.0 - p) * dy
    cx[4] = p1x
    cy[4] = p1y


@njit(cache=True)
def arc_cover(cx, cy, radii, roots, root_mass, omegas, heights, start_level, depth, eps,
              child_w, gam):
    """Adaptive cover of the arc tree seen from ``c`` for the query ``radii``.

    Arcs are bounded by the disc centred at their chord midpoint with radius
    half the chord. An arc is split when some query radius cuts its disc,
    it is coarser than ``eps`` times its distance and ``depth`` is not reached.
    Returns ``(near, far, mass, cdist)`` with near = dist - rho, far = dist + rho
    and cdist the distance to the arc's mass centroid ``p0 + (p1 - p0) gam[level]``
    (complex multiplication). ``child_w`` holds the child mass fractions per level.
    """
    cap = 1 << 10
    sx0 = np.empty(cap)
    sy0 = np.empty(cap)
    sx1 = np.empty(cap)
    sy1 = np.empty(cap)
    slev = np.empty(cap, dtype=np.int64)
    smass = np.empty(cap)
    onear = np.empty(cap)
    ofar = np.empty(cap)
    omass = np.empty(cap)
    ocd = np.empty(cap)
    nout = 0
    top = 0
    rmin = radii[0]
    rmax = radii[radii.shape[0] - 1]
    for k in range(roots.shape[0]):
        sx0[top] = roots[k, 0]
        sy0[top] = roots[k, 1]
        sx1[top] = roots[k, 2]
        sy1[top] = roots[k, 3]
        slev[top] = start_level
        smass[top] = root_mass[k]
        top += 1
    kx = np.empty(5)
    ky = np.empty(5)
    while top > 0:
        top -= 1
        x0 = sx0[top]
        y0 = sy0[top]
        x1 = sx1[top]
        y1 = sy1[top]
        lev = slev[top]
        m = smass[top]
        mx = 0.5 * (x0 + x1)
        my = 0.5 * (y0 + y1)
        rho = 0.5 * math.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2)
        dist = math.sqrt((mx - cx) ** 2 + (my - cy) ** 2)
        near = dist - rho
        far = dist + rho
        if near >= rmax:
            continue
        split = False
        if lev < depth and far > rmin:
            j = np.searchsorted(radii, near, side="right")
            if j < radii.shape[0] and radii[j] < far:
                gap = near if near > 0.0 else 0.0
                if rho > eps * gap:
                    split = True
        if split:
            if top + 4 >= cap:
                ncap = 2 * cap
                sx0 = _grow(sx0, ncap)
                sy0 = _grow(sy0, ncap)
                sx1 = _grow(sx1, ncap)
                sy1 = _grow(sy1, ncap)
                slev = _grow_i(slev, ncap)
                smass = _grow(smass, ncap)
                cap = ncap
            _koch_children(x0, y0, x1, y1, omegas[lev], heights[lev], kx, ky)
            for c in range(4):
                sx0[top] = kx[c]
                sy0[top] = ky[c]
                sx1[top] = kx[c + 1]
                sy1[top] = ky[c + 1]
                slev[top] = lev + 1
                smass[top] = m * child_w[lev, c]
                top += 1
        else:
            if nout >= onear.shape[0]:
                ncap = 2 * onear.shape[0]
                onear = _grow(onear, ncap)
                ofar = _grow(ofar, ncap)
                omass = _grow(omass, ncap)
                ocd = _grow(ocd, ncap)
            gx = x0 + (x1 - x0) * gam[lev, 0] - (y1 - y0) * gam[lev, 1]
            gy = y0 + (y1 - y0) * gam[lev, 0] + (x1 - x0) * gam[lev, 1]
            onear[nout] = near
            ofar[nout] = far
            omass[nout] = m
            ocd[nout] = math.sqrt((gx - cx) ** 2 + (gy - cy) ** 2)
            nout += 1
    return onear[:nout], ofar[:nout], omass[:nout], ocd[:nout]


@njit(cache=True)
def _grow(a, n):
    b = np.empty(n)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def _grow_i(a, n):
    b = np.empty(n, dtype=np.int64)
    b[: a.shape[0]] = a
    return b


@njit(cache=True)
def cover_bracket(near, far, mass, radii, lo, hi):
    """lo[i] = mass of cover arcs inside B(c, r_i); hi[i] = mass of arcs meeting it."""
    o1 = np.argsort(far)
    o2 = np.argsort(near)
    nr = radii.shape[0]
    acc = 0.0
    k = 0
    for i in range(nr):
        while k < far.shape[0] and far[o1[k]] <= radii[i]:
            acc += mass[o1[k]]
            k += 1
        lo[i] = acc
    acc = 0.0
    k = 0
    for i in range(nr):
        while k < near.shape[0] and near[o2[k]] < radii[i]:
            acc += mass[o2[k]]
            k += 1
        hi[i] = acc


@njit(cache=True)
def cover_estimate(near, far, cdist, mass, radii, kappa, est):
    """Smoothed ball mass from a cover.

    Each arc contributes its mass times a linear ramp in ``r`` across
    ``[cdist - kappa rho, cdist + kappa rho]`` (``rho`` its disc radius), i.e.
    the arc mass is spread uniformly in the radial direction about its centroid.
    """
    n = mass.shape[0]
    a = np.empty(n)
    b = np.empty(n)
    for i in range(n):
        h = kappa * 0.5 * (far[i] - near[i])
        a[i] = cdist[i] - h
        b[i] = cdist[i] + h
    oa = np.argsort(a)
    ob = np.argsort(b)
    active = np.zeros(n, dtype=np.bool_)
    s0 = 0.0
    s1 = 0.0
    full = 0.0
    ka = 0
    kb = 0
    for j in range(radii.shape[0]):
        r = radii[j]
        while ka < n and a[oa[ka]] < r:
            i = oa[ka]
            if b[i] > a[i]:
                sl = mass[i] / (b[i] - a[i])
                s1 += sl
                s0 += sl * a[i]
                active[i] = True
            ka += 1
        while kb < n and b[ob[kb]] <= r:
            i = ob[kb]
            full += mass[i]
            if active[i]:
                sl = mass[i] / (b[i] - a[i])
                s1 -= sl
                s0 -= sl * a[i]
                active[i] = False
            kb += 1
        est[j] = full + s1 * r - s0
    return est


@njit(cache=True)
def tree_ball_bracket(cx, cy, radii, roots, root_mass, omegas, heights, depth, eps, child_w,
                      lo, hi):
    gam = np.zeros((depth + 2, 2))
    near, far, mass, _ = arc_cover(cx, cy, radii, roots, root_mass, omegas, heights, 0, depth,
                                   eps, child_w, gam)
    cover_bracket(near, far, mass, radii, lo, hi)


@njit(cache=True)
def ball_brackets_many(cxs, cys, rs, roots, root_mass, omegas, heights, depth, eps, child_w,
                       lo, hi):
    """Independent (centre, radius) queries."""
    one = np.empty(1)
    l1 = np.empty(1)
    h1 = np.empty(1)
    for q in range(cxs.shape[0]):
        one[0] = rs[q]
        tree_ball_bracket(cxs[q], cys[q], one, roots, root_mass, omegas, heights, depth, eps,
                          child_w, l1, h1)
        lo[q] = l1[0]
        hi[q] = h1[0]


@njit(cache=True)
def polyline_ball_many(cxs, cys, rs, ax, ay, bx, by, dens):
    """Exact polyline ball measures for independent queries (linear in edges)."""
    out = np.empty(cxs.shape[0])
    one = np.empty(1)
    o1 = np.empty(1)
    for q in range(cxs.shape[0]):
        one[0] = rs[q]
        polyline_ball_profile(cxs[q], cys[q], one, ax, ay, bx, by, dens, o1)
        out[q] = o1[0]
    return out


@njit(cache=True)
def grouped_tree_profiles(cxs, cys, offsets, radii, roots, root_mass, omegas, heights, depth,
                          eps, child_w, gam, kappa, lo, hi, est):
    """Tree brackets and smoothed centroid-rule estimates for many centres.

    ``radii[offsets[c]:offsets[c+1]]`` belong to centre c.
    """
    for c in range(cxs.shape[0]):
        s = offsets[c]
        e = offsets[c + 1]
        if e == s:
            continue
        order = np.argsort(radii[s:e])
        rs = radii[s:e][order]
        near, far, mass, cd = arc_cover(cxs[c], cys[c], rs, roots, root_mass, omegas, heights,
                                        0, depth, eps, child_w, gam)
        l1 = np.empty(e - s)
        h1 = np.empty(e - s)
        m1 = np.empty(e - s)
        cover_bracket(near, far, mass, rs, l1, h1)
        cover_estimate(near, far, cd, mass, rs, kappa, m1)
        for i in range(e - s):
            lo[s + order[i]] = l1[i]
            hi[s + order[i]] = h1[i]
            est[s + order[i]] = m1[i]


@njit(cache=True)
def grouped_polyline_profiles(cxs, cys, offsets, radii, ax, ay, bx, by, dens, out):
    """Exact polyline ball measures for many centres in CSR layout."""
    for c in range(cxs.shape[0]):
        s = offsets[c]
        e = offsets[c + 1]
        if e == s:
            continue
        order = np.argsort(radii[s:e])
        rs = radii[s:e][order]
        o1 = np.empty(e - s)
        polyline_ball_profile(cxs[c], cys[c], rs, ax, ay, bx, by, dens, o1)
        for i in range(e - s):
            out[s + order[i]] = o1[i]


@njit(cache=True)
def accumulate_pair_matrix(ci, pi, s, dof0, dof1, t, Q):
    """Q += s (phi_i - phi_j)(phi_i - phi_j)^T for node pairs with linear hat traces.

    Node k carries the hat values ``1 - t[k]`` on ``dof0[k]`` and ``t[k]`` on ``dof1[k]``.
    """
    idx = np.empty(4, dtype=np.int64)
    val = np.empty(4)
    for k in range(ci.shape[0]):
        a = ci[k]
        b = pi[k]
        idx[0] = dof0[a]
        val[0] = 1.0 - t[a]
        idx[1] = dof1[a]
        val[1] = t[a]
        idx[2] = dof0[b]
        val[2] = -(1.0 - t[b])
        idx[3] = dof1[b]
        val[3] = -t[b]
        w = s[k]
        for i in range(4):
            vi = w * val[i]
            for j in range(4):
                Q[idx[i], idx[j]] += vi * val[j]


@njit(cache=True)
def mcshane(px, py, vals, L, qx, qy, out):
    """out[k] = min_j (vals[j] + L |q_k - p_j|)."""
    for k in range(qx.shape[0]):
        best = np.inf
        for j in range(px.shape[0]):
            dx = qx[k] - px[j]
            dy = qy[k] - py[j]
            v = vals[j] + L * math.sqrt(dx * dx + dy * dy)
            if v < best:
                best = v
        out[k] = best
