"""Numba-compiled twins of the kernels in numpy_backend.py.

Same signatures, same semantics, same tie-breaking.  All functions are
serial: determinism matters more here than the last core.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def tq_sums(us, vs, obs, planes, k):
    n = planes.shape[0]
    m = us.shape[0]
    out = np.zeros(n)
    for i in range(n):
        a, b, c = planes[i, 0], planes[i, 1], planes[i, 2]
        acc = 0.0
        for p in range(m):
            d = a * us[p] + b * vs[p] + c
            r = abs(obs[p] - d)
            if r > k:
                r = k
            acc += r * r
        out[i] = acc
    return out


@njit(cache=True)
def plane_mins(us, vs, planes):
    n = planes.shape[0]
    m = us.shape[0]
    out = np.full(n, np.inf)
    for i in range(n):
        a, b, c = planes[i, 0], planes[i, 1], planes[i, 2]
        lo = np.inf
        for p in range(m):
            d = a * us[p] + b * vs[p] + c
            if d < lo:
                lo = d
        out[i] = lo
    return out


@njit(cache=True)
def pair_min_gaps(us, vs, planes_a, planes_b):
    na = planes_a.shape[0]
    nb = planes_b.shape[0]
    m = us.shape[0]
    out = np.full((na, nb), np.inf)
    for i in range(na):
        aa, ab, ac = planes_a[i, 0], planes_a[i, 1], planes_a[i, 2]
        for j in range(nb):
            ba, bb, bc = planes_b[j, 0], planes_b[j, 1], planes_b[j, 2]
            da = aa - ba
            db = ab - bb
            dc = ac - bc
            lo = np.inf
            for p in range(m):
                g = da * us[p] + db * vs[p] + dc
                if g < lo:
                    lo = g
            out[i, j] = lo
    return out


@njit(cache=True)
def quad_forms(coeffs_a, coeffs_b, moments):
    na = coeffs_a.shape[0]
    nb = coeffs_b.shape[0]
    out = np.zeros((na, nb))
    for i in range(na):
        for j in range(nb):
            d0 = coeffs_a[i, 0] - coeffs_b[j, 0]
            d1 = coeffs_a[i, 1] - coeffs_b[j, 1]
            d2 = coeffs_a[i, 2] - coeffs_b[j, 2]
            acc = 0.0
            acc += (d0 * moments[0, 0]) * d0
            acc += (d0 * moments[0, 1]) * d1
            acc += (d0 * moments[0, 2]) * d2
            acc += (d1 * moments[1, 0]) * d0
            acc += (d1 * moments[1, 1]) * d1
            acc += (d1 * moments[1, 2]) * d2
            acc += (d2 * moments[2, 0]) * d0
            acc += (d2 * moments[2, 1]) * d1
            acc += (d2 * moments[2, 2]) * d2
            out[i, j] = acc
    return out


@njit(cache=True)
def mplp_run(nstates, b, u_off, scope, scope_off, tab, tab_off, msg, msg_off,
             bounds_out, max_sweeps, tol):
    n_vars = nstates.shape[0]
    n_fac = scope_off.shape[0] - 1
    max_arity = 0
    max_states = 0
    for f in range(n_fac):
        arity = scope_off[f + 1] - scope_off[f]
        if arity > max_arity:
            max_arity = arity
        tot = 0
        for pos in range(arity):
            tot += nstates[scope[scope_off[f] + pos]]
        if tot > max_states:
            max_states = tot
    idx = np.zeros(max(max_arity, 1), np.int64)
    sizes = np.zeros(max(max_arity, 1), np.int64)
    pos_off = np.zeros(max(max_arity, 1) + 1, np.int64)
    bm_buf = np.zeros(max(max_states, 1))
    mm_buf = np.zeros(max(max_states, 1))
    prev = -np.inf
    sweeps = 0
    for _ in range(max_sweeps):
        for f in range(n_fac):
            s0 = scope_off[f]
            arity = scope_off[f + 1] - s0
            off = 0
            for pos in range(arity):
                v = scope[s0 + pos]
                ns = nstates[v]
                sizes[pos] = ns
                pos_off[pos] = off
                bo = u_off[v]
                mo = msg_off[s0 + pos]
                for t in range(ns):
                    bm_buf[off + t] = b[bo + t] - msg[mo + t]
                    mm_buf[off + t] = np.inf
                off += ns
            for pos in range(arity):
                idx[pos] = 0
            base = tab_off[f]
            tsize = tab_off[f + 1] - base
            for e in range(tsize):
                val = tab[base + e]
                for pos in range(arity):
                    val += bm_buf[pos_off[pos] + idx[pos]]
                for pos in range(arity):
                    o = pos_off[pos] + idx[pos]
                    if val < mm_buf[o]:
                        mm_buf[o] = val
                p = arity - 1
                while p >= 0:
                    idx[p] += 1
                    if idx[p] < sizes[p]:
                        break
                    idx[p] = 0
                    p -= 1
            for pos in range(arity):
                v = scope[s0 + pos]
                ns = nstates[v]
                bo = u_off[v]
                mo = msg_off[s0 + pos]
                po = pos_off[pos]
                for t in range(ns):
                    mm = mm_buf[po + t] / arity
                    msg[mo + t] = mm - bm_buf[po + t]
                    b[bo + t] = mm
        bound = 0.0
        for v in range(n_vars):
            lo = np.inf
            for t in range(u_off[v], u_off[v + 1]):
                if b[t] < lo:
                    lo = b[t]
            bound += lo
        for f in range(n_fac):
            s0 = scope_off[f]
            arity = scope_off[f + 1] - s0
            for pos in range(arity):
                sizes[pos] = nstates[scope[s0 + pos]]
                idx[pos] = 0
            base = tab_off[f]
            tsize = tab_off[f + 1] - base
            lo = np.inf
            for e in range(tsize):
                val = tab[base + e]
                for pos in range(arity):
                    val -= msg[msg_off[s0 + pos] + idx[pos]]
                if val < lo:
                    lo = val
                p = arity - 1
                while p >= 0:
                    idx[p] += 1
                    if idx[p] < sizes[p]:
                        break
                    idx[p] = 0
                    p -= 1
            bound += lo
        bounds_out[sweeps] = bound
        sweeps += 1
        if bound - prev < tol:
            break
        prev = bound
    return sweeps


@njit(cache=True)
def slic_iterate(lab, centers, step, invwt, iters):
    h, w = lab.shape[:2]
    n = centers.shape[0]
    labels = np.full((h, w), -1, np.int32)
    dist = np.empty((h, w), np.float64)
    sums = np.zeros((n, 5))
    cnts = np.zeros(n)
    for _ in range(iters):
        for y in range(h):
            for x in range(w):
                dist[y, x] = np.inf
                labels[y, x] = -1
        for k in range(n):
            cx = centers[k, 0]
            cy = centers[k, 1]
            x0 = int(cx - step)
            x1 = int(cx + step) + 1
            y0 = int(cy - step)
            y1 = int(cy + step) + 1
            if x0 < 0:
                x0 = 0
            if y0 < 0:
                y0 = 0
            if x1 > w:
                x1 = w
            if y1 > h:
                y1 = h
            for y in range(y0, y1):
                for x in range(x0, x1):
                    dl = lab[y, x, 0] - centers[k, 2]
                    da = lab[y, x, 1] - centers[k, 3]
                    db = lab[y, x, 2] - centers[k, 4]
                    dxx = x - cx
                    dyy = y - cy
                    d = dl * dl + da * da + db * db + invwt * (dxx * dxx + dyy * dyy)
                    if d < dist[y, x]:
                        dist[y, x] = d
                        labels[y, x] = k
        for y in range(h):
            for x in range(w):
                if labels[y, x] < 0:
                    bb = np.inf
                    bk = 0
                    for k in range(n):
                        dxx = x - centers[k, 0]
                        dyy = y - centers[k, 1]
                        d = dxx * dxx + dyy * dyy
                        if d < bb:
                            bb = d
                            bk = k
                    labels[y, x] = bk
        for k in range(n):
            cnts[k] = 0.0
            for c in range(5):
                sums[k, c] = 0.0
        for y in range(h):
            for x in range(w):
                k = labels[y, x]
                sums[k, 0] += x
                sums[k, 1] += y
                sums[k, 2] += lab[y, x, 0]
                sums[k, 3] += lab[y, x, 1]
                sums[k, 4] += lab[y, x, 2]
                cnts[k] += 1.0
        for k in range(n):
            if cnts[k] > 0:
                for c in range(5):
                    centers[k, c] = sums[k, c] / cnts[k]
    return labels


@njit(cache=True)
def label_components(labels):
    h, w = labels.shape
    comp = np.full((h, w), -1, np.int32)
    stack_y = np.empty(h * w, np.int64)
    stack_x = np.empty(h * w, np.int64)
    nc = 0
    for sy in range(h):
        for sx in range(w):
            if comp[sy, sx] >= 0:
                continue
            lab = labels[sy, sx]
            comp[sy, sx] = nc
            stack_y[0] = sy
            stack_x[0] = sx
            top = 1
            while top > 0:
                top -= 1
                y = stack_y[top]
                x = stack_x[top]
                if y > 0 and comp[y - 1, x] < 0 and labels[y - 1, x] == lab:
                    comp[y - 1, x] = nc
                    stack_y[top] = y - 1
                    stack_x[top] = x
                    top += 1
                if y + 1 < h and comp[y + 1, x] < 0 and labels[y + 1, x] == lab:
                    comp[y + 1, x] = nc
                    stack_y[top] = y + 1
                    stack_x[top] = x
                    top += 1
                if x > 0 and comp[y, x - 1] < 0 and labels[y, x - 1] == lab:
                    comp[y, x - 1] = nc
                    stack_y[top] = y
                    stack_x[top] = x - 1
                    top += 1
                if x + 1 < w and comp[y, x + 1] < 0 and labels[y, x + 1] == lab:
                    comp[y, x + 1] = nc
                    stack_y[top] = y
                    stack_x[top] = x + 1
                    top += 1
            nc += 1
    return comp, nc


@njit(cache=True)
def census_transform(gray, radius):
    h, w = gray.shape
    code = np.zeros((h, w), np.int64)
    for y in range(h):
        for x in range(w):
            center = gray[y, x]
            c = np.int64(0)
            bit = 0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    if dy == 0 and dx == 0:
                        continue
                    yy = y + dy
                    if yy < 0:
                        yy = 0
                    elif yy >= h:
                        yy = h - 1
                    xx = x + dx
                    if xx < 0:
                        xx = 0
                    elif xx >= w:
                        xx = w - 1
                    if gray[yy, xx] < center:
                        c |= np.int64(1) << bit
                    bit += 1
            code[y, x] = c
    return code


@njit(cache=True, inline="always")
def _popcount(v):
    v = v - ((v >> 1) & 0x5555555555555555)
    v = (v & 0x3333333333333333) + ((v >> 2) & 0x3333333333333333)
    v = (v + (v >> 4)) & 0x0F0F0F0F0F0F0F0F
    v = v + (v >> 8)
    v = v + (v >> 16)
    v = v + (v >> 32)
    return v & 0x7F


@njit(cache=True)
def census_cost_volume(code_l, code_r, max_disparity, n_bits):
    h, w = code_l.shape
    nd = max_disparity + 1
    cost = np.empty((h, w, nd), np.float32)
    for y in range(h):
        for x in range(w):
            for d in range(nd):
                if x - d >= 0:
                    cost[y, x, d] = np.float32(_popcount(code_l[y, x] ^ code_r[y, x - d]))
                else:
                    cost[y, x, d] = np.float32(n_bits)
    return cost


@njit(cache=True)
def _agg_step(out, cost, p1, p2, y, x, py, px):
    nd = cost.shape[2]
    m = np.float32(np.inf)
    for d in range(nd):
        if out[py, px, d] < m:
            m = out[py, px, d]
    for d in range(nd):
        best = out[py, px, d]
        if d + 1 < nd:
            c = out[py, px, d + 1] + p1
            if c < best:
                best = c
        if d - 1 >= 0:
            c = out[py, px, d - 1] + p1
            if c < best:
                best = c
        c = m + p2
        if c < best:
            best = c
        out[y, x, d] = cost[y, x, d] + (best - m)


@njit(cache=True)
def _aggregate_one(cost, p1, p2, dy, dx):
    h, w, nd = cost.shape
    out = cost.copy()
    if dx != 0:
        if dx > 0:
            x0, x1, xs = 1, w, 1
        else:
            x0, x1, xs = w - 2, -1, -1
        for x in range(x0, x1, xs):
            for y in range(h):
                py = y - dy
                if py < 0 or py >= h:
                    continue
                _agg_step(out, cost, p1, p2, y, x, py, x - dx)
    else:
        if dy > 0:
            y0, y1, ys = 1, h, 1
        else:
            y0, y1, ys = h - 2, -1, -1
        for y in range(y0, y1, ys):
            for x in range(w):
                _agg_step(out, cost, p1, p2, y, x, y - dy, x)
    return out


@njit(cache=True)
def aggregate_costs(cost, p1, p2, n_paths):
    dys = np.array([0, 0, 1, -1, 1, 1, -1, -1], np.int64)
    dxs = np.array([1, -1, 0, 0, 1, -1, 1, -1], np.int64)
    agg = np.zeros_like(cost)
    for k in range(n_paths):
        agg += _aggregate_one(cost, np.float32(p1), np.float32(p2), dys[k], dxs[k])
    return agg


@njit(cache=True)
def wta_margin(agg):
    h, w, nd = agg.shape
    best = np.empty((h, w), np.int32)
    margin = np.empty((h, w), np.float32)
    for y in range(h):
        for x in range(w):
            bi = 0
            bv = agg[y, x, 0]
            for d in range(1, nd):
                if agg[y, x, d] < bv:
                    bv = agg[y, x, d]
                    bi = d
            best[y, x] = bi
            sv = np.float32(np.inf)
            for d in range(nd):
                dd = d - bi
                if dd < -1 or dd > 1:
                    if agg[y, x, d] < sv:
                        sv = agg[y, x, d]
            margin[y, x] = sv - bv
    return best, margin


@njit(cache=True)
def subpixel_refine(agg, best):
    h, w, nd = agg.shape
    disp = np.empty((h, w), np.float64)
    for y in range(h):
        for x in range(w):
            b = best[y, x]
            disp[y, x] = float(b)
            if nd < 3 or b <= 0 or b >= nd - 1:
                continue
            c0 = float(agg[y, x, b - 1])
            c1 = float(agg[y, x, b])
            c2 = float(agg[y, x, b + 1])
            denom = c0 - 2.0 * c1 + c2
            if denom > 0:
                delta = (c0 - c2) / (2.0 * denom)
                if delta > 0.5:
                    delta = 0.5
                elif delta < -0.5:
                    delta = -0.5
                disp[y, x] = b + delta
    return disp


@njit(cache=True)
def right_argmin(agg):
    h, w, nd = agg.shape
    out = np.empty((h, w), np.int32)
    for y in range(h):
        for x in range(w):
            bi = 0
            bv = np.inf
            for d in range(nd):
                if x + d < w and agg[y, x + d, d] < bv:
                    bv = agg[y, x + d, d]
                    bi = d
            out[y, x] = bi
    return out


@njit(cache=True)
def occlusion_scan(disp, valid):
    h, w = disp.shape
    occ = np.zeros((h, w), np.bool_)
    for y in range(h):
        for x in range(w):
            if not valid[y, x]:
                continue
            r = x - disp[y, x]
            if r < -0.5:
                occ[y, x] = True
                continue
            for x2 in range(w):
                if x2 == x or not valid[y, x2]:
                    continue
                if disp[y, x2] > disp[y, x] + 0.5:
                    r2 = x2 - disp[y, x2]
                    if abs(r2 - r) < 0.5:
                        occ[y, x] = True
                        break
    return occ
