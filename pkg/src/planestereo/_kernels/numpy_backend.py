"""Reference (pure numpy) implementations of the numeric hot loops.

Every function here has a compiled twin in numba_backend.py with the same
signature.  Keep the two in sync: semantics must match exactly, and within a
backend the arithmetic must be deterministic for fixed inputs.
"""

import numpy as np

# --------------------------------------------------------------------------
# plane / potential primitives
# --------------------------------------------------------------------------


def tq_sums(us, vs, obs, planes, k):
    """Per-plane sums of truncated quadratics min(|obs - d_hat|, k)^2.

    ``planes`` holds rows (a, b, c) of the global affine d_hat = a*u + b*v + c.
    Returns a vector with one sum per plane row.
    """
    n = planes.shape[0]
    if us.size == 0:
        return np.zeros(n)
    d = planes[:, 0:1] * us[None, :] + planes[:, 1:2] * vs[None, :] + planes[:, 2:3]
    r = np.minimum(np.abs(obs[None, :] - d), k)
    return np.sum(r * r, axis=1)


def plane_mins(us, vs, planes):
    """Minimum of each plane row over the given pixels (+inf when empty)."""
    n = planes.shape[0]
    if us.size == 0:
        return np.full(n, np.inf)
    d = planes[:, 0:1] * us[None, :] + planes[:, 1:2] * vs[None, :] + planes[:, 2:3]
    return d.min(axis=1)


def pair_min_gaps(us, vs, planes_a, planes_b):
    """min over pixels of (d_a - d_b) for every (row of planes_a, row of planes_b)."""
    na, nb = planes_a.shape[0], planes_b.shape[0]
    if us.size == 0:
        return np.full((na, nb), np.inf)
    da = planes_a[:, 0:1] * us[None, :] + planes_a[:, 1:2] * vs[None, :] + planes_a[:, 2:3]
    db = planes_b[:, 0:1] * us[None, :] + planes_b[:, 1:2] * vs[None, :] + planes_b[:, 2:3]
    return (da[:, None, :] - db[None, :, :]).min(axis=2)


def quad_forms(coeffs_a, coeffs_b, moments):
    """dq^T M dq for dq = coeffs_a[n] - coeffs_b[m], accumulated in (r, c) order.

    The fixed accumulation order keeps scalar potential evaluations and
    vectorized factor tables bit-identical.
    """
    dq = coeffs_a[:, None, :] - coeffs_b[None, :, :]
    out = np.zeros((coeffs_a.shape[0], coeffs_b.shape[0]))
    for r in range(3):
        for c in range(3):
            out += (dq[:, :, r] * moments[r, c]) * dq[:, :, c]
    return out


# --------------------------------------------------------------------------
# convex belief propagation (dual coordinate descent on the MAP LP)
# --------------------------------------------------------------------------


def mplp_run(nstates, b, u_off, scope, scope_off, tab, tab_off, msg, msg_off,
             bounds_out, max_sweeps, tol):
    """Factor-block coordinate descent sweeps on the MAP LP dual.

    ``b`` (reparameterized unaries) and ``msg`` (factor-to-variable messages)
    are mutated in place.  After each sweep the dual lower bound is written to
    ``bounds_out``; returns the number of sweeps performed.  Terminates when a
    sweep improves the bound by less than ``tol``.
    """
    n_vars = nstates.shape[0]
    n_fac = scope_off.shape[0] - 1
    prev = -np.inf
    sweeps = 0
    for _ in range(max_sweeps):
        for f in range(n_fac):
            s0, s1 = scope_off[f], scope_off[f + 1]
            vids = scope[s0:s1]
            arity = s1 - s0
            shape = tuple(int(nstates[v]) for v in vids)
            aug = tab[tab_off[f]:tab_off[f + 1]].reshape(shape).copy()
            bms = []
            for pos in range(arity):
                v = vids[pos]
                bm = b[u_off[v]:u_off[v + 1]] - msg[msg_off[s0 + pos]:msg_off[s0 + pos + 1]]
                bms.append(bm)
                sh = [1] * arity
                sh[pos] = shape[pos]
                aug += bm.reshape(sh)
            for pos in range(arity):
                v = vids[pos]
                axes = tuple(a for a in range(arity) if a != pos)
                mm = (aug.min(axis=axes) if axes else aug.copy()) / arity
                msg[msg_off[s0 + pos]:msg_off[s0 + pos + 1]] = mm - bms[pos]
                b[u_off[v]:u_off[v + 1]] = mm
        bound = 0.0
        for v in range(n_vars):
            bound += b[u_off[v]:u_off[v + 1]].min()
        for f in range(n_fac):
            s0, s1 = scope_off[f], scope_off[f + 1]
            vids = scope[s0:s1]
            arity = s1 - s0
            shape = tuple(int(nstates[v]) for v in vids)
            th = tab[tab_off[f]:tab_off[f + 1]].reshape(shape).copy()
            for pos in range(arity):
                sh = [1] * arity
                sh[pos] = shape[pos]
                th -= msg[msg_off[s0 + pos]:msg_off[s0 + pos + 1]].reshape(sh)
            bound += th.min()
        bounds_out[sweeps] = bound
        sweeps += 1
        if bound - prev < tol:
            break
        prev = bound
    return sweeps


# --------------------------------------------------------------------------
# SLIC iterations and connected components
# --------------------------------------------------------------------------


def slic_iterate(lab, centers, step, invwt, iters):
    """Windowed k-means over (x, y, L, a, b); returns int32 labels.

    ``centers`` columns are (x, y, L, a, b) and are updated in place.
    Clusters are scanned in ascending id with strict-less updates, so ties
    keep the lowest cluster id.
    """
    h, w = lab.shape[:2]
    n = centers.shape[0]
    labels = np.full((h, w), -1, np.int32)
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    for _ in range(iters):
        dist = np.full((h, w), np.inf)
        labels.fill(-1)
        for k in range(n):
            cx, cy = centers[k, 0], centers[k, 1]
            x0 = max(0, int(cx - step))
            x1 = min(w, int(cx + step) + 1)
            y0 = max(0, int(cy - step))
            y1 = min(h, int(cy + step) + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            dl = lab[y0:y1, x0:x1, 0] - centers[k, 2]
            da = lab[y0:y1, x0:x1, 1] - centers[k, 3]
            db = lab[y0:y1, x0:x1, 2] - centers[k, 4]
            dx = xs[x0:x1][None, :] - cx
            dy = ys[y0:y1][:, None] - cy
            d = dl * dl + da * da + db * db + invwt * (dx * dx + dy * dy)
            win = dist[y0:y1, x0:x1]
            better = d < win
            win[better] = d[better]
            labels[y0:y1, x0:x1][better] = k
        miss = labels < 0
        if miss.any():
            myy, mxx = np.nonzero(miss)
            dxy = (mxx[:, None] - centers[None, :, 0]) ** 2 \
                + (myy[:, None] - centers[None, :, 1]) ** 2
            labels[myy, mxx] = np.argmin(dxy, axis=1).astype(np.int32)
        flat = labels.ravel()
        cnt = np.bincount(flat, minlength=n).astype(np.float64)
        sx = np.bincount(flat, weights=np.broadcast_to(xs, (h, w)).ravel(), minlength=n)
        sy = np.bincount(flat, weights=np.broadcast_to(ys[:, None], (h, w)).ravel(), minlength=n)
        sl = np.bincount(flat, weights=lab[:, :, 0].ravel(), minlength=n)
        sa = np.bincount(flat, weights=lab[:, :, 1].ravel(), minlength=n)
        sb = np.bincount(flat, weights=lab[:, :, 2].ravel(), minlength=n)
        nz = cnt > 0
        centers[nz, 0] = sx[nz] / cnt[nz]
        centers[nz, 1] = sy[nz] / cnt[nz]
        centers[nz, 2] = sl[nz] / cnt[nz]
        centers[nz, 3] = sa[nz] / cnt[nz]
        centers[nz, 4] = sb[nz] / cnt[nz]
    return labels


def label_components(labels):
    """4-connected components of equal labels, ids in scan-first-encounter order."""
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


# --------------------------------------------------------------------------
# census matching
# --------------------------------------------------------------------------


def census_transform(gray, radius):
    """Census codes (int64 bit strings) over a (2r+1)^2 window, edge-replicated."""
    h, w = gray.shape
    pad = np.pad(gray, radius, mode="edge")
    center = pad[radius:radius + h, radius:radius + w]
    code = np.zeros((h, w), np.int64)
    bit = 0
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            nb = pad[radius + dy:radius + dy + h, radius + dx:radius + dx + w]
            code |= (nb < center).astype(np.int64) << bit
            bit += 1
    return code


def _popcount(v):
    v = v - ((v >> 1) & 0x5555555555555555)
    v = (v & 0x3333333333333333) + ((v >> 2) & 0x3333333333333333)
    v = (v + (v >> 4)) & 0x0F0F0F0F0F0F0F0F
    v = v + (v >> 8)
    v = v + (v >> 16)
    v = v + (v >> 32)
    return v & 0x7F


def census_cost_volume(code_l, code_r, max_disparity, n_bits):
    """Hamming costs (float32) for d in 0..max_disparity; out-of-frame = n_bits."""
    h, w = code_l.shape
    cost = np.full((h, w, max_disparity + 1), np.float32(n_bits), np.float32)
    for d in range(max_disparity + 1):
        if d >= w:
            break
        ham = _popcount(code_l[:, d:] ^ code_r[:, :w - d])
        cost[:, d:, d] = ham.astype(np.float32)
    return cost


def _penalized_min(prev, p1, p2):
    m = prev.min(axis=1)
    up = np.empty_like(prev)
    up[:, :-1] = prev[:, 1:]
    up[:, -1] = np.inf
    dn = np.empty_like(prev)
    dn[:, 1:] = prev[:, :-1]
    dn[:, 0] = np.inf
    cand = np.minimum(np.minimum(prev, up + p1), np.minimum(dn + p1, m[:, None] + p2))
    return cand - m[:, None]


def _aggregate_one(cost, p1, p2, dy, dx):
    h, w, _ = cost.shape
    out = cost.copy()
    if dx != 0:
        xs = range(1, w) if dx > 0 else range(w - 2, -1, -1)
        for x in xs:
            prev = out[:, x - dx, :]
            if dy > 0:
                out[1:, x, :] = cost[1:, x, :] + _penalized_min(prev[:-1], p1, p2)
            elif dy < 0:
                out[:h - 1, x, :] = cost[:h - 1, x, :] + _penalized_min(prev[1:], p1, p2)
            else:
                out[:, x, :] = cost[:, x, :] + _penalized_min(prev, p1, p2)
    else:
        ys = range(1, h) if dy > 0 else range(h - 2, -1, -1)
        for y in ys:
            prev = out[y - dy, :, :]
            out[y, :, :] = cost[y, :, :] + _penalized_min(prev, p1, p2)
    return out


_DIRS8 = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))


def aggregate_costs(cost, p1, p2, n_paths):
    """Sum of scanline-aggregated costs over 4 or 8 directions."""
    agg = np.zeros_like(cost)
    for dy, dx in _DIRS8[:n_paths]:
        agg += _aggregate_one(cost, np.float32(p1), np.float32(p2), dy, dx)
    return agg


def wta_margin(agg):
    """Winner-take-all argmin per pixel plus the margin to the best far competitor.

    The margin is min over candidates at least 2 states away from the winner,
    minus the winning cost (+inf when no such candidate exists).
    """
    h, w, nd = agg.shape
    best = np.argmin(agg, axis=2).astype(np.int32)
    bestv = np.take_along_axis(agg, best[:, :, None].astype(np.int64), 2)[:, :, 0]
    masked = agg.copy()
    dgrid = np.arange(nd)[None, None, :]
    masked[np.abs(dgrid - best[:, :, None]) <= 1] = np.inf
    margin = masked.min(axis=2) - bestv
    return best, margin.astype(np.float32)


def subpixel_refine(agg, best):
    """Parabola-refined disparities; interior winners only, clamped to +/-0.5."""
    h, w, nd = agg.shape
    disp = best.astype(np.float64)
    if nd < 3:
        return disp
    yy, xx = np.nonzero((best > 0) & (best < nd - 1))
    b = best[yy, xx]
    c0 = agg[yy, xx, b - 1].astype(np.float64)
    c1 = agg[yy, xx, b].astype(np.float64)
    c2 = agg[yy, xx, b + 1].astype(np.float64)
    denom = c0 - 2.0 * c1 + c2
    delta = np.where(denom > 0, (c0 - c2) / (2.0 * np.where(denom > 0, denom, 1.0)), 0.0)
    disp[yy, xx] = b + np.clip(delta, -0.5, 0.5)
    return disp


def right_argmin(agg):
    """Right-view WTA from the left aggregated volume: argmin_d agg(y, x+d, d)."""
    h, w, nd = agg.shape
    vol = np.full((h, w, nd), np.inf, np.float32)
    for d in range(nd):
        if d >= w:
            break
        vol[:, :w - d, d] = agg[:, d:, d]
    return np.argmin(vol, axis=2).astype(np.int32)


# --------------------------------------------------------------------------
# synthetic-scene occlusion reasoning
# --------------------------------------------------------------------------


def occlusion_scan(disp, valid):
    """Mark pixels hidden in the matching view.

    A valid pixel is occluded when some other valid pixel of its row projects
    to (almost) the same matching-view column with a disparity larger by more
    than 0.5 px, or when it projects outside the matching view entirely.
    """
    h, w = disp.shape
    occ = np.zeros((h, w), np.bool_)
    xs = np.arange(w, dtype=np.float64)
    for y in range(h):
        d = disp[y]
        v = valid[y]
        r = xs - d
        row = r < -0.5
        close = np.abs(r[None, :] - r[:, None]) < 0.5
        front = d[None, :] > d[:, None] + 0.5
        both = v[None, :] & v[:, None]
        row |= (close & front & both).any(axis=1)
        occ[y] = row & v
    return occ
