"""numba kernels.  Each has a vectorised twin in ``_np.py``."""
import math

import numpy as np

from .._accel import njit


@njit
def chol_update(Lf, x):
    """In-place rank-one update of a lower Cholesky factor: ``LL' + xx'``."""
    m = Lf.shape[0]
    for k in range(m):
        d = Lf[k, k]
        r = math.sqrt(d * d + x[k] * x[k])
        c = r / d
        s = x[k] / d
        Lf[k, k] = r
        for i in range(k + 1, m):
            Lf[i, k] = (Lf[i, k] + s * x[i]) / c
            x[i] = c * x[i] - s * Lf[i, k]


@njit
def chol_downdate(Lf, x, eps):
    """In-place rank-one downdate ``LL' - xx'``; False if a pivot drops to ``eps``."""
    m = Lf.shape[0]
    for k in range(m):
        d = Lf[k, k]
        r2 = d * d - x[k] * x[k]
        if r2 <= eps * eps:
            return False
        r = math.sqrt(r2)
        c = r / d
        s = x[k] / d
        Lf[k, k] = r
        for i in range(k + 1, m):
            Lf[i, k] = (Lf[i, k] - s * x[i]) / c
            x[i] = c * x[i] - s * Lf[i, k]
    return True


@njit
def _push(vals, idxs, cnt, K, v, i):
    # buffer sorted by (value desc, index asc)
    if K == 0:
        return cnt
    if cnt == K:
        lv = vals[K - 1]
        if v < lv or (v == lv and i > idxs[K - 1]):
            return cnt
        pos = K - 1
    else:
        pos = cnt
        cnt += 1
    while pos > 0:
        pv = vals[pos - 1]
        if pv > v or (pv == v and idxs[pos - 1] < i):
            break
        vals[pos] = pv
        idxs[pos] = idxs[pos - 1]
        pos -= 1
    vals[pos] = v
    idxs[pos] = i
    return cnt


@njit
def linear_scan(Q, F, d, h, hstart, hstop, K, thr, probe_every, probe_idx, probe_val):
    """Scan box vertices of the linear model, Gray-code order inside each block.

    The low ``h`` factors are enumerated in Gray order with an O(1) value
    update per flip; each high configuration (Gray position ``p`` in
    ``[hstart, hstop)``) is set up from scratch so values do not depend on
    how positions are split between workers.  Candidates are identified by
    their vertex bitmask, which orders like the encoded row index.

    Returns ``(vals, idxs, cnt, evaluated, min_idx_above_thr, nprobe)``.
    """
    m = Q.shape[0]
    nlo = 1 << h
    nhi_bits = F - h
    lo_mask = np.zeros(nlo, dtype=np.int64)
    flip = np.zeros(nlo, dtype=np.int64)
    cl = np.zeros(nlo, dtype=np.float64)
    d2 = d * d
    for t in range(1, nlo):
        g = t ^ (t >> 1)
        lo_mask[t] = g
        b = 0
        while ((t >> b) & 1) == 0:
            b += 1
        flip[t] = b
        acc = 0.0
        for a in range(h):
            if (g >> a) & 1:
                for c in range(h):
                    if (g >> c) & 1:
                        acc += Q[1 + a, 1 + c]
        cl[t] = d2 * acc

    vals = np.full(max(K, 1), -np.inf)
    idxs = np.full(max(K, 1), -1, dtype=np.int64)
    cnt = 0
    best_above = -1
    evaluated = 0
    nprobe = 0
    w = np.zeros(m)
    gl = np.zeros(max(h, 1))
    twod = 2.0 * d
    for p in range(hstart, hstop):
        hi = p ^ (p >> 1)
        for r in range(m):
            w[r] = Q[r, 0]
        for b in range(nhi_bits):
            if (hi >> b) & 1:
                col = 1 + h + b
                for r in range(m):
                    w[r] += d * Q[r, col]
        a_hi = w[0]
        for b in range(nhi_bits):
            if (hi >> b) & 1:
                a_hi += d * w[1 + h + b]
        for k in range(h):
            gl[k] = w[1 + k]
        base = hi << h
        S = 0.0
        lo = 0
        for t in range(nlo):
            if t > 0:
                b = flip[t]
                if (lo >> b) & 1:
                    S -= gl[b]
                else:
                    S += gl[b]
                lo ^= 1 << b
            val = a_hi + cl[t] + twod * S
            idx = base | lo
            cnt = _push(vals, idxs, cnt, K, val, idx)
            if val >= thr and (best_above < 0 or idx < best_above):
                best_above = idx
            if probe_every > 0 and evaluated % probe_every == 0 and nprobe < probe_idx.shape[0]:
                probe_idx[nprobe] = idx
                probe_val[nprobe] = val
                nprobe += 1
            evaluated += 1
    return vals, idxs, cnt, evaluated, best_above, nprobe


@njit
def _quad_fresh(Q, alpha, F, cross, v, w):
    m = Q.shape[0]
    v[0] = 1.0
    for f in range(F):
        a = float(alpha[f])
        v[1 + f] = a
        v[1 + F + f] = a * a
    for i in range(F):
        for j in range(i + 1, F):
            v[cross[i, j]] = float(alpha[i]) * float(alpha[j])
    val = 0.0
    for r in range(m):
        acc = 0.0
        for c in range(m):
            acc += Q[r, c] * v[c]
        w[r] = acc
        val += v[r] * acc
    return val


@njit
def _quad_change(Q, alpha, F, cross, f, new, v, w, val, pos, dlt):
    """Move factor ``f`` to level ``new``; only ``F+1`` row entries change."""
    m = Q.shape[0]
    old = alpha[f]
    if old == new:
        return val
    da = float(new - old)
    nc = 0
    pos[nc] = 1 + f
    dlt[nc] = da
    nc += 1
    pos[nc] = 1 + F + f
    dlt[nc] = float(new * new - old * old)
    nc += 1
    for j in range(F):
        if j != f and alpha[j] != 0:
            pos[nc] = cross[f, j]
            dlt[nc] = da * float(alpha[j])
            nc += 1
    for a in range(nc):
        pa = pos[a]
        da_ = dlt[a]
        val += 2.0 * da_ * w[pa]
        for b in range(nc):
            val += da_ * dlt[b] * Q[pa, pos[b]]
    for a in range(nc):
        pa = pos[a]
        da_ = dlt[a]
        v[pa] += da_
        for r in range(m):
            w[r] += da_ * Q[r, pa]
    alpha[f] = new
    return val


@njit
def quad_scan(Q, F, L, start, stop, resync, cross, K, thr, probe_every, probe_idx, probe_val):
    """Odometer scan of quadratic rows with indices in ``[start, stop)``.

    State is rebuilt from scratch whenever ``idx % resync == 0`` (and at
    ``start``, which callers align to ``resync``), otherwise updated
    incrementally in O(F*m) per changed factor.
    """
    m = Q.shape[0]
    alpha = np.zeros(F, dtype=np.int64)
    rem = start
    for f in range(F):
        alpha[f] = rem % L
        rem //= L
    v = np.zeros(m)
    w = np.zeros(m)
    pos = np.zeros(F + 1, dtype=np.int64)
    dlt = np.zeros(F + 1)
    vals = np.full(max(K, 1), -np.inf)
    idxs = np.full(max(K, 1), -1, dtype=np.int64)
    cnt = 0
    best_above = -1
    evaluated = 0
    nprobe = 0
    val = 0.0
    for idx in range(start, stop):
        if idx == start:
            val = _quad_fresh(Q, alpha, F, cross, v, w)
        else:
            f = 0
            while alpha[f] == L - 1:
                alpha[f] = 0
                f += 1
            alpha[f] += 1
            if idx % resync == 0:
                val = _quad_fresh(Q, alpha, F, cross, v, w)
            else:
                # undo the bookkeeping above and replay it as incremental changes
                alpha[f] -= 1
                for g in range(f):
                    alpha[g] = L - 1
                for g in range(f):
                    val = _quad_change(Q, alpha, F, cross, g, 0, v, w, val, pos, dlt)
                val = _quad_change(Q, alpha, F, cross, f, alpha[f] + 1, v, w, val, pos, dlt)
        cnt = _push(vals, idxs, cnt, K, val, idx)
        if val >= thr and (best_above < 0 or idx < best_above):
            best_above = idx
        if probe_every > 0 and evaluated % probe_every == 0 and nprobe < probe_idx.shape[0]:
            probe_idx[nprobe] = idx
            probe_val[nprobe] = val
            nprobe += 1
        evaluated += 1
    return vals, idxs, cnt, evaluated, best_above, nprobe
