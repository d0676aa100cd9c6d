"""Pure-numpy twins of the kernels in ``_jit.py``.

Same signatures and return conventions; the enumeration is vectorised in
blocks instead of walked incrementally.
"""
import numpy as np

_BLOCK = 1 << 15


def chol_update(Lf, x):
    m = Lf.shape[0]
    for k in range(m):
        d = Lf[k, k]
        r = np.hypot(d, x[k])
        c = r / d
        s = x[k] / d
        Lf[k, k] = r
        col = (Lf[k + 1 :, k] + s * x[k + 1 :]) / c
        Lf[k + 1 :, k] = col
        x[k + 1 :] = c * x[k + 1 :] - s * col


def chol_downdate(Lf, x, eps):
    m = Lf.shape[0]
    for k in range(m):
        d = Lf[k, k]
        r2 = d * d - x[k] * x[k]
        if r2 <= eps * eps:
            return False
        r = np.sqrt(r2)
        c = r / d
        s = x[k] / d
        Lf[k, k] = r
        col = (Lf[k + 1 :, k] - s * x[k + 1 :]) / c
        Lf[k + 1 :, k] = col
        x[k + 1 :] = c * x[k + 1 :] - s * col
    return True


class _Collector:
    """Running top-K buffer plus threshold/probe bookkeeping for one scan."""

    def __init__(self, K, thr, probe_every, probe_idx, probe_val):
        self.K = K
        self.thr = thr
        self.vals = np.empty(0)
        self.idxs = np.empty(0, dtype=np.int64)
        self.best_above = -1
        self.evaluated = 0
        self.probe_every = probe_every
        self.probe_idx = probe_idx
        self.probe_val = probe_val
        self.nprobe = 0

    def feed(self, vals, idxs):
        n = vals.size
        if self.K > 0 and n:
            if n > self.K:
                kth = np.partition(vals, n - self.K)[n - self.K]
                keep = vals >= kth
                cv, ci = vals[keep], idxs[keep]
            else:
                cv, ci = vals, idxs
            allv = np.concatenate([self.vals, cv])
            alli = np.concatenate([self.idxs, ci])
            order = np.lexsort((alli, -allv))[: self.K]
            self.vals, self.idxs = allv[order], alli[order]
        if self.thr != np.inf:
            hit = idxs[vals >= self.thr]
            if hit.size:
                lo = int(hit.min())
                if self.best_above < 0 or lo < self.best_above:
                    self.best_above = lo
        if self.probe_every > 0:
            first = (-self.evaluated) % self.probe_every
            sel = np.arange(first, n, self.probe_every)
            room = self.probe_idx.shape[0] - self.nprobe
            sel = sel[:room]
            self.probe_idx[self.nprobe : self.nprobe + sel.size] = idxs[sel]
            self.probe_val[self.nprobe : self.nprobe + sel.size] = vals[sel]
            self.nprobe += sel.size
        self.evaluated += n

    def result(self):
        K = max(self.K, 1)
        vals = np.full(K, -np.inf)
        idxs = np.full(K, -1, dtype=np.int64)
        cnt = self.vals.size
        vals[:cnt] = self.vals
        idxs[:cnt] = self.idxs
        return vals, idxs, cnt, self.evaluated, self.best_above, self.nprobe


def linear_scan(Q, F, d, h, hstart, hstop, K, thr, probe_every, probe_idx, probe_val):
    m = Q.shape[0]
    nlo = 1 << h
    lo = np.arange(nlo, dtype=np.int64)
    BL = ((lo[:, None] >> np.arange(h)) & 1).astype(np.float64) * d
    QLL = Q[1 : 1 + h, 1 : 1 + h]
    cl = np.einsum("ij,jk,ik->i", BL, QLL, BL)
    coll = _Collector(K, thr, probe_every, probe_idx, probe_val)
    nhi_bits = F - h
    step = max(1, _BLOCK // nlo)
    for p0 in range(hstart, hstop, step):
        pos = np.arange(p0, min(hstop, p0 + step), dtype=np.int64)
        hi = pos ^ (pos >> 1)
        VH = np.zeros((pos.size, m))
        VH[:, 0] = 1.0
        if nhi_bits:
            VH[:, 1 + h :] = ((hi[:, None] >> np.arange(nhi_bits)) & 1) * d
        W = VH @ Q
        a_hi = np.einsum("ij,ij->i", VH, W)
        vals = a_hi[:, None] + cl[None, :] + 2.0 * (W[:, 1 : 1 + h] @ BL.T)
        idxs = (hi[:, None] << h) | lo[None, :]
        coll.feed(vals.ravel(), idxs.ravel())
    return coll.result()


def quad_scan(Q, F, L, start, stop, resync, cross, K, thr, probe_every, probe_idx, probe_val):
    m = Q.shape[0]
    coll = _Collector(K, thr, probe_every, probe_idx, probe_val)
    ii, jj = np.triu_indices(F, k=1)
    for i0 in range(start, stop, _BLOCK):
        idx = np.arange(i0, min(stop, i0 + _BLOCK), dtype=np.int64)
        rem = idx.copy()
        P = np.empty((idx.size, F))
        for f in range(F):
            rem, P[:, f] = np.divmod(rem, L)
        V = np.empty((idx.size, m))
        V[:, 0] = 1.0
        V[:, 1 : 1 + F] = P
        V[:, 1 + F : 1 + 2 * F] = P * P
        V[:, 1 + 2 * F :] = P[:, ii] * P[:, jj]
        vals = np.einsum("ij,ij->i", V @ Q, V)
        coll.feed(vals, idx)
    return coll.result()
