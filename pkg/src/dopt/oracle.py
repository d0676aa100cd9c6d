"""Pricing / separation oracle: maximise ``v(a)' Q v(a)`` over the implicit rows.

``Q`` is symmetric positive semidefinite (``M^{-1}`` during local search, the
dual matrix during row generation).  Linear models only need the box
vertices ``{0, L-1}^F`` because the objective is convex in ``a``; quadratic
models are enumerated exhaustively up to a capacity.

Ties: let ``V*`` be the largest value found.  Every candidate within
``rtol * max(1, |V*|)`` of ``V*`` counts as tied and the smallest encoded
row index wins.  The rule does not depend on how the candidate space is
split between workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from . import kernels
from .instance import CapacityError, FactorPoint, ModelSpec, cross_index_table, expand_row

DEFAULT_CAP = 10**8
LINEAR_MAX_FACTORS = 40
TIE_RTOL = 1e-10
LOW_BITS = 10
_MIN_PARALLEL = 1 << 14
_BUFFER = 8


@dataclass
class PricingResult:
    best_point: FactorPoint
    best_value: float
    evaluated: int
    top: List[Tuple[FactorPoint, float]] = field(default_factory=list)
    probes: List[Tuple[FactorPoint, float]] = field(default_factory=list)


def _check_q(spec: ModelSpec, Q) -> np.ndarray:
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    if Q.shape != (spec.m, spec.m):
        raise ValueError(f"Q must be {spec.m}x{spec.m}, got {Q.shape}")
    return 0.5 * (Q + Q.T)


def _vertex_point(spec: ModelSpec, mask: int) -> FactorPoint:
    top = spec.levels - 1
    return tuple(top if (mask >> f) & 1 else 0 for f in range(spec.factors))


def _index_point(spec: ModelSpec, idx: int) -> FactorPoint:
    out = []
    for _ in range(spec.factors):
        idx, a = divmod(idx, spec.levels)
        out.append(a)
    return tuple(out)


def _run_chunks(scan, ranges, K, thr, threads, probe_every, unit=1):
    # ``unit`` = candidates per range step (the low-bit block for linear scans)
    def job(rng):
        start, stop = rng
        if probe_every > 0:
            size = (stop - start) * unit // probe_every + 2
        else:
            size = 0
        pidx = np.zeros(max(size, 1), dtype=np.int64)
        pval = np.zeros(max(size, 1))
        out = scan(start, stop, K, thr, probe_every, pidx[:size], pval[:size])
        vals, idxs, cnt, evaluated, above, nprobe = out
        return (
            np.asarray(vals[:cnt]),
            np.asarray(idxs[:cnt]),
            int(cnt),
            int(evaluated),
            int(above),
            list(zip(pidx[:nprobe].tolist(), pval[:nprobe].tolist())),
        )

    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(job, ranges))
    return [job(r) for r in ranges]


def _split(total: int, parts: int, align: int = 1):
    """Contiguous ``[start, stop)`` ranges covering ``range(total)``, boundaries on ``align``."""
    blocks = -(-total // align)
    parts = max(1, min(parts, blocks))
    out = []
    for p in range(parts):
        b0 = blocks * p // parts
        b1 = blocks * (p + 1) // parts
        if b1 > b0:
            out.append((b0 * align, min(total, b1 * align)))
    return out


def _merge(scan, ranges, k, threads, rtol, probe_every, unit=1):
    K = max(k, _BUFFER)
    chunks = _run_chunks(scan, ranges, K, np.inf, threads, probe_every, unit)
    allv = np.concatenate([c[0] for c in chunks])
    alli = np.concatenate([c[1] for c in chunks])
    evaluated = sum(c[3] for c in chunks)
    probes = [p for c in chunks for p in c[5]]
    vstar = float(allv.max())
    thr = vstar - rtol * max(1.0, abs(vstar))
    near = alli[allv >= thr]
    best = int(near.min())
    # a full buffer whose last entry is still tied may hide smaller tied indices
    redo = [rng for rng, c in zip(ranges, chunks) if c[2] == K and c[0][K - 1] >= thr]
    if redo:
        for c in _run_chunks(scan, redo, 0, thr, threads, 0):
            if 0 <= c[4] < best:
                best = c[4]
    order = np.lexsort((alli, -allv))
    top = [best]
    for j in order:
        i = int(alli[j])
        if len(top) >= k:
            break
        if i != best and i not in top:
            top.append(i)
    return best, top, evaluated, probes


def price_linear_vertices(spec: ModelSpec, Q, k: int = 1, threads: int = 1, rtol: float = TIE_RTOL,
                          probe_every: int = 0) -> PricingResult:
    """Exact maximum over the ``2^F`` box vertices of a linear model."""
    if spec.kind != "linear":
        raise ValueError("price_linear_vertices needs a linear model")
    F = spec.factors
    if F > LINEAR_MAX_FACTORS:
        raise CapacityError(f"oracle capacity exceeded: linear model with F={F} > {LINEAR_MAX_FACTORS}")
    Q = _check_q(spec, Q)
    h = min(F, LOW_BITS)
    d = float(spec.levels - 1)
    nhi = 1 << (F - h)
    parts = threads if (1 << F) >= _MIN_PARALLEL else 1

    def scan(start, stop, K, thr, pe, pidx, pval):
        return kernels.linear_scan(Q, F, d, h, start, stop, K, thr, pe, pidx, pval)

    best, top, evaluated, probes = _merge(scan, _split(nhi, parts), k, threads, rtol, probe_every, 1 << h)
    return _result(spec, Q, best, top, evaluated, probes, _vertex_point)


def _resync_block(spec: ModelSpec) -> int:
    L, n = spec.levels, spec.row_count_exact
    block = 1
    while block < 256 and block < n:
        block *= L
    return block


def price_quadratic_enumerate(spec: ModelSpec, Q, k: int = 1, threads: int = 1, cap: int = DEFAULT_CAP,
                              rtol: float = TIE_RTOL, probe_every: int = 0) -> PricingResult:
    """Exact maximum over all ``L^F`` rows of a quadratic model, odometer order."""
    if spec.kind != "quadratic":
        raise ValueError("price_quadratic_enumerate needs a quadratic model")
    n = spec.row_count_exact
    if n > cap:
        raise CapacityError(f"oracle capacity exceeded: {n} rows > enumeration cap {cap}")
    Q = _check_q(spec, Q)
    F, L = spec.factors, spec.levels
    cross = cross_index_table(F)
    block = _resync_block(spec)
    parts = threads if n >= _MIN_PARALLEL else 1

    def scan(start, stop, K, thr, pe, pidx, pval):
        return kernels.quad_scan(Q, F, L, start, stop, block, cross, K, thr, pe, pidx, pval)

    best, top, evaluated, probes = _merge(scan, _split(n, parts, block), k, threads, rtol, probe_every)
    return _result(spec, Q, best, top, evaluated, probes, _index_point)


def _result(spec, Q, best, top, evaluated, probes, to_point):
    def value(pt):
        v = expand_row(spec, pt)
        return float(v @ Q @ v)

    top_pts = [to_point(spec, i) for i in top]
    return PricingResult(
        best_point=top_pts[0],
        best_value=value(top_pts[0]),
        evaluated=evaluated,
        top=[(pt, value(pt)) for pt in top_pts],
        probes=[(to_point(spec, i), v) for i, v in probes],
    )


def price(spec: ModelSpec, Q, k: int = 1, threads: int = 1, cap: int = DEFAULT_CAP,
          rtol: float = TIE_RTOL, probe_every: int = 0) -> PricingResult:
    """Maximise ``v' Q v`` over every implicit row of ``spec``."""
    if spec.kind == "linear":
        return price_linear_vertices(spec, Q, k=k, threads=threads, rtol=rtol, probe_every=probe_every)
    return price_quadratic_enumerate(spec, Q, k=k, threads=threads, cap=cap, rtol=rtol, probe_every=probe_every)
