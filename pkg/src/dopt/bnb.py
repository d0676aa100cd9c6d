"""Exact branch-and-bound for small instances.

Each node carries integer bounds ``l <= x_p <= u`` on a few factor points.
Its bound comes from the row-generated natural relaxation with those bounds:
for ``theta = B(x)^{-1}`` and ``g_i = v_i' theta v_i`` over *all* rows,

    ldet B(x') <= -ldet(theta) - m + max{ g . x' : sum x' = s, l <= x' <= u }

for every feasible ``x'``, and the inner maximum is a greedy fill that only
needs the oracle's top candidates.  Incumbents come from local search.

Rows have integer entries, so ``det B(x)`` is a positive integer for every
nonsingular integer design.  A node bound ``U`` can therefore be lowered to
``log floor(exp(U))`` before pruning.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .infomat import RankDeficientError, build_info
from .instance import Design, FactorPoint, ModelSpec, point_key
from .localsearch import SearchOptions, design_info, initial_design, local_search
from .oracle import DEFAULT_CAP, price
from .relax import RelaxOptions, RowPool, _greedy_fill, solve_restricted

EPS_GAP = 1e-6
INT_TOL = 1e-6
# beyond this the spacing of doubles near exp(U) exceeds one and rounding is moot
_DET_ROUND_LIMIT = 1e14


@dataclass
class BnbOptions:
    node_cap: int = 10000
    time_cap: Optional[float] = None
    eps_gap: float = EPS_GAP
    eps_kw: float = 1e-9
    topk: int = 5
    rounds: int = 200
    threads: int = 1
    cap: int = DEFAULT_CAP


@dataclass
class BnbNode:
    lower_bounds: Dict[FactorPoint, int]
    upper_bounds: Dict[FactorPoint, int]
    depth: int
    parent_bound: float
    pool: RowPool = field(repr=False)
    warm: np.ndarray = field(repr=False)
    node_id: int = 0
    parent_id: int = -1


@dataclass
class NodeResult:
    bound: float
    weights: Optional[np.ndarray]
    pool: RowPool
    ldet_value: float = -math.inf


def _project(x, lo, hi, s):
    """Move ``x`` into ``{lo <= x <= hi, sum x = s}`` while keeping its shape."""
    x = np.clip(x, lo, hi)
    for _ in range(50):
        diff = s - x.sum()
        if abs(diff) <= 1e-12 * max(1.0, s):
            break
        room = (hi - x) if diff > 0 else (x - lo)
        tot = room.sum()
        if tot <= 0:
            return None
        x = x + diff * room / tot if abs(diff) <= tot else x + np.sign(diff) * room
        x = np.clip(x, lo, hi)
    return x


def _repair(spec, pool, lo, hi, s, opts):
    """Find a positive-definite feasible start, adding spanning rows when needed."""
    pool = pool.copy()
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(spec.m + 1):
        slack = hi - lo
        carry = (slack > 0) | (lo > 0)
        r = s - lo.sum()
        if r < -1e-12:
            return None
        x = lo.copy()
        if r > 0 and slack.sum() > 0:
            share = np.minimum(slack, r / max(1, int((slack > 0).sum())))
            x = _project(x + share, lo, hi, s)
            if x is None:
                return None
        try:
            build_info(pool.rows, x)
            return pool, lo, hi, x
        except RankDeficientError:
            pass
        if r <= 0:
            return None
        # price against the orthogonal complement of the rows that can carry weight
        W = pool.rows[carry]
        if W.size:
            _, sv, vt = np.linalg.svd(W, full_matrices=True)
            rank = int(np.sum(sv > 1e-9 * max(1.0, sv.max())))
            basis = vt[rank:]
        else:
            basis = np.eye(spec.m)
        res = price(spec, basis.T @ basis, k=1, threads=opts.threads, cap=opts.cap)
        if res.best_value <= 1e-9 or res.best_point in pool:
            return None
        pool.add([res.best_point])
        lo = np.append(lo, 0.0)
        hi = np.append(hi, float(s))
    return None


def _bounds_arrays(pool, node, s):
    lo = np.asarray([float(node.lower_bounds.get(p, 0)) for p in pool.points])
    hi = np.asarray([float(min(node.upper_bounds.get(p, s), s)) for p in pool.points])
    return lo, hi


def node_bound(spec: ModelSpec, s: int, node: BnbNode, opts: BnbOptions) -> NodeResult:
    """Row-generated relaxation bound for one node; ``-inf`` if the node is empty."""
    if sum(node.lower_bounds.values()) > s:
        return NodeResult(-math.inf, None, node.pool)
    for p, l in node.lower_bounds.items():
        if l > node.upper_bounds.get(p, s):
            return NodeResult(-math.inf, None, node.pool)
    pool = node.pool.copy()
    pool.add(sorted(set(node.lower_bounds) | set(node.upper_bounds), key=lambda p: point_key(spec, p)))
    lo, hi = _bounds_arrays(pool, node, s)
    x = np.zeros(len(pool))
    x[: node.warm.size] = node.warm
    x = _project(x, lo, hi, float(s))
    ok = x is not None
    if ok:
        try:
            build_info(pool.rows, x)
        except RankDeficientError:
            ok = False
    if not ok:
        fixed = _repair(spec, pool, lo, hi, float(s), opts)
        if fixed is None:
            return NodeResult(-math.inf, None, pool)
        pool, lo, hi, x = fixed

    ropts = RelaxOptions(eps_kw=opts.eps_kw, threads=opts.threads, cap=opts.cap)
    m = spec.m
    best = math.inf
    sol = None
    for _ in range(opts.rounds + 1):
        sol = solve_restricted(pool, float(s), ropts, x0=x, lower=lo, upper=hi)
        theta = sol.info.inverse()
        g_pool = sol.info.quad_forms(pool.rows)
        capped = int(np.sum(hi < s))
        res = price(spec, theta, k=opts.topk + capped, threads=opts.threads, cap=opts.cap)
        new = [(p, v) for p, v in res.top if p not in pool]
        y_pool = _greedy_fill(g_pool, lo, hi, float(s))
        h_pool = float(g_pool @ y_pool)
        g_all = np.concatenate([g_pool, [v for _, v in new]])
        lo_all = np.concatenate([lo, np.zeros(len(new))])
        hi_all = np.concatenate([hi, np.full(len(new), float(s))])
        y_all = _greedy_fill(g_all, lo_all, hi_all, float(s))
        h_full = float(g_all @ y_all)
        best = min(best, sol.ldet_value + h_full - m)
        if h_full <= h_pool + 1e-9 * max(1.0, abs(h_pool)):
            break
        moving = y_pool > lo
        marginal = float(g_pool[moving].min()) if moving.any() else -math.inf
        add = [p for p, v in new if v > marginal][: opts.topk]
        if not add:
            break
        pool = pool.copy()
        pool.add(add)
        lo = np.concatenate([lo, np.zeros(len(add))])
        hi = np.concatenate([hi, np.full(len(add), float(s))])
        x = np.concatenate([sol.weights, np.zeros(len(add))])
    return NodeResult(min(best, node.parent_bound), sol.weights, pool, sol.ldet_value)


def integral_bound(bound: float) -> float:
    """Largest ``log d`` with integer ``d`` not above ``exp(bound)``."""
    if not math.isfinite(bound) or bound > math.log(_DET_ROUND_LIMIT):
        return bound
    d = math.floor(math.exp(bound) * (1.0 + 1e-9) + 1e-9)
    return math.log(d) if d >= 1 else -math.inf


def _round_to_design(spec, s, pool, x) -> Optional[Design]:
    base = np.floor(x + INT_TOL)
    left = int(round(s - base.sum()))
    frac = x - base
    keys = [point_key(spec, p) for p in pool.points]
    order = sorted(range(len(x)), key=lambda i: (-frac[i], keys[i]))
    for i in order[: max(left, 0)]:
        base[i] += 1
    sup = {p: int(k) for p, k in zip(pool.points, base) if k > 0}
    if sum(sup.values()) != s:
        return None
    return Design(spec, s, sup)


def _branch_var(spec, pool, x):
    best, best_key = None, None
    for i, p in enumerate(pool.points):
        f = x[i] - math.floor(x[i])
        dist = min(f, 1.0 - f)
        if dist <= INT_TOL:
            continue
        key = (-dist, point_key(spec, p))
        if best_key is None or key < best_key:
            best, best_key = i, key
    return best


def solve_exact(spec: ModelSpec, s: int, opts: Optional[BnbOptions] = None) -> Tuple[Design, dict]:
    """Best-first branch-and-bound; returns ``(design, proof)``.

    ``proof["proven"]`` is False when the node or time cap stopped the search
    with a gap larger than ``eps_gap``.
    """
    opts = opts or BnbOptions()
    t0 = time.monotonic()
    sopts = SearchOptions(threads=opts.threads, cap=opts.cap)
    incumbent, _ = local_search(spec, s, sopts)
    inc_ldet = design_info(incumbent).ldet()
    incumbents = [inc_ldet]
    tried = set()

    def offer(design):
        nonlocal incumbent, inc_ldet
        key = tuple(sorted(design.support.items()))
        if key in tried:
            return
        tried.add(key)
        try:
            design_info(design)
        except RankDeficientError:
            return
        improved, _ = local_search(spec, s, sopts, start=design)
        val = design_info(improved).ldet()
        if val > inc_ldet + 1e-12 * max(1.0, abs(inc_ldet)):
            incumbent, inc_ldet = improved, val
            incumbents.append(val)

    init = initial_design(spec, s)
    pts = init.points()
    root = BnbNode({}, {}, 0, math.inf, RowPool(spec, pts),
                   np.asarray([init.support[p] for p in pts], dtype=np.float64))
    counter = itertools.count()
    heap: List[tuple] = []
    trace = []
    explored = 0
    closed_gap = 0.0
    root_bound = None

    def push(node, bound):
        heapq.heappush(heap, (-bound, -node.depth, next(counter), node))

    push(root, math.inf)
    stopped = False
    while heap:
        neg_bound, _, _, node = heap[0]
        if -neg_bound <= inc_ldet + opts.eps_gap:
            heapq.heappop(heap)
            continue
        if explored >= opts.node_cap or (opts.time_cap is not None and time.monotonic() - t0 > opts.time_cap):
            stopped = True
            break
        heapq.heappop(heap)
        explored += 1
        res = node_bound(spec, s, node, opts)
        trace.append((node.node_id, node.parent_id, res.bound))
        if root_bound is None:
            root_bound = res.bound
        cut = integral_bound(res.bound)
        if res.weights is None or cut <= inc_ldet + opts.eps_gap:
            continue
        x = res.weights
        cand = _round_to_design(spec, s, res.pool, x)
        if cand is not None:
            offer(cand)
        i = _branch_var(spec, res.pool, x)
        if i is None:
            closed_gap = max(closed_gap, cut - inc_ldet)
            continue
        if cut <= inc_ldet + opts.eps_gap:
            continue
        p = res.pool.points[i]
        lo_k, hi_k = math.floor(x[i]), math.ceil(x[i])
        left_up = dict(node.upper_bounds)
        left_up[p] = lo_k
        right_lo = dict(node.lower_bounds)
        right_lo[p] = hi_k
        for lb, ub in ((node.lower_bounds, left_up), (right_lo, node.upper_bounds)):
            child = BnbNode(dict(lb), dict(ub), node.depth + 1, res.bound, res.pool, x,
                            node_id=next(counter), parent_id=node.node_id)
            push(child, cut)

    open_bound = max((-b for b, _, _, _ in heap), default=-math.inf)
    if stopped:
        gap = max(0.0, open_bound - inc_ldet, closed_gap)
    else:
        gap = max(0.0, closed_gap)
    proof = {
        "optimal_ldet": inc_ldet,
        "nodes_explored": explored,
        "final_gap": gap,
        "proven": gap <= opts.eps_gap,
        "root_bound": root_bound,
        "incumbents": incumbents,
        "node_trace": trace,
    }
    return incumbent, proof
