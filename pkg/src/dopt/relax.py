"""Natural continuous relaxation with row generation and dual certificates.

The relaxation ``max ldet sum_i x_i v_i v_i'`` s.t. ``sum x = s, x >= 0`` is
solved over a pool of rows by away-step Frank-Wolfe.  For any primal point
``x`` with ``B = B(x)`` positive definite, ``theta = B^{-1}`` and
``tau = max_i v_i' theta v_i`` form a dual-feasible pair whose value

    -ldet(theta) + tau * s - m

bounds the relaxation, and therefore the integer problem, from above.
Maximising ``v' theta v`` over *all* implicit rows (the pricing oracle)
turns a pool-scoped certificate into one valid for the whole instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .infomat import InfoMatrix, RankDeficientError, build_info
from .instance import FactorPoint, ModelSpec, expand_rows
from .localsearch import initial_design
from .oracle import DEFAULT_CAP, price

EPS_KW = 1e-6
EPS_DROP = 1e-9
VIOLATION_RTOL = 1e-9


class RowPool:
    """Ordered, duplicate-free set of factor points with cached rows."""

    def __init__(self, spec: ModelSpec, points: Sequence[FactorPoint] = ()):
        self.spec = spec
        self.points: List[FactorPoint] = []
        self.index: Dict[FactorPoint, int] = {}
        self._rows = np.empty((max(len(points), 8), spec.m))
        self.add(points)

    def __len__(self):
        return len(self.points)

    def __contains__(self, pt):
        return pt in self.index

    @property
    def rows(self) -> np.ndarray:
        return self._rows[: len(self.points)]

    def add(self, points) -> List[int]:
        new = [tuple(p) for p in points if tuple(p) not in self.index]
        new = list(dict.fromkeys(new))
        if not new:
            return []
        k = len(self.points)
        if k + len(new) > self._rows.shape[0]:
            grown = np.empty((max(2 * self._rows.shape[0], k + len(new)), self.spec.m))
            grown[:k] = self._rows[:k]
            self._rows = grown
        self._rows[k : k + len(new)] = expand_rows(self.spec, np.asarray(new, dtype=np.int64))
        for j, p in enumerate(new):
            self.index[p] = k + j
            self.points.append(p)
        return list(range(k, k + len(new)))

    def keep(self, mask) -> "RowPool":
        mask = np.asarray(mask, dtype=bool)
        out = RowPool(self.spec)
        out.add([p for p, keep in zip(self.points, mask) if keep])
        return out

    def copy(self) -> "RowPool":
        return self.keep(np.ones(len(self), dtype=bool))


@dataclass
class RelaxSolution:
    weights: np.ndarray
    budget: float
    ldet_value: float
    kw_gap: float
    fw_gap: float
    iterations: int
    converged: bool
    info: Optional[InfoMatrix] = field(default=None, repr=False)

    def weight_map(self, pool: RowPool) -> Dict[FactorPoint, float]:
        return {p: float(w) for p, w in zip(pool.points, self.weights) if w > 0}


@dataclass
class DualCertificate:
    theta: np.ndarray
    tau: float
    s: float
    scope: str
    upper_bound: float

    @property
    def m(self) -> int:
        return self.theta.shape[0]


@dataclass
class RelaxOptions:
    eps_kw: float = EPS_KW
    max_iter: int = 200000
    rounds: int = 200
    topk: int = 5
    drop: bool = True
    eps_drop: float = EPS_DROP
    threads: int = 1
    cap: int = DEFAULT_CAP
    refactor_every: int = 50


@dataclass
class BoundReport:
    bound: float
    relax_value: float
    rounds: int
    pool_size_final: int
    certificate: DualCertificate
    kw_gap: float
    converged: bool
    capped: bool
    pool: RowPool = field(repr=False)
    solution: RelaxSolution = field(repr=False)
    history: List[tuple] = field(default_factory=list, repr=False)


def _stop_threshold(eps: float, s: float) -> float:
    # caps both s*kw_gap and the relative kw gap (kw_gap <= eps*m/s) by eps
    return eps * min(1.0, s)


def _fresh(V, x):
    info = build_info(V, x)
    return info, info.inverse(), info.quad_forms(V)


def _newton_face(V, x, lo, hi, info, g, tiny):
    """One Newton step on the face of ``x`` (variables strictly inside their bounds).

    The step keeps ``sum x`` fixed, is truncated at the first bound it hits and
    is accepted only if it raises ``ldet``.  Returns the new ``x`` or ``None``.
    """
    free = np.flatnonzero((x > lo + tiny) & (x < hi - tiny))
    if free.size < 2:
        return None
    Vf = V[free]
    P = info.solve_lower(Vf.T)
    K = P.T @ P
    H = -(K * K)
    ones = np.ones(free.size)
    try:
        Hg = np.linalg.solve(H, g[free])
        H1 = np.linalg.solve(H, ones)
    except np.linalg.LinAlgError:
        return None
    nu = (ones @ Hg) / (ones @ H1)
    dxf = -(Hg - nu * H1)
    if not np.all(np.isfinite(dxf)) or g[free] @ dxf <= 0:
        return None
    dx = np.zeros_like(x)
    dx[free] = dxf
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(dx > 0, (hi - x) / dx, np.inf)
        dn = np.where(dx < 0, (lo - x) / dx, np.inf)
    tmax = float(min(1.0, up.min(), dn.min()))
    if tmax <= 0:
        return None
    t = _line_search(info.factor, V, dx, tmax)
    if t <= 0:
        return None
    xn = np.clip(x + t * dx, lo, hi)
    xn = np.where(np.abs(xn - lo) <= tiny, lo, np.where(np.abs(xn - hi) <= tiny, hi, xn))
    return xn


def _fw_simplex(V, x, s, eps, max_iter, refactor_every, polish_every=10):
    """Away-step Frank-Wolfe on the scaled simplex, Sherman-Morrison updates."""
    m = V.shape[1]
    info, Binv, g = _fresh(V, x)
    thr = _stop_threshold(eps, s)
    zeros = np.zeros_like(x)
    upper = np.full_like(x, np.inf)
    it = 0
    fw_gap = math.inf
    while it < max_iter:
        i = int(np.argmax(g))
        supp = np.flatnonzero(x > 0)
        j = int(supp[np.argmin(g[supp])])
        fw_gap = s * g[i] - m
        away_gap = m - s * g[j]
        if fw_gap <= thr:
            break
        it += 1
        if fw_gap >= away_gap:
            d = s * g[i]
            t = (d - m) / (m * (d - 1.0))
            if t <= 0.0:
                break
            c = t * s / (1.0 - t)
            u = Binv @ V[i]
            denom = 1.0 + c * g[i]
            proj = V @ u
            Binv = (Binv - (c / denom) * np.outer(u, u)) / (1.0 - t)
            g = (g - (c / denom) * proj * proj) / (1.0 - t)
            x *= 1.0 - t
            x[i] += t * s
        else:
            d = s * g[j]
            if s - x[j] <= 0:
                break
            tmax = x[j] / (s - x[j])
            t = tmax if d <= 1.0 else min(tmax, (m - d) / (m * (d - 1.0)))
            if t <= 0.0:
                break
            c = t * s / (1.0 + t)
            u = Binv @ V[j]
            denom = 1.0 - c * g[j]
            if denom <= 1e-12:
                break
            proj = V @ u
            Binv = (Binv + (c / denom) * np.outer(u, u)) / (1.0 + t)
            g = (g + (c / denom) * proj * proj) / (1.0 + t)
            x *= 1.0 + t
            x[j] -= t * s
            if t == tmax:
                x[j] = 0.0
        if it % polish_every == 0:
            x *= s / x.sum()
            info, Binv, g = _fresh(V, x)
            xn = _newton_face(V, x, zeros, upper, info, g, 0.0)
            if xn is not None:
                xn *= s / xn.sum()
                try:
                    cand = _fresh(V, xn)
                except RankDeficientError:
                    cand = None
                if cand is not None and cand[0].ldet() >= info.ldet():
                    x = xn
                    info, Binv, g = cand
        elif it % refactor_every == 0:
            x *= s / x.sum()
            info, Binv, g = _fresh(V, x)
    x *= s / x.sum()
    info, Binv, g = _fresh(V, x)
    fw_gap = float(s * g.max() - m)
    return x, info, g, it, fw_gap, fw_gap <= thr * (1 + 1e-6)


def _greedy_fill(g, lo, hi, s, maximize=True):
    """Vertex of ``{lo <= y <= hi, sum y = s}`` optimising ``g . y`` greedily."""
    y = lo.copy()
    r = s - y.sum()
    order = np.lexsort((np.arange(g.size), -g if maximize else g))
    for i in order:
        if r <= 0:
            break
        add = min(hi[i] - lo[i], r)
        y[i] += add
        r -= add
    return y


def _line_search(Lf, V, dx, tmax):
    """argmax over ``[0, tmax]`` of ``ldet(B + t V' diag(dx) V)``."""
    D = (V * dx[:, None]).T @ V
    P = np.linalg.solve(Lf, np.linalg.solve(Lf, D).T)
    lam = np.linalg.eigvalsh(0.5 * (P + P.T))
    hi = tmax
    if lam.min() < 0:
        hi = min(hi, -(1.0 - 1e-12) / lam.min())

    def deriv(t):
        r = lam / (1.0 + t * lam)
        return float(r.sum()), float(r @ r)

    d_hi, _ = deriv(hi)
    if d_hi >= 0:
        return hi
    # the derivative decreases in t: safeguarded Newton inside [lo_t, hi]
    lo_t, t = 0.0, 0.0
    for _ in range(100):
        d, curv = deriv(t)
        if abs(d) <= 1e-14 * max(1.0, curv):
            return t
        if d > 0:
            lo_t = t
        else:
            hi = t
        if hi - lo_t <= 1e-15 * max(1.0, hi):
            break
        step = t + d / curv if curv > 0 else hi
        t = step if lo_t < step < hi else 0.5 * (lo_t + hi)
    return lo_t


def _fw_box(V, x, s, lo, hi, eps, max_iter, polish_every=10):
    """Away-step Frank-Wolfe on ``{lo <= x <= hi, sum x = s}``; fresh factorisation each step."""
    thr = _stop_threshold(eps, s)
    tiny = 1e-14 * max(1.0, s)
    it = 0
    while True:
        info, _, g = _fresh(V, x)
        y = _greedy_fill(g, lo, hi, s)
        fw_gap = float(g @ (y - x))
        if fw_gap <= thr or it >= max_iter:
            break
        at_lo = x <= lo + tiny
        at_hi = x >= hi - tiny
        flo = np.where(at_hi, x, lo)
        fhi = np.where(at_lo, lo, np.where(at_hi, x, hi))
        ya = _greedy_fill(g, flo, fhi, s, maximize=False)
        away_gap = float(g @ (x - ya))
        if fw_gap >= away_gap:
            dx = y - x
            tmax = 1.0
        else:
            dx = x - ya
            with np.errstate(divide="ignore", invalid="ignore"):
                up = np.where(dx > 0, (hi - x) / dx, np.inf)
                dn = np.where(dx < 0, (lo - x) / dx, np.inf)
            tmax = float(min(up.min(), dn.min()))
        if not np.isfinite(tmax) or tmax <= 0:
            break
        t = _line_search(info.factor, V, dx, tmax)
        if t <= 0:
            break
        it += 1
        x = np.clip(x + t * dx, lo, hi)
        x = np.where(np.abs(x - lo) <= tiny, lo, np.where(np.abs(x - hi) <= tiny, hi, x))
        if it % polish_every == 0:
            info, _, g = _fresh(V, x)
            xn = _newton_face(V, x, lo, hi, info, g, tiny)
            if xn is not None:
                try:
                    if build_info(V, xn).ldet() >= info.ldet():
                        x = xn
                except RankDeficientError:
                    pass
    info, _, g = _fresh(V, x)
    return x, info, g, it, fw_gap, fw_gap <= thr * (1 + 1e-6)


def solve_restricted(pool: RowPool, s: float, opts: Optional[RelaxOptions] = None, x0=None,
                     lower=None, upper=None) -> RelaxSolution:
    """Relaxation over the rows of ``pool``, optionally with box bounds per row."""
    opts = opts or RelaxOptions()
    V = pool.rows
    p, m = V.shape
    if s <= 0:
        raise ValueError("budget must be positive")
    x = np.full(p, s / p) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (p,):
        raise ValueError("x0 does not match the pool")
    bounded = lower is not None or upper is not None
    if bounded:
        lo = np.zeros(p) if lower is None else np.asarray(lower, dtype=np.float64)
        hi = np.full(p, float(s)) if upper is None else np.minimum(np.asarray(upper, dtype=np.float64), s)
        x, info, g, it, fw_gap, ok = _fw_box(V, x, float(s), lo, hi, opts.eps_kw, opts.max_iter)
    else:
        x, info, g, it, fw_gap, ok = _fw_simplex(V, x, float(s), opts.eps_kw, opts.max_iter, opts.refactor_every)
    return RelaxSolution(
        weights=x,
        budget=float(s),
        ldet_value=info.ldet(),
        kw_gap=float(g.max() - m / s),
        fw_gap=float(fw_gap),
        iterations=it,
        converged=bool(ok),
        info=info,
    )


def kw_gap(pool: RowPool, sol: RelaxSolution) -> float:
    info = sol.info if sol.info is not None else build_info(pool.rows, sol.weights)
    return float(info.quad_forms(pool.rows).max() - pool.spec.m / sol.budget)


def dual_certificate(pool: RowPool, sol: RelaxSolution) -> DualCertificate:
    info = sol.info if sol.info is not None else build_info(pool.rows, sol.weights)
    theta = info.inverse()
    tau = float(info.quad_forms(pool.rows).max())
    m = pool.spec.m
    return DualCertificate(theta, tau, sol.budget, "pool", info.ldet() + tau * sol.budget - m)


def certificate_bound(theta: np.ndarray, tau: float, s: float) -> float:
    sign, ld = np.linalg.slogdet(theta)
    if sign <= 0:
        raise RankDeficientError("theta is not positive definite")
    return -ld + tau * s - theta.shape[0]


def complete_certificate(spec: ModelSpec, cert: DualCertificate, threads: int = 1, cap: int = DEFAULT_CAP,
                         k: int = 1):
    """Raise ``tau`` to the oracle maximum over all rows; returns ``(certificate, pricing)``."""
    res = price(spec, cert.theta, k=k, threads=threads, cap=cap)
    tau = max(cert.tau, res.best_value)
    bound = cert.upper_bound + (tau - cert.tau) * cert.s
    return DualCertificate(cert.theta, tau, cert.s, "full", bound), res


def _rowgen(spec, s, pool, x, opts, protect):
    history = []
    best = None
    rounds = 0
    capped = False
    while True:
        sol = solve_restricted(pool, s, opts, x0=x)
        cert = dual_certificate(pool, sol)
        full, res = complete_certificate(spec, cert, opts.threads, opts.cap, k=opts.topk)
        rounds += 1
        history.append((sol.ldet_value, full.upper_bound, len(pool)))
        if best is None or full.upper_bound < best[0].upper_bound:
            best = (full, sol, pool)
        violated = res.best_value > cert.tau * (1.0 + VIOLATION_RTOL)
        new = [pt for pt, val in res.top if pt not in pool and val > cert.tau]
        if not violated or not new:
            break
        if rounds > opts.rounds:
            capped = True
            break
        x = sol.weights
        if opts.drop:
            keep = (x >= opts.eps_drop) | np.asarray([p in protect for p in pool.points])
            if not keep.all():
                pool = pool.keep(keep)
                x = x[keep]
                x *= s / x.sum()
        pool = pool.copy()
        pool.add(new)
        x = np.concatenate([x, np.zeros(len(pool) - x.size)])
    if capped:
        full, sol, pool = best
    return full, sol, pool, rounds, capped, history


def natural_bound_rowgen(spec: ModelSpec, s: float, opts: Optional[RelaxOptions] = None) -> BoundReport:
    """Upper bound on the integer optimum valid for the whole implicit instance.

    The pool starts from the spanning points of :func:`initial_design`.
    ``opts.rounds`` limits how many times the pool may be enlarged.
    """
    opts = opts or RelaxOptions()
    init = initial_design(spec, int(math.ceil(s)) if s >= spec.m else spec.m)
    pts = init.points()
    pool = RowPool(spec, pts)
    x0 = np.asarray([init.support[p] for p in pts], dtype=np.float64)
    x0 *= s / x0.sum()
    full, sol, pool, rounds, capped, history = _rowgen(spec, float(s), pool, x0, opts, set(pts))
    return BoundReport(
        bound=full.upper_bound,
        relax_value=sol.ldet_value,
        rounds=rounds,
        pool_size_final=len(pool),
        certificate=full,
        kw_gap=sol.kw_gap,
        converged=sol.converged and not capped,
        capped=capped,
        pool=pool,
        solution=sol,
        history=history,
    )
