"""Exchange local search with oracle-generated entering rows.

A move takes one unit off a support point ``j`` and puts it on a point
produced by the pricing oracle for ``Q = M^{-1}``, ``M = B - v_j v_j'``.
By the determinant lemma, ``ldet(M + v v') = ldet M + log(1 + v' M^{-1} v)``,
so the move is improving exactly when the oracle value beats
``v_j' M^{-1} v_j``, the value of putting ``v_j`` straight back.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .infomat import InfoMatrix, RankDeficientError, SingularError, build_info
from .instance import Design, FactorPoint, InstanceError, ModelSpec, expand_row, point_key
from .oracle import DEFAULT_CAP, price

EPS_IMP = 1e-8


class InfeasibleError(InstanceError):
    """Budget smaller than the number of parameters."""


@dataclass(frozen=True)
class ExchangeMove:
    leave: FactorPoint
    enter: FactorPoint
    delta_ldet: float
    q_enter: float = float("nan")
    q_leave: float = float("nan")


@dataclass
class SearchTrace:
    initial_ldet: float
    iterations: List[Tuple[float, ExchangeMove]] = field(default_factory=list)
    skipped_singular: int = 0
    restart_ldets: List[float] = field(default_factory=list)


@dataclass
class SearchOptions:
    max_iterations: Optional[int] = None
    eps_imp: float = EPS_IMP
    threads: int = 1
    seed: int = 0
    restarts: int = 0
    perturb: int = 3
    refresh: int = 50
    cap: int = DEFAULT_CAP


def initial_points(spec: ModelSpec) -> List[FactorPoint]:
    F = spec.factors
    zero = (0,) * F

    def unit(*coords):
        pt = [0] * F
        for c, val in coords:
            pt[c] += val
        return tuple(pt)

    pts = [zero] + [unit((i, 1)) for i in range(F)]
    if spec.kind == "quadratic":
        if spec.levels < 3:
            raise InstanceError("quadratic model needs L >= 3")
        pts += [unit((i, 2)) for i in range(F)]
        pts += [unit((i, 1), (j, 1)) for i in range(F) for j in range(i + 1, F)]
    return pts


def initial_design(spec: ModelSpec, s: int) -> Design:
    """The ``m`` spanning points, multiplicities spread as evenly as possible.

    The ``s mod m`` points with the smallest encoded index get one extra unit.
    """
    m = spec.m
    if s < m:
        raise InfeasibleError(f"budget s={s} is smaller than m={m}")
    pts = sorted(initial_points(spec), key=lambda p: point_key(spec, p))
    base, extra = divmod(s, m)
    return Design(spec, s, {p: base + (1 if k < extra else 0) for k, p in enumerate(pts)})


def design_info(design: Design) -> InfoMatrix:
    _, rows, mults = design.rows_and_mults()
    return build_info(rows, mults)


def exchange_gain(ldet_b: float, ldet_m: float, q_enter: float) -> float:
    """``ldet`` change of ``B -> M + v v'`` with ``v' M^{-1} v = q_enter``."""
    return ldet_m + math.log1p(q_enter) - ldet_b


@dataclass
class Candidate:
    leave: FactorPoint
    enter: Optional[FactorPoint] = None
    q_enter: float = float("nan")
    q_leave: float = float("nan")
    delta: float = float("-inf")
    reduced: Optional[InfoMatrix] = None
    singular: bool = False


def _evaluate_leave(spec, info, pt, cap):
    v = expand_row(spec, pt)
    try:
        M = info.downdate(v)
    except SingularError:
        return Candidate(leave=pt, singular=True)
    q_leave = M.quad_form(v)
    res = price(spec, M.inverse(), k=1, threads=1, cap=cap)
    delta = math.log1p(res.best_value) - math.log1p(q_leave)
    return Candidate(leave=pt, enter=res.best_point, q_enter=res.best_value, q_leave=q_leave, delta=delta, reduced=M)


def scan_exchanges(design: Design, info: InfoMatrix, spec: ModelSpec, threads: int = 1,
                   cap: int = DEFAULT_CAP) -> List[Candidate]:
    """Best entering row for every support point, in canonical point order."""
    pts = design.points()
    if threads > 1 and len(pts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda p: _evaluate_leave(spec, info, p, cap), pts))
    return [_evaluate_leave(spec, info, p, cap) for p in pts]


def _pick(cands: List[Candidate], ldet_b: float, eps_imp: float) -> Optional[Candidate]:
    best = None
    for c in cands:
        if c.singular or c.enter is None or c.enter == c.leave:
            continue
        if c.delta <= eps_imp * max(1.0, abs(ldet_b)):
            continue
        if best is None or c.delta > best.delta:
            best = c
    return best


def best_exchange(design: Design, B: InfoMatrix, spec: ModelSpec, eps_imp: float = EPS_IMP,
                  threads: int = 1, cap: int = DEFAULT_CAP) -> Optional[ExchangeMove]:
    """Largest-gain single exchange, or ``None`` at a local optimum."""
    c = _pick(scan_exchanges(design, B, spec, threads, cap), B.ldet(), eps_imp)
    if c is None:
        return None
    return ExchangeMove(c.leave, c.enter, c.delta, c.q_enter, c.q_leave)


def _descend(spec, design, opts, trace):
    info = design_info(design)
    since_refresh = 0
    while opts.max_iterations is None or len(trace.iterations) < opts.max_iterations:
        cands = scan_exchanges(design, info, spec, opts.threads, opts.cap)
        trace.skipped_singular += sum(c.singular for c in cands)
        c = _pick(cands, info.ldet(), opts.eps_imp)
        if c is None:
            break
        design = design.moved(c.leave, c.enter)
        since_refresh += 1
        if since_refresh >= opts.refresh:
            info = design_info(design)
            since_refresh = 0
        else:
            info = c.reduced.update(expand_row(spec, c.enter))
        move = ExchangeMove(c.leave, c.enter, c.delta, c.q_enter, c.q_leave)
        trace.iterations.append((info.ldet(), move))
    return design, info


def _perturbed(spec, design, rng, count):
    for _ in range(count):
        pts = design.points()
        leave = pts[int(rng.integers(len(pts)))]
        enter = tuple(int(a) for a in rng.integers(0, spec.levels, size=spec.factors))
        trial = design.moved(leave, enter)
        try:
            design_info(trial)
        except RankDeficientError:
            continue
        design = trial
    return design


def local_search(spec: ModelSpec, s: int, opts: Optional[SearchOptions] = None,
                 start: Optional[Design] = None) -> Tuple[Design, SearchTrace]:
    """Best-improvement exchange search from ``start`` (default :func:`initial_design`).

    With ``opts.restarts > 0`` additional runs start from seeded random
    perturbations of the initial design; the best final design is kept.
    """
    opts = opts or SearchOptions()
    first = start if start is not None else initial_design(spec, s)
    if first.budget != s:
        raise InstanceError("start design budget differs from s")
    trace = SearchTrace(initial_ldet=design_info(first).ldet())
    best, info = _descend(spec, first, opts, trace)
    best_ldet = info.ldet()
    if opts.restarts:
        rng = np.random.default_rng(opts.seed)
        for _ in range(opts.restarts):
            cand_start = _perturbed(spec, first, rng, opts.perturb)
            sub = SearchTrace(initial_ldet=design_info(cand_start).ldet())
            cand, cinfo = _descend(spec, cand_start, opts, sub)
            trace.restart_ldets.append(cinfo.ldet())
            trace.skipped_singular += sub.skipped_singular
            if cinfo.ldet() > best_ldet + opts.eps_imp * max(1.0, abs(best_ldet)):
                best, best_ldet = cand, cinfo.ldet()
    return best, trace
