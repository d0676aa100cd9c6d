"""Brute-force reference answers for desk-scale instances.

Nothing here uses the incremental kernels: every row comes from
:func:`materialize_dense` and every determinant from a fresh factorisation.
"""
from __future__ import annotations

from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .instance import CapacityError, Design, ModelSpec, decode_point, materialize_dense
from .oracle import TIE_RTOL, PricingResult

PRICE_CAP = 10**5
OPTIMUM_CAP = 10**7
RELAX_CAP = 10**4
_BATCH = 4096


def brute_force_price(spec: ModelSpec, Q, rtol: float = TIE_RTOL) -> PricingResult:
    A = materialize_dense(spec, cap=PRICE_CAP)
    Q = np.asarray(Q, dtype=np.float64)
    Q = 0.5 * (Q + Q.T)
    vals = np.einsum("ij,jk,ik->i", A, Q, A)
    vstar = float(vals.max())
    best = int(np.flatnonzero(vals >= vstar - rtol * max(1.0, abs(vstar)))[0])
    pt = decode_point(spec, best)
    return PricingResult(best_point=pt, best_value=float(vals[best]), evaluated=A.shape[0], top=[(pt, float(vals[best]))])


def _singular(rows: np.ndarray) -> bool:
    return np.linalg.matrix_rank(rows) < rows.shape[1]


def brute_force_optimum(spec: ModelSpec, s: int, rtol: float = 1e-12):
    """Best size-``s`` multiset of rows; lexicographically first among ties.

    Returns ``(design, ldet)``; ``(None, -inf)`` when every multiset is singular.
    """
    A = materialize_dense(spec, cap=PRICE_CAP)
    n, m = A.shape
    total = comb(n + s - 1, s)
    if total > OPTIMUM_CAP:
        raise CapacityError(f"{total} multisets exceed the brute-force cap {OPTIMUM_CAP}")
    outer = np.einsum("ij,ik->ijk", A, A)
    best_val, best_combo = -np.inf, None
    it = combinations_with_replacement(range(n), s)
    while True:
        batch = [c for _, c in zip(range(_BATCH), it)]
        if not batch:
            break
        idx = np.asarray(batch, dtype=np.int64)
        B = outer[idx].sum(axis=1)
        sign, logdet = np.linalg.slogdet(B)
        for j in np.flatnonzero(sign > 0):
            val = float(logdet[j])
            if best_combo is None or val > best_val + rtol * max(1.0, abs(best_val)):
                # a positive slogdet can still hide exact rank loss; confirm on the rows
                if _singular(A[idx[j]]):
                    continue
                best_val, best_combo = val, batch[j]
    if best_combo is None:
        return None, -np.inf
    sup = {}
    for i in best_combo:
        pt = decode_point(spec, i)
        sup[pt] = sup.get(pt, 0) + 1
    return Design(spec, s, sup), best_val


def _fw_dense(A: np.ndarray, s: float, x0: np.ndarray, tol: float, max_iter: int):
    """Away-step Frank-Wolfe on ``{x >= 0, sum x = s}``, refactorising every step."""
    n, m = A.shape
    x = x0.astype(np.float64).copy()
    for it in range(max_iter):
        B = (A * x[:, None]).T @ A
        Lf = np.linalg.cholesky(B)
        P = np.linalg.solve(Lf, A.T)
        g = np.einsum("ij,ij->j", P, P)
        i = int(np.argmax(g))
        supp = np.flatnonzero(x > 0)
        j = int(supp[np.argmin(g[supp])])
        gap = g[i] - m / s
        if gap <= tol:
            return x, gap, it
        if s * g[i] - m >= m - s * g[j]:
            dd = s * g[i]
            t = (dd - m) / (m * (dd - 1.0))
            t = min(max(t, 0.0), 1.0)
            x *= 1.0 - t
            x[i] += t * s
        else:
            dd = s * g[j]
            tmax = x[j] / (s - x[j]) if s - x[j] > 0 else 0.0
            t = tmax if dd <= 1.0 else min(tmax, (m - dd) / (m * (dd - 1.0)))
            if t <= 0:
                return x, gap, it
            x *= 1.0 + t
            x[j] -= t * s
            if t == tmax:
                x[j] = 0.0
    P = np.linalg.solve(np.linalg.cholesky((A * x[:, None]).T @ A), A.T)
    g = np.einsum("ij,ij->j", P, P)
    return x, float(g.max() - m / s), max_iter


def dense_relaxation(spec: ModelSpec, s: float, tol: float = 1e-8, max_iter: int = 200000):
    """Continuous relaxation over all ``n`` rows; returns ``(x, ldet, kw_gap)``."""
    A = materialize_dense(spec, cap=RELAX_CAP)
    n = A.shape[0]
    x0 = np.full(n, s / n)
    x, gap, _ = _fw_dense(A, float(s), x0, tol, max_iter)
    sign, logdet = np.linalg.slogdet((A * x[:, None]).T @ A)
    if sign <= 0:
        raise ValueError("rank-deficient instance: relaxation has no positive-definite point")
    return x, float(logdet), float(gap)


def single_exchange_optimal(design: Design, rtol: float = 1e-8) -> bool:
    """True when no move ``x - e_j + e_i`` over the dense row list improves ldet."""
    spec = design.spec
    A = materialize_dense(spec, cap=PRICE_CAP)
    pts, rows, mults = design.rows_and_mults()
    base = np.linalg.slogdet((rows * mults[:, None]).T @ rows)
    if base[0] <= 0:
        return False
    B = (rows * mults[:, None]).T @ rows
    for r in rows:
        M = B - np.outer(r, r)
        cand = M[None, :, :] + np.einsum("ij,ik->ijk", A, A)
        sign, logdet = np.linalg.slogdet(cand)
        ok = sign > 0
        if np.any(logdet[ok] > base[1] + rtol * max(1.0, abs(base[1]))):
            return False
    return True


def check_certificate(spec: ModelSpec, theta, tau: float, s: float, bound: float,
                      atol: float = 1e-8, rtol_bound: float = 1e-9) -> list:
    """Dense check of a dual certificate; returns a list of problems (empty = valid).

    Every row must satisfy ``v' theta v <= tau + atol`` and the stated bound
    must equal ``-ldet(theta) + tau*s - m``.
    """
    problems = []
    theta = np.asarray(theta, dtype=np.float64)
    m = spec.m
    if theta.shape != (m, m):
        return [f"theta has shape {theta.shape}, expected {(m, m)}"]
    if not np.allclose(theta, theta.T, rtol=0, atol=1e-12 * max(1.0, np.abs(theta).max())):
        problems.append("theta is not symmetric")
    eig = np.linalg.eigvalsh(0.5 * (theta + theta.T))
    if eig.min() <= 0:
        return problems + ["theta is not positive definite"]
    A = materialize_dense(spec, cap=PRICE_CAP)
    vals = np.einsum("ij,jk,ik->i", A, theta, A)
    for i in np.flatnonzero(vals > tau + atol):
        problems.append(f"row {int(i)} {list(decode_point(spec, int(i)))}: v'theta v = {vals[i]:.17g} > tau = {tau:.17g}")
    expected = -float(np.sum(np.log(eig))) + tau * s - m
    if abs(expected - bound) > rtol_bound * max(1.0, abs(expected)):
        problems.append(f"bound {bound:.17g} != -ldet(theta) + tau*s - m = {expected:.17g}")
    return problems
