"""Information matrix ``B = sum_l x_l v_l v_l'`` held as a Cholesky factor.

Values are persistent: :meth:`InfoMatrix.update` and :meth:`InfoMatrix.downdate`
return new objects and never touch the receiver, so one base matrix can be
shared by concurrent exchange evaluations.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from . import kernels

EPS_PSD = 1e-10


class RankDeficientError(ValueError):
    """The information matrix is singular or indefinite."""


class SingularError(ArithmeticError):
    """A downdate would leave the matrix (numerically) singular."""


class InfoMatrix:
    __slots__ = ("factor", "ldet_value")

    def __init__(self, factor: np.ndarray, ldet_value: float | None = None):
        self.factor = factor
        if ldet_value is None:
            ldet_value = 2.0 * float(np.sum(np.log(np.diag(factor))))
        self.ldet_value = ldet_value

    @property
    def dim(self) -> int:
        return self.factor.shape[0]

    @classmethod
    def from_matrix(cls, B: np.ndarray) -> "InfoMatrix":
        B = np.asarray(B, dtype=np.float64)
        B = 0.5 * (B + B.T)
        try:
            Lf = np.linalg.cholesky(B)
        except np.linalg.LinAlgError:
            raise RankDeficientError("rank-deficient design: information matrix is not positive definite") from None
        diag = np.diag(Lf)
        # relative pivot test: Schur complement vs the diagonal entry it came from
        if np.any(diag <= EPS_PSD) or np.any(diag * diag <= EPS_PSD * np.maximum(np.diag(B), 1.0)):
            raise RankDeficientError("rank-deficient design: vanishing Cholesky pivot")
        return cls(Lf)

    def matrix(self) -> np.ndarray:
        return self.factor @ self.factor.T

    def ldet(self) -> float:
        return self.ldet_value

    def solve_lower(self, v) -> np.ndarray:
        return solve_triangular(self.factor, np.asarray(v, dtype=np.float64), lower=True, check_finite=False)

    def quad_form(self, v) -> float:
        """``v' B^{-1} v`` via one triangular solve."""
        p = self.solve_lower(v)
        return float(p @ p)

    def quad_forms(self, V) -> np.ndarray:
        """Row-wise ``v_i' B^{-1} v_i`` for a ``(k, m)`` array."""
        P = solve_triangular(self.factor, np.asarray(V, dtype=np.float64).T, lower=True, check_finite=False)
        return np.einsum("ij,ij->j", P, P)

    def inverse(self) -> np.ndarray:
        inv = cho_solve((self.factor, True), np.eye(self.dim), check_finite=False)
        return 0.5 * (inv + inv.T)

    def update(self, v) -> "InfoMatrix":
        Lf = self.factor.copy()
        kernels.chol_update(Lf, np.array(v, dtype=np.float64))
        return InfoMatrix(Lf)

    def downdate(self, v, eps: float = EPS_PSD) -> "InfoMatrix":
        v = np.array(v, dtype=np.float64)
        p = self.solve_lower(v)
        if 1.0 - float(p @ p) <= eps:
            raise SingularError("removing this row leaves a singular information matrix")
        Lf = self.factor.copy()
        if not kernels.chol_downdate(Lf, v, eps):
            raise SingularError("Cholesky pivot vanished during downdate")
        return InfoMatrix(Lf)

    def __repr__(self):
        return f"InfoMatrix(dim={self.dim}, ldet={self.ldet_value:.6g})"


def build_info(rows, mults=None) -> InfoMatrix:
    """Factorise ``sum_k mults[k] * rows[k] rows[k]'``."""
    R = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    w = np.ones(R.shape[0]) if mults is None else np.asarray(mults, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("multiplicities must be nonnegative")
    return InfoMatrix.from_matrix((R * w[:, None]).T @ R)


def ldet(info: InfoMatrix) -> float:
    return info.ldet()


def rank_one_update(info: InfoMatrix, v) -> InfoMatrix:
    return info.update(v)


def rank_one_downdate(info: InfoMatrix, v) -> InfoMatrix:
    return info.downdate(v)


def quad_form(info: InfoMatrix, v) -> float:
    return info.quad_form(v)


def inverse(info: InfoMatrix) -> np.ndarray:
    return info.inverse()
