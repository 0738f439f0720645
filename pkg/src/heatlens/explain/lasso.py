"""Weighted lasso by cyclic coordinate descent.

Minimises ``0.5 * sum_i w_i (y_i - b - x_i . beta)^2 + lam * |beta|_1`` with
the sample weights normalised to sum to one and an unpenalised intercept.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError


@dataclass
class LassoFit:
    coef: np.ndarray
    intercept: float
    lam: float
    n_iter: int
    degenerate: list[int] = field(default_factory=list)


def _center(X, y, w):
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0) or w.sum() <= 0:
        raise DataError("sample weights must be nonnegative with a positive sum")
    wn = w / w.sum()
    x_mean = np.einsum("i,ij->j", wn, X)
    y_mean = float(np.dot(wn, y))
    return wn, X - x_mean, y - y_mean, x_mean, y_mean


def soft_threshold(v: float, lam: float) -> float:
    if v > lam:
        return v - lam
    if v < -lam:
        return v + lam
    return 0.0


class _Problem:
    """Weighted, centred sufficient statistics shared along a penalty path."""

    def __init__(self, X, y, w):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        wn, Xc, yc, self.x_mean, self.y_mean = _center(X, y, w)
        self.gram = np.einsum("i,ij,ik->jk", wn, Xc, Xc)
        self.xty = np.einsum("i,ij,i->j", wn, Xc, yc)
        self.col_sq = np.diag(self.gram).copy()
        self.degenerate = [int(j) for j in np.nonzero(self.col_sq <= 1e-14)[0]]
        skip = set(self.degenerate)
        self.active = [j for j in range(X.shape[1]) if j not in skip]
        self.p = X.shape[1]

    @property
    def lambda_max(self) -> float:
        return float(np.max(np.abs(self.xty))) if self.p else 0.0

    def solve(self, lam: float, coef0=None, max_iter: int = 100_000, tol: float = 1e-12) -> LassoFit:
        if lam < 0:
            raise DataError(f"lasso penalty must be >= 0, got {lam}")
        gram, col_sq = self.gram, self.col_sq
        beta = np.zeros(self.p) if coef0 is None else np.array(coef0, dtype=np.float64)
        beta[self.degenerate] = 0.0
        # grad[j] = xty[j] - (gram @ beta)[j], kept current as beta changes
        grad = self.xty - np.einsum("jk,k->j", gram, beta)
        it = 0
        for it in range(1, max_iter + 1):
            max_delta = 0.0
            for j in self.active:
                old = beta[j]
                new = soft_threshold(grad[j] + col_sq[j] * old, lam) / col_sq[j]
                if new != old:
                    grad -= gram[:, j] * (new - old)
                    beta[j] = new
                    max_delta = max(max_delta, abs(new - old))
            if max_delta < tol:
                break
        intercept = self.y_mean - float(np.dot(self.x_mean, beta))
        return LassoFit(beta, intercept, float(lam), it, list(self.degenerate))


def lambda_max(X, y, w) -> float:
    """Smallest penalty at which every coefficient is zero."""
    return _Problem(X, y, w).lambda_max


def weighted_lasso(X, y, w, lam: float, max_iter: int = 100_000, tol: float = 1e-12, coef0=None) -> LassoFit:
    """Coordinate descent to a max coefficient change below ``tol``.

    Constant columns get coefficient 0 and are listed in ``degenerate``.
    """
    return _Problem(X, y, w).solve(lam, coef0, max_iter, tol)


def lasso_auto(X, y, w, max_features: int, factor: float = 0.7, min_ratio: float = 1e-6, **kw) -> LassoFit:
    """Walk the penalty down from ``lambda_max`` geometrically.

    Returns the fit at the smallest penalty on the path whose solution has at
    most ``max_features`` nonzero coefficients.
    """
    if max_features < 1:
        raise DataError(f"max_features must be >= 1, got {max_features}")
    prob = _Problem(X, y, w)
    lam = prob.lambda_max
    best = prob.solve(lam, **kw)
    if lam == 0.0:
        return best
    floor = lam * min_ratio
    while lam * factor >= floor:
        lam *= factor
        fit = prob.solve(lam, coef0=best.coef, **kw)
        if np.count_nonzero(fit.coef) > max_features:
            break
        best = fit
    return best
