"""Sample covariance and a sparse precision-matrix estimator with a KKT certificate.

The precision estimate minimizes

    tr(Theta' S) - log det(Theta) + lam * sum_{i != j} |Theta_ij|

over positive definite Theta (diagonal unpenalized). The solver is proximal
gradient descent on Theta: gradient step on the smooth part (S - Theta^{-1}),
off-diagonal soft-thresholding, and a backtracking line search that rejects
any step leaving the positive-definite cone or breaking sufficient decrease.
Accepted iterates therefore never increase the objective, and convergence is
declared only through the first-order residual.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .dataset import Dataset

__all__ = [
    "PrecisionEstimate",
    "sample_cov",
    "graphical_lasso",
    "kkt_residual",
    "precision_to_csv",
    "sparsity_triplets",
]


def sample_cov(data: Dataset) -> np.ndarray:
    """Uncentred sample covariance X'X / n (the model is zero-mean)."""
    S = data.X.T @ data.X / data.n
    return (S + S.T) / 2.0


@dataclass
class PrecisionEstimate:
    """Solver output: precision matrix plus the convergence record."""

    theta: np.ndarray
    lambda_theta: float
    kkt_residual: float
    iterations: int
    converged: bool
    objective_trace: np.ndarray

    def to_dict(self) -> dict:
        return {
            "theta": [[float(v) for v in row] for row in self.theta],
            "lambda_theta": float(self.lambda_theta),
            "kkt_residual": float(self.kkt_residual),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "objective_final": float(self.objective_trace[-1]),
        }


def default_glasso_lambda(n: int, p: int) -> float:
    """Default off-diagonal penalty 0.5 * sqrt(log(p) / n)."""
    return 0.5 * math.sqrt(math.log(p) / n)


def _check_cov(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.allclose(cov, cov.T, atol=1e-10):
        raise ValueError("covariance must be symmetric")
    return (cov + cov.T) / 2.0


def _chol_inverse(theta: np.ndarray):
    """(inverse, logdet) via Cholesky; raises LinAlgError when not PD."""
    c, low = cho_factor(theta, lower=True)
    inv = cho_solve((c, low), np.eye(theta.shape[0]))
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    return (inv + inv.T) / 2.0, logdet


def _offdiag_l1(theta: np.ndarray) -> float:
    return float(np.abs(theta).sum() - np.abs(np.diag(theta)).sum())


def _soft_offdiag(mat: np.ndarray, t: float) -> np.ndarray:
    out = np.sign(mat) * np.maximum(np.abs(mat) - t, 0.0)
    np.fill_diagonal(out, np.diag(mat))
    return (out + out.T) / 2.0


def kkt_residual(cov: np.ndarray, theta: np.ndarray, lambda_theta: float) -> float:
    """First-order optimality violation at theta.

    Entries: |R_ij + lam*sign(theta_ij)| on the off-diagonal support,
    max(|R_ij| - lam, 0) at off-diagonal zeros, |R_ii| on the diagonal, where
    R = S - Theta^{-1}. Raises on a singular theta.
    """
    cov = _check_cov(cov)
    theta = np.asarray(theta, dtype=float)
    try:
        inv, _ = _chol_inverse(theta)
    except np.linalg.LinAlgError:
        raise ValueError("theta is not positive definite") from None
    R = cov - inv
    lam = float(lambda_theta)
    off = ~np.eye(theta.shape[0], dtype=bool)
    res = np.abs(np.diag(R)).max() if theta.shape[0] else 0.0
    on_support = off & (theta != 0.0)
    zeros = off & (theta == 0.0)
    if on_support.any():
        res = max(res, float(np.abs(R[on_support] + lam * np.sign(theta[on_support])).max()))
    if zeros.any():
        res = max(res, float(np.maximum(np.abs(R[zeros]) - lam, 0.0).max()))
    return float(res)


def graphical_lasso(
    cov: np.ndarray,
    lambda_theta: float,
    tol: float = 1e-8,
    max_iter: int = 2000,
    init: np.ndarray | None = None,
) -> PrecisionEstimate:
    """Estimate a sparse precision matrix from a covariance.

    Parameters
    ----------
    cov : symmetric p x p covariance. May be singular when lambda_theta > 0
        (positive diagonal required); lambda_theta = 0 demands positive
        definiteness and recovers the plain inverse.
    lambda_theta : nonnegative off-diagonal penalty.
    tol : convergence threshold on the KKT residual.
    max_iter : iteration cap; exceeded caps come back flagged, not raised.
    init : optional positive definite warm start.
    """
    S = _check_cov(cov)
    p = S.shape[0]
    lam = float(lambda_theta)
    if lam < 0:
        raise ValueError("lambda_theta must be nonnegative")
    d = np.diag(S)
    if lam == 0.0:
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise ValueError(
                "covariance is singular and lambda_theta = 0; the problem is ill-posed"
            ) from None
    elif np.any(d <= 0):
        raise ValueError("covariance diagonal must be positive when lambda_theta > 0")

    if init is not None:
        theta = _check_cov(init)
    else:
        theta = np.diag(1.0 / np.maximum(d, np.finfo(float).tiny))

    inv, logdet = _chol_inverse(theta)
    smooth = float(np.sum(theta * S)) - logdet
    obj = smooth + lam * _offdiag_l1(theta)
    trace = [obj]
    step = (1.0 / float(np.max(d))) ** 2 if np.max(d) > 0 else 1.0
    kkt = math.inf
    converged = False
    it = 0

    for it in range(1, max_iter + 1):
        grad = S - inv
        kkt = _kkt_from_parts(S, inv, theta, lam)
        if kkt <= tol:
            converged = True
            it -= 1
            break
        accepted = False
        for _ in range(80):
            cand = _soft_offdiag(theta - step * grad, step * lam)
            delta = cand - theta
            try:
                inv_c, logdet_c = _chol_inverse(cand)
            except np.linalg.LinAlgError:
                step *= 0.5
                continue
            smooth_c = float(np.sum(cand * S)) - logdet_c
            quad = smooth + float(np.sum(grad * delta)) + float(np.sum(delta * delta)) / (2 * step)
            if smooth_c <= quad + 1e-12 * max(1.0, abs(quad)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # step collapsed; report the honest KKT residual below

        # Barzilai-Borwein step for the next iteration, safeguarded
        grad_c = S - inv_c
        dg = grad_c - grad
        num = float(np.sum(delta * delta))
        den = float(np.sum(delta * dg))
        if den > 0 and num > 0:
            step = min(max(num / den, 1e-12), 1e12)

        theta, inv, smooth = cand, inv_c, smooth_c
        obj = smooth + lam * _offdiag_l1(theta)
        trace.append(obj)

    if not converged:
        kkt = _kkt_from_parts(S, inv, theta, lam)
        converged = kkt <= tol

    return PrecisionEstimate(
        theta=theta,
        lambda_theta=lam,
        kkt_residual=float(kkt),
        iterations=it,
        converged=bool(converged),
        objective_trace=np.asarray(trace),
    )


def _kkt_from_parts(S: np.ndarray, inv: np.ndarray, theta: np.ndarray, lam: float) -> float:
    R = S - inv
    p = theta.shape[0]
    off = ~np.eye(p, dtype=bool)
    res = float(np.abs(np.diag(R)).max())
    on_support = off & (theta != 0.0)
    zeros = off & (theta == 0.0)
    if on_support.any():
        res = max(res, float(np.abs(R[on_support] + lam * np.sign(theta[on_support])).max()))
    if zeros.any():
        res = max(res, float(np.maximum(np.abs(R[zeros]) - lam, 0.0).max()))
    return res


def precision_to_csv(theta: np.ndarray, path) -> None:
    """Dense CSV export of a precision matrix."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(theta, dtype=float):
            writer.writerow([repr(float(v)) for v in row])


def sparsity_triplets(theta: np.ndarray, atol: float = 0.0) -> list[tuple[int, int, float]]:
    """(i, j, value) triplets of entries with |value| > atol, row-major."""
    theta = np.asarray(theta, dtype=float)
    out = []
    for i in range(theta.shape[0]):
        for j in range(theta.shape[1]):
            if abs(theta[i, j]) > atol:
                out.append((i, j, float(theta[i, j])))
    return out
