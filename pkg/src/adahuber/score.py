"""Score functions psi for the one-step correction, with residual-scale helpers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import Dataset

__all__ = [
    "ScoreFunction",
    "ScoreDiagnostics",
    "t3_score",
    "gaussian_score",
    "make_score",
    "get_score",
    "residual_scale",
    "a_hat",
]


@dataclass(frozen=True)
class ScoreFunction:
    """psi and its derivative (optionally second derivative), vectorized over arrays."""

    name: str
    psi: Callable
    psi_prime: Callable
    psi_second: Callable | None = None


def _fd_check(psi, psi_prime, rel_tol=1e-6):
    # derivative must match central differences on a coarse lattice
    t = np.linspace(-10.0, 10.0, 201)
    h = 1e-6
    fd = (np.asarray(psi(t + h)) - np.asarray(psi(t - h))) / (2 * h)
    claimed = np.asarray(psi_prime(t), dtype=float) * np.ones_like(t)
    scale = np.maximum(np.abs(claimed), 1.0)
    if np.max(np.abs(fd - claimed) / scale) > rel_tol:
        raise ValueError("psi_prime does not match finite differences of psi")


def make_score(name, psi, psi_prime, psi_second=None, check=True) -> ScoreFunction:
    """Register a user-supplied score; the derivative self-check is mandatory
    unless explicitly disabled."""
    if check:
        _fd_check(psi, psi_prime)
    return ScoreFunction(name=name, psi=psi, psi_prime=psi_prime, psi_second=psi_second)


def t3_score() -> ScoreFunction:
    """Score of the standardized t distribution with three degrees of freedom:
    psi(t) = 4t / (3 + t^2)."""

    def psi(t):
        t = np.asarray(t, dtype=float)
        out = 4.0 * t / (3.0 + t * t)
        return float(out) if out.ndim == 0 else out

    def psi_prime(t):
        t = np.asarray(t, dtype=float)
        out = (12.0 - 4.0 * t * t) / (3.0 + t * t) ** 2
        return float(out) if out.ndim == 0 else out

    def psi_second(t):
        t = np.asarray(t, dtype=float)
        out = 8.0 * t * (t * t - 9.0) / (3.0 + t * t) ** 3
        return float(out) if out.ndim == 0 else out

    return ScoreFunction("t3", psi, psi_prime, psi_second)


def gaussian_score() -> ScoreFunction:
    """Identity score psi(t) = t of the standard normal."""

    def psi(t):
        t = np.asarray(t, dtype=float)
        return float(t) if t.ndim == 0 else t.copy()

    def psi_prime(t):
        t = np.asarray(t, dtype=float)
        out = np.ones_like(t)
        return float(out) if out.ndim == 0 else out

    def psi_second(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        return float(out) if out.ndim == 0 else out

    return ScoreFunction("gaussian", psi, psi_prime, psi_second)


_BUILTINS = {"gaussian": gaussian_score, "t3": t3_score}


def get_score(name: str) -> ScoreFunction:
    """Look up a built-in score by name ("gaussian" | "t3")."""
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ValueError(f"unknown score {name!r}; choose from {sorted(_BUILTINS)}") from None


@dataclass(frozen=True)
class ScoreDiagnostics:
    """Quantities shared by the one-step correction and the interval scale."""

    a_hat: float
    psi_sq_mean: float
    sigma_hat: float


def residual_scale(data: Dataset, beta) -> float:
    """Root mean square residual sqrt((1/n) sum (y_i - x_i'beta)^2).

    The square root makes the quantity a scale, matching its use as the
    divisor of residuals everywhere downstream. Raises when all residuals
    vanish (a zero scale would divide later formulas).
    """
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != data.p:
        raise ValueError("beta length must equal the number of columns of X")
    r = data.y - data.X @ beta
    s = float(np.sqrt(np.mean(r * r)))
    if s == 0.0:
        raise ValueError("all residuals are zero; scale is degenerate")
    return s


def a_hat(data: Dataset, beta, sigma_hat: float, score: ScoreFunction) -> float:
    """Average score derivative at scaled residuals, (1/(n*sigma)) sum psi'(r_i/sigma)."""
    if not (sigma_hat > 0):
        raise ValueError("sigma_hat must be positive")
    beta = np.asarray(beta, dtype=float).ravel()
    r = data.y - data.X @ beta
    vals = np.asarray(score.psi_prime(r / sigma_hat), dtype=float)
    return float(np.mean(vals) / sigma_hat)
