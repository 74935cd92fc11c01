"""One-step efficiency correction and asymptotic confidence regions.

Given a consistent pilot estimate beta, a precision estimate Theta, and a
score psi, the corrected estimator is

    b = beta + (Theta / A) * (1/n) sum_i psi(r_i / sigma) x_i,

with r_i the pilot residuals, sigma their root mean square, and
A = (1/(n sigma)) sum_i psi'(r_i / sigma). With the identity score the sigma
factors cancel and b reduces to beta + Theta X'(y - X beta)/n, the familiar
debiasing step of the Lasso literature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .dataset import Dataset
from .glasso import PrecisionEstimate
from .score import ScoreDiagnostics, ScoreFunction, a_hat, residual_scale

__all__ = [
    "OneStepEstimate",
    "ConfidenceRegion",
    "one_step",
    "normal_quantile",
    "confidence_region",
    "efficiency_identity_check",
]

MAX_REGION_DIM = 10


def _theta_matrix(theta) -> np.ndarray:
    if isinstance(theta, PrecisionEstimate):
        theta = theta.theta
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise ValueError("theta must be a square matrix")
    return theta


@dataclass
class OneStepEstimate:
    """Corrected coefficients plus the diagnostics the correction used."""

    b_psi: np.ndarray
    base_beta: np.ndarray
    diagnostics: ScoreDiagnostics

    def to_dict(self) -> dict:
        return {
            "b_psi": [float(v) for v in self.b_psi],
            "base_beta": [float(v) for v in self.base_beta],
            "sigma_hat": float(self.diagnostics.sigma_hat),
            "a_hat": float(self.diagnostics.a_hat),
            "psi_sq_mean": float(self.diagnostics.psi_sq_mean),
        }


def one_step(data: Dataset, beta, theta, score: ScoreFunction) -> OneStepEstimate:
    """Apply the single correction step to a pilot estimate.

    Raises when the residuals vanish (no scale) or when the average score
    derivative is zero to within 1e-12 (degenerate score/data combination).
    """
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != data.p:
        raise ValueError("beta length must equal the number of columns of X")
    theta = _theta_matrix(theta)
    if theta.shape[0] != data.p:
        raise ValueError("theta must be p x p")
    sigma = residual_scale(data, beta)
    A = a_hat(data, beta, sigma, score)
    if abs(A) <= 1e-12:
        raise ValueError("average score derivative is zero; correction undefined")
    r = data.y - data.X @ beta
    scaled = np.asarray(score.psi(r / sigma), dtype=float)
    avg_score = data.X.T @ scaled / data.n
    b = beta + theta @ avg_score / A
    diag = ScoreDiagnostics(
        a_hat=A,
        psi_sq_mean=float(np.mean(scaled * scaled)),
        sigma_hat=sigma,
    )
    return OneStepEstimate(b_psi=b, base_beta=beta.copy(), diagnostics=diag)


# Acklam's rational approximation of the inverse normal cdf, then one Halley
# refinement against erfc; absolute error is at the few-ulp level.
_ACKLAM_A = (
    -3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
    1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00,
)
_ACKLAM_B = (
    -5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
    6.680131188771972e01, -1.328068155288572e01,
)
_ACKLAM_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
    -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00,
)
_ACKLAM_D = (
    7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
    3.754408661907416e00,
)


def _acklam(q: float) -> float:
    a, b, c, d = _ACKLAM_A, _ACKLAM_B, _ACKLAM_C, _ACKLAM_D
    plow = 0.02425
    if q < plow:
        z = math.sqrt(-2.0 * math.log(q))
        return (
            ((((c[0] * z + c[1]) * z + c[2]) * z + c[3]) * z + c[4]) * z + c[5]
        ) / ((((d[0] * z + d[1]) * z + d[2]) * z + d[3]) * z + 1.0)
    if q > 1.0 - plow:
        z = math.sqrt(-2.0 * math.log(1.0 - q))
        return -(
            ((((c[0] * z + c[1]) * z + c[2]) * z + c[3]) * z + c[4]) * z + c[5]
        ) / ((((d[0] * z + d[1]) * z + d[2]) * z + d[3]) * z + 1.0)
    z = q - 0.5
    r = z * z
    return (
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * z
    ) / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)


def normal_quantile(q: float) -> float:
    """Inverse standard normal cdf, accurate to well below 1e-9 on (0, 1)."""
    q = float(q)
    if not (0.0 < q < 1.0):
        raise ValueError("quantile argument must lie strictly between 0 and 1")
    x = _acklam(q)
    # Halley refinement: e = Phi(x) - q, then one correction step
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - q
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


@dataclass
class ConfidenceRegion:
    """Box-shaped region for the coordinates J, with per-coordinate intervals.

    The region is the image of the product box under the map
    s * (Theta_JJ)^(1/2) centered at the corrected estimate; the rendered
    intervals are its coordinate projections, which for a single coordinate
    reduce to center +/- s * sqrt(Theta_jj) * z(1 - alpha/2).
    """

    J: tuple[int, ...]
    alpha: float
    centers: np.ndarray
    half_width_matrix: np.ndarray
    per_coordinate_intervals: list[tuple[float, float]]
    scale_s: float
    a_hat: float
    psi_sq_mean: float

    def to_dict(self, one_based: bool = False) -> dict:
        shift = 1 if one_based else 0
        return {
            "J": [j + shift for j in self.J],
            "alpha": float(self.alpha),
            "centers": [float(c) for c in self.centers],
            "intervals": [[float(lo), float(hi)] for lo, hi in self.per_coordinate_intervals],
            "scale_s": float(self.scale_s),
            "a_hat": float(self.a_hat),
            "psi_sq_mean": float(self.psi_sq_mean),
        }


def confidence_region(
    data: Dataset,
    estimate: OneStepEstimate,
    theta,
    score: ScoreFunction,
    J,
    alpha: float,
) -> ConfidenceRegion:
    """Build the (1 - alpha) region for the coordinates J (0-based).

    The per-coordinate quantile is z((1 + (1-alpha)^(1/m)) / 2), which makes
    the coverage of the m-dimensional product box exactly 1 - alpha under an
    independent standard normal limit.
    """
    J = tuple(sorted({int(j) for j in J}))
    if not J:
        raise ValueError("J must be nonempty")
    if J[0] < 0 or J[-1] >= data.p:
        raise ValueError(f"J indices must lie in [0, {data.p - 1}]")
    m = len(J)
    if m > MAX_REGION_DIM:
        raise ValueError(f"regions are limited to {MAX_REGION_DIM} coordinates")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    theta = _theta_matrix(theta)

    # recompute the diagnostics from the pilot residuals
    base = estimate.base_beta
    sigma = residual_scale(data, base)
    A = a_hat(data, base, sigma, score)
    if abs(A) <= 1e-12:
        raise ValueError("average score derivative is zero")
    r = data.y - data.X @ base
    scaled = np.asarray(score.psi(r / sigma), dtype=float)
    psi_sq_mean = float(np.mean(scaled * scaled))
    s = math.sqrt(psi_sq_mean) / (A * math.sqrt(data.n))

    block = theta[np.ix_(J, J)]
    block = (block + block.T) / 2.0
    evals, evecs = np.linalg.eigh(block)
    if evals.min() < -1e-10:
        raise ValueError("theta_JJ has a negative eigenvalue beyond tolerance")
    root = evecs @ np.diag(np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T
    half_width = s * root

    q_box = normal_quantile((1.0 + (1.0 - alpha) ** (1.0 / m)) / 2.0)
    centers = np.asarray([estimate.b_psi[j] for j in J])
    radii = q_box * np.abs(half_width).sum(axis=1)
    intervals = [(float(c - rad), float(c + rad)) for c, rad in zip(centers, radii)]

    return ConfidenceRegion(
        J=J,
        alpha=float(alpha),
        centers=centers,
        half_width_matrix=half_width,
        per_coordinate_intervals=intervals,
        scale_s=float(s),
        a_hat=float(A),
        psi_sq_mean=psi_sq_mean,
    )


def _integrate(fn, quad_tol: float) -> float:
    val, err = quad(fn, -np.inf, np.inf, epsabs=1e-13, epsrel=quad_tol, limit=300)
    if not math.isfinite(val) or err > 10 * max(1e-12, quad_tol * abs(val)):
        raise RuntimeError("quadrature failed to converge")
    return val


def _variance_pair(f, fprime, psi, psi_prime, quad_tol: float) -> tuple[float, float]:
    def fisher_integrand(t):
        ft = f(t)
        return fprime(t) ** 2 / ft if ft > 0.0 else 0.0  # tails may underflow to 0

    v1 = 1.0 / _integrate(fisher_integrand, quad_tol)
    num = _integrate(lambda t: psi(t) ** 2 * f(t), quad_tol)
    den = _integrate(lambda t: psi_prime(t) * f(t), quad_tol)
    return v1, num / den**2


def efficiency_identity_check(df: int, quad_tol: float = 1e-9) -> tuple[float, float]:
    """Two routes to the asymptotic variance of the efficient score, by quadrature.

    For the Student-t density f with ``df`` degrees of freedom (unit scale),
    returns (v1, v2) with v1 the reciprocal Fisher information of the location
    family and v2 = E[psi^2] / E[psi']^2 for psi = -f'/f. The two agree
    analytically; for df = 3 both equal 3/2.
    """
    if int(df) != df or df < 3:
        raise ValueError("df must be an integer >= 3")
    df = int(df)
    const = math.gamma((df + 1) / 2.0) / (math.sqrt(df * math.pi) * math.gamma(df / 2.0))

    def f(t):
        return const * (1.0 + t * t / df) ** (-(df + 1) / 2.0)

    def fprime(t):
        return -const * (df + 1) * t / df * (1.0 + t * t / df) ** (-(df + 3) / 2.0)

    def psi(t):
        return (df + 1) * t / (df + t * t)

    def psi_prime(t):
        return (df + 1) * (df - t * t) / (df + t * t) ** 2

    return _variance_pair(f, fprime, psi, psi_prime, quad_tol)
