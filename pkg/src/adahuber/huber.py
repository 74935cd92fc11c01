"""Weighted l1-penalized Huber regression via composite (proximal) gradient descent.

The estimator minimizes

    (1/n) sum_i rho_tau((x_i'beta - y_i) * w_i) * w_i  +  lam * tau * ||beta||_1,

where rho_tau is the Huber function and w_i = min(1, b / ||B x_i||_2) caps the
influence of high-leverage rows. The solver iterates

    beta <- soft_threshold(beta - grad / eta, lam * tau / eta)

with eta either fixed or backtracked from a power-iteration curvature bound,
and certifies the result through a first-order (KKT) residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset

__all__ = [
    "WeightSpec",
    "FixedStep",
    "BacktrackingStep",
    "HuberConfig",
    "Estimate",
    "huber_loss",
    "huber_deriv",
    "weight",
    "soft_threshold",
    "objective",
    "gradient",
    "kkt_check",
    "fit_huber",
    "default_lambda",
    "curvature_bound",
]


@dataclass(frozen=True)
class WeightSpec:
    """Leverage weights w(x) = min(1, b / ||B x||_2); B=None means identity.

    With B symmetric positive definite, ||w(x) x||_2 <= b / lambda_min(B),
    exposed as b_prime().
    """

    b: float = 1.0
    B: np.ndarray | None = None

    def __post_init__(self):
        if not (self.b > 0):
            raise ValueError("b must be positive")
        if self.B is not None:
            B = np.asarray(self.B, dtype=float)
            if B.ndim != 2 or B.shape[0] != B.shape[1]:
                raise ValueError("B must be a square matrix")
            if not np.allclose(B, B.T, atol=1e-12):
                raise ValueError("B must be symmetric")
            if np.linalg.eigvalsh(B)[0] <= 0:
                raise ValueError("B must be positive definite")
            B = B.copy()
            B.flags.writeable = False
            object.__setattr__(self, "B", B)

    def b_prime(self) -> float:
        if self.B is None:
            return float(self.b)
        return float(self.b / np.linalg.eigvalsh(self.B)[0])


@dataclass(frozen=True)
class FixedStep:
    """Constant inverse step size eta (the update divides the gradient by eta)."""

    eta: float

    def __post_init__(self):
        if not (self.eta > 0):
            raise ValueError("eta must be positive")


@dataclass(frozen=True)
class BacktrackingStep:
    """Backtracking line search on the inverse step size.

    Starts from eta0 (or, when None, a curvature bound for the smooth part
    estimated by 50 power-iteration steps) and divides the step by ``shrink``
    until the proximal sufficient-decrease inequality holds.
    """

    eta0: float | None = None
    shrink: float = 0.5

    def __post_init__(self):
        if self.eta0 is not None and not (self.eta0 > 0):
            raise ValueError("eta0 must be positive")
        if not (0 < self.shrink < 1):
            raise ValueError("shrink must lie in (0, 1)")


@dataclass(frozen=True)
class HuberConfig:
    """Solver configuration: transition parameter tau, penalty lam, weights, step rule.

    lam=None resolves to 0.005 * b_prime * sqrt(log(p) / n) at fit time.
    Stopping requires both a relative objective decrease below ``tol`` and a
    KKT residual below ``kkt_tol``; otherwise the fit runs to ``max_iter`` and
    comes back flagged, never silently.
    """

    tau: float | None = None
    lam: float | None = None
    weights: WeightSpec = field(default_factory=WeightSpec)
    step: FixedStep | BacktrackingStep = field(default_factory=BacktrackingStep)
    tol: float = 1e-10
    kkt_tol: float = 1e-8
    max_iter: int = 20_000

    def __post_init__(self):
        if self.tau is not None and not (self.tau > 0):
            raise ValueError("tau must be positive")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not (self.tol > 0):
            raise ValueError("tol must be positive")
        if not (self.kkt_tol > 0):
            raise ValueError("kkt_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class Estimate:
    """Solver output: coefficients plus an auditable convergence record."""

    beta: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    kkt_residual: float

    @property
    def objective_final(self) -> float:
        return float(self.objective_trace[-1])

    def to_dict(self) -> dict:
        return {
            "beta": [float(v) for v in self.beta],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "kkt_residual": float(self.kkt_residual),
            "objective_final": self.objective_final,
        }


def default_lambda(n: int, p: int, b_prime: float = 1.0) -> float:
    """Default penalty level 0.005 * b_prime * sqrt(log(p) / n)."""
    return 0.005 * b_prime * math.sqrt(math.log(p) / n)


def huber_loss(u, tau: float):
    """Quadratic for |u| <= tau, linear tau*|u| - tau^2/2 beyond; vectorized."""
    if not (tau > 0):
        raise ValueError("tau must be positive")
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    out = np.where(au <= tau, 0.5 * u * u, tau * au - 0.5 * tau * tau)
    return float(out) if out.ndim == 0 else out


def huber_deriv(u, tau: float):
    """Derivative of huber_loss: u clipped to [-tau, tau]."""
    if not (tau > 0):
        raise ValueError("tau must be positive")
    out = np.clip(np.asarray(u, dtype=float), -tau, tau)
    return float(out) if out.ndim == 0 else out


def weight(x: np.ndarray, spec: WeightSpec) -> float:
    """w(x) = min(1, b / ||B x||_2); returns 1 when B x = 0."""
    x = np.asarray(x, dtype=float).ravel()
    if spec.B is not None and spec.B.shape[0] != x.shape[0]:
        raise ValueError("dimension mismatch between x and B")
    Bx = x if spec.B is None else spec.B @ x
    nrm = float(np.linalg.norm(Bx))
    if nrm == 0.0:
        return 1.0
    return min(1.0, spec.b / nrm)


def row_weights(X: np.ndarray, spec: WeightSpec) -> np.ndarray:
    """Vector of w(x_i) over the rows of X."""
    if spec.B is None:
        norms = np.linalg.norm(X, axis=1)
    else:
        if spec.B.shape[0] != X.shape[1]:
            raise ValueError("dimension mismatch between X and B")
        norms = np.linalg.norm(X @ spec.B, axis=1)  # B symmetric, so X B = (B x_i)' rows
    w = np.ones(X.shape[0])
    nz = norms > 0
    w[nz] = np.minimum(1.0, spec.b / norms[nz])
    return w


def soft_threshold(v, t: float):
    """Componentwise sign(v) * max(|v| - t, 0)."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    v = np.asarray(v, dtype=float)
    out = np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    return float(out) if out.ndim == 0 else out


def _resolve(cfg: HuberConfig, n: int, p: int) -> tuple[float, float]:
    if cfg.tau is None:
        raise ValueError("tau must be set (positive) before fitting")
    lam = cfg.lam if cfg.lam is not None else default_lambda(n, p, cfg.weights.b_prime())
    return float(cfg.tau), float(lam)


def _check_beta(beta, p: int) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != p:
        raise ValueError(f"beta has length {beta.shape[0]}, expected {p}")
    return beta


def objective(beta, data: Dataset, cfg: HuberConfig) -> float:
    """Penalized objective value at beta."""
    beta = _check_beta(beta, data.p)
    tau, lam = _resolve(cfg, data.n, data.p)
    w = row_weights(data.X, cfg.weights)
    u = (data.X @ beta - data.y) * w
    return float(np.mean(huber_loss(u, tau) * w) + lam * tau * np.abs(beta).sum())


def gradient(beta, data: Dataset, cfg: HuberConfig) -> np.ndarray:
    """Gradient of the smooth part only (penalty excluded)."""
    beta = _check_beta(beta, data.p)
    tau, _ = _resolve(cfg, data.n, data.p)
    w = row_weights(data.X, cfg.weights)
    u = (data.X @ beta - data.y) * w
    return data.X.T @ (np.clip(u, -tau, tau) * w * w) / data.n


def kkt_check(beta, data: Dataset, cfg: HuberConfig) -> float:
    """First-order optimality residual of the penalized program at beta.

    Coordinates on the support contribute |grad_j + lam*tau*sign(beta_j)|;
    zero coordinates contribute max(|grad_j| - lam*tau, 0).
    """
    beta = _check_beta(beta, data.p)
    tau, lam = _resolve(cfg, data.n, data.p)
    g = gradient(beta, data, cfg)
    return _kkt_from_grad(beta, g, lam * tau)


def _kkt_from_grad(beta: np.ndarray, g: np.ndarray, thresh: float) -> float:
    on = beta != 0.0
    res = np.maximum(np.abs(g) - thresh, 0.0)
    res[on] = np.abs(g[on] + thresh * np.sign(beta[on]))
    return float(res.max()) if res.size else 0.0


def curvature_bound(X: np.ndarray, w: np.ndarray, iters: int = 50) -> float:
    """Largest eigenvalue of (1/n) X' diag(w^3) X by power iteration.

    This bounds the smooth-part curvature, since the Huber second derivative
    never exceeds one.
    """
    n, p = X.shape
    w3 = w**3
    v = np.full(p, 1.0 / math.sqrt(p))
    lam = 1e-12
    for _ in range(iters):
        z = X.T @ (w3 * (X @ v)) / n
        nz = float(np.linalg.norm(z))
        if nz <= 1e-300:
            return 1e-12
        lam = nz
        v = z / nz
    return max(lam, 1e-12)


def fit_huber(data: Dataset, cfg: HuberConfig, init=None) -> Estimate:
    """Minimize the weighted penalized Huber objective.

    Starts from ``init`` (zero vector when None). Every accepted iterate is
    certified not to increase the objective when backtracking is active; the
    fit stops once the relative objective decrease falls below cfg.tol *and*
    the KKT residual falls below cfg.kkt_tol, or at max_iter with
    converged=False. A non-finite objective raises (data/config pathology).
    """
    X, y = data.X, data.y
    n, p = X.shape
    tau, lam = _resolve(cfg, n, p)
    thresh = lam * tau
    w = row_weights(X, cfg.weights)
    w2 = w * w

    beta = np.zeros(p) if init is None else _check_beta(init, p).copy()

    backtrack = isinstance(cfg.step, BacktrackingStep)
    if backtrack:
        eta = cfg.step.eta0 if cfg.step.eta0 is not None else curvature_bound(X, w)
        shrink = cfg.step.shrink
    else:
        eta = cfg.step.eta
        shrink = None

    def smooth_at(b):
        u = (X @ b - y) * w
        return u, float(np.mean(huber_loss(u, tau) * w))

    u, smooth = smooth_at(beta)
    obj = smooth + thresh * float(np.abs(beta).sum())
    if not math.isfinite(obj):
        raise FloatingPointError("non-finite objective at the starting point")
    trace = [obj]
    converged = False
    kkt = math.inf
    it = 0

    for it in range(1, cfg.max_iter + 1):
        grad = X.T @ (np.clip(u, -tau, tau) * w2) / n
        if backtrack:
            # let the step recover between iterations; the sufficient-decrease
            # test below re-shrinks it whenever the local curvature demands
            eta = max(eta * shrink, 1e-12)
        for _ in range(200):
            cand = soft_threshold(beta - grad / eta, thresh / eta)
            delta = cand - beta
            u_c, smooth_c = smooth_at(cand)
            if not backtrack:
                break
            quad = smooth + float(grad @ delta) + 0.5 * eta * float(delta @ delta)
            if smooth_c <= quad + 1e-15 * max(1.0, abs(quad)):
                break
            eta = eta / shrink
        beta, u, smooth = cand, u_c, smooth_c
        new_obj = smooth + thresh * float(np.abs(beta).sum())
        if not math.isfinite(new_obj):
            raise FloatingPointError(
                f"non-finite objective at iteration {it}; check data scaling and step rule"
            )
        trace.append(new_obj)
        if obj - new_obj <= cfg.tol * max(1.0, abs(obj)):
            g_new = X.T @ (np.clip(u, -tau, tau) * w2) / n
            kkt = _kkt_from_grad(beta, g_new, thresh)
            if kkt <= cfg.kkt_tol:
                converged = True
                obj = new_obj
                break
        obj = new_obj

    if not math.isfinite(kkt) or not converged:
        g_fin = X.T @ (np.clip(u, -tau, tau) * w2) / n
        kkt = _kkt_from_grad(beta, g_fin, thresh)

    return Estimate(
        beta=beta,
        objective_trace=np.asarray(trace),
        iterations=it,
        converged=converged,
        kkt_residual=kkt,
    )
