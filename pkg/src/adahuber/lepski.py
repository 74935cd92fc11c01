"""Adaptive choice of the Huber parameter by pairwise grid comparison.

The penalized Huber estimator is fit at tau = 3 * sigma_j for every grid scale
sigma_j; the selected index is the smallest one whose estimate agrees, in both
l2 and l1, with every estimate at a larger scale, up to thresholds growing
linearly in the larger scale:

    ||beta_i - beta_j||_2 <= 6  * C * sigma_i * sqrt(k log(p) / n)
    ||beta_i - beta_j||_1 <= 24 * C * sigma_i * k * sqrt(log(p) / n)
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset
from .huber import Estimate, HuberConfig, fit_huber
from .scale import MoMConfig, ScaleGrid, default_grid_depth, sigma_bounds

__all__ = [
    "Comparison",
    "LepskiConfig",
    "LepskiResult",
    "SelectionError",
    "select",
    "adaptive_fit",
]

TAU_MULTIPLIER = 3.0  # tau = 3 * sigma_j at each grid point


class SelectionError(RuntimeError):
    """No grid index passed every pairwise agreement test."""


@dataclass(frozen=True)
class Comparison:
    """One logged pairwise test between grid indices j < i."""

    j: int
    i: int
    l2: float
    l1: float
    l2_threshold: float
    l1_threshold: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "j": self.j,
            "i": self.i,
            "l2": self.l2,
            "l1": self.l1,
            "l2_threshold": self.l2_threshold,
            "l1_threshold": self.l1_threshold,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class LepskiConfig:
    """Comparison constant C, sparsity level k, grid controls, solver template.

    The template's tau is ignored; each grid fit uses tau = 3 * sigma_j.
    M=None resolves to ceil(2 * n^(1/3)); an explicit grid overrides both.
    With fallback=True a failed selection returns the largest grid index with
    a warning instead of raising.
    """

    C: float = 20.0
    k: int = 1
    M: int | None = None
    huber_template: HuberConfig = field(default_factory=HuberConfig)
    grid: ScaleGrid | None = None
    fallback: bool = False

    def __post_init__(self):
        if not (self.C > 0):
            raise ValueError("C must be positive")
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.M is not None and self.M < 1:
            raise ValueError("M must be at least 1")


@dataclass
class LepskiResult:
    """Selected index and estimate plus the full audit trail."""

    j_star: int | None
    beta: np.ndarray | None
    per_grid: list[tuple[float, Estimate]]
    comparison_log: list[Comparison]
    fallback_used: bool = False

    def sigmas(self) -> list[float]:
        return [s for s, _ in self.per_grid]

    def to_dict(self) -> dict:
        return {
            "j_star": self.j_star,
            "beta": None if self.beta is None else [float(v) for v in self.beta],
            "fallback_used": self.fallback_used,
            "per_grid": [
                {"sigma": float(s), **est.to_dict()} for s, est in self.per_grid
            ],
            "comparison_log": [c.to_dict() for c in self.comparison_log],
        }

    def grid_csv_rows(self) -> list[tuple[float, float, float]]:
        """(sigma_j, l2 distance to the selected beta, objective) per grid point."""
        rows = []
        for s, est in self.per_grid:
            dist = math.nan if self.beta is None else float(np.linalg.norm(est.beta - self.beta))
            rows.append((float(s), dist, est.objective_final))
        return rows


def select(estimates, cfg: LepskiConfig, n: int, p: int, fallback: bool | None = None) -> LepskiResult:
    """Pick the smallest grid index consistent with all larger-scale estimates.

    ``estimates`` is a list of (sigma_j, beta_j) ordered by increasing sigma;
    returned indices are 1-based positions in that list, which coincide with
    the dyadic grid indices when the list covers the full grid. Every pair
    (j, i), i > j, is logged whether or not it decides the selection. An
    estimate with non-finite entries can never be selected.
    """
    if len(estimates) == 0:
        raise ValueError("empty grid: nothing to select from")
    if n < 2 or p < 2:
        raise ValueError("selection thresholds require n >= 2 and p >= 2")
    if fallback is None:
        fallback = cfg.fallback
    sig = np.asarray([s for s, _ in estimates], dtype=float)
    if np.any(np.diff(sig) <= 0):
        raise ValueError("estimates must be ordered by strictly increasing sigma")
    betas = [np.asarray(b, dtype=float).ravel() for _, b in estimates]

    m = len(betas)
    root_l2 = math.sqrt(cfg.k * math.log(p) / n)
    root_l1 = cfg.k * math.sqrt(math.log(p) / n)
    usable = [bool(np.isfinite(b).all()) for b in betas]
    qualifies = list(usable)
    log: list[Comparison] = []
    for j in range(m):
        for i in range(j + 1, m):
            diff = betas[i] - betas[j]
            l2 = float(np.linalg.norm(diff))
            l1 = float(np.abs(diff).sum())
            t2 = 6.0 * cfg.C * sig[i] * root_l2
            t1 = 24.0 * cfg.C * sig[i] * root_l1
            passed = bool(l2 <= t2 and l1 <= t1)
            log.append(Comparison(j + 1, i + 1, l2, l1, t2, t1, passed))
            if not passed:
                qualifies[j] = False

    j_star = next((j + 1 for j in range(m) if qualifies[j]), None)
    fallback_used = False
    if j_star is None and fallback:
        warnings.warn(
            "no grid index passed all agreement tests; falling back to the largest scale",
            RuntimeWarning,
            stacklevel=2,
        )
        j_star = m
        fallback_used = True
    beta = None if j_star is None else betas[j_star - 1]
    return LepskiResult(j_star, beta, [], log, fallback_used=fallback_used)


def adaptive_fit(data: Dataset, lep: LepskiConfig, mom: MoMConfig) -> LepskiResult:
    """Bracket the scale, fit the Huber estimator across the grid, and select.

    Grid fits run in increasing sigma order, each warm-started from the
    previous solution (pure warm start; per-point results are unchanged
    contracts). Non-converged fits are kept, flagged, and still compared.
    Raises SelectionError when nothing qualifies and fallback is off.
    """
    n, p = data.X.shape
    grid = lep.grid
    if grid is None:
        depth = lep.M if lep.M is not None else default_grid_depth(n)
        grid = sigma_bounds(data.y, mom, depth)

    per_grid: list[tuple[float, Estimate]] = []
    init = None
    for s in grid.sigmas:
        cfg = replace(lep.huber_template, tau=TAU_MULTIPLIER * float(s))
        est = fit_huber(data, cfg, init=init)
        per_grid.append((float(s), est))
        init = est.beta

    result = select([(s, est.beta) for s, est in per_grid], lep, n, p)
    result.per_grid = per_grid
    if result.j_star is None:
        raise SelectionError(
            "no grid index passed all pairwise agreement tests "
            f"({len(result.comparison_log)} comparisons logged); "
            "rerun with fallback enabled to accept the largest scale"
        )
    return result
