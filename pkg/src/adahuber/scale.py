"""Rough scale bracketing: median-of-means on y^2, MAD, and the dyadic scale grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MoMConfig",
    "ScaleGrid",
    "median_of_means",
    "sigma_bounds",
    "mad",
    "default_grid_depth",
]


@dataclass(frozen=True)
class MoMConfig:
    """Median-of-means settings: failure tolerance delta, optional group count K.

    When K is None it is derived as floor(8 * log(e^(1/8) / delta)) and capped
    at floor(n/2).
    """

    delta: float = 0.05
    K: int | None = None

    def __post_init__(self):
        if not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")
        if self.K is not None and self.K < 1:
            raise ValueError("K must be a positive integer")

    def groups(self, n: int) -> int:
        if self.K is not None:
            K = int(self.K)
        else:
            K = min(int(math.floor(8.0 * math.log(math.exp(0.125) / self.delta))), n // 2)
        if K < 1:
            raise ValueError(f"cannot form a group from n={n} values")
        if n < K:
            raise ValueError(f"n={n} is smaller than the group count K={K}")
        return K


def median_of_means(values, cfg: MoMConfig) -> float:
    """Median of the K consecutive-block means (trailing remainder discarded).

    Even block counts use the average of the two central order statistics.
    Blocks follow input order, so the estimate is order-dependent by design.
    """
    v = np.asarray(values, dtype=float).ravel()
    K = cfg.groups(v.size)
    N = v.size // K
    block_means = v[: K * N].reshape(K, N).mean(axis=1)
    return float(np.median(block_means))


@dataclass(frozen=True)
class ScaleGrid:
    """Dyadic grid sigma_j = sigma_min * 2^j for j = 1..M.

    sigma_min = sigma_max / 2^M brackets the grid from below but is not itself
    a grid point (the smallest point is 2*sigma_min); the largest point equals
    sigma_max, the last power below 2*sigma_max.
    """

    sigma_min: float
    sigma_max: float
    M: int
    sigmas: np.ndarray
    indices: tuple[int, ...]

    @classmethod
    def build(cls, sigma_max: float, M: int) -> "ScaleGrid":
        if not (sigma_max > 0):
            raise ValueError("sigma_max must be positive")
        if M < 1:
            raise ValueError("grid depth M must be at least 1")
        sigma_min = sigma_max / 2.0**M
        indices = tuple(j for j in range(1, M + 2) if sigma_min * 2.0**j < 2.0 * sigma_max)
        sigmas = sigma_min * 2.0 ** np.asarray(indices, dtype=float)
        sigmas.flags.writeable = False
        return cls(sigma_min=sigma_min, sigma_max=sigma_max, M=M, sigmas=sigmas, indices=indices)

    def to_dict(self) -> dict:
        return {
            "sigma_min": float(self.sigma_min),
            "sigma_max": float(self.sigma_max),
            "M": int(self.M),
            "indices": list(self.indices),
            "sigmas": [float(s) for s in self.sigmas],
        }


def default_grid_depth(n: int) -> int:
    """Default grid depth ceil(2 * n^(1/3))."""
    return int(math.ceil(2.0 * n ** (1.0 / 3.0)))


def sigma_bounds(y, cfg: MoMConfig, M: int) -> ScaleGrid:
    """Bracket the noise scale from the response alone.

    sigma_max^2 = 2 * median_of_means(y^2): the doubled robust second-moment
    estimate exceeds the error variance with high probability, since the
    second moment of y dominates it. sigma_min = sigma_max / 2^M.
    """
    y = np.asarray(y, dtype=float).ravel()
    mom = median_of_means(y * y, cfg)
    if mom <= 0:
        raise ValueError("median of means of y^2 is zero; cannot bracket the scale")
    return ScaleGrid.build(math.sqrt(2.0 * mom), M)


def mad(values) -> float:
    """Median absolute deviation from the median (central pair averaged)."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("mad of an empty sample")
    return float(np.median(np.abs(v - np.median(v))))
