"""GMV weights from a precision matrix and realized-risk evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .spectral import CovarianceMatrix, DimensionError, ValidationError, _check_symmetric

__all__ = [
    "DegenerateNormalizationError",
    "PortfolioWeights",
    "TRADING_DAYS",
    "annualized_volatility",
    "gmv_weights",
    "realized_variance",
]

TRADING_DAYS = 252


class DegenerateNormalizationError(ValidationError):
    """The precision matrix sums to zero, so weights cannot be normalised."""


@dataclass(frozen=True, eq=False)
class PortfolioWeights:
    weights: NDArray[np.float64]
    method: str = ""

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 1 or not np.isfinite(w).all():
            raise ValidationError("weights must be a finite vector")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError(f"weights sum to {w.sum()!r}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def normalize(raw: NDArray[np.float64], method: str = "") -> PortfolioWeights:
    total = float(np.sum(raw))
    scale = float(np.sum(np.abs(raw)))
    if scale == 0.0 or abs(total) <= 1e-14 * max(scale, 1.0) or abs(total) <= 1e-300:
        raise DegenerateNormalizationError("weights cannot be normalised to sum 1")
    w = raw / total
    # push the residual rounding into the largest position
    w[np.argmax(np.abs(w))] += 1.0 - w.sum()
    return PortfolioWeights(w, method)


def gmv_weights(precision: CovarianceMatrix | NDArray[np.float64], method: str = "") -> PortfolioWeights:
    """Row sums of the precision matrix, normalised to sum to one."""
    p = precision.values if isinstance(precision, CovarianceMatrix) else np.asarray(precision, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise DimensionError("precision must be square")
    _check_symmetric(p, tol=1e-9)
    return normalize(p.sum(axis=1), method)


def realized_variance(w: PortfolioWeights | NDArray[np.float64], sigma_out: CovarianceMatrix) -> float:
    x = w.weights if isinstance(w, PortfolioWeights) else np.asarray(w, dtype=np.float64)
    s = sigma_out.values
    if s.shape != (x.size, x.size):
        raise DimensionError(f"{x.size} weights against a {s.shape} covariance")
    return max(float(x @ s @ x), 0.0)


def annualized_volatility(daily_variance: float) -> float:
    if daily_variance < 0:
        raise ValidationError("variance must be nonnegative")
    return float(np.sqrt(TRADING_DAYS * daily_variance))
