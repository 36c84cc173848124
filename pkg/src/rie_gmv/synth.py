"""Seeded factor-model returns whose loadings drift by random plane rotations.

Each day the loading matrix is rotated by ``loading_drift * (pi/2) / 250``
radians in one pair of asset coordinates, drawn from a fixed seeded pairing
with a fixed sense of rotation, so the drift accumulates instead of
diffusing. The spectrum of
``B B'`` is unchanged; only its eigenvectors move, so ``loading_drift = 0``
gives a stationary market.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .spectral import CovarianceMatrix, ReturnsPanel, ValidationError

__all__ = ["MarketModel", "generate_returns", "population_covariance"]

ROTATION_DAYS = 250
START_DATE = np.datetime64("2000-01-03")


@dataclass(frozen=True)
class MarketModel:
    n_assets: int = 20
    n_factors: int = 3
    loading_drift: float = 0.0
    idio_vol: float | tuple[float, ...] = 0.01
    factor_vol: float | tuple[float, ...] = 0.02
    tail_dof: float = math.inf
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_assets < 2:
            raise ValidationError("need at least 2 assets")
        if not 0 <= self.n_factors < self.n_assets:
            raise ValidationError("n_factors must lie in [0, n_assets)")
        if not 0.0 <= self.loading_drift <= 1.0:
            raise ValidationError("loading_drift must lie in [0, 1]")
        if not (self.tail_dof > 2):
            raise ValidationError("tail_dof must exceed 2 (finite variance)")
        if np.any(self.idio_vols <= 0) or np.any(self.factor_vols <= 0):
            raise ValidationError("volatilities must be positive")

    @property
    def idio_vols(self) -> NDArray[np.float64]:
        return _broadcast(self.idio_vol, self.n_assets, "idio_vol")

    @property
    def factor_vols(self) -> NDArray[np.float64]:
        return _broadcast(self.factor_vol, self.n_factors, "factor_vol")

    @property
    def rotation_angle(self) -> float:
        return self.loading_drift * (math.pi / 2.0) / ROTATION_DAYS


def _broadcast(value, size: int, name: str) -> NDArray[np.float64]:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(size, float(arr))
    if arr.shape != (size,):
        raise ValidationError(f"{name} must be a scalar or have length {size}")
    return arr


def _streams(model: MarketModel):
    structure, shocks = np.random.SeedSequence(model.seed).spawn(2)
    return np.random.default_rng(structure), np.random.default_rng(shocks)


def _initial_loadings(model: MarketModel, rng: np.random.Generator) -> NDArray[np.float64]:
    b = rng.normal(0.0, 0.5, size=(model.n_assets, model.n_factors))
    if model.n_factors:
        # first factor acts as a market mode with mostly positive exposure
        b[:, 0] = rng.normal(1.0, 0.3, size=model.n_assets)
    return b


def _loading_path(model: MarketModel, days: int):
    """Yield the loading matrix for day 0, 1, ..., days - 1."""
    rng, _ = _streams(model)
    b = _initial_loadings(model, rng)
    # fixed seeded pairing of assets; each day rotates one pair drawn at random
    pairs = rng.permutation(model.n_assets)[: 2 * (model.n_assets // 2)].reshape(-1, 2)
    planes = pairs[rng.integers(0, len(pairs), size=days)]
    theta = model.rotation_angle
    cos, sin = math.cos(theta), math.sin(theta)
    for day in range(days):
        yield b
        if theta == 0.0 or model.n_factors == 0:
            continue
        i, j = planes[day]
        b = b.copy()
        bi, bj = b[i].copy(), b[j].copy()
        b[i] = cos * bi - sin * bj
        b[j] = sin * bi + cos * bj


def population_covariance(model: MarketModel, day: int = 0) -> CovarianceMatrix:
    """``B_day diag(factor_vol^2) B_day' + diag(idio_vol^2)``."""
    if day < 0:
        raise ValidationError("day must be nonnegative")
    b = None
    for b in _loading_path(model, day + 1):
        pass
    fv = model.factor_vols
    cov = (b * fv**2) @ b.T + np.diag(model.idio_vols**2)
    return CovarianceMatrix(cov)


def _unit_shocks(rng: np.random.Generator, dof: float, size) -> NDArray[np.float64]:
    if math.isinf(dof):
        return rng.standard_normal(size)
    return rng.standard_t(dof, size) * math.sqrt((dof - 2.0) / dof)


def generate_returns(model: MarketModel, t_days: int) -> ReturnsPanel:
    if t_days < 2:
        raise ValidationError("t_days must be at least 2")
    _, rng = _streams(model)
    f = _unit_shocks(rng, model.tail_dof, (t_days, model.n_factors)) * model.factor_vols
    eps = _unit_shocks(rng, model.tail_dof, (t_days, model.n_assets)) * model.idio_vols
    out = eps
    if model.n_factors:
        if model.loading_drift == 0.0:
            b = next(_loading_path(model, 1))
            out = eps + f @ b.T
        else:
            common = np.empty_like(eps)
            for day, b in enumerate(_loading_path(model, t_days)):
                common[day] = b @ f[day]
            out = eps + common
    dates = START_DATE + np.arange(t_days)
    assets = tuple(f"A{i:03d}" for i in range(model.n_assets))
    return ReturnsPanel(out, dates, assets)
