"""Dense symmetric linear algebra used by every estimator in the package.

Covariances are normalised by ``1/T``. GMV weights and the eigenvalue QP are
invariant to a global rescaling, so the choice only changes reported levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "CovarianceMatrix",
    "DimensionError",
    "EigenSystem",
    "ReturnsPanel",
    "SingularityError",
    "ValidationError",
    "compute_covariance",
    "eigendecompose",
    "frobenius_cost",
    "inverse_rie",
    "pseudo_inverse",
    "reconstruct_rie",
]

DEFAULT_RANK_TOL = 1e-10
SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10


class ValidationError(ValueError):
    """Input violates a documented invariant."""


class DimensionError(ValidationError):
    """Shapes are incompatible or too small."""


class SingularityError(ValidationError):
    """A requested inverse does not exist."""


def _as_matrix(values) -> NDArray[np.float64]:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {arr.shape}")
    return arr


def _check_symmetric(arr: NDArray[np.float64], tol: float = SYMMETRY_TOL) -> None:
    scale = max(float(np.max(np.abs(arr))), np.finfo(float).tiny) if arr.size else 1.0
    if np.max(np.abs(arr - arr.T), initial=0.0) > tol * scale:
        raise ValidationError("matrix is not symmetric within tolerance")


@dataclass(frozen=True, eq=False)
class ReturnsPanel:
    """T x n daily returns with a date axis and asset identifiers.

    Missing cells are stored as NaN until :func:`rie_gmv.data.filter_universe`
    cleans them. ``chronological`` is False only for panels whose rows were
    shuffled by stationarization.
    """

    values: NDArray[np.float64]
    dates: NDArray
    assets: tuple[str, ...]
    chronological: bool = True

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionError("returns must be a 2-D array")
        t, n = values.shape
        if t < 2 or n < 2:
            raise DimensionError(f"panel needs at least 2 rows and 2 assets, got {t}x{n}")
        if np.isinf(values).any():
            raise ValidationError("returns contain infinite values")
        dates = np.asarray(self.dates)
        if dates.shape != (t,):
            raise DimensionError(f"expected {t} dates, got {dates.shape}")
        assets = tuple(str(a) for a in self.assets)
        if len(assets) != n:
            raise DimensionError(f"expected {n} asset ids, got {len(assets)}")
        if len(set(assets)) != n:
            raise ValidationError("asset identifiers must be unique")
        if self.chronological:
            if t > 1 and not np.all(dates[1:] > dates[:-1]):
                raise ValidationError("dates must be strictly increasing")
        elif len(np.unique(dates)) != t:
            raise ValidationError("dates must be unique")
        values.setflags(write=False)
        dates = dates.copy()
        dates.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "assets", assets)

    @property
    def n_days(self) -> int:
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())

    def rows(self, start: int, stop: int) -> "ReturnsPanel":
        return ReturnsPanel(self.values[start:stop], self.dates[start:stop], self.assets, self.chronological)

    def select(self, columns) -> "ReturnsPanel":
        idx = np.asarray(columns, dtype=int)
        return ReturnsPanel(
            self.values[:, idx], self.dates, tuple(self.assets[i] for i in idx), self.chronological
        )


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Symmetric PSD matrix in return-squared units."""

    values: NDArray[np.float64]
    sample_size: int = 0
    check_psd: bool = field(default=True, repr=False)

    def __post_init__(self) -> None:
        arr = _as_matrix(self.values)
        if not np.isfinite(arr).all():
            raise ValidationError("covariance contains non-finite entries")
        _check_symmetric(arr)
        arr = 0.5 * (arr + arr.T)
        if self.check_psd and arr.size:
            w = np.linalg.eigvalsh(arr)
            if w[0] < -PSD_TOL * max(w[-1], 0.0) - np.finfo(float).tiny:
                raise ValidationError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def scaled(self, factor: float) -> "CovarianceMatrix":
        return CovarianceMatrix(self.values * factor, self.sample_size, self.check_psd)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenvalues sorted descending with orthonormal eigenvector columns."""

    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]

    def __post_init__(self) -> None:
        lam = np.array(self.eigenvalues, dtype=np.float64)
        vec = _as_matrix(self.eigenvectors)
        if lam.shape != (vec.shape[0],):
            raise DimensionError("eigenvalue count does not match eigenvector basis")
        _check_orthonormal(vec)
        lam.setflags(write=False)
        vec.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenvectors", vec)

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


def _check_orthonormal(vec: NDArray[np.float64], tol: float = 1e-10) -> None:
    gram = vec.T @ vec
    if np.max(np.abs(gram - np.eye(vec.shape[0])), initial=0.0) > tol:
        raise ValidationError("eigenvector basis is not orthonormal")


def compute_covariance(panel: ReturnsPanel | NDArray[np.float64], demean: bool = True) -> CovarianceMatrix:
    """Sample covariance ``X'X / T`` of a clean panel (optionally demeaned)."""
    x = panel.values if isinstance(panel, ReturnsPanel) else np.asarray(panel, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DimensionError("covariance needs at least 2 observations")
    if not np.isfinite(x).all():
        raise ValidationError("panel contains missing or non-finite values; filter it first")
    if demean:
        x = x - x.mean(axis=0, keepdims=True)
    cov = x.T @ x / x.shape[0]
    return CovarianceMatrix(0.5 * (cov + cov.T), sample_size=x.shape[0])


def _fix_signs(vec: NDArray[np.float64]) -> NDArray[np.float64]:
    # largest-|entry| of each column positive; argmax picks the lowest index on ties
    pivots = np.argmax(np.abs(vec), axis=0)
    signs = np.sign(vec[pivots, np.arange(vec.shape[1])])
    signs[signs == 0] = 1.0
    return vec * signs


def eigendecompose(cov: CovarianceMatrix | NDArray[np.float64]) -> EigenSystem:
    """Symmetric eigendecomposition with descending eigenvalues.

    Eigenvectors follow a fixed sign convention so identical input always yields
    identical output.
    """
    arr = cov.values if isinstance(cov, CovarianceMatrix) else _as_matrix(cov)
    _check_symmetric(arr)
    lam, vec = np.linalg.eigh(0.5 * (arr + arr.T))
    order = np.argsort(-lam, kind="stable")
    return EigenSystem(lam[order], _fix_signs(vec[:, order]))


def _basis_and_lambdas(eigvecs, lambdas) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    vec = eigvecs.eigenvectors if isinstance(eigvecs, EigenSystem) else _as_matrix(eigvecs)
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.shape != (vec.shape[1],):
        raise DimensionError(f"need {vec.shape[1]} eigenvalues, got {lam.shape}")
    if not np.isfinite(lam).all():
        raise ValidationError("eigenvalues must be finite")
    return vec, lam


def reconstruct_rie(eigvecs, lambdas) -> CovarianceMatrix:
    """Rebuild ``sum_k lambda_k v_k v_k'`` on a fixed orthonormal basis."""
    vec, lam = _basis_and_lambdas(eigvecs, lambdas)
    if (lam < 0).any():
        raise ValidationError("filtered eigenvalues must be nonnegative")
    _check_orthonormal(vec)
    out = (vec * lam) @ vec.T
    return CovarianceMatrix(0.5 * (out + out.T), check_psd=False)


def inverse_rie(eigvecs, lambdas) -> CovarianceMatrix:
    """Precision matrix ``sum_k v_k v_k' / lambda_k``."""
    vec, lam = _basis_and_lambdas(eigvecs, lambdas)
    if (lam <= 0).any():
        bad = np.flatnonzero(lam <= 0).tolist()
        raise SingularityError(f"nonpositive eigenvalues at indices {bad}")
    _check_orthonormal(vec)
    out = (vec / lam) @ vec.T
    return CovarianceMatrix(0.5 * (out + out.T), check_psd=False)


def spectral_pseudo_inverse(eig: EigenSystem, lambdas=None, rank_tol: float = DEFAULT_RANK_TOL) -> CovarianceMatrix:
    """Pseudo-inverse of ``V diag(lambdas) V'``; reciprocals below ``rank_tol * max`` are zeroed."""
    lam = eig.eigenvalues if lambdas is None else np.asarray(lambdas, dtype=np.float64)
    vec = eig.eigenvectors
    inv = np.zeros_like(lam)
    top = float(np.max(lam, initial=0.0))
    keep = lam > rank_tol * top
    inv[keep] = 1.0 / lam[keep]
    out = (vec * inv) @ vec.T
    return CovarianceMatrix(0.5 * (out + out.T), check_psd=False)


def pseudo_inverse(cov: CovarianceMatrix, rank_tol: float = DEFAULT_RANK_TOL) -> CovarianceMatrix:
    """Moore-Penrose inverse of a symmetric PSD matrix via its eigendecomposition."""
    return spectral_pseudo_inverse(eigendecompose(cov), rank_tol=rank_tol)


def frobenius_cost(a: CovarianceMatrix, b: CovarianceMatrix) -> float:
    """Element-wise sum of squared differences."""
    x = a.values if isinstance(a, CovarianceMatrix) else np.asarray(a, dtype=np.float64)
    y = b.values if isinstance(b, CovarianceMatrix) else np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.sum((x - y) ** 2))
