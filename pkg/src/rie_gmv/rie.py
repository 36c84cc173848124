"""Benchmark eigenvalue filters sharing the in-sample eigenvector basis."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .spectral import (
    CovarianceMatrix,
    DimensionError,
    EigenSystem,
    ValidationError,
    _check_orthonormal,
    reconstruct_rie,
)

__all__ = ["RieSpec", "oracle_eigenvalues", "oracle_rie", "sample_rie"]

Method = Literal["sample", "oracle", "qp_optimal", "qp_optimal_sorted"]
METHODS: tuple[str, ...] = ("sample", "oracle", "qp_optimal", "qp_optimal_sorted")


@dataclass(frozen=True, eq=False)
class RieSpec:
    basis: NDArray[np.float64]
    lambdas: NDArray[np.float64]
    label: Method

    def __post_init__(self) -> None:
        basis = np.array(self.basis, dtype=np.float64)
        lambdas = np.array(self.lambdas, dtype=np.float64)
        if basis.ndim != 2 or lambdas.shape != (basis.shape[1],):
            raise DimensionError("basis and eigenvalue vector disagree in size")
        _check_orthonormal(basis)
        if not np.isfinite(lambdas).all() or (lambdas < 0).any():
            raise ValidationError("RIE eigenvalues must be finite and nonnegative")
        if self.label not in METHODS:
            raise ValidationError(f"unknown method label {self.label!r}")
        basis.setflags(write=False)
        lambdas.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "lambdas", lambdas)

    def covariance(self) -> CovarianceMatrix:
        return reconstruct_rie(self.basis, self.lambdas)


def oracle_eigenvalues(eig_in: EigenSystem, sigma_out: CovarianceMatrix) -> NDArray[np.float64]:
    """Quadratic forms ``v_k' Sigma_out v_k``, kept in in-sample eigenvector order."""
    v = eig_in.eigenvectors
    s = sigma_out.values
    if s.shape != v.shape:
        raise DimensionError(f"basis is {v.shape}, out-of-sample covariance is {s.shape}")
    lam = np.einsum("ik,ij,jk->k", v, s, v)
    # PSD quadratic forms; clip round-off only
    return np.maximum(lam, 0.0)


def sample_rie(eig_in: EigenSystem) -> RieSpec:
    return RieSpec(eig_in.eigenvectors, np.maximum(eig_in.eigenvalues, 0.0), "sample")


def oracle_rie(eig_in: EigenSystem, sigma_out: CovarianceMatrix) -> RieSpec:
    return RieSpec(eig_in.eigenvectors, oracle_eigenvalues(eig_in, sigma_out), "oracle")
