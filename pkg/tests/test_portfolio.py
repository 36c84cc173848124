import numpy as np
import pytest

from rie_gmv.portfolio import (
    DegenerateNormalizationError,
    PortfolioWeights,
    annualized_volatility,
    gmv_weights,
    realized_variance,
)
from rie_gmv.spectral import CovarianceMatrix, DimensionError, ValidationError

from conftest import random_spd


def test_gmv_identity():
    np.testing.assert_allclose(gmv_weights(np.eye(4)).weights, 0.25)


def test_gmv_diagonal():
    np.testing.assert_allclose(gmv_weights(np.diag([2.0, 1.0])).weights, [2 / 3, 1 / 3], atol=1e-15)


def test_gmv_scale_invariance(rng):
    p = np.linalg.inv(random_spd(rng, 5))
    np.testing.assert_allclose(gmv_weights(7.3 * p).weights, gmv_weights(p).weights, atol=1e-14)


def test_gmv_degenerate():
    with pytest.raises(DegenerateNormalizationError):
        gmv_weights(np.array([[1.0, -1.0], [-1.0, 1.0]]))


def test_realized_variance_examples():
    assert realized_variance(np.full(4, 0.25), CovarianceMatrix(np.eye(4))) == pytest.approx(0.25)
    s = CovarianceMatrix(np.array([[3.0, 1.0], [1.0, 2.0]]))
    assert realized_variance(PortfolioWeights([1.0, 0.0]), s) == 3.0
    assert realized_variance([2 / 3, 1 / 3], CovarianceMatrix(np.diag([1.0, 2.0]))) == pytest.approx(2 / 3)
    with pytest.raises(DimensionError):
        realized_variance([0.5, 0.5], CovarianceMatrix(np.eye(3)))


def test_annualized_volatility():
    assert annualized_volatility(0.0) == 0.0
    assert annualized_volatility(1 / 252) == pytest.approx(1.0)
    assert annualized_volatility(4 / 252) == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        annualized_volatility(-1e-3)


def test_weights_must_sum_to_one():
    with pytest.raises(ValidationError):
        PortfolioWeights([0.5, 0.6])


def test_closed_form_gmv_beats_random(rng):
    s = random_spd(rng, 6)
    best = realized_variance(gmv_weights(np.linalg.inv(s)), CovarianceMatrix(s))
    for _ in range(1000):
        w = rng.normal(size=6)
        w /= w.sum()
        assert best <= realized_variance(w, CovarianceMatrix(s)) + 1e-12
