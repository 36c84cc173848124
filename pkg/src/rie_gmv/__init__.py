"""Rotationally invariant covariance estimators for global minimum variance portfolios.

Compares the sample spectrum, Oracle eigenvalues and eigenvalues chosen by a
convex QP to minimise realized GMV variance directly.
"""

from .data import WindowPair, filter_universe, load_returns_csv, sample_window_pair, stationarize
from .experiment import ExperimentConfig, TrialRecord, aggregate_and_emit, run_sweep, run_trial
from .portfolio import PortfolioWeights, annualized_volatility, gmv_weights, realized_variance
from .qp import (
    QpProblem,
    QpSolution,
    SolverOptions,
    brute_force_min,
    build_reduced_qp,
    extract_filtered_eigenvalues,
    solve_qp,
)
from .rie import RieSpec, oracle_eigenvalues, oracle_rie, sample_rie
from .spectral import (
    CovarianceMatrix,
    EigenSystem,
    ReturnsPanel,
    compute_covariance,
    eigendecompose,
    frobenius_cost,
    inverse_rie,
    pseudo_inverse,
    reconstruct_rie,
)
from .synth import MarketModel, generate_returns, population_covariance

__version__ = "0.1.0"
