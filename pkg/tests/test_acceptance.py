"""Exit criteria for the package, one test per criterion.

A PASS/FAIL line per criterion is printed in the pytest terminal summary.
"""

import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from rie_gmv.data import sample_window_pair, stationarize
from rie_gmv.experiment import ExperimentConfig, raw_csv_text, run_sweep
from rie_gmv.portfolio import gmv_weights
from rie_gmv.qp import FullDims, brute_force_min, build_reduced_qp, solve_qp
from rie_gmv.rie import oracle_eigenvalues
from rie_gmv.spectral import (
    CovarianceMatrix,
    ReturnsPanel,
    compute_covariance,
    eigendecompose,
    frobenius_cost,
    reconstruct_rie,
)
from rie_gmv.synth import MarketModel, generate_returns

from conftest import random_pair

criterion = pytest.mark.criterion
DRIFT = 0.5
PROPERTY_CASES = 250  # four suites -> 1000 randomized cases
PROPERTY_TEXT = "1000 property cases: GMV scale invariance, KKT at 1e-8, eigen round trip, stationarize pool"


@pytest.fixture(scope="module")
def dominance_trials():
    model = MarketModel(n_assets=25, loading_drift=DRIFT, seed=101)
    cfg = ExperimentConfig(model=model, t_days=3000, n=20, delta_in_list=(100,), delta_out_list=(30, 100),
                           trials=250, seed=2024)
    start = time.perf_counter()
    records = run_sweep(cfg)
    return records, time.perf_counter() - start


@criterion(1, "solve_qp matches brute_force_min (res 500) on 50 n=3 instances, rel 1e-4, < 10 s")
def test_c01_qp_matches_brute_force():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    for i in range(50):
        # full-rank out-of-sample windows keep the optimum away from zero
        eig, s = random_pair(rng, 3, int(rng.integers(3, 12)), int(rng.integers(5, 15)))
        p = build_reduced_qp(eig, s, ordered=bool(i % 2))
        sol = solve_qp(p)
        brute = brute_force_min(p, 500)
        assert sol.status == "converged"
        assert abs(sol.objective - brute) <= 1e-4 * abs(brute) + 1e-300
    assert time.perf_counter() - start < 10.0


@criterion(2, "per-trial dominance of vol_qp over sorted/oracle/sample on 500 trials, +1e-7, < 2 min")
def test_c02_per_trial_dominance(dominance_trials):
    records, elapsed = dominance_trials
    assert len(records) == 500
    converged = [r for r in records if r.qp_status == "converged" and r.qp_sorted_status == "converged"]
    assert converged
    bad = [r for r in converged if not (r.vol_qp <= r.vol_qp_sorted + 1e-7 and r.vol_qp <= r.vol_oracle + 1e-7
                                        and r.vol_qp <= r.vol_sample + 1e-7)]
    assert bad == []
    assert elapsed < 120.0


@criterion(3, "mean(vol_oracle) < mean(vol_sample) by more than 2 standard errors on the same 500 trials")
def test_c03_oracle_beats_sample(dominance_trials):
    records, _ = dominance_trials
    oracle = np.array([r.vol_oracle for r in records])
    sample = np.array([r.vol_sample for r in records])
    se = np.sqrt(oracle.var(ddof=1) / oracle.size + sample.var(ddof=1) / sample.size)
    assert oracle.mean() < sample.mean() - 2.0 * se


@criterion(4, "Oracle eigenvalues are Frobenius-optimal: 20 instances x 100 perturbations, zero violations")
def test_c04_oracle_frobenius_optimal():
    rng = np.random.default_rng(4)
    violations = 0
    for _ in range(20):
        eig, s = random_pair(rng, 5, int(rng.integers(6, 30)), int(rng.integers(6, 30)))
        lam = oracle_eigenvalues(eig, s)
        best = frobenius_cost(reconstruct_rie(eig, lam), s)
        for _ in range(100):
            mu = np.maximum(lam * (1.0 + rng.uniform(-0.01, 0.01, size=5)), 0.0)
            if not frobenius_cost(reconstruct_rie(eig, mu), s) > best:
                violations += 1
    assert violations == 0


@criterion(5, "n=50: demeaned Sigma_out has exactly n+1-delta_out null eigenvalues for delta_out in {20, 40}")
def test_c05_rank_mechanics():
    panel = generate_returns(MarketModel(n_assets=60, loading_drift=DRIFT, seed=5), 600)
    for delta_out in (20, 40):
        for seed in range(5):
            pair = sample_window_pair(panel, 200, delta_out, 50, seed)
            lam = eigendecompose(compute_covariance(pair.out_sample, demean=True)).eigenvalues
            assert int(np.sum(lam < 1e-10 * lam[0])) == 50 + 1 - delta_out


@criterion(6, "delta_out=25 < n=50: mean(vol_qp) <= 25% of mean(vol_qp_sorted) over 200 trials")
def test_c06_sorted_gap_collapse():
    model = MarketModel(n_assets=60, loading_drift=DRIFT, seed=6)
    cfg = ExperimentConfig(model=model, t_days=2000, n=50, delta_in_list=(200,), delta_out_list=(25,),
                           trials=200, seed=6)
    records = run_sweep(cfg)
    qp = np.mean([r.vol_qp for r in records])
    qp_sorted = np.mean([r.vol_qp_sorted for r in records])
    assert qp <= 0.25 * qp_sorted


@criterion(7, "stationarized, drift 0 shrinks (oracle - qp) gap by >= 50% vs drift 0.5 unshuffled, < 10 min")
def test_c07_stationarization_closes_gap():
    start = time.perf_counter()
    common = dict(t_days=5000, n=20, delta_in_list=(800,), delta_out_list=(800,), trials=200, seed=7)
    stationary = run_sweep(ExperimentConfig(model=MarketModel(n_assets=25, loading_drift=0.0, seed=7),
                                            stationarized=True, **common))
    drifting = run_sweep(ExperimentConfig(model=MarketModel(n_assets=25, loading_drift=DRIFT, seed=7),
                                          stationarized=False, **common))
    gap = lambda recs: np.mean([r.vol_oracle for r in recs]) - np.mean([r.vol_qp for r in recs])
    assert gap(stationary) <= 0.5 * gap(drifting)
    assert time.perf_counter() - start < 600.0


@criterion(8, "full_dims = (1375, 1376) for n = 50")
def test_c08_dimension_fidelity():
    panel = generate_returns(MarketModel(n_assets=60, seed=8), 300)
    pair = sample_window_pair(panel, 150, 100, 50, 0)
    eig = eigendecompose(compute_covariance(pair.in_sample))
    for ordered in (False, True):
        p = build_reduced_qp(eig, compute_covariance(pair.out_sample), ordered)
        assert (p.full_dims.variables, p.full_dims.constraints) == (1375, 1376)
    assert FullDims.for_size(50) == FullDims(1375, 1376)


@criterion(9, "identical sweep configs give byte-identical raw CSVs, serial and parallel")
def test_c09_determinism():
    model = MarketModel(n_assets=15, loading_drift=DRIFT, seed=9)
    cfg = ExperimentConfig(model=model, t_days=800, n=12, delta_in_list=(60, 120), delta_out_list=(10, 40),
                           trials=6, stationarized=True, seed=99)
    first = raw_csv_text(run_sweep(cfg))
    second = raw_csv_text(run_sweep(cfg))
    parallel = raw_csv_text(run_sweep(ExperimentConfig(**{**cfg.__dict__, "workers": 2})))
    assert first == second == parallel


seeds = st.integers(0, 2**32 - 1)
prop = settings(max_examples=PROPERTY_CASES, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@criterion(10, PROPERTY_TEXT)
@prop
@given(seeds, st.integers(2, 15), st.floats(1e-6, 1e6))
def test_c10_gmv_scale_invariance(seed, n, c):
    rng = np.random.default_rng(seed)
    eig, s = random_pair(rng, n, n + int(rng.integers(1, 40)), int(rng.integers(2, 40)))
    precision = (eig.eigenvectors / eig.eigenvalues) @ eig.eigenvectors.T
    w = gmv_weights(precision).weights
    # leveraged weights from ill-conditioned precisions carry proportionally larger round-off
    np.testing.assert_allclose(gmv_weights(c * precision).weights, w, rtol=0, atol=1e-10 * max(1.0, np.abs(w).max()))
    base = solve_qp(build_reduced_qp(eig, s))
    scaled = solve_qp(build_reduced_qp(eig, s.scaled(c)))
    assert scaled.objective == pytest.approx(c * base.objective, rel=1e-8, abs=1e-14 * c * np.abs(s.values).max())
    if base.objective > 1e-10 * np.abs(s.values).max():
        np.testing.assert_allclose(scaled.weights, base.weights, rtol=0, atol=1e-10 * max(1.0, np.abs(base.weights).max()))


@criterion(10, PROPERTY_TEXT)
@prop
@given(seeds, st.integers(2, 30))
def test_c10_kkt_certificate(seed, n):
    rng = np.random.default_rng(seed)
    eig, s = random_pair(rng, n, int(rng.integers(2, 3 * n)), int(rng.integers(2, 3 * n)))
    p = build_reduced_qp(eig, s)
    sol = solve_qp(p)
    assert sol.status == "converged"
    zeta = np.asarray(sol.zeta)
    q, a = p.q_matrix, p.equality_coeffs
    relevant = a > 1e-24 * a.sum()
    z, q, a = zeta[relevant], q[np.ix_(relevant, relevant)], a[relevant]
    tol = 1e-8 * np.abs(q).max()
    grad = 2 * q @ z
    support = z > 0
    nu = (a[support] @ grad[support]) / (a[support] @ a[support])
    r = grad - nu * a
    mu = np.maximum(r, 0.0)
    assert np.max(np.abs(r - mu)) <= tol
    assert np.max(mu * z) <= tol * z.max()
    assert abs(a @ z - 1.0) <= 1e-9 and z.min() >= -1e-12
    assert sol.weights.sum() == pytest.approx(1.0, abs=1e-9)
    # never beaten by random feasible points
    for _ in range(5):
        cand = rng.exponential(size=z.size)
        cand /= a @ cand
        assert cand @ q @ cand >= sol.objective - 1e-8 * np.abs(q).max()
    ordered = solve_qp(build_reduced_qp(eig, s, ordered=True))
    assert ordered.objective >= sol.objective - 1e-9 * max(sol.objective, np.abs(q).max())
    assert np.all(np.diff(ordered.zeta) >= -1e-10) and ordered.zeta.min() >= -1e-12


@criterion(10, PROPERTY_TEXT)
@prop
@given(seeds, st.integers(2, 40), st.floats(-6, 6))
def test_c10_eigen_round_trip(seed, n, log_scale):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) * 10.0**log_scale
    a = a + a.T
    eig = eigendecompose(a)
    v = eig.eigenvectors
    assert np.max(np.abs(v.T @ v - np.eye(n))) <= 1e-10
    assert np.max(np.abs((v * eig.eigenvalues) @ v.T - a)) <= 1e-9 * np.abs(a).max()
    if np.all(eig.eigenvalues >= 0):
        np.testing.assert_allclose(reconstruct_rie(eig, eig.eigenvalues).values, a, atol=1e-9 * np.abs(a).max())


@criterion(10, PROPERTY_TEXT)
@prop
@given(seeds, st.integers(2, 8), st.integers(2, 60), st.integers(2, 60))
def test_c10_stationarize_pool(seed, n, d_in, d_out):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(d_in + d_out, n))
    panel = ReturnsPanel(values, np.datetime64("2010-01-01") + np.arange(d_in + d_out), tuple(map(str, range(n))))
    pair = sample_window_pair(panel, d_in, d_out, n, seed, max_corr=1.1)
    out = stationarize(pair, seed + 1)
    before = np.vstack([pair.in_sample.values, pair.out_sample.values])
    after = np.vstack([out.in_sample.values, out.out_sample.values])
    order = lambda m: m[np.lexsort(m.T[::-1])]
    assert np.array_equal(order(before), order(after))
    assert (out.delta_in, out.delta_out) == (d_in, d_out)
    np.testing.assert_array_equal(np.sort(np.concatenate([out.in_sample.dates, out.out_sample.dates])),
                                  panel.dates)
    pooled = lambda m: CovarianceMatrix(m.T @ m / m.shape[0])
    np.testing.assert_allclose(pooled(after).values, pooled(before).values, rtol=0, atol=1e-13)
