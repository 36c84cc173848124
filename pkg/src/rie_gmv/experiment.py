"""Randomised GMV experiments comparing sample, Oracle and QP-optimal eigenvalues."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import load_returns_csv, sample_window_pair, stationarize
from .portfolio import DegenerateNormalizationError, annualized_volatility, gmv_weights, realized_variance
from .qp import SolverOptions, build_reduced_qp, solve_qp
from .rie import METHODS, oracle_eigenvalues
from .spectral import DEFAULT_RANK_TOL, ReturnsPanel, ValidationError, compute_covariance, eigendecompose, spectral_pseudo_inverse
from .synth import MarketModel, generate_returns

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RAW_COLUMNS",
    "SUMMARY_COLUMNS",
    "TrialRecord",
    "aggregate",
    "aggregate_and_emit",
    "load_source",
    "run_sweep",
    "run_trial",
    "trial_seed",
    "write_raw",
]

SUMMARY_COLUMNS = ("delta_in", "delta_out", "method", "mean_vol", "stderr_vol", "n_trials", "n_failed")
RAW_COLUMNS = (
    "delta_in",
    "delta_out",
    "trial_index",
    "t_index",
    "vol_sample",
    "vol_oracle",
    "vol_qp",
    "vol_qp_sorted",
    "qp_status",
    "qp_sorted_status",
)
DEFAULT_T_DAYS = 5000


class ConfigError(ValidationError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep. ``data_path`` wins over ``model`` when both are given."""

    data_path: str | None = None
    model: MarketModel = field(default_factory=MarketModel)
    t_days: int = DEFAULT_T_DAYS
    n: int = 50
    delta_in_list: tuple[int, ...] = (200, 1000, 2000)
    delta_out_list: tuple[int, ...] = (20, 40, 60, 100, 250, 500, 1000)
    trials: int = 10_000
    stationarized: bool = False
    seed: int = 0
    output_path: str = "results.csv"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if not self.delta_in_list or not self.delta_out_list:
            raise ConfigError("delta lists must be nonempty")
        if min(self.delta_in_list) < 2 or min(self.delta_out_list) < 2:
            raise ConfigError("all window lengths must be at least 2")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")


@dataclass(frozen=True)
class TrialRecord:
    delta_in: int
    delta_out: int
    trial_index: int
    t_index: int
    vol_sample: float
    vol_oracle: float
    vol_qp: float
    vol_qp_sorted: float
    qp_status: str
    qp_sorted_status: str

    def vol(self, method: str) -> float:
        return {
            "sample": self.vol_sample,
            "oracle": self.vol_oracle,
            "qp_optimal": self.vol_qp,
            "qp_optimal_sorted": self.vol_qp_sorted,
        }[method]

    def failed(self, method: str) -> bool:
        if method == "qp_optimal":
            return self.qp_status != "converged"
        if method == "qp_optimal_sorted":
            return self.qp_sorted_status != "converged"
        return not math.isfinite(self.vol(method))


def _precision_vol(eig, lambdas, sigma_out) -> float:
    try:
        w = gmv_weights(spectral_pseudo_inverse(eig, lambdas, DEFAULT_RANK_TOL))
    except DegenerateNormalizationError:
        return math.nan
    return annualized_volatility(realized_variance(w, sigma_out))


def run_trial(pair, delta_in: int | None = None, delta_out: int | None = None, trial_index: int = 0,
              opts: SolverOptions | None = None) -> TrialRecord:
    """Evaluate the four GMV estimators on one window pair.

    Precision matrices are pseudo-inverses, so eigenvalues below the rank
    tolerance (short windows) contribute nothing instead of failing.
    """
    sigma_in = compute_covariance(pair.in_sample, demean=True)
    sigma_out = compute_covariance(pair.out_sample, demean=True)
    eig = eigendecompose(sigma_in)
    vol_sample = _precision_vol(eig, eig.eigenvalues, sigma_out)
    vol_oracle = _precision_vol(eig, oracle_eigenvalues(eig, sigma_out), sigma_out)
    vols = []
    statuses = []
    for ordered in (False, True):
        sol = solve_qp(build_reduced_qp(eig, sigma_out, ordered), opts)
        statuses.append(sol.status)
        vols.append(annualized_volatility(sol.objective) if sol.status != "infeasible" else math.nan)
    return TrialRecord(
        delta_in=pair.delta_in if delta_in is None else delta_in,
        delta_out=pair.delta_out if delta_out is None else delta_out,
        trial_index=trial_index,
        t_index=pair.t_index,
        vol_sample=vol_sample,
        vol_oracle=vol_oracle,
        vol_qp=vols[0],
        vol_qp_sorted=vols[1],
        qp_status=statuses[0],
        qp_sorted_status=statuses[1],
    )


def trial_seed(seed: int, delta_in: int, delta_out: int, trial_index: int) -> tuple[int, int]:
    """Independent (window, shuffle) seeds per trial, derived from the sweep seed.

    Seeds depend only on the window lengths and trial index, so the same trial
    gets the same draw regardless of sweep layout or worker scheduling.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(delta_in, delta_out, trial_index))
    window, shuffle = ss.generate_state(2, dtype=np.uint64)
    return int(window), int(shuffle)


def load_source(config: ExperimentConfig) -> ReturnsPanel:
    if config.data_path is not None:
        return load_returns_csv(config.data_path)
    return generate_returns(config.model, config.t_days)


_WORKER_PANEL: ReturnsPanel | None = None


def _init_worker(panel: ReturnsPanel) -> None:
    global _WORKER_PANEL
    _WORKER_PANEL = panel


def _run_one(config: ExperimentConfig, panel: ReturnsPanel, delta_in: int, delta_out: int, k: int) -> TrialRecord:
    window_seed, shuffle_seed = trial_seed(config.seed, delta_in, delta_out, k)
    pair = sample_window_pair(panel, delta_in, delta_out, config.n, window_seed)
    if config.stationarized:
        pair = stationarize(pair, shuffle_seed)
    return run_trial(pair, delta_in, delta_out, k)


def _worker_task(args) -> TrialRecord:
    config, delta_in, delta_out, k = args
    return _run_one(config, _WORKER_PANEL, delta_in, delta_out, k)


def run_sweep(config: ExperimentConfig, panel: ReturnsPanel | None = None) -> list[TrialRecord]:
    """All trials for every (delta_in, delta_out), ordered by pair then trial index."""
    panel = load_source(config) if panel is None else panel
    need = max(config.delta_in_list) + max(config.delta_out_list)
    if panel.n_days < need:
        raise ConfigError(f"data has {panel.n_days} days but the sweep needs {need}")
    if panel.n_assets < config.n:
        raise ConfigError(f"data has {panel.n_assets} assets but n = {config.n}")
    tasks = [
        (config, di, do, k)
        for di in config.delta_in_list
        for do in config.delta_out_list
        for k in range(config.trials)
    ]
    if config.workers == 1:
        return [_run_one(config, panel, di, do, k) for _, di, do, k in tasks]
    with ProcessPoolExecutor(config.workers, initializer=_init_worker, initargs=(panel,)) as pool:
        # map preserves task order, so output never depends on scheduling
        return list(pool.map(_worker_task, tasks, chunksize=max(1, len(tasks) // (4 * config.workers))))


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else "nan"
    return str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def raw_csv_text(records) -> str:
    return _csv_text(RAW_COLUMNS, ([getattr(r, c) for c in RAW_COLUMNS] for r in records))


def aggregate(records) -> list[tuple]:
    """Summary rows in ``SUMMARY_COLUMNS`` order.

    Failed solves are excluded from the mean and counted in ``n_failed``.
    """
    records = list(records)
    if not records:
        raise ValidationError("no records to aggregate")
    keys = list(dict.fromkeys((r.delta_in, r.delta_out) for r in records))
    rows = []
    for di, do in keys:
        group = [r for r in records if (r.delta_in, r.delta_out) == (di, do)]
        for method in METHODS:
            ok = [r.vol(method) for r in group if not r.failed(method)]
            n_failed = len(group) - len(ok)
            if ok:
                mean = math.fsum(ok) / len(ok)
                stderr = float(np.std(ok, ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else 0.0
            else:
                mean = stderr = math.nan
            rows.append((di, do, method, mean, stderr, len(ok), n_failed))
    return rows


def write_raw(records, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(raw_csv_text(records), encoding="utf-8")
    return path


def raw_path_for(summary_path: str | Path) -> Path:
    p = Path(summary_path)
    return p.with_name(p.stem + ".trials.csv")


def aggregate_and_emit(records, output_path: str | Path) -> list[tuple]:
    """Write the summary CSV to ``output_path`` and raw trials next to it."""
    rows = aggregate(records)
    out = Path(output_path)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(_csv_text(SUMMARY_COLUMNS, rows), encoding="utf-8")
        write_raw(records, raw_path_for(out))
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return rows
