"""Returns ingestion, universe filtering and window sampling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral import ReturnsPanel, ValidationError

__all__ = [
    "ParseError",
    "SamplingError",
    "UniverseTooSmallError",
    "WindowPair",
    "filter_universe",
    "load_returns_csv",
    "sample_window_pair",
    "stationarize",
]

MAX_MISSING_FRAC = 0.20
MAX_CORR = 0.95


class ParseError(ValidationError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


class UniverseTooSmallError(ValidationError):
    pass


class SamplingError(ValidationError):
    pass


@dataclass(frozen=True, eq=False)
class WindowPair:
    in_sample: ReturnsPanel
    out_sample: ReturnsPanel
    t_index: int
    asset_subset: tuple[str, ...]
    stationarized: bool = False

    def __post_init__(self) -> None:
        if self.in_sample.assets != self.out_sample.assets:
            raise ValidationError("in- and out-of-sample panels must share the asset list")
        if tuple(self.asset_subset) != self.in_sample.assets:
            raise ValidationError("asset_subset must match the panel columns")
        if not self.stationarized and not self.in_sample.dates.max() < self.out_sample.dates.min():
            raise ValidationError("in-sample dates must precede out-of-sample dates")

    @property
    def delta_in(self) -> int:
        return self.in_sample.n_days

    @property
    def delta_out(self) -> int:
        return self.out_sample.n_days


def load_returns_csv(path: str | Path) -> ReturnsPanel:
    """Read a ``date,<asset>,...`` CSV; empty cells become NaN (missing)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty", 1) from None
        if not header or header[0].strip().lower() != "date":
            raise ParseError("first header column must be 'date'", 1)
        assets = [h.strip() for h in header[1:]]
        if len(set(assets)) != len(assets) or any(not a for a in assets):
            raise ParseError("asset identifiers must be unique and nonempty", 1)
        dates, rows, lines = [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            try:
                day = np.datetime64(row[0].strip(), "D")
            except ValueError:
                raise ParseError(f"bad date {row[0]!r}", line) from None
            values = []
            for cell in row[1:]:
                cell = cell.strip()
                if not cell:
                    values.append(math.nan)
                    continue
                try:
                    x = float(cell)
                except ValueError:
                    raise ParseError(f"bad number {cell!r}", line) from None
                if not math.isfinite(x):
                    raise ParseError(f"non-finite return {cell!r}", line)
                values.append(x)
            dates.append(day)
            rows.append(values)
            lines.append(line)
    if not rows:
        raise ParseError("no data rows", 2)
    dates_arr = np.array(dates, dtype="datetime64[D]")
    uniq, counts = np.unique(dates_arr, return_counts=True)
    if (counts > 1).any():
        dup = uniq[counts > 1][0]
        raise ValidationError(f"duplicate date {dup}")
    order = np.argsort(dates_arr, kind="stable")
    values = np.array(rows, dtype=np.float64)[order]
    return ReturnsPanel(values, dates_arr[order], tuple(assets))


def _missing_keep(values: np.ndarray, max_missing_frac: float) -> np.ndarray:
    bad = np.isnan(values) | (values == 0.0)
    return bad.mean(axis=0) <= max_missing_frac


def _dedup_keep(values: np.ndarray, max_corr: float) -> np.ndarray:
    """Greedy in column order: for each kept i, drop later j with corr > max_corr."""
    n = values.shape[1]
    x = values - values.mean(axis=0)
    norms = np.sqrt((x * x).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (x.T @ x) / np.outer(norms, norms)
    corr = np.nan_to_num(corr, nan=0.0)
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        if not keep[i]:
            continue
        later = np.arange(i + 1, n)
        keep[later[(corr[i, later] > max_corr) & keep[later]]] = False
    return keep


def _filter_columns(window_values, corr_values, max_missing_frac, max_corr) -> np.ndarray:
    cols = np.flatnonzero(_missing_keep(window_values, max_missing_frac))
    filled = np.nan_to_num(corr_values[:, cols], nan=0.0)
    return cols[_dedup_keep(filled, max_corr)]


def filter_universe(
    panel: ReturnsPanel, max_missing_frac: float = MAX_MISSING_FRAC, max_corr: float = MAX_CORR
) -> ReturnsPanel:
    """Drop sparse and near-duplicate assets, then zero-fill remaining gaps.

    An asset is dropped when more than ``max_missing_frac`` of its cells are
    missing or exactly zero. Correlations are computed after zero-filling.
    """
    cols = _filter_columns(panel.values, panel.values, max_missing_frac, max_corr)
    if cols.size < 2:
        raise UniverseTooSmallError(f"only {cols.size} assets survive filtering")
    kept = panel.select(cols)
    return ReturnsPanel(np.nan_to_num(kept.values, nan=0.0), kept.dates, kept.assets, kept.chronological)


def sample_window_pair(
    panel: ReturnsPanel,
    delta_in: int,
    delta_out: int,
    n: int,
    rng_seed: int,
    max_missing_frac: float = MAX_MISSING_FRAC,
    max_corr: float = MAX_CORR,
) -> WindowPair:
    """Draw ``[t - delta_in, t)`` and ``[t, t + delta_out)`` plus ``n`` assets.

    The missing-value rule is applied on the whole window, the correlation
    rule on the in-sample part only.
    """
    if delta_in < 2 or delta_out < 2:
        raise SamplingError("window lengths must be at least 2")
    total = panel.n_days
    if total < delta_in + delta_out:
        raise SamplingError(f"panel has {total} days, need {delta_in + delta_out}")
    rng = np.random.default_rng(rng_seed)
    t = int(rng.integers(delta_in, total - delta_out + 1))
    window = panel.values[t - delta_in : t + delta_out]
    cols = _filter_columns(window, window[:delta_in], max_missing_frac, max_corr)
    if cols.size < n:
        raise SamplingError(f"only {cols.size} assets survive filtering at t={t}, need {n}")
    chosen = np.sort(rng.choice(cols, size=n, replace=False))
    values = np.nan_to_num(panel.values[:, chosen], nan=0.0)
    assets = tuple(panel.assets[i] for i in chosen)
    dates = panel.dates
    ins = ReturnsPanel(values[t - delta_in : t], dates[t - delta_in : t], assets)
    outs = ReturnsPanel(values[t : t + delta_out], dates[t : t + delta_out], assets)
    return WindowPair(ins, outs, t, assets)


def stationarize(pair: WindowPair, rng_seed: int) -> WindowPair:
    """Pool the window's days, shuffle whole days and re-split at ``delta_in``."""
    if pair.delta_in < 1 or pair.delta_out < 1:
        raise ValidationError("both windows must be nonempty")
    values = np.vstack([pair.in_sample.values, pair.out_sample.values])
    dates = np.concatenate([pair.in_sample.dates, pair.out_sample.dates])
    perm = np.random.default_rng(rng_seed).permutation(values.shape[0])
    values, dates = values[perm], dates[perm]
    k = pair.delta_in
    assets = pair.in_sample.assets
    ins = ReturnsPanel(values[:k], dates[:k], assets, chronological=False)
    outs = ReturnsPanel(values[k:], dates[k:], assets, chronological=False)
    return WindowPair(ins, outs, pair.t_index, pair.asset_subset, stationarized=True)
