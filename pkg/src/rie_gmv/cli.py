"""Command-line entry point: ``rie-gmv``.

Settings come from an optional flat ``key = value`` file (``--config``); flags
override it. Recognised file keys::

    data, synthetic, n, delta_in, delta_out, trials, stationarized, seed, out,
    workers, figure, t_days, n_assets, n_factors, loading_drift, idio_vol,
    factor_vol, tail_dof, model_seed

List values (``delta_in``, ``delta_out``) are comma separated.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from pathlib import Path

from .data import SamplingError
from .experiment import ConfigError, ExperimentConfig, aggregate_and_emit, raw_path_for, run_sweep
from .report import plot_summary
from .spectral import ValidationError
from .synth import MarketModel

SECTION = "experiment"
MODEL_KEYS = {
    "n_assets": int,
    "n_factors": int,
    "loading_drift": float,
    "idio_vol": float,
    "factor_vol": float,
    "tail_dof": float,
    "model_seed": int,
}
RUN_KEYS = {
    "data": str,
    "synthetic": "bool",
    "n": int,
    "delta_in": "ints",
    "delta_out": "ints",
    "trials": int,
    "stationarized": "bool",
    "seed": int,
    "out": str,
    "workers": int,
    "figure": "bool",
    "t_days": int,
}


def _convert(key: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "ints":
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if kind is float and raw.lower() in ("inf", "infinity"):
            return math.inf
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def read_config_file(path: str | Path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(f"[{SECTION}]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    known = {**RUN_KEYS, **MODEL_KEYS}
    out = {}
    for key, raw in parser.items(SECTION):
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _convert(key, raw, known[key])
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rie-gmv",
        description="Realized GMV volatility of sample, Oracle and QP-optimal eigenvalue filters.",
    )
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--data", help="returns CSV: date column then one column per asset")
    p.add_argument("--synthetic", action=argparse.BooleanOptionalAction, default=None,
                   help="use the synthetic factor-model generator instead of --data")
    p.add_argument("--n", type=int, help="assets per portfolio (default 50)")
    p.add_argument("--delta-in", help="comma-separated in-sample lengths")
    p.add_argument("--delta-out", help="comma-separated out-of-sample lengths")
    p.add_argument("--trials", type=int, help="portfolios per window pair")
    p.add_argument("--stationarized", action=argparse.BooleanOptionalAction, default=None,
                   help="shuffle days within each window pair")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="summary CSV path; raw trials go to <stem>.trials.csv")
    p.add_argument("--workers", type=int, help="worker processes (output is identical for any value)")
    p.add_argument("--figure", action=argparse.BooleanOptionalAction, default=None,
                   help="render <stem>.png next to the summary (default on)")
    p.add_argument("--model", action="append", default=[], metavar="KEY=VALUE",
                   help=f"synthetic model parameter, one of {', '.join(MODEL_KEYS)}, or t_days")
    return p


def settings_from_args(args: argparse.Namespace) -> dict:
    settings = read_config_file(args.config) if args.config else {}
    flags = {
        "data": args.data,
        "synthetic": args.synthetic,
        "n": args.n,
        "delta_in": _convert("delta_in", args.delta_in, "ints") if args.delta_in else None,
        "delta_out": _convert("delta_out", args.delta_out, "ints") if args.delta_out else None,
        "trials": args.trials,
        "stationarized": args.stationarized,
        "seed": args.seed,
        "out": args.out,
        "workers": args.workers,
        "figure": args.figure,
    }
    settings.update({k: v for k, v in flags.items() if v is not None})
    for item in args.model:
        key, sep, raw = item.partition("=")
        key = key.strip()
        kinds = {**MODEL_KEYS, "t_days": int}
        if not sep or key not in kinds:
            raise ConfigError(f"bad --model entry {item!r}")
        settings[key] = _convert(key, raw, kinds[key])
    return settings


def config_from_settings(settings: dict) -> ExperimentConfig:
    synthetic = settings.get("synthetic", "data" not in settings)
    data = None if synthetic else settings.get("data")
    if not synthetic and data is None:
        raise ConfigError("give --data or --synthetic")
    defaults = ExperimentConfig.__dataclass_fields__
    n = settings.get("n", defaults["n"].default)
    model_kw = {k: settings[k] for k in MODEL_KEYS if k in settings and k != "model_seed"}
    # headroom so the correlation filter can drop a few assets and still leave n
    model_kw.setdefault("n_assets", n + max(5, n // 5))
    if "model_seed" in settings:
        model_kw["seed"] = settings["model_seed"]
    try:
        model = MarketModel(**model_kw)
    except ValidationError as exc:
        raise ConfigError(f"invalid synthetic model: {exc}") from None
    kw = dict(data_path=data, model=model, n=n)
    for key, field_name in (
        ("delta_in", "delta_in_list"),
        ("delta_out", "delta_out_list"),
        ("trials", "trials"),
        ("stationarized", "stationarized"),
        ("seed", "seed"),
        ("out", "output_path"),
        ("workers", "workers"),
        ("t_days", "t_days"),
    ):
        if key in settings:
            kw[field_name] = settings[key]
    return ExperimentConfig(**kw)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = settings_from_args(args)
        config = config_from_settings(settings)
        records = run_sweep(config)
        rows = aggregate_and_emit(records, config.output_path)
    except (ValidationError, SamplingError, OSError) as exc:
        print(f"rie-gmv: error: {exc}", file=sys.stderr)
        return 2
    out = Path(config.output_path)
    written = [out, raw_path_for(out)]
    if settings.get("figure", True):
        written.append(plot_summary(rows, out.with_suffix(".png"), n=config.n))
    failed = sum(r[-1] for r in rows if r[2] in ("qp_optimal", "qp_optimal_sorted"))
    print(f"{len(records)} trials, {failed} unconverged solves; wrote {', '.join(map(str, written))}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
