"""Realized-volatility figures rendered from sweep summaries."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .rie import METHODS  # noqa: E402

LABELS = {
    "sample": r"$\Sigma^{in}$",
    "oracle": "Oracle",
    "qp_optimal": "Optimal",
    "qp_optimal_sorted": "Optimal sorted",
}
STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def read_summary(path: str | Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("delta_in", "delta_out", "n_trials", "n_failed"):
            row[key] = int(row[key])
        for key in ("mean_vol", "stderr_vol"):
            row[key] = float(row[key])
    return rows


def plot_summary(rows, out_path: str | Path, n: int | None = None, title: str | None = None) -> Path:
    """One panel per in-sample length: mean volatility against ``delta_out``.

    A dotted vertical line marks ``delta_out = n`` when ``n`` is given.
    Rows are dicts or tuples in summary column order.
    """
    rows = [r if isinstance(r, dict) else dict(zip(
        ("delta_in", "delta_out", "method", "mean_vol", "stderr_vol", "n_trials", "n_failed"), r)) for r in rows]
    delta_ins = sorted({r["delta_in"] for r in rows})
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(delta_ins), figsize=(3.2 * len(delta_ins), 2.8), squeeze=False, sharey=True)
        for ax, di in zip(axes[0], delta_ins):
            for method in METHODS:
                pts = sorted((r["delta_out"], r["mean_vol"], r["stderr_vol"]) for r in rows
                             if r["delta_in"] == di and r["method"] == method)
                if not pts:
                    continue
                x, y, e = zip(*pts)
                ax.errorbar(x, y, yerr=e, marker="o", ms=3, lw=1, capsize=2, label=LABELS[method])
            if n is not None:
                ax.axvline(n, color="black", ls=":", lw=1)
            ax.set_xscale("log")
            ticks = sorted({r["delta_out"] for r in rows})
            ax.set_xticks(ticks, [str(t) for t in ticks])
            ax.minorticks_off()
            ax.set_xlabel(r"$\delta_{out}$")
            ax.set_title(rf"$\delta_{{in}}={di}$")
        axes[0][0].set_ylabel("annualized volatility")
        axes[0][-1].legend(frameon=False)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        out = Path(out_path)
        fig.savefig(out)
        plt.close(fig)
    return out
