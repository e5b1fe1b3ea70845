"""Figure rendering for reports and estimates.

Everything draws through the Agg backend and writes PNG files, so the
plotting path works in headless runs and never blocks on a display.  The
figures mirror the delimited outputs: risk curves over the unit count,
grouped by unit size; a log-ratio heatmap for estimator comparisons; and
plain quantile-function plots for barycenter estimates.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .barycenter import BarycenterEstimate
from .measures import midpoint_alphas
from .simulation import RiskReport


def save_risk_curves(reports: list[RiskReport], path: str) -> None:
    """Risk against the number of units, one line per unit size, log axes."""
    by_p: dict[str, list[RiskReport]] = {}
    for r in reports:
        by_p.setdefault(r.size_label, []).append(r)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for label, rows in sorted(by_p.items(), key=lambda kv: _numeric_key(kv[0])):
        rows = sorted(rows, key=lambda r: r.n)
        ns = [r.n for r in rows]
        risks = [r.risk for r in rows]
        ax.plot(ns, risks, marker="o", label=f"p = {label}")
        ses = np.array([r.se for r in rows])
        lo = np.maximum(np.array(risks) - 2 * ses, 1e-300)
        ax.fill_between(ns, lo, np.array(risks) + 2 * ses, alpha=0.15)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("units n")
    ax.set_ylabel("Monte Carlo risk")
    if reports:
        ax.set_title(reports[0].estimator)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _numeric_key(label: str):
    try:
        return (0, float(label))
    except ValueError:
        return (1, label)


def save_log_ratio_heatmap(rows: list[dict], path: str) -> None:
    """The log risk-ratio surface over the (n, p) grid."""
    ns = sorted({row["n"] for row in rows})
    ps = sorted({row["p"] for row in rows}, key=_numeric_key)
    grid = np.full((len(ns), len(ps)), np.nan)
    for row in rows:
        grid[ns.index(row["n"]), ps.index(row["p"])] = row["log_ratio"]
    fig, ax = plt.subplots(figsize=(5.6, 4.4))
    limit = float(np.nanmax(np.abs(grid))) or 1.0
    im = ax.imshow(
        grid, origin="lower", aspect="auto", cmap="RdBu_r", vmin=-limit, vmax=limit
    )
    ax.set_xticks(range(len(ps)), [str(p) for p in ps])
    ax.set_yticks(range(len(ns)), [str(n) for n in ns])
    ax.set_xlabel("unit size p")
    ax.set_ylabel("units n")
    ax.set_title("log risk ratio (positive: numerator worse)")
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_quantile_plot(estimate: BarycenterEstimate, path: str) -> None:
    """The estimated quantile function over (0,1)."""
    alphas = midpoint_alphas(1024)
    values = estimate.quantile(alphas)
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    if estimate.measure is not None:
        ax.step(alphas, values, where="post")
    else:
        ax.plot(alphas, values)
    ax.set_xlabel("level")
    ax.set_ylabel("quantile")
    ax.set_title(f"{estimate.kind} barycenter (n={estimate.n})")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
