"""Figure rendering for benchmark and selection reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["plot_sweep", "plot_table1", "plot_cv"]

_METHOD_STYLE = {
    "spectral": dict(color="#777777", marker="s"),
    "hbcm": dict(color="#1f5fa8", marker="o"),
}


def _style():
    plt.rcParams.update({
        "figure.figsize": (6.0, 4.0),
        "figure.dpi": 120,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 10,
    })


def plot_sweep(rows, path, title=None):
    """Mean ARI against the swept value, one line per method; the mislead
    sweep adds dashed lines for agreement with the tier labels."""
    _style()
    fig, ax = plt.subplots()
    methods = sorted({r.method for r in rows})
    has_alt = any(r.ari_alt is not None for r in rows)
    for method in methods:
        pts = {}
        alts = {}
        for r in rows:
            if r.method != method:
                continue
            pts.setdefault(r.value, []).append(r.ari)
            if r.ari_alt is not None:
                alts.setdefault(r.value, []).append(r.ari_alt)
        xs = sorted(pts)
        ax.plot(xs, [np.mean(pts[x]) for x in xs], label=method,
                **_METHOD_STYLE.get(method, {}))
        if has_alt and alts:
            ax.plot(xs, [np.mean(alts[x]) for x in xs], linestyle="--",
                    label=f"{method} vs tiers",
                    color=_METHOD_STYLE.get(method, {}).get("color"))
    ax.set_xlabel(rows[0].sweep if rows else "value")
    ax.set_ylabel("mean ARI")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_table1(summary, path):
    """Grouped bars of mean ARI per benchmark cell and method."""
    _style()
    cells = sorted({(row["scenario"], row["n"], row["p"], row["k"]) for row in summary})
    methods = sorted({row["method"] for row in summary})
    lookup = {(row["scenario"], row["method"]): row for row in summary}
    x = np.arange(len(cells))
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(max(6.0, 0.8 * len(cells) + 2), 4.0))
    for i, method in enumerate(methods):
        means = [lookup.get((c[0], method), {}).get("mean_ari", np.nan) for c in cells]
        sds = [lookup.get((c[0], method), {}).get("sd_ari", 0.0) for c in cells]
        ax.bar(x + i * width, means, width, yerr=sds, capsize=2, label=method,
               color=_METHOD_STYLE.get(method, {}).get("color"))
    ax.set_xticks(x + width * (len(methods) - 1) / 2)
    ax.set_xticklabels([c[0] for c in cells], rotation=45, ha="right")
    ax.set_ylabel("mean ARI")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_cv(report, path):
    """Line plot of split-half agreement per candidate K, best K marked."""
    _style()
    fig, ax = plt.subplots()
    ks = list(report.k_values)
    ax.plot(ks, report.mean_ari, marker="o", color="#1f5fa8")
    ax.axvline(report.best_k, linestyle="--", color="#aa3333", alpha=0.7,
               label=f"selected K = {report.best_k}")
    ax.set_xlabel("K")
    ax.set_ylabel("mean split-half ARI")
    ax.set_xticks(ks)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
