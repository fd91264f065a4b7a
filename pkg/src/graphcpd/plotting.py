"""SVG renderings of scan traces and simulation reports.

Figures are written with the non-interactive Agg backend. Every file
carries its manifest hash in the SVG metadata and in a footer line.
"""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 4.0),
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 7,
    "legend.frameon": False,
}


def _save(fig, path, manifest_hash: str | None) -> None:
    if manifest_hash:
        fig.text(0.99, 0.01, f"manifest {manifest_hash}", ha="right", va="bottom",
                 fontsize=6, color="0.5")
    with plt.rc_context({"svg.hashsalt": manifest_hash or "graphcpd", "svg.fonttype": "path"}):
        fig.savefig(path, format="svg",
                    metadata={"Date": None, "Description": f"manifest {manifest_hash}"})
    plt.close(fig)


def plot_trace(scan, path, threshold: float | None = None, changes=(), offset: int = 0,
               title: str | None = None, manifest_hash: str | None = None) -> None:
    """Statistic trace over the scan window with threshold and detections."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ks = np.asarray(scan.ks) + offset
        ax.plot(ks, scan.trace, color="C0", lw=1.2, label=f"{scan.kind.value} statistic",
                gid="trace")
        if threshold is not None:
            ax.axhline(threshold, color="C3", ls="--", lw=1, label="permutation threshold",
                       gid="threshold")
        for i, k in enumerate(changes):
            ax.axvline(k, color="0.3", ls=":", lw=1, label="detected change" if i == 0 else None)
        ax.set_xlabel("split k")
        ax.set_ylabel("statistic")
        ax.set_title(title or "scan statistic")
        ax.legend(loc="best")
        fig.tight_layout()
        _save(fig, path, manifest_hash)


def plot_power_curves(report, path, manifest_hash: str | None = None, alpha: float = 0.05) -> None:
    """One panel per statistic, one curve per graph configuration."""
    groups = defaultdict(lambda: defaultdict(list))
    for r in report.rows:
        if r["absent"] or r["rate"] is None:
            continue
        groups[r["statistic"]][(r["tree"], r["k_trees"], r["p"])].append((r["value"], r["rate"], r["se"]))
    stats = sorted(groups)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, max(1, len(stats)), sharey=True, squeeze=False,
                                 figsize=(3.2 * max(1, len(stats)), 3.4))
        for ax, stat in zip(axes[0], stats):
            for (tree, k, p), pts in sorted(groups[stat].items()):
                pts.sort()
                x, y, se = map(np.asarray, zip(*pts))
                label = f"{tree.upper()}-{k}" + (f" L{p:g}" if p != 2 else "")
                bars = ax.errorbar(x, y, yerr=2 * se, marker="o", ms=3, lw=1, capsize=2, label=label)
                bars.lines[0].set_gid(f"curve-{stat}-{label.replace(' ', '-')}")
            ax.axhline(alpha, color="0.5", ls=":", lw=1)
            ax.set_ylim(-0.02, 1.02)
            ax.set_title(stat)
            ax.set_xlabel(str(report.rows[0]["parameter"]))
        axes[0][0].set_ylabel("rejection rate")
        axes[0][-1].legend(loc="best")
        fig.suptitle(report.scenario)
        fig.tight_layout()
        _save(fig, path, manifest_hash)


def plot_size_table(report, path, manifest_hash: str | None = None) -> None:
    """Rejection-rate table, absent configurations shown as a dash."""
    stats = list(dict.fromkeys(r["statistic"] for r in report.rows))
    configs = list(dict.fromkeys((r["tree"], r["k_trees"], r["p"]) for r in report.rows))
    lookup = {(r["tree"], r["k_trees"], r["p"], r["statistic"]): r for r in report.rows}
    cells = []
    for cfg in configs:
        row = []
        for s in stats:
            r = lookup.get(cfg + (s,))
            row.append("-" if r is None or r["absent"] else f"{r['rate']:.3f}")
        cells.append(row)
    labels = [f"{t.upper()}-{k}" + (f" L{p:g}" if p != 2 else "") for t, k, p in configs]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(1.2 + 1.0 * len(stats), 0.6 + 0.25 * len(configs)))
        ax.axis("off")
        table = ax.table(cellText=cells, rowLabels=labels, colLabels=stats, loc="center")
        table.auto_set_font_size(False)
        table.set_fontsize(7)
        ax.set_title(f"{report.scenario}: empirical size ({report.replicates} replicates)")
        fig.tight_layout()
        _save(fig, path, manifest_hash)


def plot_location_histogram(report, path, manifest_hash: str | None = None) -> None:
    """Histogram of locations found by binary segmentation; true changes in red."""
    meta = report.metadata
    n = meta["data"]["n"]
    locs = [k for f in meta["detections"] for k in f]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(locs, bins=np.arange(0.5, n + 1.5, max(1, n // 50)), color="C0")
        for t in meta["true_changes"]:
            ax.axvline(t, color="C3", lw=1)
        ax.set_xlim(0, n)
        ax.set_xlabel("detected change location")
        ax.set_ylabel("count")
        ax.set_title(f"{report.scenario}: {report.replicates} replicates, "
                     f"{meta['false_detections']} false detections")
        fig.tight_layout()
        _save(fig, path, manifest_hash)
