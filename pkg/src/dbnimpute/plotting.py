"""Report figures rendered to files with the Agg backend."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

# Fixed colours so the same method looks the same in every figure.
METHOD_STYLE = {
    "dbn": dict(color="#1b6ca8", marker="o"),
    "em": dict(color="#7b4ea3", marker="s"),
    "locf": dict(color="#d1495b", marker="^"),
    "mode": dict(color="#6a994e", marker="v"),
}


def _save(fig, path):
    # Strip the software/date metadata so reruns give identical files.
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)


def plot_error_grid(report, path):
    """Mean imputation errors vs. per-subject cell missingness, one panel per
    subject-missingness level."""
    means = report.mean_errors()
    levels = report.pct_levels
    methods = list(dict.fromkeys(r.method for r in report.records))
    with plt.rc_context(RC):
        ncols = max(1, len(levels))
        fig, axes = plt.subplots(1, ncols, figsize=(2.6 * ncols, 2.6), sharey=True,
                                 squeeze=False)
        for ax, level in zip(axes[0], levels):
            for m in methods:
                pts = sorted((pc, v) for (mm, ps, pc), v in means.items()
                             if mm == m and ps == level)
                if not pts:
                    continue
                xs, ys = zip(*pts)
                ax.plot([100 * x for x in xs], ys, label=m, lw=1.2, ms=4,
                        **METHOD_STYLE.get(m, {}))
            ax.set_title(f"{round(100 * level)}% subjects")
            ax.set_xlabel("% cells missing per subject")
        axes[0][0].set_ylabel("mean errors")
        axes[0][-1].legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_wilcoxon(report, path):
    """Wilcoxon p-values of the DBN imputer against each baseline (log scale)."""
    levels = report.pct_levels
    methods = list(report.wilcoxon)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(3.6, 2.6))
        width = 0.8 / max(1, len(methods))
        for k, m in enumerate(methods):
            ps = [report.wilcoxon[m].get(x, math.nan) for x in levels]
            xs = [j + k * width for j in range(len(levels))]
            ax.bar(xs, ps, width=width, label=m,
                   color=METHOD_STYLE.get(m, {}).get("color"))
        ax.axhline(0.05, color="0.4", lw=0.8, ls="--")
        ax.set_yscale("log")
        ax.set_xticks([j + 0.4 - width / 2 for j in range(len(levels))])
        ax.set_xticklabels([f"{round(100 * x)}%" for x in levels])
        ax.set_xlabel("subjects with missing values")
        ax.set_ylabel("p-value (dbn vs method)")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_sem_trace(trace, path):
    """Structural EM score per iteration."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(3.2, 2.4))
        ax.plot([s.iteration for s in trace], [s.score for s in trace], marker="o",
                ms=3, lw=1.2, color=METHOD_STYLE["dbn"]["color"])
        ax.set_xlabel("SEM iteration")
        ax.set_ylabel("MDL score")
        fig.tight_layout()
        _save(fig, path)
