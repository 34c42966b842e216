"""Figure rendering and per-figure data tables.

Every figure is written next to a CSV holding exactly the plotted values,
so reports stay machine-readable even where the figures are only for eyes.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k) for k in fieldnames})


def _grouped_bars(out_png: Path, out_csv: Path, rows: list[dict], metric: str,
                  ylabel: str, title: str):
    """One bar per (objective, dim) with standard-error whiskers."""
    objectives = sorted({r["objective"] for r in rows})
    dims = sorted({r["dim"] for r in rows})
    table = []
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(dims), 3.2))
    width = 0.8 / max(1, len(objectives))
    for j, obj in enumerate(objectives):
        xs, ys, es = [], [], []
        for i, dim in enumerate(dims):
            sub = [r[metric] for r in rows
                   if r["objective"] == obj and r["dim"] == dim
                   and metric in r and np.isfinite(r[metric])]
            if not sub:
                continue
            mean = float(np.mean(sub))
            err = float(np.std(sub, ddof=1) / np.sqrt(len(sub))) if len(sub) > 1 else 0.0
            xs.append(i + j * width)
            ys.append(mean)
            es.append(err)
            table.append({"objective": obj, "dim": dim, "mean": mean,
                          "stderr": err, "n": len(sub)})
        ax.bar(xs, ys, width=width, yerr=es, label=obj, capsize=2)
    ax.set_xticks([i + 0.4 for i in range(len(dims))])
    ax.set_xticklabels([str(d) for d in dims])
    ax.set_xlabel("feature dim")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
    _write_csv(out_csv, ["objective", "dim", "mean", "stderr", "n"], table)


def completeness_bars(rows: list[dict], out_dir: Path, modality: str):
    _grouped_bars(out_dir / "completeness_bars.png",
                  out_dir / "completeness_bars.csv",
                  rows, "tpa", "test preference accuracy",
                  f"completeness ({modality})")


def explainability_bars(rows: list[dict], out_dir: Path, modality: str):
    _grouped_bars(out_dir / "explainability_bars.png",
                  out_dir / "explainability_bars.csv",
                  rows, "explainability_cosine", "nearest-exemplar cosine",
                  f"explainability ({modality})")


def alignment_bars(rows: list[dict], out_dir: Path, modality: str):
    _grouped_bars(out_dir / "alignment_auc_bars.png",
                  out_dir / "alignment_auc_bars.csv",
                  rows, "auc_alignment", "AUC alignment",
                  f"simplicity / minimality ({modality})")


def alignment_curve_figure(curves: dict[str, list[float]], out_dir: Path,
                           modality: str):
    """Mean alignment vs query index, one line per objective."""
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    table = []
    for obj, values in sorted(curves.items()):
        ax.plot(range(1, len(values) + 1), values, label=obj, linewidth=1)
        for t, v in enumerate(values):
            table.append({"objective": obj, "query": t + 1, "alignment": v})
    ax.set_xlabel("pairwise query")
    ax.set_ylabel("alignment")
    ax.set_title(f"posterior alignment ({modality})")
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(out_dir / "alignment_curve.png", dpi=120)
    plt.close(fig)
    _write_csv(out_dir / "alignment_curve.csv",
               ["objective", "query", "alignment"], table)


def noise_robustness_figure(rows: list[dict], out_dir: Path, modality: str):
    """Mean final alignment vs feature noise scale, one line per objective."""
    objectives = sorted({r["objective"] for r in rows})
    eps_list = sorted({r["epsilon"] for r in rows})
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    table = []
    for obj in objectives:
        ys = []
        for eps in eps_list:
            sub = [r["final_alignment"] for r in rows
                   if r["objective"] == obj and r["epsilon"] == eps]
            mean = float(np.mean(sub))
            ys.append(mean)
            table.append({"objective": obj, "epsilon": eps,
                          "final_alignment_mean": mean, "n": len(sub)})
        ax.plot(eps_list, ys, marker="o", label=obj, linewidth=1)
    ax.set_xlabel("feature noise scale")
    ax.set_ylabel("final alignment")
    ax.set_title(f"noise robustness ({modality})")
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(out_dir / "noise_robustness.png", dpi=120)
    plt.close(fig)
    _write_csv(out_dir / "noise_robustness.csv",
               ["objective", "epsilon", "final_alignment_mean", "n"], table)


def direct_reward_figure(rows: list[dict], out_dir: Path, modality: str):
    """Paired bars: feature-based vs direct-from-payload TPA."""
    feat = [r["tpa_clea_ae"] for r in rows]
    direct = [r["tpa_direct"] for r in rows]
    means = [float(np.mean(feat)), float(np.mean(direct))]
    errs = [float(np.std(v, ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
            for v in (feat, direct)]
    fig, ax = plt.subplots(figsize=(3.2, 3.2))
    ax.bar([0, 1], means, yerr=errs, capsize=3, tick_label=["features", "direct"])
    ax.set_ylabel("test preference accuracy")
    ax.set_title(f"feature vs direct reward ({modality})")
    fig.tight_layout()
    fig.savefig(out_dir / "direct_reward.png", dpi=120)
    plt.close(fig)
    _write_csv(out_dir / "direct_reward.csv",
               ["mode", "tpa_mean", "tpa_stderr", "n"],
               [{"mode": "features", "tpa_mean": means[0], "tpa_stderr": errs[0], "n": len(feat)},
                {"mode": "direct", "tpa_mean": means[1], "tpa_stderr": errs[1], "n": len(direct)}])
