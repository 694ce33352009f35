"""Result serialization (JSON + CSV) and figure rendering.

All writers are deterministic: JSON is dumped with sorted keys and no
timestamps, CSV numbers use fixed formats (metrics x100 with 2 decimals),
and nothing records thread counts or hostnames, so identical runs produce
byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

from .metrics import EvaluationResult
from .ranking import RankingDistribution

__all__ = [
    "write_json",
    "evaluation_to_dict",
    "evaluation_csv",
    "rank_histograms_csv",
    "rank_deltas_csv",
    "write_evaluation",
    "write_ranking",
    "render_figures",
]


def _fmt_metric(value: float) -> str:
    return f"{value * 100:.2f}"


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def evaluation_to_dict(
    dataset_id: str,
    results: dict[str, EvaluationResult],
    settings: dict | None = None,
) -> dict:
    return {
        "schema_version": 1,
        "dataset_id": dataset_id,
        "settings": settings or {},
        "methods": {m: r.to_dict() for m, r in results.items()},
    }


def evaluation_csv(dataset_id: str, results: dict[str, EvaluationResult]) -> str:
    """Method-per-row table: mAP and FROC scaled x100 with 2 decimals."""
    lines = ["method,dataset,mAP,FROC"]
    for method_id, r in sorted(results.items()):
        lines.append(
            f"{method_id},{dataset_id},{_fmt_metric(r.mean_ap)},{_fmt_metric(r.froc_score)}"
        )
    return "\n".join(lines) + "\n"


def rank_histograms_csv(distributions: dict[str, RankingDistribution]) -> str:
    """Plot-ready long table: one row per (metric, method, rank bin)."""
    lines = ["metric,method,rank,count"]
    for metric, dist in sorted(distributions.items()):
        for method_id in dist.method_ids:
            for rank, count in sorted(dist.histograms[method_id].items()):
                lines.append(f"{metric},{method_id},{rank:g},{count}")
    return "\n".join(lines) + "\n"


def rank_deltas_csv(distributions: dict[str, RankingDistribution]) -> str:
    """Per-method point metrics, deltas vs. baseline (x100), and mean ranks."""
    lines = ["metric,method,point_metric,delta_vs_baseline,mean_rank"]
    for metric, dist in sorted(distributions.items()):
        for method_id in dist.method_ids:
            delta = "" if dist.deltas is None else _fmt_metric(dist.deltas[method_id])
            lines.append(
                f"{metric},{method_id},{_fmt_metric(dist.point_metrics[method_id])},"
                f"{delta},{dist.mean_ranks[method_id]:.3f}"
            )
    return "\n".join(lines) + "\n"


def write_evaluation(
    out_dir,
    dataset_id: str,
    results: dict[str, EvaluationResult],
    settings: dict | None = None,
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "evaluation.json"
    csv_path = out_dir / "evaluation.csv"
    write_json(evaluation_to_dict(dataset_id, results, settings), json_path)
    csv_path.write_text(evaluation_csv(dataset_id, results))
    return {"json": json_path, "csv": csv_path}


def write_ranking(
    out_dir,
    distributions: dict[str, RankingDistribution],
    settings: dict | None = None,
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema_version": 1,
        "settings": settings or {},
        "rankings": {metric: dist.to_dict() for metric, dist in sorted(distributions.items())},
    }
    json_path = out_dir / "ranking.json"
    write_json(doc, json_path)
    hist_path = out_dir / "rank_histograms.csv"
    hist_path.write_text(rank_histograms_csv(distributions))
    deltas_path = out_dir / "rank_deltas.csv"
    deltas_path.write_text(rank_deltas_csv(distributions))
    return {"json": json_path, "histograms": hist_path, "deltas": deltas_path}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _render_froc_figure(plt, evaluation: dict, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    for method_id, res in sorted(evaluation["methods"].items()):
        ax.plot(
            res["fppi_thresholds"],
            res["sensitivities"],
            marker="o",
            label=f"{method_id} ({100 * res['froc_score']:.2f})",
        )
    ax.set_xscale("log", base=2)
    ax.set_xlabel("false positives per image")
    ax.set_ylabel("mean sensitivity")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title(f"FROC, dataset {evaluation.get('dataset_id', '')}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_pr_figure(plt, evaluation: dict, path: Path) -> None:
    class_ids = sorted(
        {c for res in evaluation["methods"].values() for c in res.get("pr_curves", {})},
        key=int,
    )
    if not class_ids:
        return
    fig, axes = plt.subplots(1, len(class_ids), figsize=(5.0 * len(class_ids), 4.2),
                             squeeze=False)
    for ax, class_id in zip(axes[0], class_ids):
        for method_id, res in sorted(evaluation["methods"].items()):
            curve = res["pr_curves"].get(class_id)
            if curve is None:
                continue
            ap = res["per_class_ap"].get(class_id, 0.0)
            ax.plot([0.0] + curve["recalls"], [1.0] + curve["precisions"],
                    drawstyle="steps-post", label=f"{method_id} (AP {100 * ap:.2f})")
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.05)
        ax.grid(True, alpha=0.3)
        ax.set_title(f"class {class_id}")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_rank_figure(plt, ranking: dict, path: Path) -> None:
    metrics = sorted(ranking["rankings"])
    n_methods = max(len(ranking["rankings"][m]["methods"]) for m in metrics)
    fig, axes = plt.subplots(len(metrics), 1, figsize=(7.0, 2.4 * len(metrics) + 1.2),
                             squeeze=False)
    width = 0.8
    for ax, metric in zip(axes[:, 0], metrics):
        dist = ranking["rankings"][metric]
        methods = dist["methods"]
        offsets = [(i - (len(methods) - 1) / 2) * width / len(methods)
                   for i in range(len(methods))]
        for off, entry in zip(offsets, methods):
            ranks = [float(r) for r in entry["histogram"]]
            counts = [entry["histogram"][k] for k in entry["histogram"]]
            total = dist["iterations"]
            label = f"{entry['method_id']} (mean {entry['mean_rank']:.2f}"
            if "delta_vs_baseline" in entry:
                label += f", Δ {100 * entry['delta_vs_baseline']:+.2f}"
            label += ")"
            ax.bar([r + off for r in ranks], [c / total for c in counts],
                   width=width / len(methods), label=label)
        ax.set_xlabel("rank")
        ax.set_ylabel("frequency")
        ax.set_xticks(range(1, n_methods + 1))
        ax.set_title(f"bootstrap ranking, metric {metric} "
                     f"({dist['iterations']} iterations, seed {dist['seed']})")
        ax.legend(fontsize=8)
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_delta_figure(plt, ranking: dict, path: Path) -> None:
    metrics = sorted(ranking["rankings"])
    if not any("delta_vs_baseline" in e
               for m in metrics for e in ranking["rankings"][m]["methods"]):
        return
    fig, axes = plt.subplots(1, len(metrics), figsize=(4.6 * len(metrics), 3.8),
                             squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        dist = ranking["rankings"][metric]
        names = [e["method_id"] for e in dist["methods"]]
        deltas = [100 * e.get("delta_vs_baseline", 0.0) for e in dist["methods"]]
        ax.barh(names, deltas)
        ax.axvline(0.0, color="black", linewidth=0.8)
        ax.set_xlabel(f"Δ {metric} vs {dist.get('baseline_id')} (points)")
        ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(out_dir) -> list[Path]:
    """Render figures for the evaluation/ranking JSONs found in out_dir.

    Returns the list of files written. Raises FileNotFoundError when
    neither evaluation.json nor ranking.json exists there.
    """
    out_dir = Path(out_dir)
    eval_path = out_dir / "evaluation.json"
    rank_path = out_dir / "ranking.json"
    if not eval_path.exists() and not rank_path.exists():
        raise FileNotFoundError(
            f"{out_dir}: nothing to report (no evaluation.json or ranking.json)"
        )
    plt = _pyplot()
    written: list[Path] = []

    if eval_path.exists():
        evaluation = json.loads(eval_path.read_text())
        froc_png = out_dir / "froc.png"
        _render_froc_figure(plt, evaluation, froc_png)
        written.append(froc_png)
        pr_png = out_dir / "pr_curves.png"
        _render_pr_figure(plt, evaluation, pr_png)
        if pr_png.exists():
            written.append(pr_png)
        # Ensure the delimited summary exists alongside the figures; the
        # evaluate command's own CSV (if present) is left untouched.
        csv_path = out_dir / "evaluation.csv"
        if not csv_path.exists():
            lines = ["method,dataset,mAP,FROC"]
            for method_id, res in evaluation["methods"].items():
                lines.append(
                    f"{method_id},{evaluation.get('dataset_id', '')},"
                    f"{_fmt_metric(res['mean_ap'])},{_fmt_metric(res['froc_score'])}"
                )
            csv_path.write_text("\n".join(lines) + "\n")
            written.append(csv_path)

    if rank_path.exists():
        ranking = json.loads(rank_path.read_text())
        hist_png = out_dir / "rank_histograms.png"
        _render_rank_figure(plt, ranking, hist_png)
        written.append(hist_png)
        delta_png = out_dir / "rank_deltas.png"
        _render_delta_figure(plt, ranking, delta_png)
        if delta_png.exists():
            written.append(delta_png)

    return written
