"""Paired image-level bootstrap ranking of detection methods.

Each iteration draws N image ids with replacement; the same draw is shared
by every method (paired design), so rank differences reflect method
differences rather than resampling noise. Duplicated images count as
distinct images in FPPI and recall denominators.

Per-image match results are computed once up front; an iteration only
re-weights the pooled score-ordered TP/FP sequences by the draw's image
multiplicities, which reproduces exactly the metric of the resampled
multiset. Iteration randomness derives from (seed, iteration index) alone,
and histograms accumulate integer counts, so the output is bit-identical
for any thread count or execution order.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .matching import IGNORED, TP, Detection, MatchCriterion, match_image
from .metrics import EvalConfig, ap_from_points

__all__ = ["MethodRun", "RankingDistribution", "bootstrap_rank", "delta_vs_baseline"]


@dataclass(frozen=True)
class MethodRun:
    """One method's predictions, keyed by image id over a shared universe."""

    method_id: str
    predictions: dict[str, list[Detection]]


@dataclass(frozen=True)
class RankingDistribution:
    """Rank histograms plus full-dataset point metrics for every method."""

    metric: str
    iterations: int
    seed: int
    method_ids: tuple[str, ...]
    point_metrics: dict[str, float]
    mean_ranks: dict[str, float]
    histograms: dict[str, dict[float, int]]
    baseline_id: str | None = None
    deltas: dict[str, float] | None = None
    tie_rank: str = "average"
    paired: bool = True
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        methods = []
        for m in self.method_ids:
            entry = {
                "method_id": m,
                "point_metric": self.point_metrics[m],
                "mean_rank": self.mean_ranks[m],
                "histogram": {f"{rank:g}": count for rank, count in sorted(self.histograms[m].items())},
            }
            if self.deltas is not None:
                entry["delta_vs_baseline"] = self.deltas[m]
            methods.append(entry)
        return {
            "metric": self.metric,
            "iterations": self.iterations,
            "seed": self.seed,
            "baseline_id": self.baseline_id,
            "tie_rank": self.tie_rank,
            "paired": self.paired,
            "methods": methods,
            "metadata": dict(self.metadata),
        }


class _ClassSummary:
    """Score-ordered pooled predictions of one (method, class) pair."""

    __slots__ = ("is_tp", "img_idx", "group_last", "ngt_per_image")

    def __init__(self, scores, is_tp, img_idx, ngt_per_image):
        order = np.argsort(-scores, kind="stable")
        scores = scores[order]
        self.is_tp = is_tp[order]
        self.img_idx = img_idx[order]
        # One operating point per distinct score; positions never change
        # across iterations because only weights change.
        self.group_last = (
            np.r_[scores[1:] != scores[:-1], True] if scores.size else np.zeros(0, dtype=bool)
        )
        self.ngt_per_image = ngt_per_image


def _summarize_method(run, ground_truth, image_ids, class_ids, criterion, duplicate_policy):
    index = {img: i for i, img in enumerate(image_ids)}
    unknown = set(run.predictions) - set(index)
    if unknown:
        raise ValueError(
            f"method {run.method_id!r} has predictions for unknown images: {sorted(unknown)[:5]}"
        )
    missing = [img for img in image_ids if img not in run.predictions]
    if missing:
        warnings.warn(
            f"method {run.method_id!r} has no predictions for {len(missing)} of "
            f"{len(image_ids)} images; treating them as empty",
            stacklevel=3,
        )
    summaries = {}
    for c in class_ids:
        scores, tps, imgs = [], [], []
        ngt = np.zeros(len(image_ids), dtype=np.int64)
        for img in image_ids:
            gts = [g for g in ground_truth.get(img, ()) if g.class_id == c]
            preds = [p for p in run.predictions.get(img, ()) if p.class_id == c]
            ngt[index[img]] = sum(not g.ignore for g in gts)
            if not preds:
                continue
            result = match_image(preds, gts, criterion, duplicate_policy)
            keep = result.outcomes != IGNORED
            scores.append(result.scores[keep])
            tps.append(result.outcomes[keep] == TP)
            imgs.append(np.full(int(keep.sum()), index[img], dtype=np.int64))
        if scores:
            summaries[c] = _ClassSummary(
                np.concatenate(scores), np.concatenate(tps), np.concatenate(imgs), ngt
            )
        else:
            summaries[c] = _ClassSummary(
                np.zeros(0), np.zeros(0, dtype=bool), np.zeros(0, dtype=np.int64), ngt
            )
    return summaries


def _class_metric(summary: _ClassSummary, counts: np.ndarray, metric: str,
                  n_images: int, config: EvalConfig) -> float | None:
    n_gt = int(counts @ summary.ngt_per_image)
    if n_gt == 0:
        return None  # class absent from this resample, same for every method
    w = counts[summary.img_idx]
    ctp = np.cumsum(w * summary.is_tp)[summary.group_last]
    cfp = np.cumsum(w * ~summary.is_tp)[summary.group_last]
    if metric == "map":
        recalls = ctp / n_gt
        precisions = ctp / np.maximum(ctp + cfp, 1)
        return ap_from_points(recalls, precisions, config.ap_interpolation)
    fppi = cfp / n_images
    sens = ctp / n_gt
    total = 0.0
    for t in config.fppi_thresholds:
        ok = fppi <= t
        total += float(sens[ok].max()) if ok.any() else 0.0
    return total / len(config.fppi_thresholds)


def _metrics_for_counts(per_method, class_ids, counts, metric, n_images, config):
    values = np.zeros(len(per_method))
    for mi, summaries in enumerate(per_method):
        acc, n_classes = 0.0, 0
        for c in class_ids:
            v = _class_metric(summaries[c], counts, metric, n_images, config)
            if v is not None:
                acc += v
                n_classes += 1
        # A resample wiping out every class's ground truth scores all
        # methods 0.0, producing a deterministic tie.
        values[mi] = acc / n_classes if n_classes else 0.0
    return values


def bootstrap_rank(
    runs: list[MethodRun],
    ground_truth: dict[str, list],
    metric: str = "map",
    iterations: int = 1000,
    seed: int = 0,
    criterion: MatchCriterion | None = None,
    config: EvalConfig | None = None,
    duplicate_policy: str = "fp",
    baseline_id: str | None = None,
    tie_rank: str = "average",
    threads: int = 1,
) -> RankingDistribution:
    """Rank methods across bootstrap resamples of the image universe.

    ``ground_truth`` maps every universe image_id (the resampling pool) to
    its ground-truth list. Ranks are 1 = best by the metric; exact metric
    ties receive fractional average ranks (or the shared minimum rank with
    ``tie_rank='min'``), so each iteration's ranks sum to M(M+1)/2 under
    the default.
    """
    if len(runs) < 2:
        raise ValueError("bootstrap ranking needs at least 2 methods")
    if len({r.method_id for r in runs}) != len(runs):
        raise ValueError("method ids must be unique")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if int(seed) < 0:
        raise ValueError("seed must be non-negative")
    if tie_rank not in ("average", "min"):
        raise ValueError(f"tie_rank must be 'average' or 'min', got {tie_rank!r}")
    if metric not in ("map", "froc"):
        raise ValueError(f"metric must be 'map' or 'froc', got {metric!r}")
    criterion = criterion or MatchCriterion()
    config = config or EvalConfig()
    image_ids = sorted(ground_truth)
    n_images = len(image_ids)
    if n_images == 0:
        raise ValueError("empty image universe")
    class_ids = sorted(
        {g.class_id for gts in ground_truth.values() for g in gts if not g.ignore}
    )
    if not class_ids:
        raise ValueError("no class has non-ignored ground truth")

    per_method = [
        _summarize_method(r, ground_truth, image_ids, class_ids, criterion, duplicate_policy)
        for r in runs
    ]
    method_ids = tuple(r.method_id for r in runs)

    full = _metrics_for_counts(
        per_method, class_ids, np.ones(n_images, dtype=np.int64), metric, n_images, config
    )
    point_metrics = {m: float(v) for m, v in zip(method_ids, full)}

    def one_iteration(i: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), i)))
        draw = rng.integers(0, n_images, size=n_images)
        counts = np.bincount(draw, minlength=n_images)
        values = _metrics_for_counts(per_method, class_ids, counts, metric, n_images, config)
        return rankdata(-values, method=tie_rank)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            all_ranks = list(pool.map(one_iteration, range(iterations)))
    else:
        all_ranks = [one_iteration(i) for i in range(iterations)]

    histograms: dict[str, dict[float, int]] = {m: {} for m in method_ids}
    for ranks in all_ranks:
        for m, rank in zip(method_ids, ranks):
            rank = float(rank)
            histograms[m][rank] = histograms[m].get(rank, 0) + 1
    mean_ranks = {
        m: sum(rank * count for rank, count in hist.items()) / iterations
        for m, hist in histograms.items()
    }
    deltas = delta_vs_baseline(point_metrics, baseline_id) if baseline_id is not None else None

    return RankingDistribution(
        metric=metric,
        iterations=iterations,
        seed=int(seed),
        method_ids=method_ids,
        point_metrics=point_metrics,
        mean_ranks=mean_ranks,
        histograms=histograms,
        baseline_id=baseline_id,
        deltas=deltas,
        tie_rank=tie_rank,
        paired=True,
        metadata={
            "criterion": criterion.kind,
            "duplicate_policy": duplicate_policy,
            "n_images": n_images,
            "classes": class_ids,
        },
    )


def delta_vs_baseline(results: dict[str, float], baseline_id: str) -> dict[str, float]:
    """Signed metric difference of every method against the named baseline."""
    if baseline_id not in results:
        raise ValueError(f"baseline {baseline_id!r} is not among methods {sorted(results)}")
    base = results[baseline_id]
    return {m: v - base for m, v in results.items()}
