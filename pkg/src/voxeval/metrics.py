"""Detection metrics: precision-recall / average precision and FROC.

Operating points are taken at every distinct prediction score, i.e. the
prefix containing all predictions scoring >= that cutoff. This makes every
metric invariant to the ordering of equal-score records and lets a
brute-force cutoff-enumeration oracle reproduce AP exactly.

FROC here is computed per class; the reported score is the mean over
classes of the per-class mean sensitivity, and the choice is flagged in
serialized metadata. Classes with zero non-ignored ground truth are
excluded from both mAP and FROC rather than scored 0.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .matching import IGNORED, TP, Detection, MatchCriterion, MatchResult, match_image

__all__ = [
    "DEFAULT_FPPI_THRESHOLDS",
    "EvalConfig",
    "PRCurve",
    "EvaluationResult",
    "pr_curve",
    "ap_from_points",
    "average_precision",
    "mean_average_precision",
    "froc",
    "evaluate_detections",
]

DEFAULT_FPPI_THRESHOLDS = (0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class EvalConfig:
    """Metric parameters: matching IoU, FPPI grid, AP interpolation mode."""

    iou_threshold: float = 0.1
    fppi_thresholds: tuple[float, ...] = DEFAULT_FPPI_THRESHOLDS
    ap_interpolation: str = "all_points"

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        thr = tuple(float(t) for t in self.fppi_thresholds)
        if not thr or any(not t > 0 for t in thr) or any(a >= b for a, b in zip(thr, thr[1:])):
            raise ValueError(f"fppi_thresholds must be strictly increasing positives, got {thr}")
        object.__setattr__(self, "fppi_thresholds", thr)
        if self.ap_interpolation not in ("all_points", "points_101"):
            raise ValueError(f"unknown ap_interpolation {self.ap_interpolation!r}")


@dataclass(frozen=True)
class PRCurve:
    """Operating points (one per distinct score cutoff, descending score)."""

    recalls: np.ndarray
    precisions: np.ndarray
    cutoffs: np.ndarray
    n_gt: int


@dataclass(frozen=True)
class EvaluationResult:
    """Dataset-level metrics for one method."""

    per_class_ap: dict[int, float]
    mean_ap: float
    per_class_sensitivities: dict[int, tuple[float, ...]]
    sensitivities: tuple[float, ...]
    froc_score: float
    fppi_thresholds: tuple[float, ...]
    n_images: int
    n_gt: int
    pr_curves: dict[int, PRCurve] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
            "mean_ap": self.mean_ap,
            "per_class_sensitivities": {
                str(k): list(v) for k, v in sorted(self.per_class_sensitivities.items())
            },
            "sensitivities": list(self.sensitivities),
            "froc_score": self.froc_score,
            "fppi_thresholds": list(self.fppi_thresholds),
            "n_images": self.n_images,
            "n_gt": self.n_gt,
            "pr_curves": {
                str(k): {
                    "recalls": [float(x) for x in c.recalls],
                    "precisions": [float(x) for x in c.precisions],
                    "cutoffs": [float(x) for x in c.cutoffs],
                }
                for k, c in sorted(self.pr_curves.items())
            },
            "froc_averaging": "per_class_then_mean",
        }


def _pooled_counts(matches: list[MatchResult]):
    """Pool non-ignored predictions, sort by score, return distinct-cutoff counts.

    Returns (cutoffs desc, cumulative TP, cumulative FP, total n_gt).
    """
    n_gt = sum(m.n_gt for m in matches)
    if matches:
        scores = np.concatenate([m.scores for m in matches])
        outcomes = np.concatenate([m.outcomes for m in matches])
    else:
        scores = np.zeros(0)
        outcomes = np.zeros(0, dtype=np.int8)
    keep = outcomes != IGNORED
    scores, outcomes = scores[keep], outcomes[keep]
    order = np.argsort(-scores, kind="stable")
    scores, outcomes = scores[order], outcomes[order]
    ctp = np.cumsum(outcomes == TP)
    cfp = np.cumsum(outcomes != TP)
    # Keep one operating point per distinct score: the full >= cutoff prefix.
    if scores.size:
        last = np.r_[scores[1:] != scores[:-1], True]
    else:
        last = np.zeros(0, dtype=bool)
    return scores[last], ctp[last], cfp[last], n_gt


def pr_curve(matches: list[MatchResult]) -> PRCurve:
    """Precision/recall over all images of one class, pooled by score."""
    classes = {m.class_id for m in matches}
    if len(classes) > 1:
        raise ValueError(f"pr_curve got mixed classes {classes}")
    cutoffs, ctp, cfp, n_gt = _pooled_counts(matches)
    if n_gt < 1:
        raise ValueError("pr_curve needs at least one non-ignored ground truth")
    recalls = ctp / n_gt
    precisions = ctp / np.maximum(ctp + cfp, 1)
    return PRCurve(recalls=recalls, precisions=precisions, cutoffs=cutoffs, n_gt=n_gt)


def ap_from_points(recalls: np.ndarray, precisions: np.ndarray, interpolation: str) -> float:
    """AP from score-descending operating points (recalls non-decreasing)."""
    if interpolation not in ("all_points", "points_101"):
        raise ValueError(f"unknown ap interpolation {interpolation!r}")
    if recalls.size == 0:
        return 0.0
    # Envelope: precision at recall r replaced by max precision at recall >= r.
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    if interpolation == "all_points":
        prev = np.r_[0.0, recalls[:-1]]
        return float(((recalls - prev) * envelope).sum())
    grid = np.linspace(0.0, 1.0, 101)
    # For each grid recall, the first operating point with recall >= r.
    idx = np.searchsorted(recalls, grid, side="left")
    sampled = np.where(idx < envelope.size, envelope[np.minimum(idx, envelope.size - 1)], 0.0)
    return float(sampled.mean())


def average_precision(curve: PRCurve, interpolation: str = "all_points") -> float:
    """Area under the monotone precision envelope of the curve.

    all_points integrates the envelope exactly over recall steps;
    points_101 averages the envelope at recalls 0.00, 0.01, ..., 1.00.
    """
    return ap_from_points(curve.recalls, curve.precisions, interpolation)


def mean_average_precision(per_class) -> float:
    """Unweighted mean of per-class APs (mapping or sequence)."""
    values = list(per_class.values()) if hasattr(per_class, "values") else list(per_class)
    if not values:
        raise ValueError("mean_average_precision needs at least one class with ground truth")
    return float(np.mean(values))


def froc(
    matches: list[MatchResult],
    n_images: int,
    thresholds: tuple[float, ...] = DEFAULT_FPPI_THRESHOLDS,
) -> tuple[tuple[float, ...], float]:
    """Sensitivity at each FPPI threshold plus their mean.

    Sensitivity at threshold t is the maximum sensitivity over operating
    points with FPPI <= t, or 0 when no point qualifies.
    """
    if n_images < 1:
        raise ValueError("froc needs n_images >= 1")
    cutoffs, ctp, cfp, n_gt = _pooled_counts(matches)
    if n_gt < 1:
        raise ValueError("froc needs at least one non-ignored ground truth")
    fppi = cfp / n_images
    sens = ctp / n_gt
    out = []
    for t in thresholds:
        ok = fppi <= t
        out.append(float(sens[ok].max()) if ok.any() else 0.0)
    return tuple(out), float(np.mean(out))


def _group_by_class(items, class_ids):
    grouped = {c: [] for c in class_ids}
    for it in items:
        if it.class_id in grouped:
            grouped[it.class_id].append(it)
    return grouped


def evaluate_detections(
    ground_truth: dict[str, list],
    predictions: dict[str, list[Detection]],
    criterion: MatchCriterion,
    config: EvalConfig | None = None,
    duplicate_policy: str = "fp",
    threads: int = 1,
) -> EvaluationResult:
    """Match and score one method over an image universe.

    ``ground_truth`` maps every universe image_id to its (possibly empty)
    ground-truth list; images absent from ``predictions`` count as having
    no detections. Classes are taken from the ground truth; predictions of
    classes without any non-ignored ground truth are dropped.
    """
    config = config or EvalConfig()
    image_ids = sorted(ground_truth)
    unknown = sorted(set(predictions) - set(ground_truth))
    if unknown:
        raise ValueError(f"predictions reference images outside the universe: {unknown}")
    class_ids = sorted(
        {g.class_id for gts in ground_truth.values() for g in gts if not g.ignore}
    )
    if not class_ids:
        raise ValueError("no class has non-ignored ground truth")

    def match_one(image_id):
        gts_by_class = _group_by_class(ground_truth.get(image_id, ()), class_ids)
        preds_by_class = _group_by_class(predictions.get(image_id, ()), class_ids)
        return [
            match_image(preds_by_class[c], gts_by_class[c], criterion, duplicate_policy)
            for c in class_ids
            if preds_by_class[c] or gts_by_class[c]
        ]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_image = list(pool.map(match_one, image_ids))
    else:
        per_image = [match_one(i) for i in image_ids]

    by_class: dict[int, list[MatchResult]] = {c: [] for c in class_ids}
    for results in per_image:  # deterministic image order regardless of threads
        for r in results:
            by_class[r.class_id].append(r)

    per_class_ap: dict[int, float] = {}
    per_class_sens: dict[int, tuple[float, ...]] = {}
    curves: dict[int, PRCurve] = {}
    for c in class_ids:
        curve = pr_curve(by_class[c])
        curves[c] = curve
        per_class_ap[c] = average_precision(curve, config.ap_interpolation)
        per_class_sens[c], _ = froc(by_class[c], len(image_ids), config.fppi_thresholds)

    sens_matrix = np.array([per_class_sens[c] for c in class_ids], dtype=np.float64)
    mean_sens = tuple(float(x) for x in sens_matrix.mean(axis=0))
    return EvaluationResult(
        per_class_ap=per_class_ap,
        mean_ap=mean_average_precision(per_class_ap),
        per_class_sensitivities=per_class_sens,
        sensitivities=mean_sens,
        froc_score=float(np.mean(mean_sens)),
        fppi_thresholds=config.fppi_thresholds,
        n_images=len(image_ids),
        n_gt=sum(m.n_gt for ms in by_class.values() for m in ms),
        pr_curves=curves,
    )
