"""Greedy assignment of predictions to ground truth per image and class.

Predictions are processed in descending score (stable on ties by input
order). Each prediction takes the best-qualifying unmatched ground truth;
qualification and "best" depend on the criterion:

  iou_threshold         qualify: IoU >= tau;       best: highest IoU
  center_half_diameter  qualify: dist <= d_gt / 2; best: smallest distance
  center_in_radius      qualify: dist <= r;        best: smallest distance
                        (r explicit, or the ground-truth radius d_gt / 2)

Predictions whose only qualifying ground truth is flagged ignore are
absorbed (neither TP nor FP). Predictions qualifying only against already
matched ground truth follow duplicate_policy: "fp" counts them as false
positives (COCO-style mAP convention), "ignore" drops them from both
counts (LUNA16/PN9-style FROC convention).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BoundingBox3D, GroundTruthObject, box_center, boxes_to_array, iou_matrix

__all__ = ["Detection", "MatchCriterion", "MatchResult", "match_image"]

TP = 1
FP = 0
IGNORED = -1


@dataclass(frozen=True)
class Detection:
    """One predicted object: a scored box on a named image."""

    image_id: str
    class_id: int
    box: BoundingBox3D
    score: float

    def __post_init__(self):
        score = float(self.score)
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {score}")
        object.__setattr__(self, "score", score)


@dataclass(frozen=True)
class MatchCriterion:
    """How a prediction qualifies against a ground-truth object.

    kind: "iou_threshold" | "center_half_diameter" | "center_in_radius".
    ``iou`` is the tau for iou_threshold. ``radius`` is the explicit r for
    center_in_radius; left as None, each ground truth supplies its own
    radius (diameter / 2).
    """

    kind: str = "iou_threshold"
    iou: float = 0.1
    radius: float | None = None

    def __post_init__(self):
        if self.kind not in ("iou_threshold", "center_half_diameter", "center_in_radius"):
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if self.kind == "iou_threshold" and not 0.0 < self.iou <= 1.0:
            raise ValueError(f"iou threshold must be in (0, 1], got {self.iou}")
        if self.radius is not None and not self.radius > 0:
            raise ValueError(f"explicit radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class MatchResult:
    """Per-prediction outcomes and per-ground-truth hit flags for one image/class.

    ``outcomes`` follows prediction input order: 1 = TP, 0 = FP, -1 = ignored.
    ``matched_gt`` holds the index (into the gts list) a TP matched or an
    ignored prediction was absorbed by, -1 otherwise. ``scores`` keeps the
    input-order prediction scores so metric code needs no detour back to
    the detections.
    """

    image_id: str
    class_id: int
    outcomes: np.ndarray
    matched_gt: np.ndarray
    scores: np.ndarray
    gt_hit: np.ndarray
    n_gt: int
    n_tp: int
    n_fp: int
    n_ignored: int


def _gt_limits(gts: list[GroundTruthObject], criterion: MatchCriterion) -> np.ndarray:
    limits = np.empty(len(gts), dtype=np.float64)
    for i, gt in enumerate(gts):
        if criterion.kind == "center_in_radius" and criterion.radius is not None:
            limits[i] = criterion.radius
        else:
            if gt.diameter is None:
                raise ValueError(
                    f"criterion {criterion.kind} needs a diameter on every ground truth; "
                    f"missing for image {gt.image_id!r}"
                )
            limits[i] = gt.diameter / 2.0
    return limits


def match_image(
    preds: list[Detection],
    gts: list[GroundTruthObject],
    criterion: MatchCriterion,
    duplicate_policy: str = "fp",
) -> MatchResult:
    """Assign one image's predictions of one class to its ground truth."""
    if duplicate_policy not in ("fp", "ignore"):
        raise ValueError(f"duplicate_policy must be 'fp' or 'ignore', got {duplicate_policy!r}")
    ids = {p.image_id for p in preds} | {g.image_id for g in gts}
    classes = {p.class_id for p in preds} | {g.class_id for g in gts}
    if len(ids) > 1 or len(classes) > 1:
        raise ValueError(f"match_image got mixed image ids {ids} or class ids {classes}")
    image_id = next(iter(ids)) if ids else ""
    class_id = next(iter(classes)) if classes else 0

    n_p, n_g = len(preds), len(gts)
    scores = np.array([p.score for p in preds], dtype=np.float64)
    outcomes = np.zeros(n_p, dtype=np.int8)
    matched_gt = np.full(n_p, -1, dtype=np.int64)
    gt_hit = np.zeros(n_g, dtype=bool)
    is_ignored_gt = np.array([g.ignore for g in gts], dtype=bool)
    n_real_gt = int(n_g - is_ignored_gt.sum())

    if n_p and n_g:
        if criterion.kind == "iou_threshold":
            goodness = iou_matrix(boxes_to_array([p.box for p in preds]),
                                  boxes_to_array([g.box for g in gts]))
            qualifies = goodness >= criterion.iou
        else:
            pc = np.array([box_center(p.box) for p in preds], dtype=np.float64)
            gc = np.array([g.center for g in gts], dtype=np.float64)
            dist = np.sqrt(((pc[:, None, :] - gc[None, :, :]) ** 2).sum(axis=2))
            qualifies = dist <= _gt_limits(gts, criterion)[None, :]
            goodness = -dist

        taken = np.zeros(n_g, dtype=bool)
        for p in np.argsort(-scores, kind="stable"):
            q = qualifies[p]
            open_real = q & ~taken & ~is_ignored_gt
            if open_real.any():
                # Best-qualifying open ground truth; argmax takes the lowest
                # index on exact ties.
                g = int(np.argmax(np.where(open_real, goodness[p], -np.inf)))
                taken[g] = True
                gt_hit[g] = True
                outcomes[p] = TP
                matched_gt[p] = g
                continue
            absorbing = q & is_ignored_gt
            if absorbing.any():
                outcomes[p] = IGNORED
                matched_gt[p] = int(np.argmax(np.where(absorbing, goodness[p], -np.inf)))
                continue
            if q.any() and duplicate_policy == "ignore":
                outcomes[p] = IGNORED
                matched_gt[p] = int(np.argmax(np.where(q, goodness[p], -np.inf)))
            # else: stays FP with no match.

    return MatchResult(
        image_id=image_id,
        class_id=class_id,
        outcomes=outcomes,
        matched_gt=matched_gt,
        scores=scores,
        gt_hit=gt_hit,
        n_gt=n_real_gt,
        n_tp=int((outcomes == TP).sum()),
        n_fp=int((outcomes == FP).sum()),
        n_ignored=int((outcomes == IGNORED).sum()),
    )
