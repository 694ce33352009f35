"""Prediction-set post-processing before evaluation: score filter and NMS.

NMS is class-wise (no cross-class suppression) and greedy: walking
detections in descending score (stable ties by input order), a detection
is kept iff its IoU with every already-kept detection is strictly below
the threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import boxes_to_array, iou_matrix
from .matching import Detection

__all__ = ["PostprocessConfig", "nms", "apply_postprocess"]


@dataclass(frozen=True)
class PostprocessConfig:
    """min_score filter, per-class NMS IoU, optional per-image detection cap."""

    min_score: float = 0.0
    nms_iou: float = 0.1
    max_detections_per_image: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.min_score <= 1.0:
            raise ValueError(f"min_score must be in [0, 1], got {self.min_score}")
        if not 0.0 < self.nms_iou <= 1.0:
            raise ValueError(f"nms_iou must be in (0, 1], got {self.nms_iou}")
        if self.max_detections_per_image is not None and self.max_detections_per_image < 1:
            raise ValueError("max_detections_per_image must be >= 1 when set")


def nms(dets: list[Detection], iou_thresh: float) -> list[Detection]:
    """Suppress overlapping detections of a single image and class."""
    if not 0.0 < iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must be in (0, 1], got {iou_thresh}")
    ids = {d.image_id for d in dets}
    classes = {d.class_id for d in dets}
    if len(ids) > 1 or len(classes) > 1:
        raise ValueError(f"nms got mixed image ids {ids} or class ids {classes}")
    if len(dets) <= 1:
        return list(dets)
    scores = np.array([d.score for d in dets])
    order = np.argsort(-scores, kind="stable")
    ious = iou_matrix(boxes_to_array([d.box for d in dets]),
                      boxes_to_array([d.box for d in dets]))
    kept: list[int] = []
    for i in order:
        if all(ious[i, j] < iou_thresh for j in kept):
            kept.append(int(i))
    return [dets[i] for i in kept]


def apply_postprocess(dets: list[Detection], config: PostprocessConfig) -> list[Detection]:
    """Score filter, then per-(image, class) NMS, then optional per-image top-k.

    Output is in canonical order: by image id, then class id, then
    descending score (stable).
    """
    survivors = [d for d in dets if d.score >= config.min_score]
    by_group: dict[tuple[str, int], list[Detection]] = {}
    for d in survivors:
        by_group.setdefault((d.image_id, d.class_id), []).append(d)

    out: list[Detection] = []
    for key in sorted(by_group):
        out.extend(nms(by_group[key], config.nms_iou))

    if config.max_detections_per_image is not None:
        by_image: dict[str, list[Detection]] = {}
        for d in out:
            by_image.setdefault(d.image_id, []).append(d)
        out = []
        for image_id in sorted(by_image):
            group = by_image[image_id]
            order = np.argsort(-np.array([d.score for d in group]), kind="stable")
            keep = sorted(order[: config.max_detections_per_image])
            out.extend(group[i] for i in keep)

    def canonical(i_d):
        i, d = i_d
        return (d.image_id, d.class_id, -d.score, i)

    return [d for _, d in sorted(enumerate(out), key=canonical)]
