"""Axis-aligned 3D box algebra and instance extraction from label masks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .volume_io import Volume

__all__ = [
    "BoundingBox3D",
    "GroundTruthObject",
    "InstanceMap",
    "box_iou",
    "box_center",
    "boxes_to_array",
    "iou_matrix",
    "connected_components",
    "instances_to_objects",
]


@dataclass(frozen=True)
class BoundingBox3D:
    """Axis-aligned box in millimeters, half-open on every axis: [min, max).

    The half-open convention means boxes that merely touch on a face, edge
    or corner have zero intersection volume.
    """

    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.min)
        hi = tuple(float(v) for v in self.max)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("box corners must have exactly 3 components")
        for a, b in zip(lo, hi):
            if not a < b:
                raise ValueError(f"degenerate box: min {lo} must be strictly below max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def volume(self) -> float:
        v = 1.0
        for a, b in zip(self.min, self.max):
            v *= b - a
        return v

    @property
    def edges(self) -> tuple[float, float, float]:
        return tuple(b - a for a, b in zip(self.min, self.max))


@dataclass(frozen=True)
class GroundTruthObject:
    """A reference object to detect: a box plus optional center/diameter metadata.

    When derived from a mask, ``center`` is the box midpoint and ``diameter``
    the longest box edge in mm (a proxy for annotation-supplied diameters).
    Objects flagged ``ignore`` absorb matching predictions without counting.
    """

    image_id: str
    class_id: int
    box: BoundingBox3D
    center: tuple[float, float, float]
    diameter: float | None = None
    ignore: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if len(self.center) != 3:
            raise ValueError("center must have exactly 3 components")
        if self.diameter is not None and not self.diameter > 0:
            raise ValueError(f"diameter must be positive, got {self.diameter}")


@dataclass(frozen=True)
class InstanceMap:
    """Connected-component labeling of one foreground class.

    ``labels`` is volume-shaped (indexed [x, y, z]) with 0 = background and
    instance ids 1..count assigned in ascending order of each component's
    lexicographically smallest (x, y, z) voxel.
    """

    labels: np.ndarray
    count: int
    connectivity: int

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels))
        if self.labels.ndim != 3:
            raise ValueError("instance map must be 3-dimensional")


def box_iou(a: BoundingBox3D, b: BoundingBox3D) -> float:
    """Intersection over union of two boxes; 0 for disjoint or touching boxes."""
    inter = 1.0
    for amin, amax, bmin, bmax in zip(a.min, a.max, b.min, b.max):
        extent = min(amax, bmax) - max(amin, bmin)
        if extent <= 0.0:
            return 0.0
        inter *= extent
    union = a.volume + b.volume - inter
    return inter / union


def box_center(a: BoundingBox3D) -> tuple[float, float, float]:
    """Componentwise midpoint of a box."""
    return tuple((lo + hi) / 2.0 for lo, hi in zip(a.min, a.max))


def boxes_to_array(boxes) -> np.ndarray:
    """Stack boxes into an (n, 6) float array [min_x, min_y, min_z, max_x, max_y, max_z]."""
    if len(boxes) == 0:
        return np.zeros((0, 6), dtype=np.float64)
    return np.array([b.min + b.max for b in boxes], dtype=np.float64)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (n, 6) / (m, 6) box arrays, half-open semantics."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 6)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 6)
    lo = np.maximum(a[:, None, :3], b[None, :, :3])
    hi = np.minimum(a[:, None, 3:], b[None, :, 3:])
    extents = np.clip(hi - lo, 0.0, None)
    inter = extents.prod(axis=2)
    vol_a = (a[:, 3:] - a[:, :3]).prod(axis=1)
    vol_b = (b[:, 3:] - b[:, :3]).prod(axis=1)
    union = vol_a[:, None] + vol_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(inter > 0.0, inter / union, 0.0)
    return iou


_STRUCTURES = {
    6: ndimage.generate_binary_structure(3, 1),
    18: ndimage.generate_binary_structure(3, 2),
    26: ndimage.generate_binary_structure(3, 3),
}


def connected_components(mask, foreground_class: int = 1, connectivity: int = 26) -> InstanceMap:
    """Partition the voxels equal to ``foreground_class`` into connected instances.

    Args:
        mask: Volume of integer labels, or a bare 3D array.
        foreground_class: label value to extract.
        connectivity: 6 (faces), 18 (faces+edges) or 26 (full neighborhood).

    Returns:
        InstanceMap with ids 1..count ordered by each component's
        lexicographically smallest (x, y, z) voxel.
    """
    if connectivity not in _STRUCTURES:
        raise ValueError(f"connectivity must be one of 6, 18, 26, got {connectivity}")
    data = mask.data if isinstance(mask, Volume) else np.asarray(mask)
    if data.ndim != 3:
        raise ValueError("mask must be 3-dimensional")
    foreground = data == foreground_class
    labels = np.empty(data.shape, dtype=np.int32)
    count = ndimage.label(foreground, structure=_STRUCTURES[connectivity], output=labels)
    if count > 1:
        labels = _relabel_lexicographic(labels, count)
    return InstanceMap(labels=labels, count=int(count), connectivity=connectivity)


def _relabel_lexicographic(labels: np.ndarray, count: int) -> np.ndarray:
    # Renumber so ids ascend with each component's first voxel in C order,
    # which for an [x, y, z]-indexed array is the lexicographic (x, y, z) min.
    flat = labels.ravel()
    positions = np.flatnonzero(flat)
    values = flat[positions]
    first = np.empty(count + 1, dtype=np.int64)
    # Reversed scatter: the final write per label is its smallest position.
    first[values[::-1]] = positions[::-1]
    order = np.argsort(first[1:], kind="stable")
    if np.array_equal(order, np.arange(count)):
        return labels
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[order + 1] = np.arange(1, count + 1, dtype=np.int32)
    return remap[labels]


def instances_to_objects(
    imap: InstanceMap,
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0),
    class_id: int = 1,
    image_id: str = "",
) -> list[GroundTruthObject]:
    """Convert labeled instances to ground-truth objects with mm boxes.

    Voxel index i on an axis with spacing s and origin o spans the half-open
    mm interval [i*s + o, (i+1)*s + o); the instance box is the tight union
    of its voxels' intervals. The diameter proxy is the longest box edge.
    """
    spacing = tuple(float(s) for s in spacing)
    origin = tuple(float(o) for o in origin)
    objects: list[GroundTruthObject] = []
    for slices in ndimage.find_objects(imap.labels):
        if slices is None:
            continue
        lo = tuple(s.start * sp + og for s, sp, og in zip(slices, spacing, origin))
        hi = tuple(s.stop * sp + og for s, sp, og in zip(slices, spacing, origin))
        box = BoundingBox3D(min=lo, max=hi)
        objects.append(
            GroundTruthObject(
                image_id=image_id,
                class_id=class_id,
                box=box,
                center=box_center(box),
                diameter=max(box.edges),
            )
        )
    return objects
