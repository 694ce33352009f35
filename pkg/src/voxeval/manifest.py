"""Dataset manifests and prediction-file ingestion.

A manifest is a JSON document describing one dataset:

    {
      "schema_version": 1,
      "dataset_id": "demo",
      "axis_order": "xyz",
      "classes": {"1": "lesion"},
      "images": [
        {"image_id": "a", "split": "test",
         "image": "vols/a.nii.gz",
         "mask": "masks/a.nii.gz", "mask_classes": {"1": 1}},
        {"image_id": "b", "split": "test",
         "boxes": [{"class_id": 1, "min": [0,0,0], "max": [4,4,4],
                    "diameter": 4.0, "ignore": false}]}
      ]
    }

Every image carries exactly one ground-truth source: a mask path (instances
are extracted by connected components, lazily, cached per image) or an
explicit box list (possibly empty). Box records may carry an explicit
"center" (default: box midpoint) and "diameter" (default: largest box edge,
the same proxy mask-derived objects use). Paths are resolved relative to
the manifest's directory and must exist at load time.

``axis_order`` declares how the components of every coordinate triple in
this manifest and in its prediction files map onto the volume axes; triples
are permuted to internal (x, y, z) order on load. Prediction files are
either a JSON object {"schema_version": 1, "method_id": ..., "detections":
[...]} or newline-delimited JSON records, one detection per line.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import (
    BoundingBox3D,
    GroundTruthObject,
    box_center,
    connected_components,
    instances_to_objects,
)
from .matching import Detection
from .volume_io import read_volume

__all__ = [
    "ManifestError",
    "PredictionFileError",
    "ImageEntry",
    "DatasetManifest",
    "PredictionFile",
    "load_manifest",
    "load_predictions",
]

SPLITS = ("train", "val", "test")


class ManifestError(ValueError):
    """Schema violation or unresolvable reference in a dataset manifest."""


class PredictionFileError(ValueError):
    """Malformed or inconsistent prediction file."""


def _axis_permutation(axis_order: str, where: str) -> tuple[int, int, int]:
    if not isinstance(axis_order, str) or sorted(axis_order) != ["x", "y", "z"]:
        raise ManifestError(f"{where}: axis_order must be a permutation of 'xyz', got {axis_order!r}")
    return tuple(axis_order.index(a) for a in "xyz")


def _triple(value, perm, where) -> tuple[float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ManifestError(f"{where}: expected a 3-element array, got {value!r}")
    try:
        reordered = tuple(float(value[p]) for p in perm)
    except (TypeError, ValueError):
        raise ManifestError(f"{where}: non-numeric component in {value!r}") from None
    return reordered


@dataclass(frozen=True)
class ImageEntry:
    image_id: str
    split: str
    image_path: Path | None
    mask_path: Path | None
    mask_classes: dict[int, int] | None
    boxes: tuple[GroundTruthObject, ...] | None


@dataclass
class DatasetManifest:
    """Validated dataset description with lazy mask-to-box materialization."""

    dataset_id: str
    axis_order: str
    classes: dict[int, str]
    images: list[ImageEntry]
    root: Path
    connectivity: int = 26
    _cache: dict[str, list[GroundTruthObject]] = field(default_factory=dict, repr=False)

    def image_ids(self, split: str | None = None) -> list[str]:
        return [e.image_id for e in self.images if split is None or e.split == split]

    def entry(self, image_id: str) -> ImageEntry:
        for e in self.images:
            if e.image_id == image_id:
                return e
        raise KeyError(image_id)

    def ground_truth(self, image_id: str) -> list[GroundTruthObject]:
        """Ground-truth objects of one image; masks are converted once and cached."""
        if image_id in self._cache:
            return self._cache[image_id]
        entry = self.entry(image_id)
        if entry.boxes is not None:
            objects = list(entry.boxes)
        else:
            mask = read_volume(entry.mask_path)
            objects = []
            for label, class_id in sorted(entry.mask_classes.items()):
                imap = connected_components(mask, foreground_class=label,
                                            connectivity=self.connectivity)
                objects.extend(
                    instances_to_objects(imap, spacing=mask.spacing, origin=mask.origin,
                                         class_id=class_id, image_id=image_id)
                )
        self._cache[image_id] = objects
        return objects

    def ground_truth_by_image(self, split: str | None = None) -> dict[str, list[GroundTruthObject]]:
        return {i: self.ground_truth(i) for i in self.image_ids(split)}


@dataclass(frozen=True)
class PredictionFile:
    method_id: str
    detections: tuple[Detection, ...]

    def by_image(self) -> dict[str, list[Detection]]:
        grouped: dict[str, list[Detection]] = {}
        for d in self.detections:
            grouped.setdefault(d.image_id, []).append(d)
        return grouped


def _require(mapping, key, where, kind=None):
    if key not in mapping:
        raise ManifestError(f"{where}: missing required field {key!r}")
    value = mapping[key]
    if kind is not None and not isinstance(value, kind):
        raise ManifestError(f"{where}: field {key!r} must be {kind.__name__}, got {type(value).__name__}")
    return value


def _resolve_path(raw, root: Path, where: str) -> Path:
    if not isinstance(raw, str):
        raise ManifestError(f"{where}: path must be a string, got {raw!r}")
    path = (root / raw).resolve() if not Path(raw).is_absolute() else Path(raw)
    if not path.exists():
        raise ManifestError(f"{where}: path {raw!r} does not exist (resolved {path})")
    return path


def _parse_gt_box(record, perm, classes, image_id, where) -> GroundTruthObject:
    if not isinstance(record, dict):
        raise ManifestError(f"{where}: box record must be an object, got {record!r}")
    class_id = _require(record, "class_id", where, int)
    if classes and class_id not in classes:
        raise ManifestError(f"{where}: class_id {class_id} not in the class table")
    box = BoundingBox3D(
        min=_triple(_require(record, "min", where), perm, f"{where}.min"),
        max=_triple(_require(record, "max", where), perm, f"{where}.max"),
    )
    center = (
        _triple(record["center"], perm, f"{where}.center")
        if "center" in record
        else box_center(box)
    )
    if "diameter" in record:
        try:
            diameter = float(record["diameter"])
        except (TypeError, ValueError):
            raise ManifestError(f"{where}: 'diameter' must be a number") from None
        if not diameter > 0:
            raise ManifestError(f"{where}: 'diameter' must be positive, got {diameter}")
    else:
        # same proxy the mask route uses: the largest box edge
        diameter = max(b - a for a, b in zip(box.min, box.max))
    ignore = record.get("ignore", False)
    if not isinstance(ignore, bool):
        raise ManifestError(f"{where}: 'ignore' must be a boolean")
    return GroundTruthObject(
        image_id=image_id,
        class_id=class_id,
        box=box,
        center=center,
        diameter=diameter,
        ignore=ignore,
    )


def load_manifest(path, connectivity: int = 26) -> DatasetManifest:
    """Parse and validate a dataset manifest JSON file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: top level must be a JSON object")
    root = path.resolve().parent

    dataset_id = _require(doc, "dataset_id", str(path), str)
    perm = _axis_permutation(doc.get("axis_order", "xyz"), str(path))

    raw_classes = doc.get("classes", {})
    if not isinstance(raw_classes, dict):
        raise ManifestError(f"{path}: 'classes' must be an object mapping class_id to name")
    classes: dict[int, str] = {}
    for key, name in raw_classes.items():
        try:
            classes[int(key)] = str(name)
        except ValueError:
            raise ManifestError(f"{path}: class key {key!r} is not an integer") from None

    images_raw = _require(doc, "images", str(path), list)
    images: list[ImageEntry] = []
    seen: set[str] = set()
    for i, rec in enumerate(images_raw):
        where = f"{path}:images[{i}]"
        if not isinstance(rec, dict):
            raise ManifestError(f"{where}: must be an object")
        image_id = _require(rec, "image_id", where, str)
        if image_id in seen:
            raise ManifestError(f"{where}: duplicate image_id {image_id!r}")
        seen.add(image_id)
        split = rec.get("split", "test")
        if split not in SPLITS:
            raise ManifestError(f"{where}: split must be one of {SPLITS}, got {split!r}")

        image_path = _resolve_path(rec["image"], root, where) if "image" in rec else None

        has_mask, has_boxes = "mask" in rec, "boxes" in rec
        if has_mask == has_boxes:
            raise ManifestError(
                f"{where}: exactly one ground-truth source required ('mask' or 'boxes')"
            )
        mask_path = None
        mask_classes = None
        boxes = None
        if has_mask:
            mask_path = _resolve_path(rec["mask"], root, where)
            raw_mc = rec.get("mask_classes")
            if raw_mc is None:
                # Default: every declared class maps to the same mask label.
                mask_classes = {c: c for c in sorted(classes)} if classes else {1: 1}
            else:
                if not isinstance(raw_mc, dict):
                    raise ManifestError(f"{where}: 'mask_classes' must map mask label to class_id")
                try:
                    mask_classes = {int(k): int(v) for k, v in raw_mc.items()}
                except (TypeError, ValueError):
                    raise ManifestError(f"{where}: non-integer entry in 'mask_classes'") from None
        else:
            if not isinstance(rec["boxes"], list):
                raise ManifestError(f"{where}: 'boxes' must be an array")
            parsed = []
            for j, b in enumerate(rec["boxes"]):
                try:
                    parsed.append(_parse_gt_box(b, perm, classes, image_id, f"{where}.boxes[{j}]"))
                except ManifestError:
                    raise
                except ValueError as e:
                    raise ManifestError(f"{where}.boxes[{j}]: {e}") from e
            boxes = tuple(parsed)

        images.append(
            ImageEntry(
                image_id=image_id, split=split, image_path=image_path,
                mask_path=mask_path, mask_classes=mask_classes, boxes=boxes,
            )
        )

    return DatasetManifest(
        dataset_id=dataset_id,
        axis_order=doc.get("axis_order", "xyz"),
        classes=classes,
        images=images,
        root=root,
        connectivity=connectivity,
    )


def _parse_detection(record, perm, known_ids, strict, where) -> Detection | None:
    if not isinstance(record, dict):
        raise PredictionFileError(f"{where}: record must be an object, got {record!r}")
    for key in ("image_id", "class_id", "min", "max", "score"):
        if key not in record:
            raise PredictionFileError(f"{where}: missing required field {key!r}")
    image_id = record["image_id"]
    if not isinstance(image_id, str):
        raise PredictionFileError(f"{where}: image_id must be a string")
    if known_ids is not None and image_id not in known_ids:
        if strict:
            raise PredictionFileError(f"{where}: unknown image_id {image_id!r}")
        warnings.warn(f"{where}: dropping record for unknown image_id {image_id!r}", stacklevel=2)
        return None
    if not isinstance(record["class_id"], int):
        raise PredictionFileError(f"{where}: class_id must be an integer")
    score = record["score"]
    if not isinstance(score, (int, float)) or not 0.0 <= float(score) <= 1.0:
        raise PredictionFileError(f"{where}: score must be a number in [0, 1], got {score!r}")
    try:
        box = BoundingBox3D(
            min=_triple(record["min"], perm, f"{where}.min"),
            max=_triple(record["max"], perm, f"{where}.max"),
        )
    except ManifestError as e:
        raise PredictionFileError(str(e)) from None
    except ValueError as e:
        raise PredictionFileError(f"{where}: {e}") from e
    return Detection(image_id=image_id, class_id=record["class_id"], box=box, score=float(score))


def load_predictions(
    path,
    manifest: DatasetManifest | None = None,
    method_id: str | None = None,
    strict: bool = True,
) -> PredictionFile:
    """Parse a prediction file (JSON object or newline-delimited records).

    With a manifest, every record's image_id must belong to it; ``strict``
    fails on unknown ids, otherwise they are dropped with a warning. Triples
    follow the manifest's axis_order declaration.
    """
    path = Path(path)
    text = path.read_text()
    perm = (0, 1, 2) if manifest is None else _axis_permutation(manifest.axis_order, str(path))
    known = set(manifest.image_ids()) if manifest is not None else None

    file_method = None
    try:
        doc = json.loads(text) if text.strip() else None
    except json.JSONDecodeError:
        doc = None

    if isinstance(doc, dict) and "detections" in doc:
        # Single JSON object with a detections array.
        if not isinstance(doc["detections"], list):
            raise PredictionFileError(f"{path}: 'detections' must be an array")
        file_method = doc.get("method_id")
        records = doc["detections"]
        where = [f"{path}:detections[{i}]" for i in range(len(records))]
    elif isinstance(doc, dict) and "image_id" in doc:
        # A one-line newline-delimited file.
        records, where = [doc], [f"{path}:1"]
    elif doc is not None:
        raise PredictionFileError(
            f"{path}: expected an object with a 'detections' array or newline-delimited records"
        )
    else:
        # Newline-delimited JSON, one detection per line.
        records, where = [], []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise PredictionFileError(f"{path}:{lineno}: not valid JSON: {e}") from e
            where.append(f"{path}:{lineno}")

    detections = []
    for rec, w in zip(records, where):
        det = _parse_detection(rec, perm, known, strict, w)
        if det is not None:
            detections.append(det)

    resolved = method_id or file_method or path.stem
    return PredictionFile(method_id=str(resolved), detections=tuple(detections))
