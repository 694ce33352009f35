"""Volume preprocessing: isotropic resampling and intensity normalization.

The pipeline mirrors common CT/MRI detector preparation: resample to a fixed
target spacing (default 1x1x1 mm), clip CT intensities to the 0.5/99.5
percentiles, then z-score normalize. MRI-style configs omit the clip step
and normalize directly; that choice is a config default, not hard-coded
per modality.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .volume_io import Volume

__all__ = [
    "PreprocessConfig",
    "CT_DEFAULT",
    "MRI_DEFAULT",
    "resample",
    "clip_percentiles",
    "zscore_normalize",
    "preprocess",
]

ZSCORE_EPS = 1e-8


@dataclass(frozen=True)
class PreprocessConfig:
    """Pipeline parameters; ``clip_percentiles=None`` skips clipping entirely."""

    target_spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    image_interpolation: str = "trilinear"
    clip_percentiles: tuple[float, float] | None = (0.5, 99.5)
    normalize: bool = True

    def __post_init__(self):
        spacing = tuple(float(s) for s in self.target_spacing)
        if len(spacing) != 3 or any(not s > 0 for s in spacing):
            raise ValueError(f"target_spacing must be 3 positive reals, got {self.target_spacing}")
        object.__setattr__(self, "target_spacing", spacing)
        if self.image_interpolation not in ("trilinear", "nearest"):
            raise ValueError(f"unknown interpolation {self.image_interpolation!r}")
        if self.clip_percentiles is not None:
            lo, hi = (float(p) for p in self.clip_percentiles)
            if not (0.0 <= lo < hi <= 100.0):
                raise ValueError(f"clip percentiles need 0 <= lo < hi <= 100, got {lo}, {hi}")
            object.__setattr__(self, "clip_percentiles", (lo, hi))


CT_DEFAULT = PreprocessConfig()
MRI_DEFAULT = PreprocessConfig(clip_percentiles=None)


def _round_half_away(x: float) -> int:
    # np.round rounds ties to even; shape ties at .5 must go away from zero.
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def _axis_coords(n_in: int, n_out: int, ratio: float) -> np.ndarray:
    # Voxel-center alignment: (i_out + 0.5) * s_out == (i_in + 0.5) * s_in,
    # clamped to the edge samples beyond the input extent.
    c = (np.arange(n_out, dtype=np.float64) + 0.5) * ratio - 0.5
    return np.clip(c, 0.0, float(n_in - 1))


def _resample_axis_linear(arr: np.ndarray, axis: int, n_out: int, ratio: float) -> np.ndarray:
    n_in = arr.shape[axis]
    if n_out == n_in and ratio == 1.0:
        return arr
    c = _axis_coords(n_in, n_out, ratio)
    i0 = np.floor(c).astype(np.intp)
    f = c - i0
    i1 = np.minimum(i0 + 1, n_in - 1)
    lo = np.take(arr, i0, axis=axis)
    hi = np.take(arr, i1, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = n_out
    f = f.reshape(shape)
    # lo + f*(hi-lo) is exact when f == 0 or hi == lo (identity/constant cases).
    return lo + f * (hi - lo)


def _resample_axis_nearest(arr: np.ndarray, axis: int, n_out: int, ratio: float) -> np.ndarray:
    n_in = arr.shape[axis]
    if n_out == n_in and ratio == 1.0:
        return arr
    c = _axis_coords(n_in, n_out, ratio)
    idx = np.floor(c + 0.5).astype(np.intp)
    np.clip(idx, 0, n_in - 1, out=idx)
    return np.take(arr, idx, axis=axis)


def resample(volume: Volume, target_spacing, interpolation: str = "trilinear") -> Volume:
    """Resample onto a grid with the given spacing, preserving the origin.

    Output length per axis is round-half-away-from-zero(n * s_in / s_out),
    minimum 1. Trilinear output is float32 (float64 stays float64); nearest
    keeps the input dtype and never invents values, so label maps survive
    intact.
    """
    target_spacing = tuple(float(s) for s in target_spacing)
    if len(target_spacing) != 3 or any(not s > 0 for s in target_spacing):
        raise ValueError(f"target_spacing must be 3 positive reals, got {target_spacing}")
    if interpolation not in ("trilinear", "nearest"):
        raise ValueError(f"unknown interpolation {interpolation!r}")

    in_shape = volume.shape
    out_shape = tuple(
        max(1, _round_half_away(n * s_in / s_out))
        for n, s_in, s_out in zip(in_shape, volume.spacing, target_spacing)
    )
    ratios = tuple(s_out / s_in for s_in, s_out in zip(volume.spacing, target_spacing))

    if interpolation == "trilinear":
        data = volume.data.astype(np.float64, copy=False)
        for axis in range(3):
            data = _resample_axis_linear(data, axis, out_shape[axis], ratios[axis])
        out_dtype = np.float64 if volume.data.dtype == np.float64 else np.float32
        data = np.ascontiguousarray(data, dtype=out_dtype)
    else:
        data = volume.data
        for axis in range(3):
            data = _resample_axis_nearest(data, axis, out_shape[axis], ratios[axis])
        data = np.ascontiguousarray(data)

    return Volume(data=data, spacing=target_spacing, origin=volume.origin)


def clip_percentiles(volume: Volume, lo: float, hi: float) -> Volume:
    """Clamp intensities into the [lo, hi] per-image percentile range.

    Percentiles use linear interpolation between order statistics at the
    zero-based rank r = p/100 * (n - 1) over all voxels of this image.
    """
    if not (0.0 <= lo < hi <= 100.0):
        raise ValueError(f"percentiles need 0 <= lo < hi <= 100, got {lo}, {hi}")
    if volume.data.size == 0:
        raise ValueError("cannot compute percentiles of an empty volume")
    bounds = np.percentile(volume.data.astype(np.float64, copy=False), [lo, hi])
    out_dtype = np.float64 if volume.data.dtype == np.float64 else np.float32
    data = np.clip(volume.data.astype(out_dtype), bounds[0], bounds[1])
    return Volume(data=data, spacing=volume.spacing, origin=volume.origin)


def zscore_normalize(volume: Volume) -> Volume:
    """(x - mean) / max(std, 1e-8) with population statistics over all voxels.

    Constant volumes degenerate to all zeros through the epsilon guard.
    """
    if volume.data.size == 0:
        raise ValueError("cannot normalize an empty volume")
    data64 = volume.data.astype(np.float64, copy=False)
    mean = float(data64.mean())
    std = float(data64.std())
    out_dtype = np.float64 if volume.data.dtype == np.float64 else np.float32
    data = ((data64 - mean) / max(std, ZSCORE_EPS)).astype(out_dtype)
    return Volume(data=data, spacing=volume.spacing, origin=volume.origin)


def preprocess(volume: Volume, config: PreprocessConfig, is_label: bool = False) -> Volume:
    """Run the pipeline: resample, then clip and z-score for images only.

    Label maps always use nearest interpolation and skip both intensity
    steps regardless of the config.
    """
    if is_label:
        return resample(volume, config.target_spacing, "nearest")
    out = resample(volume, config.target_spacing, config.image_interpolation)
    if config.clip_percentiles is not None:
        out = clip_percentiles(out, *config.clip_percentiles)
    if config.normalize:
        out = zscore_normalize(out)
    return out
