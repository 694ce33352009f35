"""Independent reference implementations used to cross-check the engine.

Everything here is written from the definitions directly: scalar loops,
brute-force enumeration, rational arithmetic. None of it shares code with
the package under test; keep it that way.
"""
from __future__ import annotations

from collections import deque
from fractions import Fraction

import numpy as np

NEIGHBORS = {
    6: [(dx, dy, dz)
        for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
        if abs(dx) + abs(dy) + abs(dz) == 1],
    18: [(dx, dy, dz)
         for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
         if 1 <= abs(dx) + abs(dy) + abs(dz) <= 2],
    26: [(dx, dy, dz)
         for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)
         if (dx, dy, dz) != (0, 0, 0)],
}


def iou_voxel_count(a_min, a_max, b_min, b_max, grid=32) -> Fraction:
    """IoU of two integer-coordinate boxes by counting voxels on a grid."""
    ga = np.zeros((grid, grid, grid), dtype=bool)
    gb = np.zeros((grid, grid, grid), dtype=bool)
    ga[a_min[0]:a_max[0], a_min[1]:a_max[1], a_min[2]:a_max[2]] = True
    gb[b_min[0]:b_max[0], b_min[1]:b_max[1], b_min[2]:b_max[2]] = True
    inter = int((ga & gb).sum())
    union = int((ga | gb).sum())
    return Fraction(inter, union)


def flood_fill_components(mask: np.ndarray, connectivity: int) -> np.ndarray:
    """BFS connected-component labels, ids in lexicographic first-voxel order."""
    offsets = NEIGHBORS[connectivity]
    nx, ny, nz = mask.shape
    labels = np.zeros(mask.shape, dtype=np.int32)
    next_id = 0
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if not mask[x, y, z] or labels[x, y, z]:
                    continue
                next_id += 1
                queue = deque([(x, y, z)])
                labels[x, y, z] = next_id
                while queue:
                    cx, cy, cz = queue.popleft()
                    for dx, dy, dz in offsets:
                        px, py, pz = cx + dx, cy + dy, cz + dz
                        if (0 <= px < nx and 0 <= py < ny and 0 <= pz < nz
                                and mask[px, py, pz] and not labels[px, py, pz]):
                            labels[px, py, pz] = next_id
                            queue.append((px, py, pz))
    return labels


def trilinear_point(data: np.ndarray, x: float, y: float, z: float) -> float:
    """Scalar trilinear sample at a continuous index, clamped to the edges."""
    def clamp(c, n):
        return min(max(c, 0.0), float(n - 1))

    x = clamp(x, data.shape[0])
    y = clamp(y, data.shape[1])
    z = clamp(z, data.shape[2])
    x0, y0, z0 = int(np.floor(x)), int(np.floor(y)), int(np.floor(z))
    x1 = min(x0 + 1, data.shape[0] - 1)
    y1 = min(y0 + 1, data.shape[1] - 1)
    z1 = min(z0 + 1, data.shape[2] - 1)
    fx, fy, fz = x - x0, y - y0, z - z0
    value = 0.0
    for cx, wx in ((x0, 1 - fx), (x1, fx)):
        for cy, wy in ((y0, 1 - fy), (y1, fy)):
            for cz, wz in ((z0, 1 - fz), (z1, fz)):
                value += wx * wy * wz * float(data[cx, cy, cz])
    return value


def percentile_linear(values, p: float) -> float:
    """Zero-based-rank linear interpolation between order statistics."""
    ordered = sorted(float(v) for v in values)
    if not ordered:
        raise ValueError("empty")
    rank = p / 100.0 * (len(ordered) - 1)
    lo = int(np.floor(rank))
    hi = min(lo + 1, len(ordered) - 1)
    frac = rank - lo
    return ordered[lo] + frac * (ordered[hi] - ordered[lo])


def greedy_match(pred_scores, qualify, goodness, gt_ignored, duplicate_policy):
    """Literal greedy matching: outcomes per prediction, in input order.

    qualify/goodness are dense per (pred, gt) lists of lists; outcomes are
    'tp', 'fp', 'ignored'.
    """
    n_p = len(pred_scores)
    n_g = len(gt_ignored)
    order = sorted(range(n_p), key=lambda i: (-pred_scores[i], i))
    taken = [False] * n_g
    outcomes = ["fp"] * n_p
    for p in order:
        best_open, best_open_good = None, None
        best_any, best_any_good = None, None
        best_ign, best_ign_good = None, None
        for g in range(n_g):
            if not qualify[p][g]:
                continue
            good = goodness[p][g]
            if gt_ignored[g]:
                if best_ign is None or good > best_ign_good:
                    best_ign, best_ign_good = g, good
                continue
            if best_any is None or good > best_any_good:
                best_any, best_any_good = g, good
            if not taken[g] and (best_open is None or good > best_open_good):
                best_open, best_open_good = g, good
        if best_open is not None:
            taken[best_open] = True
            outcomes[p] = "tp"
        elif best_ign is not None:
            outcomes[p] = "ignored"
        elif best_any is not None:
            outcomes[p] = "ignored" if duplicate_policy == "ignore" else "fp"
        else:
            outcomes[p] = "fp"
    return outcomes


def ap_cutoff_enumeration(scores, is_tp, n_gt: int) -> float:
    """All-points AP by brute force over every distinct score cutoff.

    AP = sum over k in 1..n_gt of max precision among cutoffs reaching at
    least k true positives, divided by n_gt.
    """
    assert n_gt >= 1
    pairs = sorted(zip(scores, is_tp), key=lambda t: -t[0])
    cutoffs = sorted({s for s, _ in pairs}, reverse=True)
    points = []
    for c in cutoffs:
        kept = [tp for s, tp in pairs if s >= c]
        tp = sum(kept)
        fp = len(kept) - tp
        points.append((tp, tp / (tp + fp)))
    total = 0.0
    for k in range(1, n_gt + 1):
        best = 0.0
        for tp, prec in points:
            if tp >= k and prec > best:
                best = prec
        total += best
    return total / n_gt


def froc_sweep(per_image, n_images: int, n_gt: int, thresholds) -> tuple[list[float], float]:
    """Literal FROC sweep. per_image: list of (score, is_tp) lists."""
    assert n_images >= 1 and n_gt >= 1
    flat = [(s, tp) for image in per_image for (s, tp) in image]
    cutoffs = sorted({s for s, _ in flat}, reverse=True)
    points = []
    for c in cutoffs:
        kept = [tp for s, tp in flat if s >= c]
        tp = sum(kept)
        fp = len(kept) - tp
        points.append((fp / n_images, tp / n_gt))
    sens = []
    for t in thresholds:
        eligible = [s for fppi, s in points if fppi <= t]
        sens.append(max(eligible) if eligible else 0.0)
    return sens, sum(sens) / len(sens)


def nms_literal(boxes, scores, thresh: float) -> list[int]:
    """Indices kept by the NMS definition, using a scalar float IoU."""

    def iou(a, b):
        inter = 1.0
        for i in range(3):
            lo = max(a[i], b[i])
            hi = min(a[i + 3], b[i + 3])
            if hi <= lo:
                return 0.0
            inter *= hi - lo
        va = (a[3] - a[0]) * (a[4] - a[1]) * (a[5] - a[2])
        vb = (b[3] - b[0]) * (b[4] - b[1]) * (b[5] - b[2])
        return inter / (va + vb - inter)

    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    kept: list[int] = []
    for i in order:
        if all(iou(boxes[i], boxes[j]) < thresh for j in kept):
            kept.append(i)
    return kept


def zscore_expected(values):
    vals = [float(v) for v in values]
    mean = sum(vals) / len(vals)
    var = sum((v - mean) ** 2 for v in vals) / len(vals)
    std = max(var ** 0.5, 1e-8)
    return [(v - mean) / std for v in vals]
