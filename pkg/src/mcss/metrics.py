"""Evaluation: layout corner PR, polygon IoU, oriented-box PR and one-way Chamfer."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from shapely.geometry import Polygon as ShapelyPolygon

from .geometry import OrientedBox, chamfer_to_mesh, voxel_iou, voxelize
from .proposals import Category, LayoutProposal, ObjectProposal

CORNER_RADIUS = 0.40
METRIC_VOXEL = 0.02
MAX_PLANE_ANGLE = 30.0
UNDEFINED = float("nan")


def greedy_match(cost: np.ndarray, accept) -> list[tuple[int, int]]:
    """One-to-one matching taking pairs in ascending cost (ties by row, then column)."""
    pairs = [(cost[i, j], i, j) for i in range(cost.shape[0]) for j in range(cost.shape[1]) if accept(cost[i, j])]
    pairs.sort()
    used_r, used_c, out = set(), set(), []
    for _, i, j in pairs:
        if i in used_r or j in used_c:
            continue
        used_r.add(i)
        used_c.add(j)
        out.append((i, j))
    return out


def _pr(matched: int, n_pred: int, n_gt: int) -> tuple[float, float]:
    p = matched / n_pred if n_pred else UNDEFINED
    r = matched / n_gt if n_gt else UNDEFINED
    return p, r


def corner_pr(pred: Sequence, gt: Sequence, radius: float = CORNER_RADIUS) -> tuple[float, float]:
    """Precision and recall of predicted corners; each corner is matched at most once.

    Undefined values (empty prediction or ground truth) are NaN.
    """
    p = np.asarray(pred, dtype=float).reshape(-1, 3)
    g = np.asarray(gt, dtype=float).reshape(-1, 3)
    if len(p) == 0 or len(g) == 0:
        return _pr(0, len(p), len(g))
    d = np.linalg.norm(p[:, None] - g[None], axis=2)
    return _pr(len(greedy_match(d, lambda c: c <= radius)), len(p), len(g))


def unique_corners(polygons: Sequence[LayoutProposal], tol: float = 0.01) -> np.ndarray:
    """Distinct vertices of a set of layout polygons (merged within ``tol``)."""
    out: list[np.ndarray] = []
    for poly in polygons:
        for v in poly.polygon.vertices:
            if not any(np.linalg.norm(v - u) <= tol for u in out):
                out.append(v)
    return np.array(out).reshape(-1, 3)


def polygon_iou(pred: LayoutProposal, gt: LayoutProposal, max_angle: float = MAX_PLANE_ANGLE) -> float:
    """IoU of ``pred`` projected onto the plane of ``gt``; 0 when the planes differ by more than ``max_angle``."""
    na, nb = pred.polygon.plane.normal, gt.polygon.plane.normal
    if abs(float(na @ nb)) < math.cos(math.radians(max_angle)):
        return 0.0
    g = gt.polygon
    a = ShapelyPolygon(g.to_2d(g.plane.project(pred.polygon.vertices)))
    b = ShapelyPolygon(g.to_2d(g.vertices))
    if not a.is_valid:
        a = a.buffer(0)
    union = a.union(b).area
    return float(a.intersection(b).area / union) if union > 0 else 0.0


def _grid_iou(a, b) -> float:
    """Voxel IoU that treats two empty grids (boxes thinner than a voxel) as no overlap."""
    if a.count == 0 and b.count == 0:
        return 0.0
    return voxel_iou(a, b)


def box_iou(a: OrientedBox, b: OrientedBox, voxel_size: float = METRIC_VOXEL) -> float:
    return _grid_iou(voxelize(a.to_mesh(), voxel_size=voxel_size), voxelize(b.to_mesh(), voxel_size=voxel_size))


def _box_matches(pred: Sequence[tuple], gt: Sequence[tuple], iou_threshold: float, voxel_size: float):
    """Per category: (matches, n_pred, n_gt) with greedy descending-IoU assignment."""
    out = {}
    grids_p = [voxelize(b.to_mesh(), voxel_size=voxel_size) for b, _ in pred]
    grids_g = [voxelize(b.to_mesh(), voxel_size=voxel_size) for b, _ in gt]
    cats = sorted({Category(c) for _, c in pred} | {Category(c) for _, c in gt})
    for c in cats:
        pi = [i for i, (_, k) in enumerate(pred) if Category(k) is c]
        gi = [j for j, (_, k) in enumerate(gt) if Category(k) is c]
        iou = np.array([[_grid_iou(grids_p[i], grids_g[j]) for j in gi] for i in pi]).reshape(len(pi), len(gi))
        m = greedy_match(-iou, lambda v: -v >= iou_threshold)
        out[c] = ([(pi[a], gi[b]) for a, b in m], len(pi), len(gi))
    return out


def bbox_pr(pred: Sequence[tuple], gt: Sequence[tuple], iou_threshold: float = 0.5,
            voxel_size: float = METRIC_VOXEL) -> dict:
    """Per-category (precision, recall) for ``(OrientedBox, Category)`` lists."""
    return {c: _pr(len(m), n_p, n_g) for c, (m, n_p, n_g) in _box_matches(pred, gt, iou_threshold, voxel_size).items()}


def bbox_pr_total(pred: Sequence[tuple], gt: Sequence[tuple], iou_threshold: float = 0.5,
                  voxel_size: float = METRIC_VOXEL) -> tuple[float, float]:
    """Precision and recall pooled over all categories."""
    res = _box_matches(pred, gt, iou_threshold, voxel_size)
    matched = sum(len(m) for m, _, _ in res.values())
    return _pr(matched, len(pred), len(gt))


def boxes_of(objects: Sequence[ObjectProposal]) -> list[tuple]:
    return [(o.bbox, o.category) for o in objects]


@dataclass
class ChamferRow:
    category: Category
    mean_mm: float
    matched: int
    unmatched: int


def chamfer_table(pred: Sequence[ObjectProposal], gt: Sequence[ObjectProposal], samples: int = 10000,
                  rng: Optional[np.random.Generator] = None, match_iou: float = 0.5) -> dict:
    """Mean one-way Chamfer (mm) from ground-truth surface samples to retrieved mesh surfaces, per category.

    Ground-truth objects are matched to predictions as in :func:`bbox_pr`
    at ``match_iou``; unmatched ones are excluded and counted.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    out = {}
    if not pred and not gt:
        return out
    matches = _box_matches(boxes_of(pred), boxes_of(gt), match_iou, METRIC_VOXEL)
    for c, (m, _, n_g) in matches.items():
        if n_g == 0:
            continue
        dists = []
        for i, j in sorted(m, key=lambda t: t[1]):
            src = gt[j].posed_mesh.sample_surface(samples, rng)
            dists.append(chamfer_to_mesh(src, pred[i].posed_mesh))
        out[c] = ChamferRow(c, float(np.mean(dists)) if dists else UNDEFINED, len(m), n_g - len(m))
    return out


def _clean(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def scene_report(selected_layouts: Sequence[LayoutProposal], selected_objects: Sequence[ObjectProposal],
                 gt_walls: Sequence[LayoutProposal], gt_objects: Sequence[ObjectProposal], gt_corners: np.ndarray,
                 rng: Optional[np.random.Generator] = None) -> dict:
    """All metrics for one scene as a JSON-able dict (NaN becomes null)."""
    rep = {}
    cp, cr = corner_pr(unique_corners(selected_layouts), gt_corners)
    rep["corner_precision"], rep["corner_recall"] = _clean(cp), _clean(cr)
    ious = []
    for g in gt_walls:
        ious.append(max((polygon_iou(p, g) for p in selected_layouts), default=0.0))
    rep["polygon_iou_mean"] = float(np.mean(ious)) if ious else None
    pb, gb = boxes_of(selected_objects), boxes_of(gt_objects)
    for thr in (0.5, 0.75):
        p, r = bbox_pr_total(pb, gb, thr)
        rep[f"bbox_precision@{thr}"], rep[f"bbox_recall@{thr}"] = _clean(p), _clean(r)
        for c, (p, r) in bbox_pr(pb, gb, thr).items():
            rep[f"{c.name.lower()}_precision@{thr}"], rep[f"{c.name.lower()}_recall@{thr}"] = _clean(p), _clean(r)
    for c, row in chamfer_table(selected_objects, gt_objects, rng=rng).items():
        rep[f"{c.name.lower()}_chamfer_mm"] = _clean(row.mean_mm)
        rep[f"{c.name.lower()}_unmatched"] = row.unmatched
    return rep


def write_report(report: dict, json_path, csv_path=None) -> None:
    with open(json_path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    if csv_path is not None:
        keys = sorted(report)
        with open(csv_path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(keys)
            w.writerow(["" if report[k] is None else report[k] for k in keys])
