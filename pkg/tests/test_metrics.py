import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcss.geometry import OrientedBox, Plane, Polygon3D, RigidPoseScale
from mcss.metrics import (
    bbox_pr,
    bbox_pr_total,
    box_iou,
    chamfer_table,
    corner_pr,
    greedy_match,
    polygon_iou,
    scene_report,
    unique_corners,
    write_report,
)
from mcss.proposals import Category, LayoutProposal
from mcss.synth import ObjectModel, make_object, room_footprint, room_layout

Z = Plane(np.array([0.0, 0.0, 1.0]), 0.0)


def square(x0, y0, size=1.0, plane=Z, pid=0):
    v = np.array([[x0, y0, 0], [x0 + size, y0, 0], [x0 + size, y0 + size, 0], [x0, y0 + size, 0]], dtype=float)
    return LayoutProposal(pid, Category.FLOOR, Polygon3D.from_points(plane, v), 0)


def test_corner_pr_examples():
    gt = np.array([[0, 0, 0], [4, 0, 0], [4, 3, 0]], dtype=float)
    assert corner_pr(gt, gt) == (1.0, 1.0)
    two = [[0.1, 0, 0], [0.2, 0, 0]]
    assert corner_pr(two, gt[:1]) == (0.5, 1.0)
    p, r = corner_pr([], gt)
    assert math.isnan(p) and r == 0.0
    assert math.isnan(corner_pr(gt, [])[1])
    assert corner_pr([[0.41, 0, 0]], gt[:1]) == (0.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_corner_pr_small_perturbation(seed):
    rng = np.random.default_rng(seed)
    fp = room_footprint("L", (6.0, 5.0))
    gt = np.vstack([np.column_stack([fp, np.zeros(len(fp))]), np.column_stack([fp, np.full(len(fp), 2.5)])])
    d = rng.normal(size=gt.shape)
    d *= (rng.uniform(0, 0.39, len(gt)) / np.linalg.norm(d, axis=1))[:, None]
    pred = rng.permutation(gt + d)
    assert corner_pr(pred, gt) == (1.0, 1.0)
    # Swapping roles swaps precision and recall.
    extra = np.vstack([pred, rng.uniform(10, 20, (3, 3))])
    p, r = corner_pr(extra, gt)
    assert (p, r) == corner_pr(gt, extra)[::-1]


def test_greedy_match_is_injective():
    cost = np.array([[0.1, 0.2], [0.05, 0.3], [0.15, 0.12]])
    m = greedy_match(cost, lambda c: c < 1)
    assert m == [(1, 0), (2, 1)]
    assert len({i for i, _ in m}) == len(m) == len({j for _, j in m})


def test_polygon_iou_examples():
    a = square(0, 0)
    assert polygon_iou(a, a) == pytest.approx(1.0, abs=1e-12)
    assert polygon_iou(a, square(2, 0)) == 0.0
    assert polygon_iou(a, square(0.5, 0)) == pytest.approx(1 / 3, abs=1e-9)
    tilted = Plane(np.array([0.0, np.sin(np.radians(40)), np.cos(np.radians(40))]), 0.0)
    steep = LayoutProposal(1, Category.FLOOR, Polygon3D.from_points(tilted, tilted.project(a.polygon.vertices)), 0)
    assert polygon_iou(steep, a) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_polygon_iou_symmetric_near_coplanar(tilt_deg, dx, dy):
    n = np.array([np.sin(np.radians(tilt_deg)), 0.0, np.cos(np.radians(tilt_deg))])
    plane = Plane(n, 0.0)
    b = square(dx, dy, 1.2)
    a_verts = plane.project(square(0, 0).polygon.vertices)
    a = LayoutProposal(1, Category.FLOOR, Polygon3D.from_points(plane, a_verts), 0)
    assert abs(polygon_iou(a, b) - polygon_iou(b, a)) <= 0.02


def test_box_iou_lattice_aligned():
    a = OrientedBox([0, 0, 0], [0.6, 0.2, 0.2])
    b = OrientedBox([0.3, 0, 0], [0.6, 0.2, 0.2])
    assert box_iou(a, b) == pytest.approx(0.6, abs=1e-9)
    assert box_iou(a, a) == 1.0
    thin = OrientedBox([0, 0, 0.005], [0.5, 0.5, 0.001])
    assert box_iou(thin, thin) == 0.0


def test_bbox_pr_examples():
    a = OrientedBox([0, 0, 0], [0.6, 0.2, 0.2])
    b = OrientedBox([0.3, 0, 0], [0.6, 0.2, 0.2])
    c = OrientedBox([3, 0, 0], [0.3, 0.3, 0.3])
    gt = [(a, Category.SOFA), (c, Category.CHAIR)]
    res = bbox_pr(gt, gt, 0.5)
    assert res == {Category.CHAIR: (1.0, 1.0), Category.SOFA: (1.0, 1.0)}
    assert bbox_pr([(b, Category.SOFA)], gt[:1], 0.5)[Category.SOFA] == (1.0, 1.0)
    assert bbox_pr([(b, Category.SOFA)], gt[:1], 0.75)[Category.SOFA] == (0.0, 0.0)
    # Wrong category never matches.
    wrong = bbox_pr([(a, Category.BED)], gt[:1], 0.5)
    assert math.isnan(wrong[Category.SOFA][0]) and wrong[Category.SOFA][1] == 0.0
    assert wrong[Category.BED][0] == 0.0 and math.isnan(wrong[Category.BED][1])
    p, r = bbox_pr_total([], gt, 0.5)
    assert math.isnan(p) and r == 0.0
    p, r = bbox_pr_total([(a, Category.BED)], gt[:1], 0.5)
    assert (p, r) == (0.0, 0.0)


def test_bbox_pr_one_to_one():
    a = OrientedBox([0, 0, 0], [0.6, 0.2, 0.2])
    dup = [(a, Category.SOFA), (a, Category.SOFA)]
    assert bbox_pr(dup, dup[:1], 0.5)[Category.SOFA] == (0.5, 1.0)


PLATE = ObjectModel("plate", Category.TABLE, (((-0.5, -0.5, 0.70), (0.5, 0.5, 0.72)),))


def test_chamfer_table_examples():
    a = make_object(1, PLATE, RigidPoseScale.identity())
    assert chamfer_table([a], [a])[Category.TABLE].mean_mm == pytest.approx(0.0, abs=1e-6)
    moved = make_object(2, PLATE, RigidPoseScale.from_yaw(0.0, [0.0, 0.0, 0.01]))
    row = chamfer_table([moved], [a])[Category.TABLE]
    assert abs(row.mean_mm - 10.0) <= 1.0 and row.matched == 1
    assert chamfer_table([], []) == {}
    far = make_object(3, PLATE, RigidPoseScale.from_yaw(0.0, [5.0, 0.0, 0.0]))
    row = chamfer_table([far], [a])[Category.TABLE]
    assert row.matched == 0 and row.unmatched == 1 and math.isnan(row.mean_mm)


def test_scene_report_perfect(small_scene, tmp_path):
    gt, pool, obs, renders = small_scene
    rep = scene_report(gt.walls, gt.objects, gt.walls, gt.objects, gt.corners())
    assert rep["corner_precision"] == rep["corner_recall"] == 1.0
    assert rep["polygon_iou_mean"] == pytest.approx(1.0)
    assert rep["bbox_precision@0.75"] == rep["bbox_recall@0.75"] == 1.0
    assert rep["chair_chamfer_mm"] == pytest.approx(0.0, abs=1e-6)
    write_report(rep, tmp_path / "m.json", tmp_path / "m.csv")
    assert json.loads((tmp_path / "m.json").read_text()) == rep
    assert len((tmp_path / "m.csv").read_text().splitlines()) == 2
    empty = scene_report([], [], gt.walls, gt.objects, gt.corners())
    assert empty["corner_precision"] is None and empty["corner_recall"] == 0.0


def test_unique_corners_of_room():
    raw, _ = room_layout(room_footprint("cuboid"), 2.5)
    walls = [LayoutProposal(k, Category.WALL, p, key, e) for k, (p, key, e) in enumerate(raw)]
    assert unique_corners(walls).shape == (8, 3)
