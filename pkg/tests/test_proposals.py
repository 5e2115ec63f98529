import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcss.geometry import RigidPoseScale
from mcss.proposals import (
    COMPATIBLE,
    INCOMPATIBLE,
    Category,
    CompatKind,
    HorizontalSurface,
    LayoutProposal,
    ObjectProposal,
    ProposalPool,
    compat,
    horizontal_surface_ratio,
    layout_layout_compat,
    object_distance,
    object_layout_compat,
    object_object_compat,
)
from mcss.synth import MODELS, ObjectModel, make_object, room_footprint, room_layout, wall_polygon

VS = 0.04
BLOCK_TABLE = ObjectModel("block_table", Category.TABLE, (((-0.6, -0.4, 0.0), (0.6, 0.4, 0.76)),), (0.76, 0.6, 0.4))
SQUARE_TABLE = ObjectModel("square_table", Category.TABLE, (((-0.45, -0.45, 0.0), (0.45, 0.45, 0.76)),), (0.76, 0.45, 0.45))
POST = ObjectModel("post", Category.CHAIR, (((-0.02, -0.1, 0.0), (0.02, 0.035, 1.0)),))


def at(model, x, y, yaw=0.0, pid=0, vs=VS):
    return make_object(pid, model, RigidPoseScale.from_yaw(yaw, [x, y, 0.0]), vs)


def walls(shape="cuboid"):
    raw, floor = room_layout(room_footprint(shape), 2.5)
    return [LayoutProposal(k, Category.WALL, poly, key, edges) for k, (poly, key, edges) in enumerate(raw)]


def test_identical_chairs_incompatible():
    a = at(MODELS["chair_a"], 1, 1, pid=1, vs=0.05)
    b = at(MODELS["chair_a"], 1, 1, pid=2, vs=0.05)
    assert object_object_compat(a, b) == INCOMPATIBLE


def test_distant_chairs_compatible():
    a = at(MODELS["chair_a"], 0, 0, pid=1)
    b = at(MODELS["chair_a"], 5, 0, pid=2)
    assert object_object_compat(a, b) == COMPATIBLE


def test_tucked_chair_tolerated_at_ratio_one_tenth():
    # Table top edge at y = -0.06 and the post's deepest voxel center at y = 0.02: 0.08 / 0.8 = 0.1.
    table = at(BLOCK_TABLE, 0.02, 0.34, pid=1)
    post = at(POST, 0.02, 0.0, pid=2)
    assert horizontal_surface_ratio(post, table) == pytest.approx(0.1, abs=1e-12)
    c = object_object_compat(post, table)
    assert c.kind is CompatKind.TOLERATED and c.iou > 0
    assert object_object_compat(table, post) == c


def test_surface_ratio_examples():
    table = at(SQUARE_TABLE, 0.02, 0.02, pid=1)
    assert horizontal_surface_ratio(at(POST, 3.0, 3.0), table) == 0.0
    # Post covering the voxel column through the center of the square top.
    center_post = at(POST, 0.02, 0.05, pid=2)
    assert horizontal_surface_ratio(center_post, table) == pytest.approx(0.5, abs=1e-12)
    assert object_object_compat(center_post, table) == INCOMPATIBLE


def test_surface_ratio_at_edge_is_zero():
    # Surface rectangle whose edge passes exactly through the penetrating voxel centers.
    model = ObjectModel("edge_table", Category.TABLE, (((-0.44, -0.44, 0.0), (0.44, 0.44, 0.76)),), (0.76, 0.42, 0.42))
    table = at(model, 0.0, 0.0, pid=1)
    edge_post = make_object(2, ObjectModel("thin", Category.CHAIR, (((0.40, -0.1, 0.0), (0.44, 0.1, 1.0)),)),
                            RigidPoseScale.identity(), VS)
    assert horizontal_surface_ratio(edge_post, table) == 0.0


def test_surface_ratio_requires_surface():
    chair = at(MODELS["chair_a"], 0, 0)
    with pytest.raises(ValueError):
        horizontal_surface_ratio(chair, at(MODELS["chair_b"], 0, 0))


def test_chair_table_without_surface_uses_generic_rule():
    table = ObjectModel("plain_table", Category.TABLE, (((-0.6, -0.4, 0.0), (0.6, 0.4, 0.76)),))
    a = at(table, 0.02, 0.34, pid=1)
    b = at(POST, 0.02, 0.0, pid=2)
    iou = object_object_compat(a, b)
    assert iou.kind is CompatKind.TOLERATED  # small overlap, below the 0.3 IoU threshold


@settings(max_examples=15, deadline=None)
@given(st.integers(-20, 20), st.integers(-20, 20), st.integers(-5, 5))
def test_surface_ratio_translation_invariant(i, j, k):
    # Lattice-aligned translations of both objects keep the voxelization, hence the ratio.
    shift = np.array([i, j, k]) * VS
    table = at(BLOCK_TABLE, 0.02, 0.34, pid=1)
    post = at(POST, 0.02, 0.0, pid=2)
    moved_t = make_object(1, BLOCK_TABLE, RigidPoseScale.from_yaw(0, shift + [0.02, 0.34, 0.0]), VS)
    moved_p = make_object(2, POST, RigidPoseScale.from_yaw(0, shift + [0.02, 0.0, 0.0]), VS)
    assert horizontal_surface_ratio(moved_p, moved_t) == pytest.approx(horizontal_surface_ratio(post, table), abs=1e-9)


def test_iou_threshold_precondition():
    a, b = at(MODELS["chair_a"], 0, 0, pid=1), at(MODELS["chair_a"], 5, 0, pid=2)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            object_object_compat(a, b, bad)


def test_layout_layout_examples():
    w = walls()
    assert layout_layout_compat(w[0], w[1]) == COMPATIBLE  # corner neighbors
    assert layout_layout_compat(w[0], w[2]) == COMPATIBLE  # parallel, 4 m apart
    half = LayoutProposal(10, Category.WALL, wall_polygon([0, 0], [2.5, 0], 2.5), w[0].plane_id, frozenset({0, 77}))
    assert layout_layout_compat(w[0], half) == INCOMPATIBLE  # coplanar overlap
    far = LayoutProposal(11, Category.WALL, wall_polygon([3.0, 0], [5.0, 0], 2.5), w[0].plane_id, frozenset({1}))
    assert layout_layout_compat(half, far) == COMPATIBLE  # coplanar, disjoint


def test_crossing_walls_incompatible():
    a = LayoutProposal(1, Category.WALL, wall_polygon([0, 2], [5, 2], 2.5), 1, frozenset({1, 2}))
    b = LayoutProposal(2, Category.WALL, wall_polygon([2, 0], [2, 4], 2.5), 2, frozenset({3, 4}))
    assert layout_layout_compat(a, b) == INCOMPATIBLE
    # Sharing an edge id makes them neighbors.
    c = LayoutProposal(3, Category.WALL, b.polygon, 2, frozenset({1}))
    assert layout_layout_compat(a, c) == COMPATIBLE


def test_object_layout_examples():
    w = walls()
    inside = at(MODELS["chair_a"], 2.5, 2.0, vs=0.05)
    assert all(object_layout_compat(inside, l) == COMPATIBLE for l in w)
    on_wall = at(MODELS["chair_a"], 2.5, 0.0, vs=0.05)
    assert object_layout_compat(on_wall, w[0]) == INCOMPATIBLE
    # Box flush with the wall plane y = 0: voxels reach at most one layer across.
    box = ObjectModel("box", Category.SOFA, (((-0.5, 0.0, 0.0), (0.5, 0.6, 0.5)),))
    touching = make_object(0, box, RigidPoseScale.from_yaw(0, [2.5, 0.0, 0.0]), 0.05)
    assert object_layout_compat(touching, w[0]) == COMPATIBLE
    assert compat(w[0], touching) == compat(touching, w[0])


def test_object_distance():
    a = at(MODELS["chair_a"], 0, 0)
    assert object_distance(a, a) == 0.0
    b = at(MODELS["chair_a"], 3, 4)
    assert object_distance(a, b) == pytest.approx(5.0)
    assert object_distance(a, b) == object_distance(b, a)
    c = at(MODELS["table_a"], -1.3, 0.4, yaw=0.3)
    assert object_distance(a, c) == pytest.approx(float(np.linalg.norm(a.bbox.center - c.bbox.center)))


def test_proposal_validation_and_bbox():
    chair = MODELS["chair_a"]
    with pytest.raises(ValueError):
        ObjectProposal(0, Category.WALL, chair.mesh(), RigidPoseScale.identity())
    with pytest.raises(ValueError):
        LayoutProposal(0, Category.CHAIR, walls()[0].polygon, 0)
    o = at(chair, 1.0, 2.0, yaw=0.7)
    # Posed vertices inside the oriented box (5% slack).
    local = (o.posed_mesh.vertices - o.bbox.center) @ o.pose.rotation
    assert np.all(np.abs(local) <= o.bbox.half_extents * 1.05 + 1e-9)


def test_pool_cache_matches_recomputation(small_scene):
    _, pool, _, _ = small_scene
    for a, b in itertools.combinations(pool.ids, 2):
        direct = compat(pool[a], pool[b], pool.iou_threshold)
        assert pool.compatibility(a, b) == direct == pool.compatibility(b, a)
        if pool[a].is_layout == pool[b].is_layout:
            assert compat(pool[b], pool[a], pool.iou_threshold) == direct
        if not pool[a].is_layout and not pool[b].is_layout:
            assert pool.distance(a, b) == pytest.approx(object_distance(pool[a], pool[b]))


def test_pool_relations():
    w = walls()
    pool = ProposalPool([], w)
    assert pool.neighbors[0] == {1, 3}
    assert pool.feasible([0, 1, 2, 3])
    with pytest.raises(ValueError):
        ProposalPool([], w + [w[0]])
    with pytest.raises(ValueError):
        pool.compatibility(1, 1)
    sub = pool.subset([0, 1])
    assert sub.ids == [0, 1] and sub.neighbors[0] == {1}


def test_horizontal_surface_local_frame():
    s = HorizontalSurface(np.array([1.0, 1.0, 0.7]), np.array([0.5, 0.25]), np.pi / 2)
    assert np.allclose(s.local_xy(np.array([[1.0, 1.5, 0.0]])), [[0.5, 0.0]])
