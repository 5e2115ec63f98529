"""Synthetic scenes with known ground truth, noisy proposal pools, and an exhaustive optimizer."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from shapely.geometry import Point
from shapely.geometry import Polygon as ShapelyPolygon

from .geometry import (
    GRAVITY,
    Plane,
    Polygon3D,
    RigidPoseScale,
    TriangleMesh,
    box_mesh,
    merge_meshes,
    polygon_area_2d,
    voxel_intersection_count,
)
from .proposals import (
    Category,
    CompatKind,
    HorizontalSurface,
    LayoutProposal,
    ObjectProposal,
    ProposalPool,
)
from .renderer import VISIBILITY_MIN_PIXELS, ProposalRender, View, composite, prerender
from .scoring import NEG_INF, ObservationSet, SceneSolution, Scorer, ScoreWeights, _terms, fitness, global_score, prior_score

MAX_PLACEMENT_TRIES = 1000
WALL_MARGIN = 0.15
CAMERA_HEIGHT = 1.5
TARGET_HEIGHT = 0.8


# -- parametric object models ------------------------------------------------


@dataclass(frozen=True)
class ObjectModel:
    """Box-composite furniture model, base at z = 0 and centered on the origin in xy."""

    name: str
    category: Category
    boxes: tuple  # ((lo, hi), ...)
    surface: Optional[tuple] = None  # (height, half_x, half_y) of a horizontal support surface

    def mesh(self) -> TriangleMesh:
        return merge_meshes([box_mesh(lo, hi) for lo, hi in self.boxes])

    @property
    def half_size(self) -> np.ndarray:
        lo = np.min([b[0] for b in self.boxes], axis=0)
        hi = np.max([b[1] for b in self.boxes], axis=0)
        return (hi - lo)[:2] / 2.0

    def surface_at(self, pose: RigidPoseScale) -> Optional[HorizontalSurface]:
        if self.surface is None:
            return None
        h, hx, hy = self.surface
        center = pose.apply(np.array([[0.0, 0.0, h]]))[0]
        return HorizontalSurface(center, np.array([hx, hy]) * pose.scale[:2], pose.yaw)


def _legs(hx, hy, top, t=0.04):
    out = []
    for sx, sy in itertools.product((-1, 1), repeat=2):
        x, y = sx * (hx - t), sy * (hy - t)
        out.append(((x - t / 2, y - t / 2, 0.0), (x + t / 2, y + t / 2, top)))
    return out


def _chair(name, w, d, seat, back):
    hx, hy = w / 2, d / 2
    boxes = _legs(hx, hy, seat - 0.05) + [
        ((-hx, -hy, seat - 0.05), (hx, hy, seat)),
        ((-hx, hy - 0.05, seat), (hx, hy, back)),
    ]
    return ObjectModel(name, Category.CHAIR, tuple(boxes))


def _table(name, w, d, h):
    hx, hy = w / 2, d / 2
    boxes = _legs(hx, hy, h - 0.04, 0.06) + [((-hx, -hy, h - 0.04), (hx, hy, h))]
    return ObjectModel(name, Category.TABLE, tuple(boxes), (h, hx, hy))


def _sofa(name, w, d, seat, back):
    hx, hy = w / 2, d / 2
    arm = 0.18
    boxes = [
        ((-hx + arm, -hy, 0.0), (hx - arm, hy - 0.2, seat)),
        ((-hx, hy - 0.2, 0.0), (hx, hy, back)),
        ((-hx, -hy, 0.0), (-hx + arm, hy - 0.2, seat + 0.15)),
        ((hx - arm, -hy, 0.0), (hx, hy - 0.2, seat + 0.15)),
    ]
    return ObjectModel(name, Category.SOFA, tuple(boxes), (seat, hx - arm, (d - 0.2) / 2))


def _bed(name, w, d, h):
    hx, hy = w / 2, d / 2
    boxes = [((-hx, -hy, 0.0), (hx, hy - 0.08, h)), ((-hx, hy - 0.08, 0.0), (hx, hy, h + 0.5))]
    return ObjectModel(name, Category.BED, tuple(boxes))


MODELS: dict[str, ObjectModel] = {
    m.name: m
    for m in (
        _chair("chair_a", 0.46, 0.46, 0.46, 0.92),
        _chair("chair_b", 0.56, 0.52, 0.42, 0.80),
        _table("table_a", 1.20, 0.80, 0.75),
        _table("table_b", 0.90, 0.90, 0.72),
        _sofa("sofa_a", 1.90, 0.90, 0.42, 0.85),
        _sofa("sofa_b", 1.50, 0.85, 0.45, 0.80),
        _bed("bed_a", 1.60, 2.05, 0.50),
        _bed("bed_b", 1.00, 2.00, 0.45),
    )
}
MODELS_BY_CATEGORY = {c: [m for m in MODELS.values() if m.category is c] for c in Category if not c.is_layout}


def make_object(pid: int, model: Union[str, ObjectModel], pose: RigidPoseScale, voxel_size: float = 0.05) -> ObjectProposal:
    m = MODELS[model] if isinstance(model, str) else model
    return ObjectProposal(pid, m.category, m.mesh(), pose, m.surface_at(pose), m.name, voxel_size)


# -- rooms -----------------------------------------------------------------


def room_footprint(shape: Union[str, Sequence], size=(5.0, 4.0)) -> np.ndarray:
    """Counter-clockwise 2D footprint of a room."""
    w, d = size
    if isinstance(shape, str):
        if shape == "cuboid":
            pts = [(0, 0), (w, 0), (w, d), (0, d)]
        elif shape == "L":
            pts = [(0, 0), (w, 0), (w, 0.55 * d), (0.55 * w, 0.55 * d), (0.55 * w, d), (0, d)]
        elif shape == "U":
            pts = [(0, 0), (w, 0), (w, d), (0.68 * w, d), (0.68 * w, 0.5 * d), (0.32 * w, 0.5 * d), (0.32 * w, d), (0, d)]
        else:
            raise ValueError(f"unknown room shape {shape!r}")
    else:
        pts = [tuple(p) for p in shape]
    pts = np.asarray(pts, dtype=float)
    if polygon_area_2d(pts) < 0:
        pts = pts[::-1]
    if not ShapelyPolygon(pts).is_valid:
        raise ValueError("room footprint is not a simple polygon")
    return pts


def wall_polygon(a, b, height: float) -> Polygon3D:
    """Vertical rectangle over the footprint segment a-b, normal facing the room interior (CCW footprint)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    t = (b - a) / np.linalg.norm(b - a)
    normal = np.array([-t[1], t[0], 0.0])
    plane = Plane.from_normal_point(normal, [a[0], a[1], 0.0])
    verts = [[a[0], a[1], 0.0], [b[0], b[1], 0.0], [b[0], b[1], height], [a[0], a[1], height]]
    return Polygon3D.from_points(plane, verts)


def floor_polygon(footprint: np.ndarray) -> Polygon3D:
    plane = Plane(GRAVITY.copy(), 0.0)
    return Polygon3D.from_points(plane, np.column_stack([footprint, np.zeros(len(footprint))]))


# Edge ids: vertical corner edge k is k; base edge of wall k is 1000 + k.
BASE_EDGE = 1000


def room_layout(footprint: np.ndarray, height: float) -> tuple[list[tuple], tuple]:
    """(polygon, plane_key, edge_ids) for each wall, and the floor."""
    n = len(footprint)
    walls = []
    for k in range(n):
        poly = wall_polygon(footprint[k], footprint[(k + 1) % n], height)
        walls.append((poly, k, frozenset({k, (k + 1) % n, BASE_EDGE + k})))
    floor = (floor_polygon(footprint), n, frozenset(BASE_EDGE + k for k in range(n)))
    return walls, floor


def ring_views(footprint: np.ndarray, n_views: int, width: int, height: int, fov_deg: float,
               radius: Optional[float] = None) -> list[View]:
    """Cameras on a horizontal ring inside the room, each looking across the room center."""
    poly = ShapelyPolygon(footprint)
    c = np.array(poly.representative_point().coords[0]) if not poly.contains(poly.centroid) else np.array(poly.centroid.coords[0])
    ext = footprint.max(axis=0) - footprint.min(axis=0)
    r = 0.3 * ext.min() if radius is None else radius
    angles = 2 * np.pi * np.arange(n_views) / n_views
    views = []
    for th in angles:
        rr = r
        while True:
            eye2 = c + rr * np.array([np.cos(th), np.sin(th)])
            if poly.buffer(-0.2).contains(Point(eye2)) or rr < 1e-3:
                break
            rr *= 0.8
        look = c - 0.6 * r * np.array([np.cos(th), np.sin(th)])
        eye = np.array([eye2[0], eye2[1], CAMERA_HEIGHT])
        target = np.array([look[0], look[1], TARGET_HEIGHT])
        views.append(View.look_at(eye, target, width, height, fov_deg))
    return views


def scan_views(footprint: np.ndarray, n_views: int, width: int, height: int, fov_deg: float,
               inset: float = 0.3) -> list[View]:
    """Cameras spaced evenly along a loop just inside the walls, each facing away from the nearest wall.

    Every view covers the slice of the room in front of it, like frames of a hand-held scan.
    """
    poly = ShapelyPolygon(footprint)
    loop = poly.buffer(-inset, join_style=2)
    if loop.is_empty or loop.geom_type != "Polygon":
        raise ValueError("room too small for the scan inset")
    ring = loop.exterior
    views = []
    for k in range(n_views):
        p = ring.interpolate((k + 0.5) / n_views, normalized=True)
        eye2 = np.array(p.coords[0])
        near = np.array(poly.exterior.interpolate(poly.exterior.project(p)).coords[0])
        d = eye2 - near
        d /= np.linalg.norm(d)
        eye = np.array([eye2[0], eye2[1], CAMERA_HEIGHT])
        target = np.array([eye2[0] + d[0], eye2[1] + d[1], CAMERA_HEIGHT - 0.5])
        views.append(View.look_at(eye, target, width, height, fov_deg))
    return views


# -- configuration ----------------------------------------------------------


@dataclass
class SynthConfig:
    """Scene generator settings (lengths in meters, angles in radians)."""

    room: Union[str, list] = "cuboid"
    room_size: tuple = (5.0, 4.0)
    room_height: float = 2.5
    counts: dict = field(default_factory=lambda: {"chair": 2, "table": 1, "sofa": 0, "bed": 0})
    jitter_copies: int = 1
    jitter_pos: float = 0.12
    jitter_yaw: float = 0.2
    jitter_scale: float = 0.05
    decoys: int = 1
    swap_prob: float = 0.3
    wall_decoys: int = 0
    wall_object_decoys: int = 0
    wall_push: float = 0.15
    wall_ghosts: int = 0
    views: int = 8
    image_size: tuple = (80, 60)
    fov_deg: float = 70.0
    ring_radius: Optional[float] = None
    cameras: str = "ring"
    depth_hole_fraction: float = 0.0
    label_flip: float = 0.0
    voxel_size: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for k, v in self.counts.items():
            if k not in ("chair", "table", "sofa", "bed"):
                raise ValueError(f"unknown object category {k!r}")
            if v < 0:
                raise ValueError("object counts must be >= 0")
        for name in ("jitter_copies", "decoys", "wall_decoys", "wall_object_decoys", "wall_push", "wall_ghosts", "views"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.cameras not in ("ring", "scan"):
            raise ValueError("cameras must be 'ring' or 'scan'")
        if self.views < 1:
            raise ValueError("at least one view is required")
        if not 0.0 <= self.depth_hole_fraction <= 0.1:
            raise ValueError("depth_hole_fraction must lie in [0, 0.1]")
        if not 0.0 <= self.label_flip <= 1.0 or not 0.0 <= self.swap_prob <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        self.room_size = tuple(self.room_size)
        self.image_size = tuple(self.image_size)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown synth settings: {sorted(extra)}")
        return cls(**d)


@dataclass(eq=False)
class GroundTruth:
    walls: list[LayoutProposal]
    floor: LayoutProposal
    objects: list[ObjectProposal]
    obs: ObservationSet
    footprint: np.ndarray
    roles: dict[int, str] = field(default_factory=dict)

    @property
    def wall_ids(self) -> list[int]:
        return [w.id for w in self.walls]

    @property
    def object_ids(self) -> list[int]:
        return [o.id for o in self.objects]

    @property
    def ids(self) -> list[int]:
        return sorted(self.wall_ids + self.object_ids + [self.floor.id])

    def corners(self) -> np.ndarray:
        """Wall corners: footprint vertices at floor and ceiling height."""
        h = self.walls[0].polygon.vertices[:, 2].max()
        fp = self.footprint
        return np.vstack([np.column_stack([fp, np.zeros(len(fp))]), np.column_stack([fp, np.full(len(fp), h)])])


# -- generation -------------------------------------------------------------


def _random_pose(rng, footprint_poly, model: ObjectModel, margin=WALL_MARGIN) -> Optional[RigidPoseScale]:
    minx, miny, maxx, maxy = footprint_poly.bounds
    yaw = float(rng.uniform(-np.pi, np.pi))
    x, y = rng.uniform(minx, maxx), rng.uniform(miny, maxy)
    hx, hy = model.half_size
    c, s = np.cos(yaw), np.sin(yaw)
    corners = np.array([[sx * hx, sy * hy] for sx in (-1, 1) for sy in (-1, 1)]) @ np.array([[c, s], [-s, c]]) + [x, y]
    if not footprint_poly.buffer(-margin).contains(ShapelyPolygon(corners[[0, 1, 3, 2]])):
        return None
    return RigidPoseScale.from_yaw(yaw, [x, y, 0.0])


def _jittered(rng, pose: RigidPoseScale, cfg: SynthConfig) -> RigidPoseScale:
    dxy = rng.normal(0.0, cfg.jitter_pos, 2)
    dyaw = rng.normal(0.0, cfg.jitter_yaw)
    sc = np.clip(1.0 + rng.normal(0.0, cfg.jitter_scale), 0.7, 1.3)
    t = pose.translation + np.array([dxy[0], dxy[1], 0.0])
    return RigidPoseScale.from_yaw(pose.yaw + dyaw, t, (sc, sc, sc))


def render_observations(scene: Sequence, views: Sequence[View], rng: Optional[np.random.Generator] = None,
                        hole_fraction: float = 0.0, label_flip: float = 0.0, ghosts: Sequence = ()) -> ObservationSet:
    """Observations rendered from ``(id, category, mesh)`` triples, with optional holes and label flips.

    ``ghosts`` are triples that show up in the label maps only, as a
    segmenter that mislabels part of the background would report them.
    """
    renders = [prerender(pid, cat, mesh, views) for pid, cat, mesh in scene]
    ghost_renders = [prerender(pid, cat, mesh, views) for pid, cat, mesh in ghosts]
    return observations_from_renders(renders, views, rng, hole_fraction, label_flip, ghost_renders)


def observations_from_renders(renders: Sequence[ProposalRender], views: Sequence[View],
                              rng: Optional[np.random.Generator] = None, hole_fraction: float = 0.0,
                              label_flip: float = 0.0, ghosts: Sequence[ProposalRender] = ()) -> ObservationSet:
    n_cat = len(Category)
    h, w = views[0].shape
    conf = np.zeros((len(views), n_cat, h, w))
    depth = np.full((len(views), h, w), np.inf)
    for i in range(len(views)):
        comp = composite(renders, i, views[i].shape)
        labels = comp.labels.copy()
        if ghosts:
            labels = composite(list(renders) + list(ghosts), i, views[i].shape).labels.copy()
        if label_flip > 0:
            flip = (rng.random(labels.shape) < label_flip) & (labels >= 0)
            shift = rng.integers(1, n_cat, size=labels.shape)
            labels[flip] = (labels[flip] + shift[flip]) % n_cat
        for c in range(n_cat):
            conf[i, c] = labels == c
        d = comp.depth.copy()
        if hole_fraction > 0:
            budget = int(hole_fraction * h * w)
            covered = np.zeros((h, w), dtype=bool)
            while True:
                rh, rw = int(rng.integers(2, max(3, h // 4))), int(rng.integers(2, max(3, w // 4)))
                y0, x0 = int(rng.integers(0, h - rh + 1)), int(rng.integers(0, w - rw + 1))
                trial = covered.copy()
                trial[y0:y0 + rh, x0:x0 + rw] = True
                if trial.sum() > budget:
                    break
                covered = trial
            d[covered] = np.inf
        depth[i] = d
    return ObservationSet(list(views), conf, depth)


def _visible(render: ProposalRender) -> bool:
    return bool(render.visible_views(VISIBILITY_MIN_PIXELS).any())


def _object_counts(cfg: SynthConfig) -> list[Category]:
    order = []
    for name in ("bed", "sofa", "table", "chair"):
        order += [Category[name.upper()]] * int(cfg.counts.get(name, 0))
    return order


def generate(config: SynthConfig) -> tuple[GroundTruth, ProposalPool, ObservationSet]:
    """Ground-truth room with objects, rendered observations and a noisy proposal pool."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    footprint = room_footprint(cfg.room, cfg.room_size)
    fp_poly = ShapelyPolygon(footprint)
    if cfg.cameras == "scan":
        views = scan_views(footprint, cfg.views, cfg.image_size[0], cfg.image_size[1], cfg.fov_deg)
    else:
        views = ring_views(footprint, cfg.views, cfg.image_size[0], cfg.image_size[1], cfg.fov_deg, cfg.ring_radius)
    walls_raw, floor_raw = room_layout(footprint, cfg.room_height)

    # Ground-truth objects, placed one at a time with rejection.
    gt_objects: list[tuple[ObjectModel, RigidPoseScale]] = []
    placed: list[ObjectProposal] = []
    for cat in _object_counts(cfg):
        for attempt in range(MAX_PLACEMENT_TRIES):
            model = MODELS_BY_CATEGORY[cat][int(rng.integers(len(MODELS_BY_CATEGORY[cat])))]
            pose = _random_pose(rng, fp_poly, model)
            if pose is None:
                continue
            cand = make_object(-1, model, pose, cfg.voxel_size)
            if any(_overlaps(cand, p) for p in placed):
                continue
            if not _visible(prerender(-1, cat, cand.posed_mesh, views)):
                continue
            placed.append(cand)
            gt_objects.append((model, pose))
            break
        else:
            raise RuntimeError(f"could not place a {cat.name.lower()} after {MAX_PLACEMENT_TRIES} tries")

    # Candidate list: (role, builder) with builder(pid) -> proposal.
    entries: list[tuple[str, object]] = []
    for poly, key, edges in walls_raw:
        entries.append(("wall", (poly, key, edges)))
    entries.append(("floor", floor_raw))
    for model, pose in gt_objects:
        entries.append(("object", (model, pose)))
    for model, pose in gt_objects:
        for _ in range(cfg.jitter_copies):
            entries.append(("jitter", (model, _jittered(rng, pose, cfg))))
        if rng.random() < cfg.swap_prob:
            others = [m for m in MODELS.values() if m.name != model.name]
            entries.append(("swap", (others[int(rng.integers(len(others)))], pose)))
    for _ in range(cfg.decoys):
        for attempt in range(MAX_PLACEMENT_TRIES):
            model = list(MODELS.values())[int(rng.integers(len(MODELS)))]
            pose = _random_pose(rng, fp_poly, model, margin=0.05)
            if pose is None:
                continue
            cand = make_object(-1, model, pose, cfg.voxel_size)
            if any(_overlaps(cand, p) for p in placed):
                continue
            entries.append(("decoy", (model, pose)))
            break
    for k in range(cfg.wall_decoys):
        entries.append(("wall_decoy", _wall_decoy(rng, walls_raw, cfg.room_height)))
    for _ in range(cfg.wall_object_decoys):
        for attempt in range(MAX_PLACEMENT_TRIES):
            model, pose = _against_wall(rng, fp_poly, walls_raw, cfg.wall_push)
            cand = make_object(-1, model, pose, cfg.voxel_size)
            if any(_overlaps(cand, p) for p in placed):
                continue
            entries.append(("decoy", (model, pose)))
            break
    for _ in range(cfg.wall_ghosts):
        for attempt in range(MAX_PLACEMENT_TRIES):
            model, pose = _against_wall(rng, fp_poly, walls_raw, cfg.wall_push)
            cand = make_object(-1, model, pose, cfg.voxel_size)
            if any(_overlaps(cand, p) for p in placed):
                continue
            placed.append(cand)
            entries.append(("ghost", (model, pose)))
            break

    # Random id assignment so ground truth does not always hold the low ids.
    ids = rng.permutation(len(entries)).tolist()
    objects, layouts, roles = [], [], {}
    gt_walls, gt_floor, gt_objs, ghosts = [], None, [], []
    for pid, (role, payload) in zip(ids, entries):
        roles[pid] = role
        if role in ("wall", "wall_decoy", "floor"):
            poly, key, edges = payload
            cat = Category.FLOOR if role == "floor" else Category.WALL
            lp = LayoutProposal(pid, cat, poly, key, edges)
            layouts.append(lp)
            if role == "wall":
                gt_walls.append(lp)
            elif role == "floor":
                gt_floor = lp
        else:
            model, pose = payload
            op = make_object(pid, model, pose, cfg.voxel_size)
            objects.append(op)
            if role == "object":
                gt_objs.append(op)
            elif role == "ghost":
                ghosts.append(op)
    objects.sort(key=lambda p: p.id)
    layouts.sort(key=lambda p: p.id)
    pool = ProposalPool(objects, layouts)

    gt_scene = [(p.id, p.category, p.posed_mesh) for p in gt_walls + [gt_floor] + gt_objs]
    ghost_scene = [(p.id, p.category, p.posed_mesh) for p in ghosts]
    obs = render_observations(gt_scene, views, rng, cfg.depth_hole_fraction, cfg.label_flip, ghost_scene)
    gt = GroundTruth(gt_walls, gt_floor, gt_objs, obs, footprint, roles)
    return gt, pool, obs


def _overlaps(a: ObjectProposal, b: ObjectProposal) -> bool:
    return voxel_intersection_count(a.voxels, b.voxels) > 0


def _against_wall(rng, fp_poly, walls_raw, push):
    """A random object backed against a random wall and sunk ``push`` meters into it."""
    model = list(MODELS.values())[int(rng.integers(len(MODELS)))]
    poly = walls_raw[int(rng.integers(len(walls_raw)))][0]
    a, b = poly.vertices[0, :2], poly.vertices[1, :2]
    along = (b - a) / np.linalg.norm(b - a)
    normal = np.array([-along[1], along[0]])
    m = a + float(rng.uniform(0.25, 0.75)) * (b - a)
    if not fp_poly.contains(Point(*(m + 0.05 * normal))):
        normal = -normal
    center = m + (model.half_size[1] - push) * normal
    yaw = float(np.arctan2(along[1], along[0]))
    return model, RigidPoseScale.from_yaw(yaw, [center[0], center[1], 0.0])


def _wall_decoy(rng, walls_raw, height):
    """A partial copy of a ground-truth wall, attached to one of its corners."""
    k = int(rng.integers(len(walls_raw)))
    poly, key, edges = walls_raw[k]
    v = poly.vertices
    a, b = v[0, :2], v[1, :2]
    frac = float(rng.uniform(0.3, 0.7))
    if rng.random() < 0.5:
        m = a + frac * (b - a)
        new = [[a[0], a[1], 0.0], [m[0], m[1], 0.0], [m[0], m[1], height], [a[0], a[1], height]]
        corner = k
    else:
        m = b + frac * (a - b)
        new = [[m[0], m[1], 0.0], [b[0], b[1], 0.0], [b[0], b[1], height], [m[0], m[1], height]]
        corner = (k + 1) % len(walls_raw)
    return Polygon3D.from_points(poly.plane, new), key, frozenset({corner, 2000 + int(rng.integers(1 << 20))})


# -- exhaustive optimizer ---------------------------------------------------


def brute_force(pool: ProposalPool, obs: ObservationSet, weights: ScoreWeights = ScoreWeights(), max_pool: int = 20,
                renders: Optional[Mapping[int, ProposalRender]] = None, context: Iterable[int] = (),
                candidate_ids: Optional[Iterable[int]] = None, min_pixels: int = VISIBILITY_MIN_PIXELS,
                scorer: Optional[Scorer] = None) -> SceneSolution:
    """Exact maximizer of the global score over feasible subsets.

    Candidates never visible in any view are left out, as in the search.
    Enumeration is depth-first with incremental compositing; the leading
    subsets are re-scored with :class:`Scorer` so the returned score is
    computed exactly like every other solution score. Ties prefer fewer
    members, then lexicographically smaller ids.
    """
    if scorer is None:
        if renders is None:
            from .search import build_renders

            renders = build_renders(pool, obs)
        scorer = Scorer(pool, obs, renders, weights, context, min_pixels)
    context = scorer.context
    cand = sorted(set(pool.ids if candidate_ids is None else candidate_ids) - context)
    if len(cand) > max_pool:
        raise ValueError(f"pool too large for brute force ({len(cand)} > {max_pool})")
    cand = [p for p in cand if scorer.fitness(p) != NEG_INF and all(pool.compatible(p, c) for c in context)]
    n = len(cand)
    weights = scorer.weights
    compat = [sum(1 << j for j in range(n) if j != i and pool.compatible(cand[i], cand[j])) for i in range(n)]
    pix = [scorer._pixels(p) for p in cand]
    cats = [scorer.renders[p].category for p in cand]
    conf, obs_depth = scorer._conf, scorer._obs_depth

    base_depth, base_labels = scorer.composite_flat(())
    base_pp = _pixel_values(base_depth, base_labels, conf, obs_depth, weights)
    base_total = float(base_pp.sum())
    ctx_prior = scorer.prior(())

    results: list[tuple[float, int]] = []

    def dfs(start: int, mask: int, allowed: int, depth, labels, pp, total: float, prior: float):
        results.append((total + prior, mask))
        for j in range(start, n):
            if not allowed >> j & 1:
                continue
            idx, d = pix[j]
            nearer = d < depth[idx]
            sel = idx[nearer]
            new_depth = depth.copy()
            new_labels = labels.copy()
            new_depth[sel] = d[nearer]
            new_labels[sel] = cats[j]
            new_pp = pp.copy()
            new_pp[sel] = _pixel_values(new_depth[sel], new_labels[sel], conf[:, sel], obs_depth[sel], weights)
            delta = float(new_pp[sel].sum() - pp[sel].sum())
            p = prior - weights.lambda_p * sum(pool.iou(cand[j], cand[k]) for k in _bits(mask))
            p -= weights.lambda_p * sum(pool.iou(cand[j], c) for c in context)
            dfs(j + 1, mask | 1 << j, allowed & compat[j], new_depth, new_labels, new_pp, total + delta, p)

    dfs(0, 0, (1 << n) - 1, base_depth, base_labels, base_pp, base_total, ctx_prior)
    top = max(s for s, _ in results)
    tol = 1e-6 * max(1.0, abs(top))
    best = None
    for s, mask in results:
        if s < top - tol:
            continue
        members = tuple(cand[j] for j in _bits(mask))
        exact = scorer.global_score(members)
        key = (exact, -len(members), tuple(-m for m in members))
        if best is None or key > best[0]:
            best = (key, members)
    return scorer.solution(best[1])


def _bits(mask: int):
    j = 0
    while mask:
        if mask & 1:
            yield j
        mask >>= 1
        j += 1


def _pixel_values(depth, labels, conf, obs_depth, weights):
    gain, pen = _terms(depth, labels, conf, obs_depth, weights)
    return gain - pen


def naive_optimum(pool: ProposalPool, obs: ObservationSet, renders: Mapping[int, ProposalRender],
                  weights: ScoreWeights = ScoreWeights(), candidate_ids: Optional[Iterable[int]] = None,
                  min_pixels: int = VISIBILITY_MIN_PIXELS) -> SceneSolution:
    """Plain 2^N loop using the uncached reference scoring functions."""
    cand = sorted(pool.ids if candidate_ids is None else candidate_ids)
    cand = [p for p in cand if fitness(renders[p], obs, weights, min_pixels) != NEG_INF]
    best = None
    for r in range(len(cand) + 1):
        for members in itertools.combinations(cand, r):
            if prior_score(members, pool, weights) == NEG_INF:
                continue
            s = global_score(members, obs, pool, weights, renders)
            key = (s, -len(members), tuple(-m for m in members))
            if best is None or key > best[0]:
                best = (key, members)
    return SceneSolution(best[1], best[0][0], True)
