"""Proposal types, pairwise compatibility rules and the proposal pool."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import shapely
from shapely.geometry import LineString
from shapely.geometry import Polygon as ShapelyPolygon

from .geometry import (
    DEFAULT_VOXEL_SIZE,
    OrientedBox,
    Polygon3D,
    RigidPoseScale,
    TriangleMesh,
    VoxelGrid,
    voxel_intersection_centers,
    voxel_iou,
    voxelize,
)

IOU_THRESHOLD = 0.3
SURFACE_RATIO_THRESHOLD = 0.3
SLAB_HALF_THICKNESS = 0.005
PARALLEL_COS = np.cos(np.radians(1.0))


class Category(enum.IntEnum):
    WALL = 0
    FLOOR = 1
    CHAIR = 2
    TABLE = 3
    SOFA = 4
    BED = 5

    @property
    def is_layout(self) -> bool:
        return self in (Category.WALL, Category.FLOOR)


CATEGORIES = tuple(Category)
OBJECT_CATEGORIES = (Category.CHAIR, Category.TABLE, Category.SOFA, Category.BED)

# Pairs checked with the horizontal-surface rule instead of plain IoU.
SURFACE_PAIRS = {frozenset((Category.CHAIR, Category.TABLE)), frozenset((Category.SOFA, Category.TABLE))}


@dataclass(frozen=True, eq=False)
class HorizontalSurface:
    """Planar rectangle at height ``center[2]`` (table top, sofa seat)."""

    center: np.ndarray
    half_extents: np.ndarray  # (2,) in the rectangle's own frame
    yaw: float

    def local_xy(self, points: np.ndarray) -> np.ndarray:
        d = np.asarray(points, dtype=float)[..., :2] - self.center[:2]
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return np.stack([c * d[..., 0] + s * d[..., 1], -s * d[..., 0] + c * d[..., 1]], axis=-1)


class CompatKind(enum.Enum):
    COMPATIBLE = "compatible"
    TOLERATED = "tolerated"
    INCOMPATIBLE = "incompatible"


@dataclass(frozen=True)
class Compatibility:
    kind: CompatKind
    iou: float = 0.0

    @property
    def ok(self) -> bool:
        return self.kind is not CompatKind.INCOMPATIBLE


COMPATIBLE = Compatibility(CompatKind.COMPATIBLE)
INCOMPATIBLE = Compatibility(CompatKind.INCOMPATIBLE)


@dataclass(eq=False)
class ObjectProposal:
    id: int
    category: Category
    mesh: TriangleMesh
    pose: RigidPoseScale
    horizontal_surface: Optional[HorizontalSurface] = None
    mesh_name: str = ""
    voxel_size: float = DEFAULT_VOXEL_SIZE
    bbox: OrientedBox = field(init=False)
    voxels: VoxelGrid = field(init=False)

    def __post_init__(self):
        self.category = Category(self.category)
        if self.category.is_layout:
            raise ValueError("object proposals need an object category")
        lo, hi = self.mesh.bounds()
        center = self.pose.apply(((lo + hi) / 2.0)[None])[0]
        self.bbox = OrientedBox(center, (hi - lo) / 2.0 * self.pose.scale, self.pose.yaw)
        self.voxels = voxelize(self.mesh, self.pose, self.voxel_size)

    @property
    def posed_mesh(self) -> TriangleMesh:
        return self.mesh.transformed(self.pose)

    @property
    def is_layout(self) -> bool:
        return False


@dataclass(eq=False)
class LayoutProposal:
    id: int
    category: Category
    polygon: Polygon3D
    plane_id: int
    edge_ids: frozenset = frozenset()

    def __post_init__(self):
        self.category = Category(self.category)
        if not self.category.is_layout:
            raise ValueError("layout proposals must be wall or floor")
        self.edge_ids = frozenset(self.edge_ids)

    @property
    def posed_mesh(self) -> TriangleMesh:
        return self.polygon.to_mesh()

    @property
    def is_layout(self) -> bool:
        return True


Proposal = Union[ObjectProposal, LayoutProposal]


def _in_rect(surface: HorizontalSurface, xy_local: np.ndarray) -> np.ndarray:
    return np.all(np.abs(xy_local) <= surface.half_extents, axis=-1)


def horizontal_surface_ratio(penetrating: ObjectProposal, surface_owner: ObjectProposal) -> float:
    """Depth of the deepest shared voxel inside the owner's surface rectangle.

    The distance from that voxel center to the nearest rectangle edge is
    normalized by the rectangle's shorter side.
    """
    surf = surface_owner.horizontal_surface
    if surf is None:
        raise ValueError("surface owner has no horizontal surface")
    centers = voxel_intersection_centers(penetrating.voxels, surface_owner.voxels)
    if len(centers) == 0:
        return 0.0
    local = surf.local_xy(centers)
    inside = _in_rect(surf, local)
    if not inside.any():
        return 0.0
    to_edge = np.min(surf.half_extents - np.abs(local[inside]), axis=1)
    return float(np.clip(to_edge.max() / (2.0 * surf.half_extents.min()), 0.0, 1.0))


def _surface_directions(a: ObjectProposal, b: ObjectProposal):
    # A table top can be penetrated by a chair or sofa; a sofa seat only by a table.
    for p, o in ((a, b), (b, a)):
        if o.horizontal_surface is None:
            continue
        if o.category is Category.TABLE or (o.category is Category.SOFA and p.category is Category.TABLE):
            yield p, o


def object_object_compat(a: ObjectProposal, b: ObjectProposal, iou_threshold: float = IOU_THRESHOLD) -> Compatibility:
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must lie in (0, 1)")
    iou = voxel_iou(a.voxels, b.voxels)
    if frozenset((a.category, b.category)) in SURFACE_PAIRS:
        ratios = [horizontal_surface_ratio(p, o) for p, o in _surface_directions(a, b)]
        if ratios:
            if max(ratios) > SURFACE_RATIO_THRESHOLD:
                return INCOMPATIBLE
            return Compatibility(CompatKind.TOLERATED, iou) if iou > 0 else COMPATIBLE
    if iou == 0.0:
        return COMPATIBLE
    if iou <= iou_threshold:
        return Compatibility(CompatKind.TOLERATED, iou)
    return INCOMPATIBLE


def _line_intervals(poly: LayoutProposal, p0: np.ndarray, d: np.ndarray, span: float) -> shapely.Geometry:
    """Parameter intervals t where p0 + t*d lies in the slab-thickened polygon."""
    pg = poly.polygon
    a = pg.to_2d(p0 - span * d)
    b = pg.to_2d(p0 + span * d)
    shape = ShapelyPolygon(pg.to_2d(pg.vertices)).buffer(SLAB_HALF_THICKNESS, join_style="mitre")
    seg = shape.intersection(LineString([a, b]))
    length = np.linalg.norm(b - a)
    # Map back to a 1D parameter along the line.
    out = []
    for g in getattr(seg, "geoms", [seg]):
        if g.is_empty or g.geom_type not in ("LineString", "Point"):
            continue
        coords = np.asarray(g.coords)
        ts = [np.linalg.norm(c - a) / length * 2 * span - span for c in coords]
        out.append((min(ts), max(ts)))
    return out


def layouts_intersect(a: LayoutProposal, b: LayoutProposal) -> bool:
    """Do the 1 cm thick slabs of two layout polygons share volume (or coplanar area)?"""
    na, nb = a.polygon.plane.normal, b.polygon.plane.normal
    if abs(na @ nb) >= PARALLEL_COS:
        gap = abs(a.polygon.plane.offset - (na @ nb) * b.polygon.plane.offset)
        if gap > 2 * SLAB_HALF_THICKNESS:
            return False
        pa = ShapelyPolygon(a.polygon.to_2d(a.polygon.vertices))
        pb = ShapelyPolygon(a.polygon.to_2d(b.polygon.vertices))
        return pa.intersection(pb).area > 1e-6
    d = np.cross(na, nb)
    d /= np.linalg.norm(d)
    m = np.vstack([na, nb, d])
    p0 = np.linalg.solve(m, np.array([a.polygon.plane.offset, b.polygon.plane.offset, 0.0]))
    span = 1.0 + max(np.abs(a.polygon.vertices - p0).max(), np.abs(b.polygon.vertices - p0).max()) * 2
    ia = _line_intervals(a, p0, d, span)
    ib = _line_intervals(b, p0, d, span)
    for lo1, hi1 in ia:
        for lo2, hi2 in ib:
            if min(hi1, hi2) - max(lo1, lo2) > 1e-9:
                return True
    return False


def layout_neighbors(a: LayoutProposal, b: LayoutProposal) -> bool:
    """Spatial neighbours share a boundary edge and lie on different planes."""
    return a.plane_id != b.plane_id and bool(a.edge_ids & b.edge_ids)


def _coplanar(a: LayoutProposal, b: LayoutProposal) -> bool:
    if a.plane_id == b.plane_id:
        return True
    na, nb = a.polygon.plane.normal, b.polygon.plane.normal
    return abs(na @ nb) >= PARALLEL_COS and abs(a.polygon.plane.offset - (na @ nb) * b.polygon.plane.offset) <= 2 * SLAB_HALF_THICKNESS


def layout_layout_compat(a: LayoutProposal, b: LayoutProposal) -> Compatibility:
    if _coplanar(a, b):
        return INCOMPATIBLE if layouts_intersect(a, b) else COMPATIBLE
    if layouts_intersect(a, b) and not layout_neighbors(a, b):
        return INCOMPATIBLE
    return COMPATIBLE


def object_layout_compat(o: ObjectProposal, l: LayoutProposal) -> Compatibility:
    """Incompatible when the object's voxels straddle the polygon by more than one voxel layer."""
    centers = o.voxels.occupied_centers()
    plane = l.polygon.plane
    sd = plane.signed_distance(centers)
    # Only voxels whose footprint projects inside the polygon count.
    uv = l.polygon.to_2d(centers)
    poly2d = ShapelyPolygon(l.polygon.to_2d(l.polygon.vertices)).buffer(0.5 * o.voxels.voxel_size)
    inside = shapely.contains_xy(poly2d, uv[:, 0], uv[:, 1])
    if not inside.any():
        return COMPATIBLE
    sd = sd[inside]
    depth = min(max(sd.max(), 0.0), max(-sd.min(), 0.0))
    return INCOMPATIBLE if depth > o.voxels.voxel_size else COMPATIBLE


def object_distance(a: ObjectProposal, b: ObjectProposal) -> float:
    return float(np.linalg.norm(a.bbox.center - b.bbox.center))


def compat(a: Proposal, b: Proposal, iou_threshold: float = IOU_THRESHOLD) -> Compatibility:
    if a.is_layout and b.is_layout:
        return layout_layout_compat(a, b)
    if not a.is_layout and not b.is_layout:
        return object_object_compat(a, b, iou_threshold)
    o, l = (a, b) if b.is_layout else (b, a)
    return object_layout_compat(o, l)


class ProposalPool:
    """Objects and layouts with cached pairwise relations.

    Ids are unique integers across both lists. Caches are filled on
    construction; the pool is treated as immutable afterwards.
    """

    def __init__(self, objects: Sequence[ObjectProposal] = (), layouts: Sequence[LayoutProposal] = (),
                 iou_threshold: float = IOU_THRESHOLD):
        self.objects = list(objects)
        self.layouts = list(layouts)
        self.iou_threshold = iou_threshold
        self.by_id: dict[int, Proposal] = {}
        for p in itertools.chain(self.objects, self.layouts):
            if p.id in self.by_id:
                raise ValueError(f"duplicate proposal id {p.id}")
            self.by_id[p.id] = p
        self._compat: dict[tuple[int, int], Compatibility] = {}
        ids = sorted(self.by_id)
        for i, j in itertools.combinations(ids, 2):
            self._compat[(i, j)] = compat(self.by_id[i], self.by_id[j], iou_threshold)
        self.neighbors: dict[int, frozenset] = {
            l.id: frozenset(m.id for m in self.layouts if m.id != l.id and layout_neighbors(l, m)) for l in self.layouts
        }

    @property
    def ids(self) -> list[int]:
        return sorted(self.by_id)

    def __len__(self) -> int:
        return len(self.by_id)

    def __getitem__(self, pid: int) -> Proposal:
        return self.by_id[pid]

    def compatibility(self, a: int, b: int) -> Compatibility:
        if a == b:
            raise ValueError("compatibility of a proposal with itself")
        return self._compat[(a, b) if a < b else (b, a)]

    def compatible(self, a: int, b: int) -> bool:
        return self.compatibility(a, b).ok

    def iou(self, a: int, b: int) -> float:
        c = self.compatibility(a, b)
        return c.iou if c.kind is CompatKind.TOLERATED else 0.0

    def distance(self, a: int, b: int) -> float:
        return object_distance(self.by_id[a], self.by_id[b])

    def feasible(self, members: Sequence[int]) -> bool:
        return all(self.compatible(a, b) for a, b in itertools.combinations(sorted(members), 2))

    def subset(self, ids: Sequence[int]) -> "ProposalPool":
        keep = set(ids)
        sub = ProposalPool.__new__(ProposalPool)
        sub.objects = [o for o in self.objects if o.id in keep]
        sub.layouts = [l for l in self.layouts if l.id in keep]
        sub.iou_threshold = self.iou_threshold
        sub.by_id = {k: v for k, v in self.by_id.items() if k in keep}
        sub._compat = {k: v for k, v in self._compat.items() if k[0] in keep and k[1] in keep}
        sub.neighbors = {k: v & keep for k, v in self.neighbors.items() if k in keep}
        return sub

    def merged(self, extra: Sequence[Proposal]) -> "ProposalPool":
        return ProposalPool(
            self.objects + [p for p in extra if not p.is_layout],
            self.layouts + [p for p in extra if p.is_layout],
            self.iou_threshold,
        )
