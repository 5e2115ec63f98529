"""Layout proposals from a labeled point cloud: two-stage RANSAC planes, corners, edges, wall polygons, floor."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import networkx as nx
import numba
import numpy as np

from .geometry import (
    GRAVITY,
    GeometryError,
    Plane,
    Polygon3D,
    canonical_normal,
    intersect_three_planes,
    is_simple_2d,
    polygon_area_2d,
)
from .proposals import Category, LayoutProposal
from .synth import room_layout

LAYOUT_LABELS = (int(Category.WALL), int(Category.FLOOR))
CORNER_MERGE = 1e-3
BOUNDS_MARGIN = 0.5
MAX_CYCLE = 8
MIN_POLYGON_AREA = 0.05
LOOP_GAP = 0.05


@dataclass(eq=False)
class LabeledCloud:
    """Points with unit normals and integer category labels."""

    points: np.ndarray
    normals: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if not (len(self.points) == len(self.normals) == len(self.labels)):
            raise ValueError("points, normals and labels must have the same length")
        if len(self.normals) and np.max(np.abs(np.linalg.norm(self.normals, axis=1) - 1.0)) > 1e-6:
            raise ValueError("normals must be unit length")

    def __len__(self) -> int:
        return len(self.points)

    def layout_only(self) -> "LabeledCloud":
        keep = np.isin(self.labels, LAYOUT_LABELS)
        return LabeledCloud(self.points[keep], self.normals[keep], self.labels[keep])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)


@dataclass(frozen=True)
class RansacParams:
    """Distance thresholds in meters, normal thresholds in degrees."""

    stage1_dist: float = 0.10
    stage1_angle: float = 15.0
    stage1_final_dist: float = 0.20
    stage1_final_angle: float = 30.0
    stage1_min_inliers: int = 5000
    stage2_dist: float = 1.00
    stage2_angle: float = 10.0
    stage2_min_inliers: int = 300
    iterations: int = 2000
    floor_angle: float = 15.0
    refit: bool = True

    def __post_init__(self):
        vals = [getattr(self, f) for f in self.__dataclass_fields__ if f != "refit"]
        if any(v <= 0 for v in vals):
            raise ValueError("RANSAC parameters must be positive")

    def stages(self):
        yield 1, self.stage1_dist, self.stage1_angle, self.stage1_final_dist, self.stage1_final_angle, self.stage1_min_inliers
        yield 2, self.stage2_dist, self.stage2_angle, self.stage2_dist, self.stage2_angle, self.stage2_min_inliers


@dataclass(eq=False)
class PlaneSet:
    planes: list[Plane] = field(default_factory=list)
    inliers: list[np.ndarray] = field(default_factory=list)
    stage: list[int] = field(default_factory=list)
    floor: Optional[int] = None

    def __len__(self) -> int:
        return len(self.planes)

    @property
    def walls(self) -> list[int]:
        return [i for i in range(len(self.planes)) if i != self.floor]


@numba.njit(cache=True)
def _count_inliers(points, normals, hn, hd, dist, cos_ang):
    """Inlier count of each plane hypothesis (distance and unsigned normal angle)."""
    out = np.zeros(hn.shape[0], dtype=np.int64)
    for h in range(hn.shape[0]):
        nx_, ny_, nz_ = hn[h, 0], hn[h, 1], hn[h, 2]
        if nx_ == 0.0 and ny_ == 0.0 and nz_ == 0.0:
            continue
        c = 0
        for i in range(points.shape[0]):
            d = points[i, 0] * nx_ + points[i, 1] * ny_ + points[i, 2] * nz_ - hd[h]
            if abs(d) >= dist:
                continue
            a = normals[i, 0] * nx_ + normals[i, 1] * ny_ + normals[i, 2] * nz_
            if abs(a) >= cos_ang:
                c += 1
        out[h] = c
    return out


def inlier_mask(plane: Plane, points: np.ndarray, normals: np.ndarray, dist: float, angle_deg: float) -> np.ndarray:
    close = np.abs(plane.signed_distance(points)) < dist
    aligned = np.abs(normals @ plane.normal) >= np.cos(np.radians(angle_deg))
    return close & aligned


def _hypotheses(points: np.ndarray, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = rng.integers(0, len(points), size=(n, 3))
    p = points[idx]
    nrm = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norm = np.linalg.norm(nrm, axis=1)
    ok = 0.5 * norm > 1e-9
    nrm[ok] /= norm[ok, None]
    nrm[~ok] = 0.0
    d = np.einsum("ij,ij->i", nrm, p.mean(axis=1))
    return nrm, d


def fit_plane_lsq(points: np.ndarray) -> Plane:
    """Total least squares plane through ``points``."""
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c, full_matrices=False)
    n = canonical_normal(vt[-1] / np.linalg.norm(vt[-1]))
    return Plane.from_normal_point(n, c)


def detect_planes(cloud: LabeledCloud, params: RansacParams = RansacParams(),
                  rng: Optional[np.random.Generator] = None) -> PlaneSet:
    """Greedy two-stage RANSAC. Accepted inliers are removed before the next round.

    A second near-horizontal plane is never kept (its inliers are still
    removed) so that the set holds a single floor.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    pts, nrm = cloud.points, cloud.normals
    remaining = np.arange(len(pts))
    out = PlaneSet()
    for stage, dist, ang, fdist, fang, min_in in params.stages():
        while len(remaining) >= 3:
            p, q = pts[remaining], nrm[remaining]
            hn, hd = _hypotheses(p, rng, params.iterations)
            counts = _count_inliers(p, q, hn, hd, dist, np.cos(np.radians(ang)))
            best = int(np.argmax(counts))
            if counts[best] == 0:
                break
            n = canonical_normal(hn[best])
            plane = Plane(n, hd[best] * float(n @ hn[best]))
            mask = inlier_mask(plane, p, q, fdist, fang)
            if mask.sum() <= min_in:
                break
            if params.refit:
                plane = fit_plane_lsq(p[mask])
            horizontal = plane.is_horizontal(params.floor_angle)
            if not horizontal or out.floor is None:
                if horizontal:
                    out.floor = len(out.planes)
                out.planes.append(plane)
                out.inliers.append(remaining[mask])
                out.stage.append(stage)
            remaining = remaining[~mask]
    return out


# -- corners, edges, polygons ----------------------------------------------


@dataclass(frozen=True, eq=False)
class Corner:
    position: np.ndarray
    planes: frozenset


@dataclass(frozen=True, eq=False)
class Edge:
    id: int
    corners: tuple  # (i, j) corner indices
    planes: tuple  # the two planes whose intersection line holds the edge


def bbox_planes(lo: np.ndarray, hi: np.ndarray) -> list[Plane]:
    out = []
    for axis in range(3):
        n = np.zeros(3)
        n[axis] = 1.0
        out.append(Plane(n, lo[axis]))
        out.append(Plane(n, hi[axis]))
    return out


def _same_plane(a: Plane, b: Plane, angle_deg: float = 2.0, dist: float = 0.1) -> bool:
    c = float(a.normal @ b.normal)
    if abs(c) < np.cos(np.radians(angle_deg)):
        return False
    return abs(a.offset - np.sign(c) * b.offset) < dist


def augment_with_bbox(planes: PlaneSet, lo: np.ndarray, hi: np.ndarray) -> list[Plane]:
    """Detected planes followed by the bounding-box faces that do not duplicate one of them."""
    out = list(planes.planes)
    for f in bbox_planes(lo, hi):
        if not any(_same_plane(f, p) for p in out):
            out.append(f)
    return out


def build_corners(planes: Sequence[Plane], bounds: tuple, margin: float = BOUNDS_MARGIN) -> list[Corner]:
    """Intersections of plane triples inside the expanded bounds; coincident corners merged."""
    lo, hi = np.asarray(bounds[0]) - margin, np.asarray(bounds[1]) + margin
    corners: list[Corner] = []
    for i, j, k in itertools.combinations(range(len(planes)), 3):
        p = intersect_three_planes(planes[i], planes[j], planes[k])
        if p is None or np.any(p < lo) or np.any(p > hi):
            continue
        for m, c in enumerate(corners):
            if np.linalg.norm(c.position - p) <= CORNER_MERGE:
                corners[m] = Corner(c.position, c.planes | {i, j, k})
                break
        else:
            corners.append(Corner(p, frozenset({i, j, k})))
    return corners


def build_edges(corners: Sequence[Corner], planes: Optional[Sequence[Plane]] = None) -> list[Edge]:
    """Edges between consecutive corners along each line shared by two planes."""
    lines: dict[tuple, list[int]] = {}
    for ci, c in enumerate(corners):
        for a, b in itertools.combinations(sorted(c.planes), 2):
            lines.setdefault((a, b), []).append(ci)
    seen, edges = set(), []
    for (a, b), members in sorted(lines.items()):
        if len(members) < 2:
            continue
        pts = np.array([corners[m].position for m in members])
        if planes is not None:
            d = np.cross(planes[a].normal, planes[b].normal)
            if np.linalg.norm(d) < 1e-9:
                continue
        else:
            d = pts[np.argmax(np.linalg.norm(pts - pts[0], axis=1))] - pts[0]
        t = (pts - pts[0]) @ d
        order = [members[i] for i in np.argsort(t, kind="stable")]
        for u, v in zip(order, order[1:]):
            key = (min(u, v), max(u, v))
            if key in seen:
                continue
            seen.add(key)
            edges.append(Edge(len(edges), key, (a, b)))
    return edges


def _drop_collinear(pts2d: np.ndarray, pts3d: np.ndarray, tol: float = 1e-6):
    keep = []
    n = len(pts2d)
    for i in range(n):
        a, b, c = pts2d[i - 1], pts2d[i], pts2d[(i + 1) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if abs(cross) > tol * max(1.0, np.linalg.norm(b - a) * np.linalg.norm(c - b)):
            keep.append(i)
    return pts3d[keep]


def build_polygons(corners: Sequence[Corner], edges: Sequence[Edge], planes: Sequence[Plane],
                   wall_planes: Sequence[int], first_id: int = 0, max_cycle: int = MAX_CYCLE,
                   min_area: float = MIN_POLYGON_AREA) -> list[LayoutProposal]:
    """Wall polygon proposals: simple cycles of the edge graph lying on each wall plane."""
    out: list[LayoutProposal] = []
    pid = first_id
    for w in wall_planes:
        g = nx.Graph()
        for e in edges:
            if w in e.planes:
                g.add_edge(*e.corners, id=e.id)
        if g.number_of_edges() < 3:
            continue
        cycles = []
        for cyc in nx.simple_cycles(g, length_bound=max_cycle):
            if len(cyc) < 3:
                continue
            # Canonical rotation/direction so the output order is reproducible.
            k = cyc.index(min(cyc))
            cyc = cyc[k:] + cyc[:k]
            if cyc[1] > cyc[-1]:
                cyc = [cyc[0]] + cyc[1:][::-1]
            cycles.append(tuple(cyc))
        plane = planes[w]
        for cyc in sorted(set(cycles)):
            pts3 = plane.project(np.array([corners[c].position for c in cyc]))
            o, u, v = plane.basis()
            pts2 = np.stack([(pts3 - o) @ u, (pts3 - o) @ v], axis=-1)
            if not is_simple_2d(pts2) or abs(polygon_area_2d(pts2)) < min_area:
                continue
            verts = _drop_collinear(pts2, pts3)
            if len(verts) < 3:
                continue
            try:
                poly = Polygon3D(plane, verts)
            except GeometryError:
                continue
            eids = frozenset(g.edges[cyc[i], cyc[(i + 1) % len(cyc)]]["id"] for i in range(len(cyc)))
            out.append(LayoutProposal(pid, Category.WALL, poly, w, eids))
            pid += 1
    return out


def _base_segment(wall: LayoutProposal, floor: Plane) -> np.ndarray:
    """Footprint of a wall on the floor: the two extreme projected vertices along the wall direction."""
    v = floor.project(wall.polygon.vertices)
    d = np.cross(wall.polygon.plane.normal, floor.normal)
    t = v @ d
    return np.array([v[np.argmin(t)], v[np.argmax(t)]])


def _line_meet(a0, a1, b0, b1, normal) -> Optional[np.ndarray]:
    da, db = a1 - a0, b1 - b0
    m = np.column_stack([da, -db])
    # Least squares in 3D on the floor plane.
    sol, *_ = np.linalg.lstsq(m, b0 - a0, rcond=None)
    if abs(np.cross(da, db) @ normal) < 1e-9 * np.linalg.norm(da) * np.linalg.norm(db):
        return None
    return a0 + sol[0] * da


def floor_from_walls(walls: Sequence[LayoutProposal], floor_plane: Plane, pid: int = -1,
                     plane_id: int = -1, tol: float = LOOP_GAP) -> LayoutProposal:
    """Floor polygon closing the wall base segments into one loop."""
    if len(walls) < 3:
        raise ValueError("unclosed wall loop")
    segs = [_base_segment(w, floor_plane) for w in walls]
    order, flipped = [0], [False]
    used = {0}
    end = segs[0][1]
    while len(order) < len(segs):
        nxt = None
        for i, s in enumerate(segs):
            if i in used:
                continue
            for flip in (False, True):
                start = s[1] if flip else s[0]
                if np.linalg.norm(start - end) <= tol:
                    nxt = (i, flip)
                    break
            if nxt:
                break
        if nxt is None:
            raise ValueError("unclosed wall loop")
        i, flip = nxt
        order.append(i)
        flipped.append(flip)
        used.add(i)
        end = segs[i][0] if flip else segs[i][1]
    if np.linalg.norm(end - segs[0][0]) > tol:
        raise ValueError("unclosed wall loop")
    chain = [segs[i][::-1] if f else segs[i] for i, f in zip(order, flipped)]
    verts = []
    for k in range(len(chain)):
        prev, cur = chain[k - 1], chain[k]
        p = _line_meet(prev[0], prev[1], cur[0], cur[1], floor_plane.normal)
        verts.append(p if p is not None else 0.5 * (prev[1] + cur[0]))
    verts = np.array(verts)
    edges = frozenset().union(*(w.edge_ids for w in walls))
    return LayoutProposal(pid, Category.FLOOR, Polygon3D.from_points(floor_plane, verts), plane_id, edges)


@dataclass(eq=False)
class LayoutProposals:
    planes: PlaneSet
    all_planes: list[Plane]
    corners: list[Corner]
    edges: list[Edge]
    walls: list[LayoutProposal]

    @property
    def floor_plane(self) -> Optional[Plane]:
        return None if self.planes.floor is None else self.planes.planes[self.planes.floor]


def layout_proposals(cloud: LabeledCloud, params: RansacParams = RansacParams(),
                     rng: Optional[np.random.Generator] = None, first_id: int = 0) -> LayoutProposals:
    """Full pipeline from a labeled cloud to wall polygon proposals."""
    cloud = cloud.layout_only()
    planes = detect_planes(cloud, params, rng)
    lo, hi = cloud.bounds() if len(cloud) else (np.zeros(3), np.zeros(3))
    all_planes = augment_with_bbox(planes, lo, hi)
    corners = build_corners(all_planes, (lo, hi))
    edges = build_edges(corners, all_planes)
    wall_ids = [i for i, p in enumerate(all_planes) if i != planes.floor and not p.is_horizontal(params.floor_angle)]
    walls = build_polygons(corners, edges, all_planes, wall_ids, first_id)
    return LayoutProposals(planes, all_planes, corners, edges, walls)


def sample_room_cloud(footprint: np.ndarray, height: float, points_per_plane: int = 10000, noise: float = 0.0,
                      rng: Optional[np.random.Generator] = None) -> LabeledCloud:
    """Labeled samples of a room's walls and floor, with Gaussian position noise along each plane normal."""
    rng = np.random.default_rng(0) if rng is None else rng
    walls, floor = room_layout(np.asarray(footprint, dtype=float), height)
    pts, nrm, lab = [], [], []
    for poly, _, _ in walls:
        m = poly.to_mesh()
        s = m.sample_surface(points_per_plane, rng)
        pts.append(s + np.multiply.outer(rng.normal(0.0, noise, len(s)) if noise else np.zeros(len(s)), poly.plane.normal))
        nrm.append(np.tile(poly.plane.normal, (len(s), 1)))
        lab.append(np.full(len(s), int(Category.WALL)))
    poly = floor[0]
    s = poly.to_mesh().sample_surface(points_per_plane, rng)
    pts.append(s + np.multiply.outer(rng.normal(0.0, noise, len(s)) if noise else np.zeros(len(s)), poly.plane.normal))
    nrm.append(np.tile(poly.plane.normal, (len(s), 1)))
    lab.append(np.full(len(s), int(Category.FLOOR)))
    return LabeledCloud(np.vstack(pts), np.vstack(nrm), np.concatenate(lab))
