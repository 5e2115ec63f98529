"""Core 3D types and geometric predicates.

Points are plain ``numpy`` arrays of shape ``(3,)`` (or ``(N, 3)`` for
batches). Gravity is fixed to ``+z``; object rotations are yaw-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

Vec3 = np.ndarray

GRAVITY = np.array([0.0, 0.0, 1.0])

# Degeneracy thresholds shared by every module.
DET_EPS = 1e-6
AREA_EPS = 1e-9
PLANE_EPS = 1e-9
POLY_PLANE_TOL = 1e-6

DEFAULT_VOXEL_SIZE = 0.05

# Tiny irrational offsets applied to parity rays so they never graze mesh edges.
_RAY_JITTER = np.array([0.6180339887e-7, 0.4142135623e-7])


class GeometryError(ValueError):
    """Raised for degenerate geometric inputs."""


def as_vec3(v: Sequence[float]) -> Vec3:
    a = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(a)):
        raise GeometryError("non-finite vector component")
    return a


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class RigidPoseScale:
    """Rotation, translation and per-axis scale; ``x_world = R (s * x) + t``."""

    rotation: np.ndarray
    translation: Vec3
    scale: Vec3 = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", as_vec3(self.translation))
        object.__setattr__(self, "scale", as_vec3(self.scale))
        if abs(np.linalg.det(r) - 1.0) > 1e-6 or not np.allclose(r @ r.T, np.eye(3), atol=1e-6):
            raise GeometryError("rotation must be orthonormal with det +1")
        if np.any(self.scale <= 0):
            raise GeometryError("scale components must be positive")

    @classmethod
    def identity(cls) -> "RigidPoseScale":
        return cls(np.eye(3), np.zeros(3), np.ones(3))

    @classmethod
    def from_yaw(cls, yaw: float, translation, scale=(1.0, 1.0, 1.0)) -> "RigidPoseScale":
        return cls(yaw_matrix(yaw), translation, scale)

    @property
    def yaw(self) -> float:
        return float(np.arctan2(self.rotation[1, 0], self.rotation[0, 0]))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return (pts * self.scale) @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        """4x4 rigid transform (scale kept separately)."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True, eq=False)
class Plane:
    normal: Vec3
    offset: float

    def __post_init__(self):
        n = as_vec3(self.normal)
        if abs(np.linalg.norm(n) - 1.0) > PLANE_EPS:
            raise GeometryError("plane normal must be unit length")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_normal_point(cls, normal, point) -> "Plane":
        n = as_vec3(normal)
        n = n / np.linalg.norm(n)
        return cls(n, float(n @ as_vec3(point)))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.normal - self.offset

    def project(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        d = self.signed_distance(pts)
        return pts - np.multiply.outer(d, self.normal)

    def basis(self) -> tuple[Vec3, Vec3, Vec3]:
        """Origin and two in-plane orthonormal axes (deterministic)."""
        n = self.normal
        ref = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
        u = np.cross(ref, n)
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        return n * self.offset, u, v

    def is_horizontal(self, max_angle_deg: float = 15.0) -> bool:
        return abs(self.normal @ GRAVITY) >= np.cos(np.radians(max_angle_deg))


def canonical_normal(n: np.ndarray) -> np.ndarray:
    """Flip ``n`` so it points to the canonical hemisphere: z >= 0, ties by x then y."""
    for axis in (2, 0, 1):
        if abs(n[axis]) > 1e-12:
            return n if n[axis] > 0 else -n
    return n


def point_plane_distance(point, plane: Plane) -> float:
    return float(abs(plane.signed_distance(as_vec3(point))))


def fit_plane_3pts(p1, p2, p3) -> Plane:
    p1, p2, p3 = as_vec3(p1), as_vec3(p2), as_vec3(p3)
    cross = np.cross(p2 - p1, p3 - p1)
    norm = np.linalg.norm(cross)
    if 0.5 * norm <= AREA_EPS:
        raise GeometryError("degenerate sample")
    n = canonical_normal(cross / norm)
    # Averaging over the three samples keeps every residual at round-off level.
    offset = float(np.mean([n @ p1, n @ p2, n @ p3]))
    return Plane(n, offset)


def intersect_three_planes(a: Plane, b: Plane, c: Plane) -> Optional[Vec3]:
    m = np.vstack([a.normal, b.normal, c.normal])
    if abs(np.linalg.det(m)) <= DET_EPS:
        return None
    return np.linalg.solve(m, np.array([a.offset, b.offset, c.offset]))


def polygon_area_2d(pts: np.ndarray) -> float:
    """Signed shoelace area; positive for counter-clockwise loops."""
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(a, b, c, d) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    return False


def is_simple_2d(pts: np.ndarray) -> bool:
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(a, b, pts[j], pts[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True, eq=False)
class Polygon3D:
    plane: Plane
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        if len(v) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        if np.max(np.abs(self.plane.signed_distance(v))) > POLY_PLANE_TOL:
            raise GeometryError("polygon vertices are off the plane")
        if not is_simple_2d(self.to_2d(v)):
            raise GeometryError("self-intersecting polygon")

    @classmethod
    def from_points(cls, plane: Plane, points) -> "Polygon3D":
        return cls(plane, plane.project(np.asarray(points, dtype=float)))

    def to_2d(self, points: np.ndarray) -> np.ndarray:
        o, u, v = self.plane.basis()
        d = np.asarray(points, dtype=float) - o
        return np.stack([d @ u, d @ v], axis=-1)

    def from_2d(self, uv: np.ndarray) -> np.ndarray:
        o, u, v = self.plane.basis()
        uv = np.asarray(uv, dtype=float)
        return o + np.multiply.outer(uv[..., 0], u) + np.multiply.outer(uv[..., 1], v)

    @property
    def area(self) -> float:
        return abs(polygon_area_2d(self.to_2d(self.vertices)))

    def is_convex(self) -> bool:
        p = self.to_2d(self.vertices)
        e = np.roll(p, -1, axis=0) - p
        cr = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
        cr = cr[np.abs(cr) > 1e-12]
        return bool(np.all(cr > 0) or np.all(cr < 0))

    def triangles(self) -> np.ndarray:
        """Vertex-index triples: a fan from vertex 0 when convex, ear clipping otherwise."""
        n = len(self.vertices)
        if self.is_convex():
            return np.array([[0, i, i + 1] for i in range(1, n - 1)], dtype=np.int64)
        return np.asarray(_ear_clip(self.to_2d(self.vertices)), dtype=np.int64)

    def to_mesh(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices.copy(), self.triangles())


def _ear_clip(pts: np.ndarray) -> list[list[int]]:
    idx = list(range(len(pts)))
    if polygon_area_2d(pts) < 0:
        idx.reverse()
    tris = []

    def inside(p, a, b, c):
        def s(p1, p2, p3):
            return (p1[0] - p3[0]) * (p2[1] - p3[1]) - (p2[0] - p3[0]) * (p1[1] - p3[1])

        d1, d2, d3 = s(p, a, b), s(p, b, c), s(p, c, a)
        return d1 >= 0 and d2 >= 0 and d3 >= 0

    guard = 0
    while len(idx) > 3 and guard < 10000:
        guard += 1
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = pts[i0], pts[i1], pts[i2]
            if (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) <= 1e-14:
                continue
            if any(inside(pts[j], a, b, c) for j in idx if j not in (i0, i1, i2)):
                continue
            tris.append([i0, i1, i2])
            idx.pop(k)
            break
        else:
            break
    if len(idx) == 3:
        tris.append(idx)
    return tris


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(t) and (t.min() < 0 or t.max() >= len(v)):
            raise GeometryError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    def validated(self) -> "TriangleMesh":
        """Copy with zero-area triangles removed."""
        a = self.triangle_areas()
        return TriangleMesh(self.vertices, self.triangles[a > AREA_EPS])

    def triangle_areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def transformed(self, pose: RigidPoseScale) -> "TriangleMesh":
        return TriangleMesh(pose.apply(self.vertices), self.triangles)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def bounds(self) -> tuple[Vec3, Vec3]:
        used = self.vertices[np.unique(self.triangles)]
        return used.min(axis=0), used.max(axis=0)

    def volume(self) -> float:
        v = self.vertices[self.triangles]
        return float(abs(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum()) / 6.0)

    def components(self) -> list["TriangleMesh"]:
        """Split into vertex-connected components."""
        parent = list(range(len(self.vertices)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, b, c in self.triangles:
            ra, rb, rc = find(a), find(b), find(c)
            parent[rb] = ra
            parent[find(rc)] = ra
        roots = np.array([find(t[0]) for t in self.triangles])
        return [TriangleMesh(self.vertices, self.triangles[roots == r]) for r in dict.fromkeys(roots.tolist())]

    def is_closed(self) -> bool:
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Area-weighted uniform surface samples."""
        areas = self.triangle_areas()
        tri = rng.choice(len(areas), size=n, p=areas / areas.sum())
        r1, r2 = rng.random(n), rng.random(n)
        flip = r1 + r2 > 1.0
        r1[flip], r2[flip] = 1.0 - r1[flip], 1.0 - r2[flip]
        v = self.vertices[self.triangles[tri]]
        return v[:, 0] + r1[:, None] * (v[:, 1] - v[:, 0]) + r2[:, None] * (v[:, 2] - v[:, 0])


def box_mesh(lo, hi) -> TriangleMesh:
    """Closed axis-aligned box with outward-facing triangles."""
    lo, hi = as_vec3(lo), as_vec3(hi)
    v = np.array(
        [[lo[0] if i & 1 == 0 else hi[0], lo[1] if i & 2 == 0 else hi[1], lo[2] if i & 4 == 0 else hi[2]] for i in range(8)]
    )
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return TriangleMesh(v, np.array(tris))


def merge_meshes(meshes: Sequence[TriangleMesh]) -> TriangleMesh:
    verts, tris, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + off)
        off += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(tris))


@dataclass(frozen=True, eq=False)
class OrientedBox:
    center: Vec3
    half_extents: Vec3
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center))
        object.__setattr__(self, "half_extents", as_vec3(self.half_extents))
        if np.any(self.half_extents <= 0):
            raise GeometryError("half extents must be positive")

    def to_mesh(self) -> TriangleMesh:
        local = box_mesh(-self.half_extents, self.half_extents)
        return local.transformed(RigidPoseScale.from_yaw(self.yaw, self.center))

    def corners(self) -> np.ndarray:
        return self.to_mesh().vertices

    @property
    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Occupancy on the global lattice ``{(i + 0.5) * voxel_size}``.

    ``index_origin`` is the integer lattice index of the first voxel, so
    ``origin = index_origin * voxel_size`` and any two grids with the same
    voxel size can be compared without resampling.
    """

    index_origin: np.ndarray
    voxel_size: float
    occupancy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "index_origin", np.asarray(self.index_origin, dtype=np.int64).reshape(3))
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.ndim != 3:
            raise GeometryError("occupancy must be 3D")
        object.__setattr__(self, "occupancy", occ)

    @property
    def origin(self) -> Vec3:
        return self.index_origin * self.voxel_size

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.occupancy.shape)

    @property
    def count(self) -> int:
        return int(self.occupancy.sum())

    @property
    def volume(self) -> float:
        return self.count * self.voxel_size**3

    def occupied_indices(self) -> np.ndarray:
        return np.argwhere(self.occupancy) + self.index_origin

    def occupied_centers(self) -> np.ndarray:
        return (self.occupied_indices() + 0.5) * self.voxel_size


def _parity_occupancy(mesh: TriangleMesh, lo: np.ndarray, dims: np.ndarray, vs: float) -> np.ndarray:
    """Voxel centers inside a closed mesh, by counting +z ray crossings."""
    counts = np.zeros((dims[0], dims[1], dims[2] + 1), dtype=np.int32)
    z0 = (lo[2] + 0.5) * vs
    v = mesh.vertices[mesh.triangles]
    for tri in v:
        a, b, c = tri[0, :2], tri[1, :2], tri[2, :2]
        det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        if abs(det) < 1e-15:
            continue
        xmin, ymin = tri[:, :2].min(axis=0)
        xmax, ymax = tri[:, :2].max(axis=0)
        i0 = max(int(np.floor(xmin / vs - 0.5)) - lo[0], 0)
        i1 = min(int(np.ceil(xmax / vs - 0.5)) - lo[0], dims[0] - 1)
        j0 = max(int(np.floor(ymin / vs - 0.5)) - lo[1], 0)
        j1 = min(int(np.ceil(ymax / vs - 0.5)) - lo[1], dims[1] - 1)
        if i1 < i0 or j1 < j0:
            continue
        ii, jj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
        px = (ii + lo[0] + 0.5) * vs + _RAY_JITTER[0]
        py = (jj + lo[1] + 0.5) * vs + _RAY_JITTER[1]
        l1 = ((b[0] - px) * (c[1] - py) - (c[0] - px) * (b[1] - py)) / det
        l2 = ((c[0] - px) * (a[1] - py) - (a[0] - px) * (c[1] - py)) / det
        l3 = 1.0 - l1 - l2
        hit = (l1 > 0) & (l2 > 0) & (l3 > 0)
        if not hit.any():
            continue
        z = l1[hit] * tri[0, 2] + l2[hit] * tri[1, 2] + l3[hit] * tri[2, 2]
        # The crossing toggles every center below it.
        k = np.clip(np.ceil((z - z0) / vs).astype(np.int64), 0, dims[2])
        np.add.at(counts, (ii[hit], jj[hit], np.zeros_like(k)), 1)
        np.add.at(counts, (ii[hit], jj[hit], k), -1)
    return (np.cumsum(counts, axis=2)[:, :, : dims[2]] % 2) == 1


def _shell_occupancy(mesh: TriangleMesh, lo: np.ndarray, dims: np.ndarray, vs: float) -> np.ndarray:
    occ = np.zeros(tuple(dims), dtype=bool)
    step = vs / 3.0
    for tri in mesh.vertices[mesh.triangles]:
        e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
        n1 = max(int(np.ceil(np.linalg.norm(e1) / step)), 1)
        n2 = max(int(np.ceil(np.linalg.norm(e2) / step)), 1)
        s, t = np.meshgrid(np.linspace(0, 1, n1 + 1), np.linspace(0, 1, n2 + 1), indexing="ij")
        keep = s + t <= 1.0
        pts = tri[0] + np.multiply.outer(s[keep], e1) + np.multiply.outer(t[keep], e2)
        idx = np.floor(pts / vs).astype(np.int64) - lo
        idx = idx[np.all((idx >= 0) & (idx < dims), axis=1)]
        occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return occ


def voxelize(mesh: TriangleMesh, pose: Optional[RigidPoseScale] = None, voxel_size: float = DEFAULT_VOXEL_SIZE) -> VoxelGrid:
    """Occupancy grid of a posed mesh.

    A voxel is occupied when its center lies inside the mesh (ray parity,
    evaluated per connected component). Components that are not closed are
    rasterized as a surface shell instead. The grid has a one-voxel empty
    margin around the posed mesh.
    """
    if voxel_size <= 0:
        raise GeometryError("voxel_size must be positive")
    if mesh.is_empty:
        raise GeometryError("degenerate mesh")
    posed = mesh.transformed(pose) if pose is not None else mesh
    posed = posed.validated()
    if posed.is_empty:
        raise GeometryError("degenerate mesh")
    bmin, bmax = posed.bounds()
    lo = np.floor(bmin / voxel_size).astype(np.int64) - 1
    hi = np.ceil(bmax / voxel_size).astype(np.int64) + 1
    dims = hi - lo
    occ = np.zeros(tuple(dims), dtype=bool)
    for comp in posed.components():
        if comp.is_closed():
            occ |= _parity_occupancy(comp, lo, dims, voxel_size)
        else:
            occ |= _shell_occupancy(comp, lo, dims, voxel_size)
    return VoxelGrid(lo, voxel_size, occ)


def _overlap_slices(a: VoxelGrid, b: VoxelGrid):
    lo = np.maximum(a.index_origin, b.index_origin)
    hi = np.minimum(a.index_origin + a.dims, b.index_origin + b.dims)
    if np.any(hi <= lo):
        return None
    sa = tuple(slice(l - o, h - o) for l, h, o in zip(lo, hi, a.index_origin))
    sb = tuple(slice(l - o, h - o) for l, h, o in zip(lo, hi, b.index_origin))
    return sa, sb, lo


def _check_lattice(a: VoxelGrid, b: VoxelGrid) -> None:
    if abs(a.voxel_size - b.voxel_size) > 1e-9:
        raise GeometryError("voxel grids use different voxel sizes")


def voxel_intersection_count(a: VoxelGrid, b: VoxelGrid) -> int:
    _check_lattice(a, b)
    ov = _overlap_slices(a, b)
    if ov is None:
        return 0
    sa, sb, _ = ov
    return int(np.count_nonzero(a.occupancy[sa] & b.occupancy[sb]))


def voxel_intersection_centers(a: VoxelGrid, b: VoxelGrid) -> np.ndarray:
    _check_lattice(a, b)
    ov = _overlap_slices(a, b)
    if ov is None:
        return np.zeros((0, 3))
    sa, sb, lo = ov
    both = np.argwhere(a.occupancy[sa] & b.occupancy[sb]) + lo
    return (both + 0.5) * a.voxel_size


def voxel_iou(a: VoxelGrid, b: VoxelGrid) -> float:
    _check_lattice(a, b)
    ca, cb = a.count, b.count
    if ca + cb == 0:
        raise GeometryError("both voxel grids are empty")
    inter = voxel_intersection_count(a, b)
    return inter / (ca + cb - inter)


def chamfer_one_way(points: np.ndarray, target_samples: np.ndarray) -> float:
    """Mean distance (mm) from each point to its nearest target sample."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    q = np.asarray(target_samples, dtype=float).reshape(-1, 3)
    if len(p) == 0 or len(q) == 0:
        raise GeometryError("chamfer_one_way needs non-empty inputs")
    _, idx = cKDTree(q).query(p, k=1)
    d = np.sqrt(((p - q[idx]) ** 2).sum(axis=1))
    return float(d.mean() * 1000.0)


def closest_points_on_triangle(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest point on triangle abc to each point of ``p`` (Voronoi-region method, vectorized over p)."""
    ab, ac = b - a, c - a
    ap = p - a
    d1, d2 = ap @ ab, ap @ ac
    bp = p - b
    d3, d4 = bp @ ab, bp @ ac
    cp = p - c
    d5, d6 = cp @ ab, cp @ ac
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def put(mask, value):
        m = mask & ~done
        out[m] = value[m] if np.ndim(value) == 2 else value
        done[m] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        put((d1 <= 0) & (d2 <= 0), a)
        put((d3 >= 0) & (d4 <= d3), b)
        put((d6 >= 0) & (d5 <= d6), c)
        v = d1 / (d1 - d3)
        put((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[:, None] * ab)
        w = d2 / (d2 - d6)
        put((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[:, None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        put((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + w[:, None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v, w = vb * denom, vc * denom
        put(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)
    return out


def point_mesh_distance(points: np.ndarray, mesh: TriangleMesh) -> np.ndarray:
    """Euclidean distance from each point to the nearest point on the mesh surface."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    best = np.full(len(p), np.inf)
    for tri in mesh.vertices[mesh.triangles]:
        q = closest_points_on_triangle(p, tri[0], tri[1], tri[2])
        best = np.minimum(best, np.sqrt(((p - q) ** 2).sum(axis=1)))
    return best


def chamfer_to_mesh(points: np.ndarray, mesh: TriangleMesh) -> float:
    """Mean distance (mm) from each point to the surface of ``mesh``."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) == 0 or mesh.is_empty:
        raise GeometryError("chamfer_to_mesh needs points and a non-empty mesh")
    return float(point_mesh_distance(p, mesh).mean() * 1000.0)
