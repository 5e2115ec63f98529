"""Minimal software rasterizer: per-proposal depth/coverage and min-depth compositing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numba
import numpy as np

from .geometry import TriangleMesh

NEAR = 0.05
VISIBILITY_MIN_PIXELS = 16
NO_LABEL = -1


@dataclass(frozen=True, eq=False)
class View:
    """Pinhole camera. ``world_to_cam`` maps world points to an x-right, y-down, z-forward frame."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_cam: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.world_to_cam, dtype=float).reshape(4, 4)
        object.__setattr__(self, "world_to_cam", m)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    @classmethod
    def look_at(cls, eye, target, width=160, height=120, fov_deg=70.0, up=(0.0, 0.0, 1.0)) -> "View":
        eye, target, up = (np.asarray(a, dtype=float) for a in (eye, target, up))
        fwd = target - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, up)
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        r = np.vstack([right, down, fwd])
        m = np.eye(4)
        m[:3, :3] = r
        m[:3, 3] = -r @ eye
        f = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, width, height, m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def eye(self) -> np.ndarray:
        r, t = self.world_to_cam[:3, :3], self.world_to_cam[:3, 3]
        return -r.T @ t

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return points @ self.world_to_cam[:3, :3].T + self.world_to_cam[:3, 3]

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "world_to_cam": self.world_to_cam.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "View":
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], int(d["width"]), int(d["height"]), np.array(d["world_to_cam"]))


@numba.njit(cache=True)
def _raster_kernel(xy, invz, depth):
    """Z-buffer screen-space triangles with a top-left fill rule.

    ``xy`` is (T, 3, 2) pixel coordinates, ``invz`` is (T, 3) reciprocal
    camera depth; 1/z is affine in screen space, which gives
    perspective-correct camera-space depth.
    """
    h, w = depth.shape
    for t in range(xy.shape[0]):
        x0, y0 = xy[t, 0, 0], xy[t, 0, 1]
        x1, y1 = xy[t, 1, 0], xy[t, 1, 1]
        x2, y2 = xy[t, 2, 0], xy[t, 2, 1]
        iz0, iz1, iz2 = invz[t, 0], invz[t, 1], invz[t, 2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0:
            continue
        if area < 0.0:
            x1, y1, x2, y2 = x2, y2, x1, y1
            iz1, iz2 = iz2, iz1
            area = -area
        # Edge i is opposite vertex i; in y-down screen coordinates, with
        # positive area, a "top" edge is horizontal with dx < 0 and a
        # "left" edge has dy > 0.
        e0x, e0y = x2 - x1, y2 - y1
        e1x, e1y = x0 - x2, y0 - y2
        e2x, e2y = x1 - x0, y1 - y0
        tl0 = (e0y == 0.0 and e0x < 0.0) or e0y > 0.0
        tl1 = (e1y == 0.0 and e1x < 0.0) or e1y > 0.0
        tl2 = (e2y == 0.0 and e2x < 0.0) or e2y > 0.0
        xmin = max(int(np.floor(min(x0, min(x1, x2)))), 0)
        xmax = min(int(np.ceil(max(x0, max(x1, x2)))), w - 1)
        ymin = max(int(np.floor(min(y0, min(y1, y2)))), 0)
        ymax = min(int(np.ceil(max(y0, max(y1, y2)))), h - 1)
        for py in range(ymin, ymax + 1):
            sy = py + 0.5
            for px in range(xmin, xmax + 1):
                sx = px + 0.5
                w0 = (x2 - x1) * (sy - y1) - (y2 - y1) * (sx - x1)
                w1 = (x0 - x2) * (sy - y2) - (y0 - y2) * (sx - x2)
                w2 = (x1 - x0) * (sy - y0) - (y1 - y0) * (sx - x0)
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                if (w0 == 0.0 and not tl0) or (w1 == 0.0 and not tl1) or (w2 == 0.0 and not tl2):
                    continue
                iz = (w0 * iz0 + w1 * iz1 + w2 * iz2) / area
                if iz <= 0.0:
                    continue
                z = 1.0 / iz
                if z < depth[py, px]:
                    depth[py, px] = z


def _clip_near(tri: np.ndarray, near: float) -> list[np.ndarray]:
    """Sutherland-Hodgman clip of one camera-space triangle against z >= near."""
    out = []
    n = len(tri)
    for i in range(n):
        a, b = tri[i], tri[(i + 1) % n]
        ina, inb = a[2] >= near, b[2] >= near
        if ina:
            out.append(a)
        if ina != inb:
            s = (near - a[2]) / (b[2] - a[2])
            out.append(a + s * (b - a))
    if len(out) < 3:
        return []
    return [np.array([out[0], out[i], out[i + 1]]) for i in range(1, len(out) - 1)]


def rasterize_mesh(mesh: TriangleMesh, view: View, near: float = NEAR) -> np.ndarray:
    """Depth buffer (camera z, +inf where empty) of one mesh in one view. No back-face culling."""
    depth = np.full(view.shape, np.inf)
    if mesh.is_empty:
        return depth
    cam = view.to_camera(mesh.vertices)[mesh.triangles]
    zs = cam[:, :, 2]
    front = np.all(zs >= near, axis=1)
    partial = ~front & np.any(zs >= near, axis=1)
    tris = [cam[front]]
    for t in cam[partial]:
        clipped = _clip_near(t, near)
        if clipped:
            tris.append(np.stack(clipped))
    tris = np.concatenate(tris, axis=0) if tris else np.zeros((0, 3, 3))
    if len(tris) == 0:
        return depth
    z = tris[:, :, 2]
    xy = np.empty(tris.shape[:2] + (2,))
    xy[:, :, 0] = view.fx * tris[:, :, 0] / z + view.cx
    xy[:, :, 1] = view.fy * tris[:, :, 1] / z + view.cy
    _raster_kernel(np.ascontiguousarray(xy), np.ascontiguousarray(1.0 / z), depth)
    return depth


@dataclass(eq=False)
class ProposalRender:
    """Solo renders of one proposal in every view."""

    proposal_id: int
    category: int
    depth: np.ndarray  # (V, H, W), +inf where the proposal is absent

    @property
    def mask(self) -> np.ndarray:
        return np.isfinite(self.depth)

    def pixel_counts(self) -> np.ndarray:
        return self.mask.reshape(len(self.depth), -1).sum(axis=1)

    def visible_views(self, min_pixels: int = VISIBILITY_MIN_PIXELS) -> np.ndarray:
        return self.pixel_counts() >= min_pixels


def prerender(proposal_id: int, category: int, mesh: TriangleMesh, views: Sequence[View]) -> ProposalRender:
    depth = np.stack([rasterize_mesh(mesh, v) for v in views]) if views else np.zeros((0, 0, 0))
    return ProposalRender(proposal_id, int(category), depth)


def visible(render: ProposalRender, view_index: int, min_pixels: int = VISIBILITY_MIN_PIXELS) -> bool:
    return bool(np.count_nonzero(np.isfinite(render.depth[view_index])) >= min_pixels)


@dataclass(eq=False)
class CompositeRender:
    """Composite of a proposal subset in one view.

    ``labels`` holds the category index of the nearest proposal per pixel
    (``NO_LABEL`` where empty) and ``owner`` its proposal id (-1 if none).
    """

    depth: np.ndarray
    labels: np.ndarray
    owner: np.ndarray

    @classmethod
    def empty(cls, shape: tuple[int, int]) -> "CompositeRender":
        return cls(np.full(shape, np.inf), np.full(shape, NO_LABEL, dtype=np.int64), np.full(shape, -1, dtype=np.int64))

    def seg(self, category: int) -> np.ndarray:
        """Binary rendered segmentation map S^R(c)."""
        return self.labels == category

    def add(self, render: ProposalRender, view_index: int) -> None:
        """Merge one more proposal in place; equal depths go to the lower proposal id."""
        d = render.depth[view_index]
        nearer = (d < self.depth) | ((d == self.depth) & np.isfinite(d) & (render.proposal_id < self.owner))
        self.depth[nearer] = d[nearer]
        self.labels[nearer] = render.category
        self.owner[nearer] = render.proposal_id

    def copy(self) -> "CompositeRender":
        return CompositeRender(self.depth.copy(), self.labels.copy(), self.owner.copy())


def composite(renders: Iterable[ProposalRender], view_index: int, shape: Optional[tuple[int, int]] = None) -> CompositeRender:
    renders = sorted(renders, key=lambda r: r.proposal_id)
    if not renders:
        if shape is None:
            raise ValueError("shape required for an empty composite")
        return CompositeRender.empty(shape)
    stack = np.stack([r.depth[view_index] for r in renders])
    # argmin returns the first minimum, so ascending ids break ties.
    arg = np.argmin(stack, axis=0)
    depth = np.take_along_axis(stack, arg[None], axis=0)[0]
    cats = np.array([r.category for r in renders])
    ids = np.array([r.proposal_id for r in renders])
    hit = np.isfinite(depth)
    labels = np.where(hit, cats[arg], NO_LABEL)
    owner = np.where(hit, ids[arg], -1)
    return CompositeRender(depth, labels, owner)


_PALETTE = np.array(
    [[0, 0, 0], [174, 199, 232], [152, 223, 138], [255, 127, 14], [214, 39, 40], [148, 103, 189], [140, 86, 75]],
    dtype=np.uint8,
)


def write_depth_pgm(path, depth: np.ndarray, max_depth: float = 10.0) -> None:
    """Debug dump: depth scaled to 8 bits (0 = empty)."""
    img = np.where(np.isfinite(depth), np.clip(depth / max_depth, 0, 1) * 254 + 1, 0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        f.write(img.tobytes())


def write_labels_ppm(path, labels: np.ndarray) -> None:
    img = _PALETTE[np.clip(labels + 1, 0, len(_PALETTE) - 1)]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (labels.shape[1], labels.shape[0]))
        f.write(img.tobytes())
