"""File formats: OBJ meshes, ASCII PLY clouds, JSON pools/views, PGM observation maps, scene bundles."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .geometry import Plane, Polygon3D, RigidPoseScale, TriangleMesh
from .layout import LabeledCloud
from .proposals import CATEGORIES, Category, HorizontalSurface, LayoutProposal, ObjectProposal, ProposalPool
from .renderer import View
from .scoring import ObservationSet, SceneSolution

DEPTH_SCALE = 1000.0  # stored in millimeters
CONF_SCALE = 255.0


# -- meshes and clouds ------------------------------------------------------


def write_obj(path, mesh: TriangleMesh) -> None:
    with open(path, "w") as f:
        for v in mesh.vertices.tolist():
            f.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def read_obj(path) -> TriangleMesh:
    verts, tris = [], []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for k in range(1, len(idx) - 1):
                    tris.append([idx[0], idx[k], idx[k + 1]])
    return TriangleMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3))


def write_ply(path, cloud: LabeledCloud) -> None:
    """ASCII PLY with x y z nx ny nz label."""
    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write(f"element vertex {len(cloud)}\n")
        for name in ("x", "y", "z", "nx", "ny", "nz"):
            f.write(f"property float {name}\n")
        f.write("property int label\nend_header\n")
        for p, n, l in zip(cloud.points.tolist(), cloud.normals.tolist(), cloud.labels.tolist()):
            f.write(f"{p[0]!r} {p[1]!r} {p[2]!r} {n[0]!r} {n[1]!r} {n[2]!r} {int(l)}\n")


def read_ply(path) -> LabeledCloud:
    with open(path) as f:
        if f.readline().strip() != "ply":
            raise ValueError(f"{path}: not a PLY file")
        props, count = [], None
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "format" and parts[1] != "ascii":
                raise ValueError(f"{path}: only ASCII PLY is supported")
            if parts[0] == "element" and parts[1] == "vertex":
                count = int(parts[2])
            elif parts[0] == "property":
                props.append(parts[-1])
            elif parts[0] == "end_header":
                break
        if count is None:
            raise ValueError(f"{path}: missing vertex element")
        data = np.loadtxt(f, max_rows=count, ndmin=2) if count else np.zeros((0, len(props)))
    col = {name: i for i, name in enumerate(props)}
    missing = {"x", "y", "z", "nx", "ny", "nz", "label"} - set(col)
    if missing:
        raise ValueError(f"{path}: missing properties {sorted(missing)}")
    pts = data[:, [col["x"], col["y"], col["z"]]]
    nrm = data[:, [col["nx"], col["ny"], col["nz"]]]
    norm = np.linalg.norm(nrm, axis=1, keepdims=True)
    nrm = np.divide(nrm, norm, out=np.zeros_like(nrm), where=norm > 0)
    return LabeledCloud(pts, nrm, data[:, col["label"]].astype(np.int64))


# -- PGM maps ---------------------------------------------------------------


def write_pgm(path, img: np.ndarray) -> None:
    """Binary PGM; 8-bit for uint8 input, 16-bit big-endian otherwise."""
    img = np.asarray(img)
    maxval = 255 if img.dtype == np.uint8 else 65535
    data = img.astype(np.uint8) if maxval == 255 else img.astype(">u2")
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n%d\n" % (img.shape[1], img.shape[0], maxval))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    pos += 1
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    return np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos).reshape(h, w).astype(np.int64)


def depth_to_mm(depth: np.ndarray) -> np.ndarray:
    mm = np.where(np.isfinite(depth), np.rint(depth * DEPTH_SCALE), 0)
    if mm.max(initial=0) > 65535:
        raise ValueError("depth beyond the 16-bit millimeter range")
    return mm.astype(np.uint16)


# -- JSON records -----------------------------------------------------------


def _category(v) -> Category:
    return Category[v.upper()] if isinstance(v, str) else Category(v)


def object_to_dict(o: ObjectProposal) -> dict:
    d = {
        "id": o.id,
        "category": o.category.name.lower(),
        "mesh": o.mesh_name,
        "rotation": o.pose.rotation.tolist(),
        "translation": o.pose.translation.tolist(),
        "scale": o.pose.scale.tolist(),
        "voxel_size": o.voxel_size,
        "surface": None,
    }
    if o.horizontal_surface is not None:
        s = o.horizontal_surface
        d["surface"] = {"center": np.asarray(s.center).tolist(), "half_extents": np.asarray(s.half_extents).tolist(),
                        "yaw": s.yaw}
    return d


def layout_to_dict(l: LayoutProposal) -> dict:
    return {
        "id": l.id,
        "category": l.category.name.lower(),
        "normal": l.polygon.plane.normal.tolist(),
        "offset": l.polygon.plane.offset,
        "vertices": l.polygon.vertices.tolist(),
        "plane_id": l.plane_id,
        "edge_ids": sorted(l.edge_ids),
    }


def layout_from_dict(d: Mapping) -> LayoutProposal:
    plane = Plane(np.array(d["normal"], dtype=float), d["offset"])
    return LayoutProposal(int(d["id"]), _category(d["category"]), Polygon3D(plane, np.array(d["vertices"])),
                          int(d["plane_id"]), frozenset(d["edge_ids"]))


def object_from_dict(d: Mapping, meshes: Mapping[str, TriangleMesh]) -> ObjectProposal:
    if d["mesh"] not in meshes:
        raise ValueError(f"object {d['id']}: unknown mesh {d['mesh']!r}")
    pose = RigidPoseScale(np.array(d["rotation"]), np.array(d["translation"]), np.array(d["scale"]))
    surf = None
    if d.get("surface"):
        s = d["surface"]
        surf = HorizontalSurface(np.array(s["center"]), np.array(s["half_extents"]), float(s["yaw"]))
    return ObjectProposal(int(d["id"]), _category(d["category"]), meshes[d["mesh"]], pose, surf, d["mesh"],
                          float(d.get("voxel_size", 0.05)))


def pool_to_dict(pool: ProposalPool) -> dict:
    return {
        "iou_threshold": pool.iou_threshold,
        "objects": [object_to_dict(o) for o in pool.objects],
        "layouts": [layout_to_dict(l) for l in pool.layouts],
    }


def pool_from_dict(d: Mapping, meshes: Mapping[str, TriangleMesh]) -> ProposalPool:
    return ProposalPool([object_from_dict(o, meshes) for o in d.get("objects", [])],
                        [layout_from_dict(l) for l in d.get("layouts", [])], d.get("iou_threshold", 0.3))


def write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path) as f:
        return json.load(f)


def write_solution(path, solution: SceneSolution, breakdown: Optional[dict] = None, extra: Optional[dict] = None) -> None:
    d = solution.to_dict()
    if breakdown is not None:
        d["breakdown"] = breakdown
    if extra:
        d.update(extra)
    write_json(path, d)


# -- scene bundles ----------------------------------------------------------


def write_observations(obs_dir, obs: ObservationSet) -> None:
    obs_dir = Path(obs_dir)
    obs_dir.mkdir(parents=True, exist_ok=True)
    for i in range(obs.num_views):
        write_pgm(obs_dir / f"depth_{i:03d}.pgm", depth_to_mm(obs.depth[i]))
        for c in CATEGORIES:
            conf = np.rint(obs.confidence[i, int(c)] * CONF_SCALE).astype(np.uint8)
            write_pgm(obs_dir / f"conf_{i:03d}_{c.name.lower()}.pgm", conf)


def read_observations(obs_dir, views: Sequence[View]) -> ObservationSet:
    obs_dir = Path(obs_dir)
    depth, conf = [], []
    for i in range(len(views)):
        mm = read_pgm(obs_dir / f"depth_{i:03d}.pgm")
        depth.append(np.where(mm > 0, mm / DEPTH_SCALE, np.inf))
        conf.append([read_pgm(obs_dir / f"conf_{i:03d}_{c.name.lower()}.pgm") / CONF_SCALE for c in CATEGORIES])
    return ObservationSet(list(views), np.array(conf), np.array(depth))


def write_bundle(out_dir, pool: ProposalPool, obs: ObservationSet, meshes: Mapping[str, TriangleMesh],
                 gt: Optional[dict] = None) -> None:
    """Scene bundle: gt.json, pool.json, views.json, obs/ PGM maps, mesh/ OBJ files."""
    out = Path(out_dir)
    (out / "mesh").mkdir(parents=True, exist_ok=True)
    for name in sorted(meshes):
        write_obj(out / "mesh" / f"{name}.obj", meshes[name])
    write_json(out / "pool.json", pool_to_dict(pool))
    write_json(out / "views.json", [v.to_dict() for v in obs.views])
    write_observations(out / "obs", obs)
    if gt is not None:
        write_json(out / "gt.json", gt)


class Bundle:
    """A loaded scene bundle."""

    def __init__(self, root, pool: ProposalPool, obs: ObservationSet, gt: Optional[dict]):
        self.root = Path(root)
        self.pool = pool
        self.obs = obs
        self.gt = gt


def read_bundle(path) -> Bundle:
    root = Path(path)
    if not (root / "pool.json").is_file():
        raise FileNotFoundError(f"{root}: not a scene bundle (pool.json missing)")
    meshes = {p.stem: read_obj(p) for p in sorted((root / "mesh").glob("*.obj"))}
    pool = pool_from_dict(read_json(root / "pool.json"), meshes)
    views = [View.from_dict(v) for v in read_json(root / "views.json")]
    obs = read_observations(root / "obs", views)
    gt = read_json(root / "gt.json") if (root / "gt.json").is_file() else None
    return Bundle(root, pool, obs, gt)
