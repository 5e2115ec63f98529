"""Command-line driver: synth, search, baseline, ransac, eval, ablate."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import io
from .baselines import HillClimbVariant, hill_climb, random_search
from .layout import RansacParams, layout_proposals
from .metrics import scene_report, write_report
from .proposals import Category, ProposalPool
from .scoring import Scorer, ScoreWeights
from .search import McssConfig, build_renders, run, run_two_phase, write_convergence_csv
from .synth import MODELS, SynthConfig, generate
from .tree import Mode

log = logging.getLogger("mcss")

SEARCH_KEYS = {"iterations", "simulations", "lambda1", "lambda2", "ucb_c", "autoscale_window", "log_stride",
               "use_max", "node_score"}


class ConfigError(ValueError):
    pass


def load_config(path: Optional[str]) -> dict:
    """Sections ``synth``, ``search``, ``score`` and ``ransac`` of a TOML file."""
    if path is None:
        return {}
    try:
        with open(path, "rb") as f:
            cfg = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    unknown = set(cfg) - {"synth", "search", "score", "ransac"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    bad = set(cfg.get("search", {})) - SEARCH_KEYS
    if bad:
        raise ConfigError(f"unknown search settings: {sorted(bad)}")
    return cfg


def _dataclass_from(cls, section: dict, **overrides):
    fields = {f.name for f in dataclasses.fields(cls)}
    extra = set(section) - fields
    if extra:
        raise ConfigError(f"unknown {cls.__name__} settings: {sorted(extra)}")
    values = dict(section)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def search_config(cfg: dict, args) -> McssConfig:
    return _dataclass_from(McssConfig, cfg.get("search", {}), seed=args.seed, iterations=args.iterations)


def score_weights(cfg: dict) -> ScoreWeights:
    return _dataclass_from(ScoreWeights, cfg.get("score", {}))


def _floor_id(bundle: io.Bundle) -> Optional[int]:
    if bundle.gt and bundle.gt.get("floor_id") is not None:
        return int(bundle.gt["floor_id"])
    floors = [l.id for l in bundle.pool.layouts if l.category is Category.FLOOR]
    return floors[0] if len(floors) == 1 else None


def _out_dir(args, bundle_path: str, n: int) -> Path:
    out = Path(args.out)
    return out / Path(bundle_path).name if n > 1 else out


def _per_bundle(fn, args):
    """Run ``fn(args, bundle_path, out_dir)`` for every bundle, optionally in worker processes."""
    paths = args.bundle
    outs = [_out_dir(args, p, len(paths)) for p in paths]
    if args.jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            list(ex.map(fn, [args] * len(paths), paths, outs))
    else:
        for p, o in zip(paths, outs):
            fn(args, p, o)


# -- commands ---------------------------------------------------------------


def cmd_synth(args) -> None:
    cfg = load_config(args.config)
    sc = _dataclass_from(SynthConfig, cfg.get("synth", {}), seed=args.seed)
    gt, pool, obs = generate(sc)
    meshes = {name: MODELS[name].mesh() for name in sorted({o.mesh_name for o in pool.objects})}
    gt_record = {
        "wall_ids": gt.wall_ids,
        "floor_id": gt.floor.id,
        "object_ids": gt.object_ids,
        "footprint": gt.footprint.tolist(),
        "room_height": sc.room_height,
        "roles": {str(k): v for k, v in sorted(gt.roles.items())},
        "config": dataclasses.asdict(sc),
    }
    io.write_bundle(args.out, pool, obs, meshes, gt_record)
    log.info("wrote bundle with %d proposals to %s", len(pool), args.out)


def _search_one(args, bundle_path: str, out: Path) -> None:
    cfg = load_config(args.config)
    conf = search_config(cfg, args)
    weights = score_weights(cfg)
    b = io.read_bundle(bundle_path)
    out.mkdir(parents=True, exist_ok=True)
    renders = build_renders(b.pool, b.obs)
    if args.mode == "two-phase":
        res = run_two_phase(b.pool, b.obs, conf, weights, renders, floor_id=_floor_id(b), timing=args.timing)
        write_convergence_csv(out / "convergence_layout.csv", res.layout.series, conf.log_stride,
                              res.layout.timings_ms or None)
        final, series, timings = res.solution, res.objects.series, res.objects.timings_ms
        scorer = Scorer(b.pool, b.obs, renders, weights)
    else:
        mode = Mode(args.mode)
        context = [] if mode is Mode.LAYOUT else [i for i in [_floor_id(b)] if i is not None]
        r = run(b.pool, b.obs, mode, conf, weights, renders, context=context, timing=args.timing)
        final, series, timings = r.solution, r.series, r.timings_ms
        scorer = r.space.scorer
    write_convergence_csv(out / "convergence.csv", series, conf.log_stride, timings or None)
    io.write_solution(out / "solution.json", final, scorer.breakdown(final.members),
                      {"mode": args.mode, "seed": conf.seed, "iterations": conf.iterations})


def cmd_search(args) -> None:
    _per_bundle(_search_one, args)


def _baseline_one(args, bundle_path: str, out: Path) -> None:
    cfg = load_config(args.config)
    weights = score_weights(cfg)
    b = io.read_bundle(bundle_path)
    out.mkdir(parents=True, exist_ok=True)
    renders = build_renders(b.pool, b.obs)
    fid = _floor_id(b)
    context = [fid] if fid is not None else []
    scorer = Scorer(b.pool, b.obs, renders, weights, context)
    cand = [o.id for o in b.pool.objects] + [l.id for l in b.pool.layouts if l.category is Category.WALL]
    if args.method == "random":
        conf = search_config(cfg, args)
        sol, series = random_search(b.pool, b.obs, weights, conf.iterations, np.random.default_rng(conf.seed),
                                    Mode.OBJECT, candidate_ids=cand, scorer=scorer)
        write_convergence_csv(out / "convergence.csv", series, conf.log_stride)
    else:
        variant = HillClimbVariant.GLOBAL_SCORE if args.method == "hill-global" else HillClimbVariant.FITNESS
        sol = hill_climb(b.pool, b.obs, weights, variant, candidate_ids=cand, scorer=scorer)
    io.write_solution(out / "solution.json", sol, scorer.breakdown(sol.members), {"method": args.method})


def cmd_baseline(args) -> None:
    _per_bundle(_baseline_one, args)


def cmd_ransac(args) -> None:
    cfg = load_config(args.config)
    params = _dataclass_from(RansacParams, cfg.get("ransac", {}))
    cloud = io.read_ply(args.cloud)
    res = layout_proposals(cloud, params, np.random.default_rng(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pool = ProposalPool([], res.walls)
    record = io.pool_to_dict(pool)
    fp = res.floor_plane
    record["floor_plane"] = None if fp is None else {"normal": fp.normal.tolist(), "offset": fp.offset}
    record["planes"] = [{"normal": p.normal.tolist(), "offset": p.offset} for p in res.all_planes]
    io.write_json(out / "layouts.json", record)
    log.info("%d planes, %d corners, %d edges, %d wall polygons", len(res.planes), len(res.corners),
             len(res.edges), len(res.walls))


def _gt_geometry(b: io.Bundle):
    if not b.gt:
        raise ConfigError(f"{b.root}: bundle has no gt.json")
    walls = [b.pool[i] for i in b.gt["wall_ids"]]
    objects = [b.pool[i] for i in b.gt["object_ids"]]
    fp = np.array(b.gt["footprint"])
    h = float(b.gt["room_height"])
    corners = np.vstack([np.column_stack([fp, np.zeros(len(fp))]), np.column_stack([fp, np.full(len(fp), h)])])
    return walls, objects, corners


def cmd_eval(args) -> None:
    b = io.read_bundle(args.bundle)
    sol = io.read_json(args.solution)
    members = [b.pool[i] for i in sol["members"]]
    walls, objects, corners = _gt_geometry(b)
    layouts = [p for p in members if p.is_layout and p.category is Category.WALL]
    objs = [p for p in members if not p.is_layout]
    rep = scene_report(layouts, objs, walls, objects, corners, np.random.default_rng(args.seed))
    rep["score"] = sol.get("score")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(rep, out / "metrics.json", out / "metrics.csv")


def _ablate_one(args, bundle_path: str, out: Path) -> None:
    cfg = load_config(args.config)
    conf = search_config(cfg, args)
    weights = score_weights(cfg)
    b = io.read_bundle(bundle_path)
    out.mkdir(parents=True, exist_ok=True)
    renders = build_renders(b.pool, b.obs)
    if b.gt:
        context = list(b.gt["wall_ids"]) + [b.gt["floor_id"]]
    else:
        lay = run(b.pool, b.obs, Mode.LAYOUT, conf, weights, renders)
        context = list(lay.solution.members) + [i for i in [_floor_id(b)] if i is not None]
    columns = {}
    for name, node_score in (("local", "local"), ("global", "global")):
        c = dataclasses.replace(conf, node_score=node_score)
        columns[name] = run(b.pool, b.obs, Mode.OBJECT, c, weights, renders, context=context).series
    scorer = Scorer(b.pool, b.obs, renders, weights, context)
    _, columns["random"] = random_search(b.pool, b.obs, weights, conf.iterations, np.random.default_rng(conf.seed),
                                         scorer=scorer)
    with open(out / "ablation.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "local_score", "whole_score", "random_search"])
        for i in range(conf.iterations):
            if (i + 1) % conf.log_stride and i != conf.iterations - 1:
                continue
            w.writerow([i + 1] + [repr(float(columns[k][i])) for k in ("local", "global", "random")])


def cmd_ablate(args) -> None:
    _per_bundle(_ablate_one, args)


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcss", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, iterations=True):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None, help="TOML file with synth/search/score/ransac sections")
        p.add_argument("--out", required=True)
        p.add_argument("--jobs", type=int, default=1)
        if iterations:
            p.add_argument("--iterations", type=int, default=None)

    p = sub.add_parser("synth", help="generate a synthetic scene bundle")
    common(p, iterations=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("search", help="run MCSS on scene bundles")
    p.add_argument("bundle", nargs="+")
    p.add_argument("--mode", choices=["layout", "object", "two-phase"], default="two-phase")
    p.add_argument("--timing", action="store_true", help="fill the wall_ms column (output no longer reproducible)")
    common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("baseline", help="run a baseline on scene bundles")
    p.add_argument("bundle", nargs="+")
    p.add_argument("--method", choices=["hill-global", "hill-fitness", "random"], required=True)
    common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("ransac", help="layout proposals from a labeled PLY cloud")
    p.add_argument("cloud")
    common(p, iterations=False)
    p.set_defaults(func=cmd_ransac)

    p = sub.add_parser("eval", help="metrics of a solution against a bundle's ground truth")
    p.add_argument("solution")
    p.add_argument("bundle")
    common(p, iterations=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="local-score vs whole-score vs random search convergence")
    p.add_argument("bundle", nargs="+")
    common(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as e:
        print(f"mcss {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
