"""Render-and-compare objective: per-view likelihood score, intersection prior, global and local scores."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .proposals import CATEGORIES, CompatKind, ProposalPool
from .renderer import NO_LABEL, VISIBILITY_MIN_PIXELS, CompositeRender, ProposalRender, View, composite

NEG_INF = float("-inf")


@dataclass(eq=False)
class ObservationSet:
    """Per-view semantic confidences ``confidence[v, c]`` in [0, 1] and depth maps (+inf = missing)."""

    views: list[View]
    confidence: np.ndarray  # (V, C, H, W)
    depth: np.ndarray  # (V, H, W)

    def __post_init__(self):
        self.confidence = np.asarray(self.confidence, dtype=float)
        self.depth = np.asarray(self.depth, dtype=float)
        n = len(self.views)
        if self.confidence.shape[:2] != (n, len(CATEGORIES)) or self.depth.shape[0] != n:
            raise ValueError("observation arrays do not match the view list")
        for i, v in enumerate(self.views):
            if self.depth[i].shape != v.shape or self.confidence[i, 0].shape != v.shape:
                raise ValueError(f"view {i}: map size does not match the camera")
        if np.any(self.confidence < 0) or np.any(self.confidence > 1):
            raise ValueError("confidences must lie in [0, 1]")

    @property
    def num_views(self) -> int:
        return len(self.views)

    def permuted(self, order: Sequence[int]) -> "ObservationSet":
        order = list(order)
        return ObservationSet([self.views[i] for i in order], self.confidence[order], self.depth[order])


@dataclass(frozen=True)
class ScoreWeights:
    lambda_i: float = 1.0
    lambda_d: float = 1.0
    lambda_p: float = 2.5
    depth_cap: float = 1.0

    def __post_init__(self):
        if min(self.lambda_i, self.lambda_d, self.lambda_p) < 0 or self.depth_cap <= 0:
            raise ValueError("score weights must be non-negative")


@dataclass(frozen=True)
class SceneSolution:
    members: tuple[int, ...]
    global_score: float
    feasible: bool = True

    def to_dict(self) -> dict:
        return {"members": list(self.members), "score": self.global_score, "feasible": self.feasible}


def _terms(depth: np.ndarray, labels: np.ndarray, conf: np.ndarray, obs_depth: np.ndarray,
           weights: ScoreWeights) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel segmentation gain and depth penalty of a composite.

    Works on any trailing pixel layout; ``conf`` has the category axis first.
    """
    hit = labels != NO_LABEL
    lab = np.where(hit, labels, 0)
    gain = np.where(hit, np.take_along_axis(conf, lab[None], axis=0)[0], 0.0) * weights.lambda_i
    both = np.isfinite(depth) & np.isfinite(obs_depth)
    diff = np.abs(np.where(both, obs_depth - np.where(both, depth, 0.0), 0.0))
    pen = np.minimum(diff, weights.depth_cap) * weights.lambda_d
    return gain, pen


def view_terms(renders: Iterable[ProposalRender], obs: ObservationSet, view_index: int,
               weights: ScoreWeights) -> tuple[float, float]:
    comp = composite(renders, view_index, obs.views[view_index].shape)
    gain, pen = _terms(comp.depth, comp.labels, obs.confidence[view_index], obs.depth[view_index], weights)
    return float(gain.sum()), float(pen.sum())


def view_score(renders: Iterable[ProposalRender], obs: ObservationSet, view_index: int, weights: ScoreWeights) -> float:
    """s_i: segmentation agreement minus capped absolute depth residual for one view."""
    seg, pen = view_terms(renders, obs, view_index, weights)
    return seg - pen


def prior_score(members: Iterable[int], pool: ProposalPool, weights: ScoreWeights) -> float:
    """-lambda_P times the summed IoU of tolerated pairs; -inf if any pair is incompatible."""
    total = 0.0
    for a, b in itertools.combinations(sorted(set(members)), 2):
        c = pool.compatibility(a, b)
        if c.kind is CompatKind.INCOMPATIBLE:
            return NEG_INF
        if c.kind is CompatKind.TOLERATED:
            total += c.iou
    return -weights.lambda_p * total


def global_score(members: Iterable[int], obs: ObservationSet, pool: ProposalPool, weights: ScoreWeights,
                 renders: Mapping[int, ProposalRender]) -> float:
    members = sorted(set(members))
    prior = prior_score(members, pool, weights)
    if prior == NEG_INF:
        return NEG_INF
    rs = [renders[m] for m in members]
    return sum(view_score(rs, obs, i, weights) for i in range(obs.num_views)) + prior


def intersection_term(o: int, members: Iterable[int], pool: ProposalPool) -> float:
    """s^p(o, O): minus the summed IoU between ``o`` and the other members."""
    return -sum(pool.iou(o, m) for m in members if m != o)


def local_score(o: int, members: Iterable[int], obs: ObservationSet, pool: ProposalPool, weights: ScoreWeights,
                renders: Mapping[int, ProposalRender], min_pixels: int = VISIBILITY_MIN_PIXELS) -> float:
    members = sorted(set(members))
    if o not in members:
        raise ValueError("local score of a proposal outside the solution")
    w = renders[o].visible_views(min_pixels)
    if not w.any():
        raise ValueError("invisible proposal")
    rs = [renders[m] for m in members]
    s = [view_score(rs, obs, i, weights) for i in np.flatnonzero(w)]
    return float(np.sum(s) / w.sum()) + weights.lambda_p * intersection_term(o, members, pool)


def fitness(render: ProposalRender, obs: ObservationSet, weights: ScoreWeights,
            min_pixels: int = VISIBILITY_MIN_PIXELS) -> float:
    """Solo score of one proposal, restricted to the pixels it covers; -inf if never visible."""
    if not render.visible_views(min_pixels).any():
        return NEG_INF
    total = 0.0
    for i in range(obs.num_views):
        d = render.depth[i]
        mask = np.isfinite(d)
        if not mask.any():
            continue
        labels = np.where(mask, render.category, NO_LABEL)
        gain, pen = _terms(d, labels, obs.confidence[i], obs.depth[i], weights)
        total += float(gain[mask].sum()) - float(pen[mask].sum())
    return total


class Scorer:
    """Cached evaluator of the objective over one proposal pool.

    ``context`` proposals (e.g. a fixed layout) are part of every evaluated
    set: they take part in compositing and in the prior.
    """

    def __init__(self, pool: ProposalPool, obs: ObservationSet, renders: Mapping[int, ProposalRender],
                 weights: ScoreWeights = ScoreWeights(), context: Iterable[int] = (),
                 min_pixels: int = VISIBILITY_MIN_PIXELS):
        self.pool = pool
        self.obs = obs
        self.renders = dict(renders)
        self.weights = weights
        self.context = frozenset(context)
        self.min_pixels = min_pixels
        v = obs.num_views
        self._shape = (v,) + obs.depth.shape[1:]
        self._npix = int(np.prod(self._shape))
        self._conf = obs.confidence.transpose(1, 0, 2, 3).reshape(len(CATEGORIES), -1)
        self._obs_depth = obs.depth.reshape(-1)
        self._sparse: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._cache: dict[frozenset, tuple[np.ndarray, np.ndarray]] = {}
        self._prior_cache: dict[frozenset, float] = {}
        self._fitness: dict[int, float] = {}
        self._visible: dict[int, np.ndarray] = {}

    def _pixels(self, pid: int) -> tuple[np.ndarray, np.ndarray]:
        sp = self._sparse.get(pid)
        if sp is None:
            d = self.renders[pid].depth.reshape(-1)
            idx = np.flatnonzero(np.isfinite(d))
            sp = (idx, d[idx])
            self._sparse[pid] = sp
        return sp

    def full_set(self, members: Iterable[int]) -> frozenset:
        return frozenset(members) | self.context

    def composite_flat(self, members: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        """Min-depth composite over all views as flat arrays (depth, labels)."""
        depth = np.full(self._npix, np.inf)
        labels = np.full(self._npix, NO_LABEL, dtype=np.int64)
        for pid in sorted(self.full_set(members)):
            idx, d = self._pixels(pid)
            nearer = d < depth[idx]
            sel = idx[nearer]
            depth[sel] = d[nearer]
            labels[sel] = self.renders[pid].category
        return depth, labels

    def view_terms(self, members: Iterable[int]) -> tuple[np.ndarray, np.ndarray]:
        key = self.full_set(members)
        hit = self._cache.get(key)
        if hit is None:
            depth, labels = self.composite_flat(key)
            gain, pen = _terms(depth, labels, self._conf, self._obs_depth, self.weights)
            nv = self._shape[0]
            hit = (gain.reshape(nv, -1).sum(axis=1), pen.reshape(nv, -1).sum(axis=1))
            self._cache[key] = hit
        return hit

    def view_scores(self, members: Iterable[int]) -> np.ndarray:
        seg, pen = self.view_terms(members)
        return seg - pen

    def prior(self, members: Iterable[int]) -> float:
        key = self.full_set(members)
        p = self._prior_cache.get(key)
        if p is None:
            p = prior_score(key, self.pool, self.weights)
            self._prior_cache[key] = p
        return p

    def global_score(self, members: Iterable[int]) -> float:
        p = self.prior(members)
        if p == NEG_INF:
            return NEG_INF
        return float(self.view_scores(members).sum()) + p

    def visible_views(self, pid: int) -> np.ndarray:
        w = self._visible.get(pid)
        if w is None:
            w = self.renders[pid].visible_views(self.min_pixels)
            self._visible[pid] = w
        return w

    def local_score(self, o: int, members: Iterable[int]) -> float:
        members = self.full_set(members)
        if o not in members:
            raise ValueError("local score of a proposal outside the solution")
        w = self.visible_views(o)
        if not w.any():
            raise ValueError("invisible proposal")
        s = self.view_scores(members)
        return float(s[w].sum() / w.sum()) + self.weights.lambda_p * intersection_term(o, members, self.pool)

    def masked_view_mean(self, view_mask: np.ndarray, members: Iterable[int]) -> float:
        """Mean view score over the selected views (all views if the mask is empty)."""
        s = self.view_scores(members)
        if not view_mask.any():
            return float(s.mean())
        return float(s[view_mask].sum() / view_mask.sum())

    def fitness(self, pid: int) -> float:
        f = self._fitness.get(pid)
        if f is None:
            f = fitness(self.renders[pid], self.obs, self.weights, self.min_pixels)
            self._fitness[pid] = f
        return f

    def solution(self, members: Iterable[int]) -> SceneSolution:
        full = sorted(self.full_set(members))
        s = self.global_score(full)
        return SceneSolution(tuple(full), s, s != NEG_INF)

    def breakdown(self, members: Iterable[int]) -> dict:
        seg, pen = self.view_terms(members)
        return {
            "segmentation": float(seg.sum()),
            "depth": float(-pen.sum()) + 0.0,
            "prior": self.prior(members) + 0.0,  # no negative zero in reports
            "per_view": (seg - pen).tolist(),
        }
