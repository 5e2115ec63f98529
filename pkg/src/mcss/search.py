"""Monte Carlo scene search: UCB selection, lazy expansion, roulette simulations and local-score backup."""

from __future__ import annotations

import bisect
import csv
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .proposals import ProposalPool
from .renderer import VISIBILITY_MIN_PIXELS, ProposalRender, prerender
from .scoring import NEG_INF, ObservationSet, SceneSolution, Scorer, ScoreWeights
from .tree import ROOT, Mode, SearchNode, SearchSpace, bits, materialize, new_root

NODE_SCORES = ("local", "global")


@dataclass
class McssConfig:
    """Search settings.

    ``simulations`` defaults to 10 in object mode and 1 in layout mode.
    ``lambda2=None`` sets the exploration weight from the spread of the
    backed-up scores seen in the first ``autoscale_window`` iterations.
    """

    iterations: int = 20000
    simulations: Optional[int] = None
    lambda1: float = 1.0
    lambda2: Optional[float] = None
    ucb_c: float = math.sqrt(2.0)
    autoscale_window: int = 100
    seed: int = 0
    log_stride: int = 1
    node_score: str = "local"
    use_max: bool = False
    uniform: bool = False
    early_stop: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.lambda2 is not None and self.lambda2 < 0:
            raise ValueError("lambda2 must be >= 0")
        if self.simulations is not None and self.simulations < 1:
            raise ValueError("simulations must be >= 1")
        if self.node_score not in NODE_SCORES:
            raise ValueError(f"node_score must be one of {NODE_SCORES}")

    def simulations_for(self, mode: Mode) -> int:
        if self.simulations is not None:
            return self.simulations
        return 1 if mode is Mode.LAYOUT else 10


def solution_key(score: float, members: Sequence[int]) -> tuple:
    """Ordering of candidate solutions: higher score, then fewer members, then smaller ids."""
    return (score, -len(members), tuple(-m for m in members))


class BestTracker:
    """Best solution seen so far and the per-iteration best-so-far series."""

    def __init__(self):
        self.members: tuple[int, ...] = ()
        self.score = NEG_INF
        self.series: list[float] = []
        self._key = None

    def offer(self, members: Sequence[int], score: float) -> bool:
        members = tuple(sorted(members))
        key = solution_key(score, members)
        if self._key is None or key > self._key:
            self._key, self.members, self.score = key, members, score
            return True
        return False

    def record(self) -> None:
        self.series.append(self.score)


def ucb_value(child: SearchNode, parent_n: int, lambda1: float, lambda2: float, use_max: bool = False) -> float:
    exploit = child.q_max if use_max else child.q / child.n
    return lambda1 * exploit + lambda2 * math.sqrt(math.log(parent_n) / child.n)


def select(node: SearchNode, rng: np.random.Generator, lambda1: float, lambda2: float,
           use_max: bool = False) -> SearchNode:
    """Random unvisited child if any, else the UCB maximizer (first child wins ties)."""
    children = node.children
    unvisited = [c for c in children if c.n == 0]
    if unvisited:
        return unvisited[int(rng.integers(len(unvisited)))]
    best, best_v = children[0], NEG_INF
    for c in children:
        v = ucb_value(c, node.n, lambda1, lambda2, use_max)
        if v > best_v:
            best, best_v = c, v
    return best


def roulette(mask: int, weights: Sequence[float], rng: np.random.Generator) -> int:
    """Draw one index from ``mask`` with probability proportional to ``weights``."""
    idx, cum, total = [], [], 0.0
    for j in bits(mask):
        total += weights[j]
        idx.append(j)
        cum.append(total)
    k = bisect.bisect_right(cum, rng.random() * total)
    return idx[min(k, len(idx) - 1)]


def simulate_mask(space: SearchSpace, node: SearchNode, rng: np.random.Generator, uniform: bool = False) -> int:
    """Complete ``node``'s partial solution by random draws; returns the member mask."""
    weights = [1.0] * space.n if uniform else space.weights
    members, allowed = node.members, node.allowed
    if space.mode is Mode.OBJECT:
        while allowed:
            j = roulette(allowed, weights, rng)
            members |= 1 << j
            allowed &= space.compat[j]
        return members
    first, last, count = node.first, (None if node.content == ROOT else node.anchor), node.count
    while True:
        if last is not None and space.closes_loop(first, last, count):
            return members
        cand = allowed if last is None else allowed & space.neighbors[last]
        if not cand:
            return members
        j = roulette(cand, weights, rng)
        members |= 1 << j
        allowed &= space.compat[j]
        if first is None:
            first = j
        last, count = j, count + 1


def simulate(space: SearchSpace, node: SearchNode, rng: np.random.Generator, uniform: bool = False) -> SceneSolution:
    members = space.ids_of(simulate_mask(space, node, rng, uniform))
    return space.scorer.solution(members)


@dataclass
class SearchResult:
    solution: SceneSolution
    series: list[float]
    root: SearchNode
    space: SearchSpace
    iterations_run: int
    lambda2: float
    timings_ms: list[float] = field(default_factory=list)


class Search:
    """State of one MCSS run over a :class:`SearchSpace`."""

    def __init__(self, space: SearchSpace, config: McssConfig):
        self.space = space
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.root = new_root(space)
        materialize(self.root, space)
        self.tracker = BestTracker()
        self.n_sims = config.simulations_for(space.mode)
        self.lambda2 = config.lambda2
        self._early: list[float] = []
        self._scores: dict[int, float] = {}
        self._local: dict[tuple[int, int], float] = {}
        self._skip: dict[tuple[int, int], float] = {}

    @property
    def scorer(self) -> Scorer:
        return self.space.scorer

    def score_mask(self, mask: int) -> float:
        s = self._scores.get(mask)
        if s is None:
            s = self.scorer.global_score(self.space.ids_of(mask))
            self._scores[mask] = s
        return s

    def node_value(self, node: SearchNode, mask: int, total: float) -> float:
        """Value deposited into ``node`` for a simulation with members ``mask``."""
        if self.config.node_score == "global":
            return total
        if node.content >= 0:
            key = (node.content, mask)
            v = self._local.get(key)
            if v is None:
                v = self.scorer.local_score(self.space.ids[node.content], self.space.ids_of(mask))
                self._local[key] = v
            return v
        # Skip node: mean view score over the views where a skipped sibling is visible.
        key = (node.skipped, mask)
        v = self._skip.get(key)
        if v is None:
            vis = np.zeros(self.scorer.obs.num_views, dtype=bool)
            for j in bits(node.skipped):
                vis |= self.scorer.visible_views(self.space.ids[j])
            v = self.scorer.masked_view_mean(vis, self.space.ids_of(mask))
            self._skip[key] = v
        return v

    def current_lambda2(self, iteration: int) -> float:
        if self.config.lambda2 is not None:
            return self.config.lambda2
        if self.lambda2 is not None:
            return self.lambda2
        spread = (max(self._early) - min(self._early)) if self._early else 0.0
        lam = self.config.ucb_c * (spread if spread > 0 else 1.0)
        if iteration >= self.config.autoscale_window:
            self.lambda2 = lam
        return lam

    def descend(self, lambda2: float) -> list[SearchNode]:
        node, path = self.root, [self.root]
        while True:
            children = materialize(node, self.space)
            if not children:
                return path
            fresh = any(c.n == 0 for c in children)
            node = select(node, self.rng, self.config.lambda1, lambda2, self.config.use_max)
            path.append(node)
            if fresh:
                materialize(node, self.space)
                return path

    def update(self, path: list[SearchNode], mask: int, total: float) -> None:
        for node in path[1:]:
            v = self.node_value(node, mask, total)
            node.q += v
            if v > node.q_max:
                node.q_max = v
            if self.config.lambda2 is None and self.lambda2 is None:
                self._early.append(v)
        for node in path:
            node.n += 1
        for node in reversed(path):
            if node.children is not None and all(c.exhausted for c in node.children):
                node.exhausted = True
            else:
                break

    def step(self, iteration: int) -> None:
        lam = self.current_lambda2(iteration)
        path = self.descend(lam)
        leaf = path[-1]
        best_mask, best_total = None, NEG_INF
        for _ in range(self.n_sims):
            mask = simulate_mask(self.space, leaf, self.rng, self.config.uniform)
            total = self.score_mask(mask)
            self.tracker.offer(self.space.ids_of(mask), total)
            if best_mask is None or total > best_total:
                best_mask, best_total = mask, total
        self.update(path, best_mask, best_total)
        self.tracker.record()

    def run(self, timing: bool = False) -> SearchResult:
        timings = []
        t0 = time.perf_counter()
        done = 0
        if self.space.n == 0:
            self.tracker.offer((), self.scorer.global_score(()))
        for it in range(self.config.iterations):
            if self.space.n == 0 or (self.config.early_stop and self.root.exhausted):
                break
            self.step(it)
            done += 1
            if timing:
                timings.append((time.perf_counter() - t0) * 1000.0)
        # Pad the series when the tree was exhausted early.
        series = self.tracker.series
        while len(series) < self.config.iterations:
            series.append(self.tracker.score)
            if timing:
                timings.append((time.perf_counter() - t0) * 1000.0)
        lam = self.lambda2 if self.lambda2 is not None else self.current_lambda2(self.config.autoscale_window)
        return SearchResult(self.scorer.solution(self.tracker.members), series, self.root, self.space, done,
                            lam, timings)


def build_renders(pool: ProposalPool, obs: ObservationSet) -> dict[int, ProposalRender]:
    return {pid: prerender(pid, p.category, p.posed_mesh, obs.views) for pid, p in sorted(pool.by_id.items())}


def run(pool: ProposalPool, obs: ObservationSet, mode: Mode, config: McssConfig = McssConfig(),
        weights: ScoreWeights = ScoreWeights(), renders: Optional[Mapping[int, ProposalRender]] = None,
        context: Iterable[int] = (), candidate_ids: Optional[Iterable[int]] = None,
        min_pixels: int = VISIBILITY_MIN_PIXELS, timing: bool = False) -> SearchResult:
    """One MCSS run over the layout or object proposals of ``pool``."""
    if renders is None:
        renders = build_renders(pool, obs)
    scorer = Scorer(pool, obs, renders, weights, context, min_pixels)
    space = SearchSpace(pool, scorer, mode, candidate_ids)
    return Search(space, config).run(timing)


@dataclass
class TwoPhaseResult:
    solution: SceneSolution
    layout: SearchResult
    objects: SearchResult


def run_two_phase(pool: ProposalPool, obs: ObservationSet, config: McssConfig = McssConfig(),
                  weights: ScoreWeights = ScoreWeights(), renders: Optional[Mapping[int, ProposalRender]] = None,
                  layout_config: Optional[McssConfig] = None, floor_id: Optional[int] = None,
                  min_pixels: int = VISIBILITY_MIN_PIXELS, timing: bool = False) -> TwoPhaseResult:
    """Layout search, then object search with the chosen layout as fixed scoring context.

    ``floor_id`` (a floor proposal in ``pool``) joins the layout context when given.
    """
    if renders is None:
        renders = build_renders(pool, obs)
    lay = run(pool, obs, Mode.LAYOUT, layout_config or config, weights, renders, min_pixels=min_pixels, timing=timing)
    context = set(lay.solution.members)
    if floor_id is not None:
        context.add(floor_id)
    obj = run(pool, obs, Mode.OBJECT, config, weights, renders, context=context, min_pixels=min_pixels, timing=timing)
    return TwoPhaseResult(obj.solution, lay, obj)


def write_convergence_csv(path, series: Sequence[float], stride: int = 1, timings_ms: Optional[Sequence[float]] = None) -> None:
    """Columns iteration, best_global_score, wall_ms; wall_ms is blank unless timings are given."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "best_global_score", "wall_ms"])
        for i, s in enumerate(series):
            if (i + 1) % stride and i != len(series) - 1:
                continue
            ms = f"{timings_ms[i]:.3f}" if timings_ms else ""
            w.writerow([i + 1, repr(float(s)), ms])
