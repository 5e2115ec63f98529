"""Greedy hill climbing (two scoring variants) and uniform random search."""

from __future__ import annotations

import enum
from typing import Iterable, Mapping, Optional

import numpy as np

from .renderer import VISIBILITY_MIN_PIXELS, ProposalRender
from .scoring import NEG_INF, ObservationSet, SceneSolution, Scorer, ScoreWeights, intersection_term
from .proposals import ProposalPool
from .search import BestTracker, build_renders, simulate_mask
from .tree import Mode, SearchSpace, new_root


class HillClimbVariant(enum.Enum):
    GLOBAL_SCORE = "global"
    FITNESS = "fitness"


def _scorer(pool, obs, weights, renders, context, min_pixels) -> Scorer:
    if renders is None:
        renders = build_renders(pool, obs)
    return Scorer(pool, obs, renders, weights, context, min_pixels)


def hill_climb(pool: ProposalPool, obs: ObservationSet, weights: ScoreWeights = ScoreWeights(),
               variant: HillClimbVariant = HillClimbVariant.GLOBAL_SCORE,
               renders: Optional[Mapping[int, ProposalRender]] = None, candidate_ids: Optional[Iterable[int]] = None,
               context: Iterable[int] = (), min_pixels: int = VISIBILITY_MIN_PIXELS,
               scorer: Optional[Scorer] = None) -> SceneSolution:
    """Repeatedly add the proposal with the largest positive gain; stop when none improves.

    Only proposals compatible with everything selected so far are considered.
    ``GLOBAL_SCORE`` gains are increments of the global score; ``FITNESS``
    gains are the proposal's fitness plus its weighted intersection term.
    Ties go to the lower id.
    """
    scorer = scorer or _scorer(pool, obs, weights, renders, context, min_pixels)
    lam = scorer.weights.lambda_p
    remaining = sorted(set(pool.ids if candidate_ids is None else candidate_ids) - scorer.context)
    remaining = [p for p in remaining if all(pool.compatible(p, c) for c in scorer.context)]
    members: list[int] = []
    current = scorer.global_score(members)
    while remaining:
        best, best_gain = None, 0.0
        for p in remaining:
            if variant is HillClimbVariant.GLOBAL_SCORE:
                gain = scorer.global_score(members + [p]) - current
            else:
                f = scorer.fitness(p)
                gain = NEG_INF if f == NEG_INF else f + lam * intersection_term(p, members, pool)
            if gain > best_gain:
                best, best_gain = p, gain
        if best is None:
            break
        members.append(best)
        current = scorer.global_score(members)
        remaining = [p for p in remaining if p != best and pool.compatible(p, best)]
    return scorer.solution(members)


def random_search(pool: ProposalPool, obs: ObservationSet, weights: ScoreWeights = ScoreWeights(),
                  iterations: int = 1000, rng: Optional[np.random.Generator] = None, mode: Mode = Mode.OBJECT,
                  renders: Optional[Mapping[int, ProposalRender]] = None, context: Iterable[int] = (),
                  candidate_ids: Optional[Iterable[int]] = None, min_pixels: int = VISIBILITY_MIN_PIXELS,
                  scorer: Optional[Scorer] = None) -> tuple[SceneSolution, list[float]]:
    """Independent uniform simulations from the empty solution; returns the best and the best-so-far series."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    scorer = scorer or _scorer(pool, obs, weights, renders, context, min_pixels)
    space = SearchSpace(pool, scorer, mode, candidate_ids)
    root = new_root(space)
    tracker = BestTracker()
    for _ in range(iterations):
        members = space.ids_of(simulate_mask(space, root, rng, uniform=True))
        tracker.offer(members, scorer.global_score(members))
        tracker.record()
    return scorer.solution(tracker.members), tracker.series
