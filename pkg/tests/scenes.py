"""Hand-built scenes shared by the baseline and acceptance tests."""

import numpy as np

from mcss.geometry import RigidPoseScale
from mcss.proposals import Category, ProposalPool
from mcss.renderer import View
from mcss.synth import ObjectModel, make_object, render_observations


def box_model(name, lo, hi, category=Category.SOFA):
    return ObjectModel(name, category, ((tuple(lo), tuple(hi)),))


def trap_scene(height_ratio=0.7, first_id=0):
    """Two real boxes A and B plus a lower box C spanning both.

    C is incompatible with A and with B and covers ``height_ratio`` of each
    of them in every view, so its solo gain beats either box alone while
    the pair {A, B} scores highest overall.
    Returns ``(pool, obs, (a_id, b_id, c_id))``.
    """
    a = box_model("trap_a", (-0.6, -0.25, 0.0), (-0.1, 0.25, 0.6))
    b = box_model("trap_b", (0.1, -0.25, 0.0), (0.6, 0.25, 0.6))
    c = box_model("trap_c", (-0.6, -0.25, 0.0), (0.6, 0.25, 0.6 * height_ratio))
    ids = (first_id, first_id + 1, first_id + 2)
    objs = [make_object(pid, m, RigidPoseScale.identity()) for pid, m in zip(ids, (a, b, c))]
    views = [View.look_at([x, -3.0, 0.3], [0.0, 0.0, 0.3], 64, 48, 60.0) for x in (-0.5, 0.0, 0.5)]
    obs = render_observations([(o.id, o.category, o.posed_mesh) for o in objs[:2]], views)
    return ProposalPool(objs, []), obs, ids
