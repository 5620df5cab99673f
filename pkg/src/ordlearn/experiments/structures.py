"""Posterior-generated signal structures on three states and their simplex geometry."""
from __future__ import annotations

import numpy as np

from ..core import Belief, StateSpace, make_belief
from ..reports import FAILS, HOLDS
from ..signals import LocationFamily, PosteriorSequence, from_posteriors

THREE = StateSpace((1, 2, 3))
PRIOR = (0.3, 0.3, 0.4)
TOTAL_Q = 0.2          # mass on the listed posteriors; the residual signal keeps the rest
LEVELS = 40

V1, V2, V3 = np.eye(3)


def prior(space: StateSpace = THREE) -> Belief:
    return make_belief(space, PRIOR)


def levels(k: int = LEVELS) -> np.ndarray:
    """t_k = 1 - 2^-k for k = 1..K."""
    return 1.0 - 2.0 ** -np.arange(1, k + 1)


def segment(start, end, k: int = LEVELS) -> list:
    """Points (1 - t) start + t end accumulating at ``end``."""
    start, end = np.asarray(start, float), np.asarray(end, float)
    return [(1.0 - t) * start + t * end for t in levels(k)]


def toward_vertex_curve(order, k: int = LEVELS) -> list:
    """Points proportional to (d^2, d, 1) arranged by ``order``, d = 2^-j: every ratio vanishes."""
    out = []
    for j in range(1, k + 1):
        d = 2.0 ** -j
        v = np.empty(3)
        v[list(order)] = (d * d, d, 1.0)
        out.append(v / v.sum())
    return out


def build(points, mu: Belief = None, total_q: float = TOTAL_Q) -> PosteriorSequence:
    mu = prior() if mu is None else mu
    q = total_q / len(points)
    return from_posteriors(mu, [(q, Belief(mu.space, p / p.sum())) for p in points])


def triangle_structure(k: int = LEVELS) -> PosteriorSequence:
    """Posteriors on the triangle with vertices at the edge midpoints, approaching each vertex."""
    d, e, f = np.array([.5, .5, 0]), np.array([.5, 0, .5]), np.array([0, .5, .5])
    return build(segment(e, d, k) + segment(f, e, k) + segment(d, f, k))


def rays_structure(k: int = LEVELS) -> PosteriorSequence:
    """Straight rays from the prior to the three vertices."""
    mu = np.asarray(PRIOR)
    return build(segment(mu, V1, k) + segment(mu, V2, k) + segment(mu, V3, k))


def rays_curves_structure(k: int = LEVELS) -> PosteriorSequence:
    """Rich structure: vertex rays plus curves reaching vertices 1 and 3 with all ratios vanishing."""
    mu = np.asarray(PRIOR)
    pts = (segment(mu, V1, k) + segment(mu, V2, k) + segment(mu, V3, k)
           + toward_vertex_curve((0, 1, 2), k) + toward_vertex_curve((2, 1, 0), k))
    return build(pts)


def mixed_rays_structure(k: int = LEVELS) -> PosteriorSequence:
    """Rays to vertices 1 and 3 and to interior points of the 1-2 and 2-3 edges."""
    mu = np.asarray(PRIOR)
    e, f = np.array([.25, .75, 0]), np.array([0, .5, .5])
    return build(segment(mu, V1, k) + segment(mu, V3, k) + segment(mu, e, k) + segment(mu, f, k))


RICH = {"rays": rays_structure, "rays_curves": rays_curves_structure, "mixed_rays": mixed_rays_structure}

# target verdicts for each rich structure, completed by the implications between conditions
RICH_EXPECTED = {
    "rays": {"unbounded_beliefs": HOLDS, "universal_dub": FAILS, "dub": HOLDS, "pairwise_ub": HOLDS},
    "rays_curves": {"unbounded_beliefs": HOLDS, "universal_dub": HOLDS, "dub": HOLDS, "pairwise_ub": HOLDS},
    "mixed_rays": {"unbounded_beliefs": FAILS, "universal_dub": FAILS, "dub": HOLDS, "pairwise_ub": HOLDS},
    "normal": {"mlrp": HOLDS, "unbounded_beliefs": FAILS, "universal_dub": HOLDS, "dub": HOLDS,
               "pairwise_ub": HOLDS},
}


def normal_curve(sigma: float = 1.0, signals=None, mu: Belief = None) -> tuple:
    """Posteriors under normal information along a signal grid; returns (signals, posteriors)."""
    mu = prior() if mu is None else mu
    s = np.linspace(-6.0, 10.0, 161) if signals is None else np.asarray(signals, float)
    fam = LocationFamily("normal", {"sigma": sigma}, mu.space)
    lw = mu.log_mass[None, :] + fam.log_likelihood_matrix(s)
    post = np.exp(lw - np.logaddexp.reduce(lw, axis=1, keepdims=True))
    return s, post


def normal_curve_structure(k: int = 29) -> PosteriorSequence:
    """Posterior-generated structure whose posteriors lie on the normal curve from vertex 1 to vertex 3."""
    _, post = normal_curve(signals=np.linspace(-6.0, 8.0, k))
    return build(list(post))


def barycentric_xy(nu) -> np.ndarray:
    """Plane coordinates with vertices 1, 2, 3 at (0, 0), (4, 0), (2, 3)."""
    nu = np.atleast_2d(nu)
    return np.column_stack([4.0 * nu[:, 1] + 2.0 * nu[:, 2], 3.0 * nu[:, 2]])
