import numpy as np
import pytest

from ordlearn.core import StateSpace, UtilityTable, make_belief
from ordlearn.signals import FiniteMatrix, LocationFamily


def random_finite(rng, max_states=5, max_signals=5, max_actions=5, full_support=False):
    """Random (space, model, utility, prior) with sizes up to the given bounds."""
    n_w = int(rng.integers(2, max_states + 1))
    n_s = int(rng.integers(2, max_signals + 1))
    n_a = int(rng.integers(2, max_actions + 1))
    sp = StateSpace(tuple(range(1, n_w + 1)))
    f = rng.dirichlet(np.ones(n_s), size=n_w).T + 1e-3
    f /= f.sum(axis=0)
    model = FiniteMatrix(sp, tuple(range(n_s)), f)
    u = UtilityTable(sp, tuple(range(n_a)), rng.uniform(-1, 1, (n_a, n_w)))
    w = rng.dirichlet(np.ones(n_w))
    if not full_support:
        w[rng.random(n_w) < 0.3] = 0.0
        if w.sum() == 0:
            w[0] = 1.0
    return sp, model, u, make_belief(sp, w)


def random_mlrp_matrix(rng, n_w, n_s):
    """Exponential-family matrix f(s|w) proportional to exp(theta_w t_s + b_s): MLRP by construction."""
    theta = np.sort(rng.normal(size=n_w))
    t = np.sort(rng.normal(size=n_s)) * rng.uniform(0.2, 2.0)
    b = rng.normal(size=n_s)
    lf = theta[None, :] * t[:, None] + b[:, None]
    f = np.exp(lf - lf.max(axis=0))
    return f / f.sum(axis=0)


LOCATION_KINDS = (("normal", lambda r: {"sigma": r.uniform(0.5, 2.0)}),
                  ("laplace", lambda r: {"b": r.uniform(0.5, 2.0)}),
                  ("student_t", lambda r: {"df": r.uniform(2.0, 10.0), "scale": r.uniform(0.5, 2.0)}))


def random_location(rng, max_states=4, max_actions=4):
    n_w = int(rng.integers(2, max_states + 1))
    sp = StateSpace.window(1, n_w)
    kind, params = LOCATION_KINDS[int(rng.integers(len(LOCATION_KINDS)))]
    model = LocationFamily(kind, params(rng), sp)
    n_a = int(rng.integers(2, max_actions + 1))
    u = UtilityTable(sp, tuple(range(n_a)), rng.uniform(-1, 1, (n_a, n_w)))
    prior = make_belief(sp, rng.dirichlet(np.ones(n_w)))
    return sp, model, u, prior


@pytest.fixture
def three():
    return StateSpace.window(1, 3)


@pytest.fixture
def normal3(three):
    return LocationFamily("normal", {"sigma": 1.0}, three)


@pytest.fixture
def laplace3(three):
    return LocationFamily("laplace", {"b": 1.0}, three)
