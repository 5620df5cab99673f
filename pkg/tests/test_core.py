import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ordlearn.core import (Belief, StateSpace, UtilityTable, adequate_knowledge, choice_set, expected_difference,
                           make_belief)
from ordlearn.errors import InvalidBelief, InvalidPrimitive, UnknownAction


def test_state_space_validation():
    with pytest.raises(InvalidPrimitive):
        StateSpace((1, 1, 2))
    with pytest.raises(InvalidPrimitive):
        StateSpace(())
    with pytest.raises(InvalidPrimitive):
        StateSpace((1, 2), "infinite")
    with pytest.raises(InvalidPrimitive):
        StateSpace((1, 2), "finite", 0.1)
    sp = StateSpace.window(-2, 2, truncated_mass=1e-3)
    assert sp.truncated and sp.states == (-2, -1, 0, 1, 2)


def test_make_belief_examples(three):
    mu = make_belief(three, [1, 1, 1])
    np.testing.assert_allclose(mu.mass, [1 / 3] * 3)
    assert mu.support == (1, 2, 3)
    mu = make_belief(three, [2, 0, 2])
    assert mu.support == (1, 3)
    assert mu[2] == 0.0
    assert mu[1] == 0.5
    for bad in ([0, 0, 0], [1, -1, 1], [np.nan, 1, 1]):
        with pytest.raises(InvalidBelief):
            make_belief(three, bad)


def test_belief_rejects_bad_mass(three):
    with pytest.raises(InvalidBelief):
        Belief(three, [0.5, 0.5, 0.1])
    mu = Belief.point(three, 2)
    assert mu.support == (2,)
    with pytest.raises(ValueError):
        mu.mass[0] = 1.0


def test_choice_set_quadratic(three):
    u = UtilityTable.quadratic_loss(three)
    assert choice_set(u, Belief.point(three, 2)) == {2}
    assert choice_set(u, make_belief(three, [1, 0, 1])) == {2}
    assert choice_set(u, Belief.uniform(three)) == {2}
    # expected utilities on the uniform prior
    np.testing.assert_allclose(u.u @ Belief.uniform(three).mass, [-5 / 3, -2 / 3, -5 / 3])


def test_choice_set_ties(three):
    u = UtilityTable(three, ("x", "y"), [[1, 0, 0], [0, 0, 1]])
    assert choice_set(u, make_belief(three, [1, 0, 1])) == {"x", "y"}
    assert choice_set(u, make_belief(three, [1, 0, 1 - 1e-9])) == {"x"}


def test_adequate_knowledge(three):
    u = UtilityTable.quadratic_loss(three)
    for w in three:
        r = adequate_knowledge(u, Belief.point(three, w))
        assert r.holds and r.witness == w
    assert not adequate_knowledge(u, Belief.uniform(three))
    v = UtilityTable(three, ("a'", "a*"), [[1, -1, -1], [0, 0, 0]])
    r = adequate_knowledge(v, make_belief(three, [0, 1, 1]))
    assert r.holds and r.witness == "a*"


def test_expected_difference(three):
    u = UtilityTable(three, ("a", "b"), [[1, -0.3, 5], [0, 0, 5]])
    mu = Belief.uniform(three)
    assert expected_difference(u, "a", "a", mu) == 0.0
    eps, eps2 = 0.3, 0.01
    mu = make_belief(three, [1 - eps2, eps2, 0])
    assert expected_difference(u, "a", "b", mu) == pytest.approx(1 - eps2 - eps * eps2, abs=1e-15)
    c = UtilityTable(three, ("a", "b"), [[2, 2, 2], [1, 1, 1]])
    assert expected_difference(c, "a", "b", Belief.uniform(three)) == pytest.approx(1.0)
    with pytest.raises(UnknownAction):
        expected_difference(u, "a", "zzz", mu)


def test_utility_validation(three):
    with pytest.raises(InvalidPrimitive):
        UtilityTable(three, ("a",), [[1, 2, 3]])
    with pytest.raises(InvalidPrimitive):
        UtilityTable(three, ("a", "b"), [[1, 2, np.inf], [0, 0, 0]])
    with pytest.raises(InvalidPrimitive):
        UtilityTable(three, ("a", "a"), [[1, 2, 3], [0, 0, 0]])


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.1, 10.0))
def test_choice_set_affine_invariance(seed, alpha):
    rng = np.random.default_rng(seed)
    n_w, n_a = int(rng.integers(2, 6)), int(rng.integers(2, 5))
    sp = StateSpace(tuple(range(n_w)))
    u = rng.uniform(-1, 1, (n_a, n_w))
    beta = rng.uniform(-1, 1, n_w)
    mu = make_belief(sp, rng.dirichlet(np.ones(n_w)))
    a = choice_set(UtilityTable(sp, tuple(range(n_a)), u), mu)
    b = choice_set(UtilityTable(sp, tuple(range(n_a)), alpha * u + beta[None, :]), mu)
    assert a and a == b


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_difference_antisymmetry_and_unique_point_choices(seed):
    rng = np.random.default_rng(seed)
    sp = StateSpace(tuple(range(int(rng.integers(2, 6)))))
    u = UtilityTable(sp, ("a", "b", "c"), rng.uniform(-1, 1, (3, len(sp))))
    mu = make_belief(sp, rng.dirichlet(np.ones(len(sp))))
    assert expected_difference(u, "a", "b", mu) == -expected_difference(u, "b", "a", mu)
    # a common unique choice across the support is the adequacy witness
    best = {w: choice_set(u, Belief.point(sp, w)) for w in mu.support}
    if all(len(c) == 1 for c in best.values()) and len(set().union(*best.values())) == 1:
        r = adequate_knowledge(u, mu)
        assert r.holds and {r.witness} == next(iter(best.values()))
