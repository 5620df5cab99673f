import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_finite, random_location, random_mlrp_matrix
from ordlearn.core import Belief, StateSpace, UtilityTable, adequate_knowledge, choice_indices, make_belief
from ordlearn.dynamics import (action_distribution, belief_after_action, detect_stationary, faces, fosd_check,
                               martingale_residual, scan_hits, simplex_grid, simulate_run, stationary_scan,
                               strategy_partition)
from ordlearn.errors import InvalidPrimitive, OffPathAction
from ordlearn.experiments.gallery import prop1_setup, thm1_3_setup
from ordlearn.signals import FiniteMatrix, LocationFamily, bayes_update


# --- partitions -----------------------------------------------------------------------------------

def test_quadratic_loss_partition_is_symmetric(three, normal3):
    u = UtilityTable.quadratic_loss(three)
    part = strategy_partition(u, Belief.uniform(three), normal3)
    assert part.acts.tolist() == [0, 1, 2]
    assert part.bounds[0] + part.bounds[1] == pytest.approx(4.0, abs=1e-9)
    # indifference at each threshold
    for b, (lo, hi) in zip(part.bounds, ((1, 2), (2, 3))):
        post = bayes_update(Belief.uniform(three), normal3, float(b)).mass
        eu = u.u @ post
        assert eu[lo - 1] == pytest.approx(eu[hi - 1], abs=1e-9)
    assert len(part.tie_records) == 2 and part.tie_records[0][1:] == (1, 2)


def test_discrete_partition_is_lowest_index_argmax():
    rng = np.random.default_rng(3)
    for _ in range(100):
        sp, model, u, mu = random_finite(rng)
        part = strategy_partition(u, mu, model)
        for s in model.signals:
            post = bayes_update(mu, model, s)
            assert part.action_index_for(s) == int(choice_indices(u, post.mass)[0])


def test_coarse_grid_partition_agrees():
    rng = np.random.default_rng(8)
    for _ in range(40):
        sp, model, u, mu = random_location(rng)
        fine = strategy_partition(u, mu, model, grid_points=2048)
        coarse = strategy_partition(u, mu, model, grid_points=256)
        assert fine.acts.tolist() == coarse.acts.tolist()
        np.testing.assert_allclose(fine.bounds, coarse.bounds, atol=1e-9)


def test_single_action_partition(three, normal3):
    u = UtilityTable(three, ("x", "y"), [[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
    part = strategy_partition(u, Belief.uniform(three), normal3)
    assert part.single_action == 0 and part.n_thresholds == 0


# --- belief transitions ---------------------------------------------------------------------------

def test_martingale_finite():
    rng = np.random.default_rng(0)
    for _ in range(200):
        sp, model, u, mu = random_finite(rng)
        part = strategy_partition(u, mu, model)
        assert martingale_residual(mu, part, model) <= 1e-12


def test_martingale_location():
    rng = np.random.default_rng(1)
    for _ in range(30):
        sp, model, u, mu = random_location(rng)
        part = strategy_partition(u, mu, model)
        assert martingale_residual(mu, part, model) <= 1e-10
        assert sum(action_distribution(mu, part, model).values()) == pytest.approx(1.0, abs=1e-12)


def test_support_never_grows():
    rng = np.random.default_rng(4)
    for _ in range(100):
        sp, model, u, mu = random_finite(rng)
        part = strategy_partition(u, mu, model)
        for a, p in action_distribution(mu, part, model).items():
            if p > 0:
                new = belief_after_action(mu, part, a, model)
                assert set(new.support) == set(mu.support)


def test_off_path_action(three):
    model = FiniteMatrix(three, (0, 1), [[0.6, 0.5, 0.4], [0.4, 0.5, 0.6]])
    u = UtilityTable(three, ("x", "y"), [[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]])
    mu = Belief.uniform(three)
    part = strategy_partition(u, mu, model)
    assert belief_after_action(mu, part, "x", model) == mu
    with pytest.raises(OffPathAction):
        belief_after_action(mu, part, "y", model)


# --- stationarity ---------------------------------------------------------------------------------

def test_detect_stationary_examples(three, normal3):
    u = UtilityTable.quadratic_loss(three)
    rep = detect_stationary(u, Belief.uniform(three), normal3)
    assert rep.fails and rep.method == "grid+tail"
    assert detect_stationary(u, Belief.point(three, 2), normal3).holds
    fm = FiniteMatrix.uninformative(three, 3)
    rep = detect_stationary(u, Belief.uniform(three), fm)
    assert rep.holds and rep.method == "exact"


def test_constructed_priors_are_stationary():
    _, model, mu, u, setup = thm1_3_setup()
    rep = detect_stationary(u, mu, model)
    assert rep.holds and rep.method == "laplace-breakpoints"
    assert not adequate_knowledge(u, mu).holds
    _, model, mu, u, setup = prop1_setup()
    assert detect_stationary(u, mu, model).holds
    assert setup["analytic_margin"] > 0


def test_single_action_partition_absorbs():
    rng = np.random.default_rng(12)
    seen = 0
    for _ in range(300):
        sp, model, u, mu = random_finite(rng)
        part = strategy_partition(u, mu, model)
        if part.single_action is None:
            continue
        seen += 1
        assert detect_stationary(u, mu, model).holds
        a = u.actions[part.single_action]
        np.testing.assert_allclose(belief_after_action(mu, part, a, model).mass, mu.mass, atol=1e-15)
    assert seen > 0


def test_simplex_grid_and_faces(three):
    assert len(faces(three)) == 7
    grid = simplex_grid(three, (1, 2, 3), 0.25)
    assert len(grid) == 3  # compositions of 4 into 3 positive parts
    assert all(b.support == (1, 2, 3) for b in grid)
    with pytest.raises(InvalidPrimitive):
        simplex_grid(three, (1, 2), 0.3)


def test_stationary_scan_small(three, normal3):
    u = UtilityTable.quadratic_loss(three)
    entries = stationary_scan(u, normal3, grid_step=0.25)
    assert not scan_hits(entries)
    vertices = [e for e in entries if len(e.belief.support) == 1]
    assert len(vertices) == 3 and all(e.stationary and e.adequate for e in vertices)
    one_face = stationary_scan(u, normal3, support=(1, 3), grid_step=0.25)
    assert all(e.belief.support == (1, 3) for e in one_face)


# --- FOSD -----------------------------------------------------------------------------------------

def test_fosd_examples(three, normal3, laplace3):
    mu = Belief.uniform(three)
    assert fosd_check(normal3, mu, 0.0, 1.0)
    assert not fosd_check(normal3, mu, 1.0, 0.0)
    # beyond every state Laplace signals are equivalent
    assert fosd_check(laplace3, mu, 5.0, 9.0)
    assert not fosd_check(laplace3, make_belief(three, [0.2, 0.3, 0.5]), 9.0, 1.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_fosd_under_mlrp(seed):
    rng = np.random.default_rng(seed)
    n_w, n_s = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    sp = StateSpace.window(1, n_w)
    model = FiniteMatrix(sp, tuple(range(n_s)), random_mlrp_matrix(rng, n_w, n_s))
    mu = make_belief(sp, rng.dirichlet(np.ones(n_w)))
    i, j = sorted(rng.choice(n_s, 2, replace=False))
    assert fosd_check(model, mu, model.signals[i], model.signals[j])


# --- trajectories ---------------------------------------------------------------------------------

def test_trajectory_determinism(three, normal3):
    u = UtilityTable.quadratic_loss(three)
    mu = Belief.uniform(three)
    a = simulate_run(u, normal3, mu, 300, seed=[7, 1])
    b = simulate_run(u, normal3, mu, 300, seed=[7, 1])
    c = simulate_run(u, normal3, mu, 300, seed=[7, 2])
    assert a.csv_text() == b.csv_text()
    assert a.csv_text() != c.csv_text()


def test_trajectory_csv_format(three, normal3, tmp_path):
    u = UtilityTable.quadratic_loss(three)
    tr = simulate_run(u, normal3, Belief.uniform(three), 20, seed=3, true_state=2)
    lines = tr.csv_text().splitlines()
    assert lines[0] == "n,signal,action,mu_1,mu_2,mu_3"
    assert len(lines) == tr.n_steps + 1
    row = lines[1].split(",")
    assert row[0] == "1" and float(row[1]) == tr.signals[0]
    assert sum(float(x) for x in row[3:]) == pytest.approx(1.0, abs=1e-12)
    tr.to_csv(tmp_path / "run.csv")
    assert (tmp_path / "run.csv").read_text() == tr.csv_text()
    assert tr.true_state == 2


def test_trajectory_markers():
    rng = np.random.default_rng(21)
    for k in range(30):
        if k % 2:
            sp, model, u, mu = random_finite(rng)
        else:
            sp, model, u, mu = random_location(rng)
        tr = simulate_run(u, model, mu, 400, seed=k)
        assert 1 <= tr.herd_at <= tr.n_steps
        if tr.cascade_at is not None:
            assert tr.herd_at <= tr.cascade_at
            assert len(set(tr.actions[tr.cascade_at - 1:].tolist())) == 1
        if tr.stopped_early:
            assert tr.cascade_at is not None
            assert tr.action_at(tr.horizon) == tr.action_at(tr.n_steps)


def test_simulate_errors(three, normal3):
    u = UtilityTable.quadratic_loss(three)
    with pytest.raises(InvalidPrimitive):
        simulate_run(u, normal3, Belief.uniform(three), 0)
    with pytest.raises(InvalidPrimitive):
        simulate_run(u, normal3, make_belief(three, [0.5, 0.5, 0.0]), 10, true_state=3)
