import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from statsmodels.stats.proportion import proportion_confint

from ordlearn.core import Belief, UtilityTable
from ordlearn.errors import UnknownScenario
from ordlearn.experiments import lookup, monte_carlo, registry, run_gallery, wilson
from ordlearn.experiments import structures
from ordlearn.experiments.montecarlo import run_seed, rows_csv


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 5000).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_wilson_matches_statsmodels(kn):
    k, n = kn
    lo, hi = wilson(k, n)
    rlo, rhi = proportion_confint(k, n, alpha=0.05, method="wilson")
    assert lo == pytest.approx(rlo, abs=1e-12)
    assert hi == pytest.approx(rhi, abs=1e-12)
    assert lo <= k / n <= hi


def test_wilson_edges():
    assert wilson(0, 10)[0] == 0.0
    assert wilson(10, 10)[1] == 1.0
    with pytest.raises(ValueError):
        wilson(0, 0)


def test_registry_and_lookup():
    keys = [k for k, _, _ in registry()]
    assert keys == [f"g{i}" for i in range(1, 9)]
    assert lookup("g3").name == "prop1_nonscd"
    assert lookup("prop1_nonscd").key == "g3"
    with pytest.raises(UnknownScenario):
        lookup("g9")


def test_run_seeds_are_independent_of_jobs(three, normal3):
    u = UtilityTable.quadratic_loss(three)
    mu = Belief.uniform(three)
    assert run_seed(4, 2) == [4, 2]
    a = monte_carlo(u, normal3, mu, 6, [10, 40], master_seed=4)
    b = monte_carlo(u, normal3, mu, 6, [40, 10], master_seed=4, jobs=2)
    assert rows_csv(a) == rows_csv(b)
    assert [r.horizon for r in a] == [10, 40]


@pytest.mark.parametrize("name", ["g5", "g6", "g7", "g8"])
def test_fast_scenarios_meet_expectations(name, tmp_path):
    rep = run_gallery(name, out=tmp_path)
    assert rep.expectation_met, rep.checks
    doc = json.loads((tmp_path / f"{rep.name}.json").read_text())
    assert doc["expectation_met"] and doc["key"] == name
    for fname in rep.artifacts:
        assert (tmp_path / fname).exists()


def test_small_cascade_scenario_is_deterministic(tmp_path):
    a = run_gallery("g3", out=tmp_path / "a", runs=5, horizon=60, seed=9)
    b = run_gallery("g3", out=tmp_path / "b", runs=5, horizon=60, seed=9)
    assert a.dumps() == b.dumps()
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    assert a.checks["cascade_at_1_always"]


def test_rich_structures_are_plausible():
    for key, build in structures.RICH.items():
        m = build()
        assert m.balance_error() <= 1e-12
        assert m.weights.sum() == pytest.approx(structures.TOTAL_Q)
    xy = structures.barycentric_xy(np.eye(3))
    np.testing.assert_allclose(xy, [[0, 0], [4, 0], [2, 3]])
