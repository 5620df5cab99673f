import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from ordlearn.core import Belief, StateSpace, make_belief
from ordlearn.errors import InvalidPrimitive, NonExhaustivePartition, NotBayesPlausible, SignalOutOfDomain
from ordlearn.experiments import structures
from ordlearn.signals import (FiniteMatrix, LocationFamily, MixtureAtomFamily, action_probability, bayes_update,
                              from_descriptor, from_posteriors, log_likelihood, sample_signal)

from conftest import random_finite


def scipy_dist(m: LocationFamily):
    if m.kind == "normal":
        return stats.norm(scale=m.p0)
    if m.kind == "laplace":
        return stats.laplace(scale=m.p0)
    return stats.t(df=m.p0, scale=m.p1)


FAMILIES = [("normal", {"sigma": 1.0}), ("normal", {"sigma": 0.3}), ("laplace", {"b": 1.0}),
            ("laplace", {"b": 2.5}), ("student_t", {"df": 5.0, "scale": 1.0}),
            ("student_t", {"df": 2.5, "scale": 0.7})]


def test_log_likelihood_examples(three, normal3, laplace3):
    for w in three:
        assert log_likelihood(normal3, float(w), w) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)
    for s in (3.0 + 1e-9, 3.5, 10.0, 1e4):
        for w, w2 in ((1, 2), (1, 3), (2, 3), (3, 1)):
            d = log_likelihood(laplace3, s, w2) - log_likelihood(laplace3, s, w)
            assert d == pytest.approx(w2 - w, abs=1e-12)
    u = FiniteMatrix.uninformative(three, 4)
    for s in u.signals:
        for w in three:
            assert log_likelihood(u, s, w) == pytest.approx(math.log(0.25))
    with pytest.raises(SignalOutOfDomain):
        log_likelihood(u, 17, 1)


@pytest.mark.parametrize("kind,params", FAMILIES)
def test_density_and_cdf_match_scipy(kind, params, three):
    m = LocationFamily(kind, params, three)
    ref = scipy_dist(m)
    x = np.concatenate([np.linspace(-30, 30, 601), [-1e3, -200.0, 200.0, 1e3]])
    rp = ref.logpdf(x)
    ok = np.isfinite(rp)   # scipy takes log(pdf) for the laplace and underflows
    np.testing.assert_allclose(m.log_g(x)[ok], rp[ok], rtol=1e-12, atol=1e-12)
    if kind == "laplace":
        b = params["b"]
        np.testing.assert_allclose(m.log_g(x), -np.abs(x) / b - math.log(2 * b), rtol=1e-14)
    lc, rc = m.log_cdf(x), ref.logcdf(x)
    ok = np.isfinite(rc)
    np.testing.assert_allclose(lc[ok], rc[ok], rtol=1e-9, atol=1e-12)
    rs = ref.logsf(x)
    ok = np.isfinite(rs)   # the reference underflows in the far right tail
    np.testing.assert_allclose(m.log_sf(x)[ok], rs[ok], rtol=1e-9, atol=1e-12)
    for q in (1e-9, 0.3, 0.5, 1 - 1e-9):
        assert m.quantile(q) == pytest.approx(ref.ppf(q), rel=1e-10)


def test_normal_deep_tail_log_cdf(three):
    m = LocationFamily("normal", {"sigma": 1.0}, three)
    for z in (-40.0, -100.0, -1e3):
        assert float(m.log_cdf(z)) == pytest.approx(float(stats.norm.logcdf(z)), rel=1e-12)


def test_laplace_interval_against_quadrature(laplace3):
    for t in (-3.0, 0.2, 1.0, 4.5):
        for w in laplace3.space:
            p = action_probability(laplace3, {"lo": [(-np.inf, t)], "hi": [(t, np.inf)]}, w)
            num, _ = integrate.quad(lambda s: 0.5 * math.exp(-abs(s - w)), -np.inf, t, epsabs=1e-13)
            closed = 0.5 * math.exp(t - w) if t < w else 1 - 0.5 * math.exp(w - t)
            assert p["lo"] == pytest.approx(closed, abs=1e-15)
            assert p["lo"] == pytest.approx(num, abs=1e-10)
            assert p["lo"] + p["hi"] == pytest.approx(1.0, abs=1e-12)


def test_action_probability_examples(three, normal3):
    assert action_probability(normal3, {"all": [(-np.inf, np.inf)]}, 2) == {"all": 1.0}
    p = action_probability(normal3, {"lo": [(-np.inf, 2.0)], "hi": [(2.0, np.inf)]}, 2)
    assert p["lo"] == pytest.approx(0.5, abs=1e-15) and p["hi"] == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(NonExhaustivePartition):
        action_probability(normal3, {"lo": [(-np.inf, 1.0)], "hi": [(2.0, np.inf)]}, 2)
    fm = FiniteMatrix(three, (0, 1, 2), np.full((3, 3), 1 / 3))
    with pytest.raises(NonExhaustivePartition):
        action_probability(fm, {"a": [0, 1]}, 1)
    with pytest.raises(NonExhaustivePartition):
        action_probability(fm, {"a": [0, 1], "b": [1, 2]}, 1)
    p = action_probability(fm, {"a": [0, 1], "b": [2]}, 1)
    assert p["a"] == pytest.approx(2 / 3) and p["b"] == pytest.approx(1 / 3)


def test_finite_matrix_validation(three):
    with pytest.raises(InvalidPrimitive):
        FiniteMatrix(three, (0, 1), [[0.5, 0.5, 0.5], [0.5, 0.5, 0.4]])
    with pytest.raises(InvalidPrimitive):
        FiniteMatrix(three, (0, 1), [[1.0, 0.5, 0.5], [0.0, 0.5, 0.5]])
    with pytest.raises(InvalidPrimitive):
        FiniteMatrix(three, (1, 0), np.full((2, 3), 0.5))


def test_total_mass_per_state():
    rng = np.random.default_rng(5)
    for _ in range(50):
        _, m, _, _ = random_finite(rng)
        np.testing.assert_allclose(np.exp(m.log_f).sum(axis=0), 1.0, atol=1e-10)
    sp = StateSpace.window(1, 3)
    for kind, params in FAMILIES:
        m = LocationFamily(kind, params, sp)
        for w in sp:
            assert math.exp(float(m.log_interval(-np.inf, np.inf))) == pytest.approx(1.0, abs=1e-10)
    mix = MixtureAtomFamily(StateSpace.window(-5, 0, truncated_mass=0.01), 0.5)
    for w in mix.space:
        tot = sum(math.exp(mix.log_likelihood(s, w)) for s in range(-80, 81))
        assert tot == pytest.approx(1.0, abs=1e-10)


def test_bayes_update_examples(three, normal3):
    mu = make_belief(three, [0.2, 0.5, 0.3])
    np.testing.assert_allclose(bayes_update(mu, FiniteMatrix.uninformative(three), 1).mass, mu.mass, atol=1e-15)
    two = StateSpace.window(1, 2)
    post = bayes_update(Belief.uniform(two), LocationFamily("normal", {"sigma": 1.0}, two), 1.5)
    np.testing.assert_allclose(post.mass, [0.5, 0.5], atol=1e-15)
    part = make_belief(three, [0.5, 0.0, 0.5])
    for s in (-1e6, 0.0, 2.0, 1e6):
        assert bayes_update(part, normal3, s).support == (1, 3)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_change_of_prior_identity(seed):
    rng = np.random.default_rng(seed)
    sp, m, _, _ = random_finite(rng, full_support=True)
    mu = make_belief(sp, rng.dirichlet(np.ones(len(sp))))
    nu = make_belief(sp, rng.dirichlet(np.ones(len(sp))))
    s = m.signals[int(rng.integers(len(m.signals)))]
    ms, ns = bayes_update(mu, m, s).mass, bayes_update(nu, m, s).mass
    i, j = 0, len(sp) - 1
    lhs = ns[i] / ns[j]
    rhs = (ms[i] / ms[j]) * (nu.mass[i] / nu.mass[j]) * (mu.mass[j] / mu.mass[i])
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_from_posteriors(three):
    mu = make_belief(three, [0.3, 0.3, 0.4])
    ps = from_posteriors(mu, [(0.5, mu)])
    np.testing.assert_allclose(np.exp(ps.log_f), 0.5, atol=1e-15)
    curve = structures.normal_curve_structure()
    recon = sum(q * nu for q, nu in zip(curve.weights, curve.posteriors)) \
        + curve.residual_weight * curve.residual_posterior
    np.testing.assert_allclose(recon, curve.prior.mass, atol=1e-12, rtol=0)
    assert curve.balance_error() <= 1e-12
    np.testing.assert_allclose(np.exp(curve.log_f).sum(axis=0), 1.0, atol=1e-12)
    assert curve.signals == tuple(range(1, len(curve.weights) + 2))
    # the listed posteriors are recovered by Bayes rule from the prior
    for k, nu in enumerate(curve.posteriors):
        np.testing.assert_allclose(bayes_update(mu, curve, k + 1).mass, nu, rtol=1e-12)
    with pytest.raises(NotBayesPlausible):
        from_posteriors(mu, [(0.9, make_belief(three, [0.8, 0.1, 0.1]))])
    with pytest.raises(NotBayesPlausible):
        from_posteriors(mu, [(0.6, mu), (0.4, mu)])


def test_sampling_frequency_and_determinism(three):
    eps = 1e-6 / 2
    col = [eps, 1 - 2 * eps, eps]
    m = FiniteMatrix(three, (0, 1, 2), np.column_stack([col, [1 / 3] * 3, [1 / 3] * 3]))
    n = 10**6
    idx = m.sample_many(1, np.random.default_rng(11), n)
    p = 1 - 2 * eps
    k = np.sum(idx == 1)
    assert abs(k - n * p) <= 4 * math.sqrt(n * p * (1 - p)) + 1
    r1, r2 = np.random.default_rng(3), np.random.default_rng(3)
    a = [sample_signal(m, 2, r1) for _ in range(100)]
    b = [m.signals[i] for i in m.sample_many(2, r2, 100)]
    assert a == b


@pytest.mark.parametrize("kind,params", FAMILIES[:4])
def test_location_sampling_mean(kind, params, three):
    m = LocationFamily(kind, params, three)
    n = 20000
    x = np.array([sample_signal(m, 2, np.random.default_rng([4, i])) for i in range(n)])
    sd = float(scipy_dist(m).std())
    assert abs(x.mean() - 2) < 4 * sd / math.sqrt(n)
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    assert [sample_signal(m, 1, r1) for _ in range(5)] == [sample_signal(m, 1, r2) for _ in range(5)]


def test_custom_density_matches_normal(three):
    c = LocationFamily("custom", {"exponent": 2.0, "scale": math.sqrt(2.0)}, three)
    n = LocationFamily("normal", {"sigma": 1.0}, three)
    x = np.linspace(-8, 8, 33)
    np.testing.assert_allclose(c.log_g(x), n.log_g(x), atol=1e-12)
    np.testing.assert_allclose(c.log_cdf(x), n.log_cdf(x), atol=1e-9)
    arb = LocationFamily("custom", {}, three, log_g=lambda z: -0.5 * np.asarray(z) ** 2)
    np.testing.assert_allclose(arb.log_g(x), n.log_g(x), atol=1e-9)


def test_mixture_family(three):
    sp = StateSpace.window(-4, 0, truncated_mass=0.02)
    m = MixtureAtomFamily(sp, 0.5)
    # the atom of state w sits at -w
    for w in sp:
        base = m.log_ratio(-w, w, w)
        assert base == 0.0
        assert m.log_likelihood(-w, w) > m.log_likelihood(-w + 1, w)
    with pytest.raises(SignalOutOfDomain):
        m.log_likelihoods(0.5)


def test_descriptors():
    d = {"kind": "finite", "states": [1, 2], "signals": [0, 1], "matrix": [[0.1, 0.9], [0.9, 0.1]]}
    m = from_descriptor(d)
    assert m.f_matrix[0, 1] == 0.9
    m = from_descriptor({"kind": "location", "family": "laplace", "params": {"b": 2}, "state_window": [0, 4]})
    assert m.space.states == (0, 1, 2, 3, 4) and m.p0 == 2.0
    m = from_descriptor({"kind": "posterior_sequence", "prior": [0.5, 0.5],
                         "entries": [{"q": 0.25, "nu": [0.9, 0.1]}]})
    assert len(m.signals) == 2
    with pytest.raises(InvalidPrimitive):
        from_descriptor({"kind": "bogus"})
