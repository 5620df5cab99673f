"""The sequential game: strategy partitions, public beliefs, stationarity and simulation."""
from __future__ import annotations

import io
import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from ._io import atomic_write_text
from .core import (TIE_TOL, Belief, StateSpace, UtilityTable, adequate_knowledge, choice_indices,
                   make_belief)
from .errors import InvalidPrimitive, OffPathAction, PathologicalPartition, Unsupported
from .reports import FAILS, HOLDS, INCONCLUSIVE, CheckReport, ProbePlan
from .signals import (DiscreteSignals, LocationFamily, MixtureAtomFamily, SignalModel,
                      action_probability)

GRID_POINTS = 2048
TAIL_POWERS = 41          # tail probes spread * 2**k, k = 0..40
TAIL_QUANTILE = 1e-9
BISECT_TOL = 1e-10
MAX_THRESHOLDS = 64
STILL_TOL = 1e-12
STILL_STEPS = 50
HORIZON = 5000


def _check(u: UtilityTable, mu: Belief, model: SignalModel):
    if not (u.space == mu.space == model.space):
        raise InvalidPrimitive("utility, belief and signal model must share one state space")
    if isinstance(model, MixtureAtomFamily):
        raise Unsupported("strategy partitions need a finite signal set or a location family")


# --- strategy partitions --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StrategyPartition:
    """Canonical pure strategy of one agent at a given public belief.

    Discrete backends store one action index per signal; location
    families store thresholds ``bounds`` with ``acts[i]`` played on
    (bounds[i-1], bounds[i]], the outer pieces being unbounded.
    """

    public_belief: Belief
    actions: tuple
    signals: Optional[tuple] = None
    signal_actions: Optional[np.ndarray] = None
    bounds: Optional[np.ndarray] = None
    acts: Optional[np.ndarray] = None
    tie_records: tuple = ()

    @property
    def is_intervals(self) -> bool:
        return self.bounds is not None

    @property
    def n_thresholds(self) -> int:
        return len(self.bounds) if self.is_intervals else 0

    @property
    def single_action(self) -> Optional[int]:
        """Index of the action owning every signal, if there is one."""
        if self.is_intervals:
            return int(self.acts[0]) if len(self.bounds) == 0 else None
        first = int(self.signal_actions[0])
        return first if np.all(self.signal_actions == first) else None

    def intervals(self) -> list:
        """(lo, hi, action index) pieces in increasing order."""
        edges = [-np.inf, *self.bounds.tolist(), np.inf]
        return [(edges[i], edges[i + 1], int(self.acts[i])) for i in range(len(self.acts))]

    @property
    def assignment(self) -> dict:
        """Action label -> signals (discrete) or list of (lo, hi] intervals."""
        out = {}
        if self.is_intervals:
            for lo, hi, a in self.intervals():
                out.setdefault(self.actions[a], []).append((lo, hi))
        else:
            for s, a in zip(self.signals, self.signal_actions):
                out.setdefault(self.actions[int(a)], []).append(s)
        return out

    def action_index_for(self, s) -> int:
        if self.is_intervals:
            return int(self.acts[int(np.searchsorted(self.bounds, s, side="left"))])
        return int(self.signal_actions[self.signals.index(s)])

    def action_for(self, s):
        return self.actions[self.action_index_for(s)]


def _support(mu: Belief) -> np.ndarray:
    return np.flatnonzero(mu.mass > 0)


def _probe_points(model: LocationFamily, mu: Belief, grid_points: int) -> np.ndarray:
    st = model.space.values[_support(mu)]
    glo = st[0] + model.quantile(TAIL_QUANTILE)
    ghi = st[-1] + model.quantile(1.0 - TAIL_QUANTILE)
    return K.probe_points(glo, ghi, grid_points, model.spread, TAIL_POWERS)


def _py_choose(model, st, logmu, usup, tie_abs, s) -> np.ndarray:
    """Canonical choices for an array of signals (any location family)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    lw = logmu[None, :] + model.log_g(s[:, None] - st[None, :])
    w = np.exp(lw - lw.max(axis=1, keepdims=True))
    eu = w @ usup.T
    ok = eu >= eu.max(axis=1, keepdims=True) - tie_abs * w.sum(axis=1, keepdims=True)
    return np.argmax(ok, axis=1)


def _py_partition(model, st, logmu, usup, tie_abs, pts):
    """Same bracketing and bisection as the compiled kernel, for custom densities."""
    lab = _py_choose(model, st, logmu, usup, tie_abs, pts)
    one = lambda s: int(_py_choose(model, st, logmu, usup, tie_abs, s)[0])
    bounds, acts = [], [int(lab[0])]
    for i in np.flatnonzero(lab[1:] != lab[:-1]) + 1:
        stack = [(pts[i - 1], int(lab[i - 1]), pts[i], int(lab[i]))]
        while stack:
            lo, la, hi, ha = stack.pop()
            for _ in range(400):
                if hi - lo <= max(BISECT_TOL, 4e-16 * max(abs(lo), abs(hi))):
                    break
                mid = 0.5 * (lo + hi)
                am = one(mid)
                if am == la:
                    lo = mid
                elif am == ha:
                    hi = mid
                else:
                    stack.append((mid, am, hi, ha))
                    hi, ha = mid, am
            bounds.append(0.5 * (lo + hi))
            acts.append(ha)
            if len(bounds) > MAX_THRESHOLDS:
                return None, None
    return np.array(bounds), np.array(acts, dtype=np.int64)


def strategy_partition(u: UtilityTable, mu: Belief, model: SignalModel, tie_tol: float = TIE_TOL,
                       grid_points: int = GRID_POINTS) -> StrategyPartition:
    """Canonical strategy: after each signal play the lowest-index optimal action.

    For location families sign changes of the canonical choice are
    bracketed on a uniform grid covering every supported state's central
    1 - 2e-9 probability range, flanked by geometric tail probes, and then
    bisected to 1e-10.

    Raises
    ------
    PathologicalPartition
        If more than 64 thresholds appear.
    """
    _check(u, mu, model)
    tie_abs = u.tie_abs(tie_tol)
    if isinstance(model, DiscreteSignals):
        lw = mu.log_mass[None, :] + model.log_f
        sup = mu.mass > 0
        w = np.zeros_like(lw)
        w[:, sup] = np.exp(lw[:, sup] - lw[:, sup].max(axis=1, keepdims=True))
        post = w / w.sum(axis=1, keepdims=True)
        eu = post @ u.u.T
        ok = eu >= eu.max(axis=1, keepdims=True) - tie_abs
        sa = np.argmax(ok, axis=1)
        ties = tuple(s for s, row in zip(model.signals, ok) if row.sum() > 1)
        sa.setflags(write=False)
        return StrategyPartition(mu, u.actions, signals=model.signals, signal_actions=sa, tie_records=ties)
    sup = _support(mu)
    st = model.space.values[sup]
    logmu = K.log_of(np.ascontiguousarray(mu.mass[sup]))
    usup = np.ascontiguousarray(u.u[:, sup])
    pts = _probe_points(model, mu, grid_points)
    if model.named:
        bounds = np.empty(MAX_THRESHOLDS + 1)
        acts = np.empty(MAX_THRESHOLDS + 2, dtype=np.int64)
        m = K.partition(model.code, model.p0, model.p1, st, logmu, usup, tie_abs, pts, TAIL_POWERS,
                        BISECT_TOL, MAX_THRESHOLDS, bounds, acts)
        if m < 0:
            raise PathologicalPartition(f"more than {MAX_THRESHOLDS} thresholds at {mu!r}")
        bounds, acts = bounds[:m].copy(), acts[:m + 1].copy()
    else:
        bounds, acts = _py_partition(model, st, logmu, usup, tie_abs, pts)
        if bounds is None:
            raise PathologicalPartition(f"more than {MAX_THRESHOLDS} thresholds at {mu!r}")
    bounds.setflags(write=False)
    acts.setflags(write=False)
    ties = tuple((float(b), u.actions[int(acts[i])], u.actions[int(acts[i + 1])]) for i, b in enumerate(bounds))
    return StrategyPartition(mu, u.actions, bounds=bounds, acts=acts, tie_records=ties)


# --- public belief transitions ----------------------------------------------------

def _log_action_probs(partition: StrategyPartition, a: int, model: SignalModel, mu: Belief) -> np.ndarray:
    """log Pr(a | w) on the support of ``mu``, zero elsewhere."""
    lp = np.zeros(len(model.space))
    sup = mu.mass > 0
    if partition.is_intervals:
        if model.named:
            m = len(partition.bounds)
            bounds = np.ascontiguousarray(partition.bounds) if m else np.empty(1)
            for k in np.flatnonzero(sup):
                lp[k] = K.log_action_prob(model.code, model.p0, model.p1, bounds, m,
                                          np.ascontiguousarray(partition.acts), a, model.space.values[k])
        else:
            ivs = [(lo, hi) for lo, hi, b in partition.intervals() if b == a]
            for k in np.flatnonzero(sup):
                w = model.space.values[k]
                lp[k] = logsumexp([model.log_interval(lo - w, hi - w) for lo, hi in ivs])
    else:
        rows = partition.signal_actions == a
        if not rows.any():
            lp[sup] = -np.inf
        else:
            lp[sup] = logsumexp(model.log_f[rows][:, sup], axis=0)
    return lp


def _belief_after_index(mu: Belief, partition: StrategyPartition, ai: int, model: SignalModel) -> Belief:
    lp = _log_action_probs(partition, ai, model, mu)
    if not np.any(np.isfinite(lp[mu.mass > 0])):
        raise OffPathAction(f"action {partition.actions[ai]!r} has probability zero")
    return Belief(mu.space, K.update_mass(mu.mass, lp))


def belief_after_action(mu: Belief, partition: StrategyPartition, a, model: SignalModel) -> Belief:
    """Public belief after observing action label ``a`` played under ``partition``.

    Raises
    ------
    OffPathAction
        If ``a`` has probability zero in every supported state. The
        simulator's convention for such actions is to leave the belief
        unchanged.
    """
    return _belief_after_index(mu, partition, partition.actions.index(a), model)


def action_distribution(mu: Belief, partition: StrategyPartition, model: SignalModel) -> dict:
    """Pr(a | mu) for every action label."""
    probs = {a: 0.0 for a in partition.actions}
    for j in np.flatnonzero(mu.mass > 0):
        for a, p in action_probability(model, partition, model.space.states[j]).items():
            probs[a] += mu.mass[j] * p
    return probs


def martingale_residual(mu: Belief, partition: StrategyPartition, model: SignalModel) -> float:
    """max_w |sum_a Pr(a|mu) mu_a(w) - mu(w)| over on-path actions a."""
    total = np.zeros(len(mu.space))
    for a, p in action_distribution(mu, partition, model).items():
        if p > 0:
            total += p * belief_after_action(mu, partition, a, model).mass
    return float(np.max(np.abs(total - mu.mass)))


# --- stationarity -------------------------------------------------------------------

def _stationary_probes(model: SignalModel, mu: Belief, plan: ProbePlan):
    """Signals to test and the verdict method they support."""
    if isinstance(model, DiscreteSignals):
        return None, "exact"
    sup = model.space.values[_support(mu)]
    if model.kind == "laplace" and plan.signal_range is None:
        # on each piece between support states every expected difference is
        # A e^{s/b} + B e^{-s/b}, so signs at the breakpoints decide
        return np.concatenate([[sup[0] - model.scale], sup, [sup[-1] + model.scale]]), "laplace-breakpoints"
    if plan.signal_range is not None:
        lo, hi = plan.signal_range
        return np.linspace(lo, hi, plan.stationary_grid), "grid"
    pts = _probe_points(model, mu, plan.stationary_grid)
    return np.asarray(pts), "grid+tail"


def _posterior_stack(model: SignalModel, mu: Belief, signals) -> np.ndarray:
    sup = mu.mass > 0
    if signals is None:
        lw = model.log_f[:, sup] + mu.log_mass[None, sup]
    else:
        lw = model.log_likelihood_matrix(signals)[:, sup] + mu.log_mass[None, sup]
    w = np.exp(lw - lw.max(axis=1, keepdims=True))
    post = np.zeros((lw.shape[0], len(mu.space)))
    post[:, sup] = w / w.sum(axis=1, keepdims=True)
    return post


def detect_stationary(u: UtilityTable, mu: Belief, model: SignalModel, plan: Optional[ProbePlan] = None,
                      tie_tol: float = TIE_TOL) -> CheckReport:
    """Whether some action optimal at ``mu`` stays optimal after every signal.

    Finite signal sets are decided exactly. Laplace families are decided
    exactly from the signs at the supported states and one point in each
    tail. Other location families are checked on a grid with tail probes
    and the verdict is labelled accordingly.
    """
    _check(u, mu, model)
    plan = plan or ProbePlan()
    signals, method = _stationary_probes(model, mu, plan)
    sig_list = list(model.signals) if signals is None else signals.tolist()
    post = _posterior_stack(model, mu, signals)
    eu = post @ u.u.T
    tie_abs = u.tie_abs(tie_tol)
    margin = eu - eu.max(axis=1, keepdims=True)  # <= 0
    cands = choice_indices(u, mu.mass, tie_tol)
    truncated = mu.space.truncated
    failures = []
    for a in cands:
        bad = np.flatnonzero(margin[:, a] < -tie_abs)
        if len(bad) == 0:
            slack = float(np.min(margin[:, a]))
            return CheckReport("stationary", HOLDS, {"action": u.actions[a], "min_margin": slack},
                               method=method, truncated_domain=truncated)
        # report the highest offending signal
        at = int(bad[-1])
        better = int(np.argmax(eu[at]))
        failures.append({"action": u.actions[a], "signal": sig_list[at], "better_action": u.actions[better],
                         "gain": float(-margin[at, a]), "n_offending": int(len(bad))})
    verdict = FAILS
    if method.startswith("grid") and all(f["gain"] < 1e3 * tie_abs + 1e-300 for f in failures):
        verdict = INCONCLUSIVE
    return CheckReport("stationary", verdict, {"candidates": failures}, method=method, truncated_domain=truncated)


@dataclass(frozen=True)
class ScanEntry:
    belief: Belief
    stationary: bool
    adequate: bool
    verdict: str

    @property
    def hit(self) -> bool:
        """Stationary without adequate knowledge: a certificate of inadequate learning."""
        return self.stationary and not self.adequate


def simplex_grid(space: StateSpace, support: Sequence[int], grid_step: float) -> list:
    """Beliefs with all coordinates in ``grid_step`` units and exactly the given support."""
    m = int(round(1.0 / grid_step))
    if not 0 < grid_step < 1 or abs(m * grid_step - 1.0) > 1e-9:
        raise InvalidPrimitive("grid_step must divide 1 and lie in (0, 1)")
    idx = [space.index(w) for w in support]
    k = len(idx)
    out = []
    # compositions of m into k positive parts
    for cuts in itertools.combinations(range(1, m), k - 1):
        parts = np.diff((0, *cuts, m))
        wts = np.zeros(len(space))
        wts[idx] = parts
        out.append(make_belief(space, wts))
    return out


def faces(space: StateSpace) -> list:
    """Every nonempty subset of states, smallest first."""
    return [c for r in range(1, len(space) + 1) for c in itertools.combinations(space.states, r)]


def stationary_scan(u: UtilityTable, model: SignalModel, support: Optional[Sequence[int]] = None,
                    grid_step: float = 0.02, plan: Optional[ProbePlan] = None,
                    tie_tol: float = TIE_TOL) -> list:
    """Classify grid beliefs on one face (or on every face when ``support`` is None)."""
    todo = faces(u.space) if support is None else [tuple(support)]
    out = []
    for face in todo:
        for mu in simplex_grid(u.space, face, grid_step):
            rep = detect_stationary(u, mu, model, plan, tie_tol)
            out.append(ScanEntry(mu, rep.holds, adequate_knowledge(u, mu, tie_tol).holds, rep.verdict))
    return out


def scan_hits(entries) -> list:
    return [e for e in entries if e.hit]


# --- FOSD ---------------------------------------------------------------------------

def fosd_check(model: SignalModel, mu: Belief, s, s2, tol: float = 1e-12) -> bool:
    """Strict first-order dominance of the posterior after ``s2`` over the one after ``s``.

    True iff the cumulative mass after ``s`` strictly exceeds that after
    ``s2`` at every state below the top. When the two signals are
    equivalent (proportional likelihoods) strictness is waived and the
    result is whether the two posteriors coincide.
    """
    from .signals import bayes_update

    l1, l2 = model.log_likelihoods(s), model.log_likelihoods(s2)
    d = l2 - l1
    p1, p2 = bayes_update(mu, model, s).mass, bayes_update(mu, model, s2).mass
    if np.ptp(d) <= tol * max(1.0, np.max(np.abs(d))):
        return bool(np.allclose(p1, p2, rtol=0, atol=1e-12))
    c1, c2 = np.cumsum(p1)[:-1], np.cumsum(p2)[:-1]
    return bool(np.all(c1 > c2))


# --- simulation ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    """One simulated run.

    ``actions`` holds action indices; ``beliefs[n]`` is the public belief
    after agent ``n + 1`` acts. Markers ``cascade_at`` and ``herd_at`` are
    1-based agent indices.
    """

    true_state: int
    seed: object
    horizon: int
    action_labels: tuple
    prior: Belief
    signals: np.ndarray = field(repr=False)
    actions: np.ndarray = field(repr=False)
    beliefs: np.ndarray = field(repr=False)
    cascade_at: Optional[int]
    herd_at: Optional[int]
    stationarity_mode: str
    stopped_early: bool
    grid_points: Optional[int] = None

    @property
    def n_steps(self) -> int:
        return len(self.actions)

    @property
    def steps(self) -> list:
        sp = self.prior.space
        return [(s, self.action_labels[int(a)], Belief(sp, b))
                for s, a, b in zip(self.signals.tolist(), self.actions, self.beliefs)]

    @property
    def final_belief(self) -> Belief:
        return Belief(self.prior.space, self.beliefs[-1])

    def action_index_at(self, n: int) -> int:
        """Action index of agent ``n`` (1-based); after an early stop the cascade action persists."""
        if not 1 <= n <= self.horizon:
            raise IndexError(f"agent {n} outside 1..{self.horizon}")
        if n <= self.n_steps:
            return int(self.actions[n - 1])
        if not self.stopped_early:
            raise IndexError(f"agent {n} was not simulated")
        return int(self.actions[-1])

    def action_at(self, n: int):
        return self.action_labels[self.action_index_at(n)]

    def run_start(self, n: int) -> int:
        """First agent of the constant-action run containing agent ``n``."""
        if n > self.n_steps:
            n = self.n_steps
        a = self.actions[:n]
        diff = np.flatnonzero(a != a[-1])
        return int(diff[-1]) + 2 if len(diff) else 1

    def csv_text(self) -> str:
        buf = io.StringIO()
        states = self.prior.space.states
        buf.write(",".join(["n", "signal", "action", *(f"mu_{w}" for w in states)]) + "\n")
        for i, (s, a, b) in enumerate(zip(self.signals.tolist(), self.actions, self.beliefs), start=1):
            row = [str(i), f"{s:.17g}", str(self.action_labels[int(a)]), *(f"{x:.17g}" for x in b)]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def to_csv(self, path):
        return atomic_write_text(path, self.csv_text())


def _draw_state(prior: Belief, v: float) -> int:
    cdf = np.cumsum(prior.mass)
    i = int(np.searchsorted(cdf, v * cdf[-1], side="right"))
    i = min(i, len(cdf) - 1)
    while prior.mass[i] == 0:
        i -= 1
    return prior.space.states[i]


def simulate_run(u: UtilityTable, model: SignalModel, prior: Belief, horizon: int = HORIZON, seed=0, *,
                 true_state: Optional[int] = None, tie_tol: float = TIE_TOL, grid_points: int = GRID_POINTS,
                 early_stop: bool = True, still_tol: float = STILL_TOL, still_steps: int = STILL_STEPS) -> Trajectory:
    """Simulate agents 1..horizon under the canonical equilibrium.

    The state is drawn from ``prior`` using the first uniform of the
    stream seeded by ``seed``; ``true_state`` overrides the draw without
    shifting the rest of the stream. The run stops early once the
    partition is a single action (the public belief is stationary) and
    the belief has moved less than ``still_tol`` for ``still_steps``
    consecutive agents.
    """
    _check(u, prior, model)
    if horizon < 1:
        raise InvalidPrimitive("horizon must be at least 1")
    rng = np.random.default_rng(seed)
    drawn = _draw_state(prior, rng.random())
    w = drawn if true_state is None else int(true_state)
    if prior[w] == 0:
        raise InvalidPrimitive(f"true state {w} is outside the prior's support")
    n_states = len(prior.space)
    if isinstance(model, LocationFamily) and model.named:
        noise = model.sample_noise(rng, horizon)
        sig = np.empty(horizon)
        act = np.empty(horizon, dtype=np.int64)
        bel = np.empty((horizon, n_states))
        pts = _probe_points(model, prior, grid_points)
        n, streak, status = K.run_location(model.code, model.p0, model.p1, model.space.values, prior.mass.copy(),
                                           np.ascontiguousarray(u.u), u.tie_abs(tie_tol), pts, TAIL_POWERS,
                                           BISECT_TOL, MAX_THRESHOLDS, float(w), noise, still_tol, still_steps,
                                           early_stop, sig, act, bel)
        if status < 0:
            raise PathologicalPartition(f"more than {MAX_THRESHOLDS} thresholds at agent {n + 1}")
        sig, act, bel = sig[:n], act[:n], bel[:n]
        mode = "grid+tail"
    else:
        if isinstance(model, LocationFamily):
            draws = w + model.sample_noise(rng, horizon)
        else:
            draws = [model.signal_from_uniform(w, v) for v in rng.random(horizon)]
        sig, act, bel = [], [], []
        mu = prior
        still, streak = 0, -1
        for n in range(horizon):
            part = strategy_partition(u, mu, model, tie_tol, grid_points)
            s = draws[n]
            a = part.action_index_for(s)
            new = _belief_after_index(mu, part, a, model)
            moved = float(np.max(np.abs(new.mass - mu.mass)))
            mu = new
            sig.append(float(s))
            act.append(a)
            bel.append(mu.mass)
            single = part.single_action is not None
            streak = (n if streak < 0 else streak) if single else -1
            still = still + 1 if moved < still_tol else 0
            if early_stop and single and still >= still_steps:
                break
        sig, act, bel = np.array(sig), np.array(act, dtype=np.int64), np.array(bel)
        mode = "exact" if isinstance(model, DiscreteSignals) else "grid+tail"
    n = len(act)
    diff = np.flatnonzero(act != act[-1])
    herd_at = int(diff[-1]) + 2 if len(diff) else 1
    for arr in (sig, act, bel):
        arr.setflags(write=False)
    return Trajectory(true_state=w, seed=seed, horizon=horizon, action_labels=u.actions, prior=prior,
                      signals=sig, actions=act, beliefs=bel, cascade_at=None if streak < 0 else streak + 1,
                      herd_at=herd_at, stationarity_mode=mode, stopped_early=n < horizon,
                      grid_points=None if isinstance(model, DiscreteSignals) else grid_points)
