"""Checkers for preference and informational conditions.

Ratio probes are evaluated in the log domain. Every numeric verdict can be
upgraded by an analytic certificate: closed-form ratio bounds for the named
location families, attained minima for finite signal sets, and the atom
structure of the integer mixture family.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import TIE_TOL, Belief, UtilityTable, make_belief, point_choice_indices
from .errors import ImplicationViolation, InvalidPrimitive, Unsupported
from .reports import FAILS, HOLDS, INCONCLUSIVE, CheckReport, ProbePlan
from .signals import (DiscreteSignals, FiniteMatrix, LocationFamily, MixtureAtomFamily,
                      PosteriorSequence, SignalModel)

MLRP_TOL = 1e-12


# --- single crossing differences --------------------------------------------------

def _crossing_triple(d: np.ndarray, tol: float) -> Optional[tuple]:
    """First (i1, i2, i3) with strict signs (+, -, +) or (-, +, -), zeros skipped."""
    signs = np.where(d > tol, 1, np.where(d < -tol, -1, 0))
    first = None
    for i1, s1 in enumerate(signs):
        if s1 == 0:
            continue
        if first is None:
            first = (i1, s1)
            continue
        if s1 != first[1]:
            # second run starts; look for a return to the first sign
            for i3 in range(i1 + 1, len(signs)):
                if signs[i3] == first[1]:
                    return first[0], i1, i3
            return None
    return None


def check_scd(u: UtilityTable, tie_tol: float = TIE_TOL) -> CheckReport:
    """Single crossing differences: every pairwise difference changes strict sign at most once.

    Differences within ``tie_tol`` times the larger row magnitude of the
    pair count as zero and never break a run.
    """
    st = u.space.states
    log = []
    for i, j in itertools.combinations(range(len(u.actions)), 2):
        d = u.u[i] - u.u[j]
        tol = tie_tol * float(max(np.max(np.abs(u.u[i])), np.max(np.abs(u.u[j]))))
        log.append([f"{u.actions[i]}|{u.actions[j]}", int(np.sum(np.diff(np.sign(d[np.abs(d) > tol])) != 0))])
        hit = _crossing_triple(d, tol)
        if hit is not None:
            outer, inner = (i, j) if d[hit[0]] > 0 else (j, i)
            dd = u.u[outer] - u.u[inner]
            w = {"outer": u.actions[outer], "inner": u.actions[inner],
                 "states": [st[k] for k in hit], "D": [float(dd[k]) for k in hit]}
            return CheckReport("scd", FAILS, w, log, method="exact")
    return CheckReport("scd", HOLDS, {}, log, method="exact")


def scd_oracle(u: UtilityTable, tie_tol: float = TIE_TOL) -> CheckReport:
    """Brute-force interval-choice test on every two-action sub-table and state triple."""
    st = u.space.states
    n = len(st)
    for i, j in itertools.permutations(range(len(u.actions)), 2):
        sub = UtilityTable(u.space, (u.actions[i], u.actions[j]), u.u[[i, j]])
        c = point_choice_indices(sub, tie_tol)
        for k1, k2, k3 in itertools.combinations(range(n), 3):
            if c[k1] == {0} and c[k3] == {0} and 0 not in c[k2]:
                w = {"outer": u.actions[i], "inner": u.actions[j], "states": [st[k1], st[k2], st[k3]]}
                return CheckReport("scd_oracle", FAILS, w, method="exhaustive")
    return CheckReport("scd_oracle", HOLDS, {}, method="exhaustive")


# --- MLRP --------------------------------------------------------------------------

def _ratio_scan_witness(model: LocationFamily) -> Optional[dict]:
    """Search s < s2 with f(s|w2)/f(s|w) > f(s2|w2)/f(s2|w) for the lowest adjacent pair."""
    st = model.space.states
    if len(st) < 2:
        return None
    w, w2 = st[0], st[1]
    r = 10.0 * model.scale
    grid = np.linspace(w - r, w2 + r, 4096)
    tails = w2 + model.spread * 2.0 ** np.arange(0, 30)
    s = np.concatenate([w - model.spread * 2.0 ** np.arange(29, -1, -1), grid, tails])
    lr = model.log_g(s - w2) - model.log_g(s - w)
    run_max = np.maximum.accumulate(lr)
    drop = run_max - lr
    j = int(np.argmax(drop))
    if drop[j] <= MLRP_TOL * max(1.0, abs(lr[j])):
        return None
    i = int(np.argmax(lr[: j + 1]))
    return {"s": float(s[i]), "s_prime": float(s[j]), "state": w, "state_prime": w2,
            "log_ratio_at_s": float(lr[i]), "log_ratio_at_s_prime": float(lr[j])}


def mlrp_all_pairs(model: FiniteMatrix) -> CheckReport:
    """Every (s < s2, w < w2) ratio comparison; oracle for the adjacent check."""
    lf = model.log_f
    for i, i2 in itertools.combinations(range(len(model.signals)), 2):
        for j, j2 in itertools.combinations(range(len(model.space)), 2):
            det = lf[i2, j2] + lf[i, j] - lf[i, j2] - lf[i2, j]
            if det < -MLRP_TOL:
                return CheckReport("mlrp", FAILS, {"signals": [model.signals[i], model.signals[i2]],
                                                   "states": [model.space.states[j], model.space.states[j2]],
                                                   "log_det": float(det)}, method="exhaustive")
    return CheckReport("mlrp", HOLDS, {}, method="exhaustive")


def check_mlrp(model: SignalModel) -> CheckReport:
    """Monotone likelihood ratios in the signal order.

    Raises
    ------
    Unsupported
        For structures without a meaningful signal order.
    """
    if isinstance(model, PosteriorSequence) or not model.ordered:
        raise Unsupported("posterior-generated structures carry no signal order")
    if isinstance(model, FiniteMatrix):
        lf = model.log_f
        det = lf[1:, 1:] + lf[:-1, :-1] - lf[:-1, 1:] - lf[1:, :-1]
        log = [[f"{i},{j}", float(det[i, j])] for i in range(det.shape[0]) for j in range(det.shape[1])]
        if det.size and det.min() < -MLRP_TOL:
            i, j = np.unravel_index(int(np.argmin(det)), det.shape)
            w = {"signals": [model.signals[i], model.signals[i + 1]],
                 "states": [model.space.states[j], model.space.states[j + 1]], "log_det": float(det[i, j])}
            return CheckReport("mlrp", FAILS, w, log, method="exact")
        return CheckReport("mlrp", HOLDS, {}, log, method="exact")
    if isinstance(model, LocationFamily):
        if model.kind in ("normal", "laplace"):
            return CheckReport("mlrp", HOLDS, {"log_concave": True}, method="analytic")
        if model.kind == "custom" and model.tail_exponent is not None and "exponent" in model.params:
            concave = model.tail_exponent >= 1.0
            if concave:
                return CheckReport("mlrp", HOLDS, {"log_concave": True}, method="analytic")
        else:
            concave = None
        if model.kind == "custom" and concave is None:
            r = max(abs(model.quantile(1e-9)), 10.0 * model.scale)
            x = np.linspace(-r, r, 4096)
            lg = model.log_g(x)
            d2 = lg[2:] - 2.0 * lg[1:-1] + lg[:-2]
            log = [[float(x[k + 1]), float(d2[k])] for k in range(0, len(d2), 64)]
            if d2.max() <= 1e-10 * max(1.0, np.max(np.abs(lg))):
                return CheckReport("mlrp", HOLDS, {"log_concave": True, "max_second_difference": float(d2.max())},
                                   log, method="numeric-grid")
        wit = _ratio_scan_witness(model)
        if wit is None:
            return CheckReport("mlrp", INCONCLUSIVE, {"log_concave": False}, method="numeric-grid")
        return CheckReport("mlrp", FAILS, wit, method="analytic" if model.kind == "student_t" else "numeric-grid")
    if isinstance(model, MixtureAtomFamily):
        sig = np.arange(min(model.faithful_signals()) - 3, max(model.faithful_signals()) + 4)
        st = model.space.states
        for w, w2 in zip(st, st[1:]):
            lr = np.array([model.log_ratio(s, w2, w) for s in sig])
            drops = np.flatnonzero(np.diff(lr) < -MLRP_TOL)
            if len(drops):
                k = int(drops[0])
                return CheckReport("mlrp", FAILS, {"s": int(sig[k]), "s_prime": int(sig[k + 1]), "state": w,
                                                   "state_prime": w2, "log_ratio_at_s": float(lr[k]),
                                                   "log_ratio_at_s_prime": float(lr[k + 1])},
                                   method="exact", truncated_domain=model.space.truncated)
        return CheckReport("mlrp", INCONCLUSIVE, {}, method="exact", truncated_domain=model.space.truncated)
    raise Unsupported(f"no MLRP check for {type(model).__name__}")


# --- tails -------------------------------------------------------------------------

@dataclass(frozen=True)
class TailClass:
    """Tail class of a standard density: strictly_subexponential, exponential, thick or unknown."""

    cls: str
    p: Optional[float]
    evidence: dict = field(default_factory=dict)


def tail_classify(fam: LocationFamily) -> TailClass:
    """Classify how fast log g decays; custom densities by regression of log(-log g) on log|s|."""
    if fam.kind == "normal":
        return TailClass("strictly_subexponential", 1.5, {"method": "analytic", "log_g": "quadratic",
                                                          "valid_p": [1.0, 2.0]})
    if fam.kind == "laplace":
        return TailClass("exponential", 1.0, {"method": "analytic", "log_g": "linear"})
    if fam.kind == "student_t":
        return TailClass("thick", 0.0, {"method": "analytic", "log_g": "logarithmic",
                                        "polynomial_degree": fam.p0 + 1.0})
    s = np.logspace(2, 6, 41) * fam.scale
    fits = {}
    for side, x in (("right", s), ("left", -s)):
        neg = -fam.log_g(x)
        if np.any(neg <= 0) or not np.all(np.isfinite(neg)):
            return TailClass("unknown", None, {"method": "regression", "reason": "log g not negative on the window"})
        slope = float(np.polyfit(np.log(s), np.log(neg), 1)[0])
        fits[side] = slope
    p = min(fits.values())
    ev = {"method": "regression", "window": [1e2, 1e6], "slopes": fits}
    if fam.tail_exponent is not None:
        ev["declared"] = fam.tail_exponent
    if p > 1.05:
        return TailClass("strictly_subexponential", p, ev)
    if p < 0.95:
        return TailClass("thick", p, ev)
    return TailClass("unknown", p, ev)


# --- shared probe machinery -----------------------------------------------------------

def _verdict_from_records(values: np.ndarray, plan: ProbePlan):
    """Record-minimum subsequence of log-metric values in probe order.

    Returns (verdict, record indices). Holds when the last record is below
    the limit and at least ``trend_window`` records exist; fails when even
    the overall minimum stays above delta.
    """
    rec = []
    best = np.inf
    for i, v in enumerate(values):
        if v < best:
            best = v
            rec.append(i)
    if best < plan.log_eps and len(rec) >= plan.trend_window:
        return HOLDS, rec
    if best > plan.log_delta:
        return FAILS, rec
    return INCONCLUSIVE, rec


def _verdict_from_trend(values: np.ndarray, plan: ProbePlan) -> str:
    """Holds if the running minimum ends below the limit with a non-increasing tail."""
    tail = values[-plan.trend_window:]
    if np.min(values) < plan.log_eps and values[-1] < plan.log_eps and np.all(np.diff(tail) <= 1e-12):
        return HOLDS
    if np.min(values) > plan.log_delta:
        return FAILS
    return INCONCLUSIVE


def _bound_C(max_log_ratio: float) -> float:
    """1 if every ratio is below 1, else the next power of two above the largest ratio."""
    if max_log_ratio < 0:
        return 1.0
    return float(2.0 ** math.ceil(max_log_ratio / math.log(2.0) + 1e-12))


def _location_probes(model: LocationFamily, anchor: float, direction: int, plan: ProbePlan) -> np.ndarray:
    return anchor + direction * model.spread * 2.0 ** np.arange(plan.max_power + 1)


def _pair_log_ratio(model: SignalModel, s: np.ndarray, w2, w) -> np.ndarray:
    """log f(s|w2) - log f(s|w) along an array of probes (location) or all signals (discrete)."""
    if isinstance(model, DiscreteSignals):
        j2, j = model.space.index(w2), model.space.index(w)
        return model.log_f[:, j2] - model.log_f[:, j]
    return model.log_g(s - w2) - model.log_g(s - w)


def _normal_pair_bound(model: LocationFamily, w, terms) -> Optional[float]:
    """Closed-form lower bound on log sum_j c_j f(s|w_j)/f(s|w) over all s for normal kinds.

    Each term is c_j exp(alpha_j s + beta_j); a positive and a negative
    slope together bound the sum below by the minimum of A e^{a s} + B e^{-g s}.
    """
    sig2 = model.p0 ** 2
    pos, neg = [], []
    for w2, logc in terms:
        alpha = (w2 - w) / sig2
        beta = -(w2 - w) * (w2 + w) / (2.0 * sig2)
        (pos if alpha > 0 else neg).append((alpha, logc + beta))
    if not pos or not neg:
        return None
    best = -np.inf
    for a, la in pos:
        for g_, lb in neg:
            g = -g_
            # min of e^{la + a s} + e^{lb - g s}
            val = la + (a / (a + g)) * (math.log(g) + lb - math.log(a) - la) + math.log1p(a / g)
            best = max(best, val)
    return best


# --- distinguishability ------------------------------------------------------------------

def _comparison_states(space, w, comparison) -> tuple:
    if comparison == "lower":
        return space.lower(w)
    if comparison == "upper":
        return space.upper(w)
    if comparison == "complement":
        return tuple(x for x in space.states if x != w)
    return tuple(int(x) for x in comparison)


def _weighted_log_r(model, s, w, others, mu: Belief) -> np.ndarray:
    lw = mu.log_mass
    j = mu.space.index(w)
    rows = [lw[mu.space.index(x)] + _pair_log_ratio(model, s, x, w) for x in others
            if mu.mass[mu.space.index(x)] > 0]
    if not rows:
        return np.full(len(s) if s is not None else len(model.signals), -np.inf)
    return logsumexp(np.vstack(rows), axis=0) - lw[j]


def distinguishability(model: SignalModel, w, comparison, mu: Belief, plan: Optional[ProbePlan] = None) -> CheckReport:
    """Whether signals can make r(s) = sum_{w2} mu(w2) f(s|w2) / (mu(w) f(s|w)) arbitrarily small.

    ``comparison`` is "lower", "upper", "complement" or an explicit set of
    states. The probe log stores log r.
    """
    plan = plan or ProbePlan()
    if mu.space != model.space:
        raise InvalidPrimitive("belief and model live on different state spaces")
    if mu[w] <= 0:
        raise InvalidPrimitive(f"state {w} has zero prior mass")
    others = _comparison_states(model.space, w, comparison)
    if not others or w in others:
        raise InvalidPrimitive("comparison set must be nonempty and exclude the state itself")
    name = "distinguishability"
    trunc = model.space.truncated
    weights = [(x, float(mu.log_mass[mu.space.index(x)] - mu.log_mass[mu.space.index(w)]))
               for x in others if mu[x] > 0]
    if not weights:
        return CheckReport(name, HOLDS, {"reason": "comparison set has zero mass"}, method="exact",
                           truncated_domain=trunc)

    if isinstance(model, MixtureAtomFamily):
        return _mixture_distinguishability(model, w, weights, plan)

    if isinstance(model, DiscreteSignals):
        lr = _weighted_log_r(model, None, w, others, mu)
        log = [[s, float(v)] for s, v in zip(model.signals, lr)]
        if isinstance(model, FiniteMatrix):
            i = int(np.argmin(lr))
            return CheckReport(name, FAILS, {"signal": model.signals[i], "min_log_ratio": float(lr[i])}, log,
                               method="finite-minimum", truncated_domain=trunc)
        verdict, rec = _verdict_from_records(lr, plan)
        wit = {"subsequence": [model.signals[i] for i in rec], "final_log_ratio": float(lr[rec[-1]]),
               "min_log_ratio": float(np.min(lr))}
        return CheckReport(name, verdict, wit, log, method="subsequence", truncated_domain=trunc)

    # location families: certificates first
    bound = None
    lbs = [model.log_ratio_lower_bound(w - x) for x, _ in weights]
    if all(b is not None for b in lbs):
        bound = float(logsumexp([b + c for b, (_, c) in zip(lbs, weights)]))
    elif model.kind == "normal":
        bound = _normal_pair_bound(model, w, weights)
    log, dirs = [], {}
    for d in (+1, -1):
        s = _location_probes(model, w, d, plan)
        lr = logsumexp(np.vstack([c + _pair_log_ratio(model, s, x, w) for x, c in weights]), axis=0)
        dirs[d] = (s, lr, _verdict_from_trend(lr, plan))
        log += [[float(a), float(b)] for a, b in zip(s, lr)]
    if bound is not None:
        return CheckReport(name, FAILS, {"log_lower_bound": bound, "state": w, "comparison": list(others)},
                           log, method="analytic", truncated_domain=trunc)
    for d in (+1, -1):
        s, lr, v = dirs[d]
        if v == HOLDS:
            return CheckReport(name, HOLDS, {"direction": "+inf" if d > 0 else "-inf",
                                             "final_signal": float(s[-1]), "final_log_ratio": float(lr[-1])},
                               log, method="numeric", truncated_domain=trunc)
    if all(dirs[d][2] == FAILS for d in dirs):
        lo = min(float(np.min(dirs[d][1])) for d in dirs)
        return CheckReport(name, FAILS, {"min_log_ratio": lo}, log, method="numeric", truncated_domain=trunc)
    return CheckReport(name, INCONCLUSIVE, {}, log, method="numeric", truncated_domain=trunc)


def _mixture_distinguishability(model: MixtureAtomFamily, w, weights, plan: ProbePlan) -> CheckReport:
    # signals whose atoms sit on window states, plus probes below them; signals
    # above the faithful range only see truncation effects and are excluded
    faithful = model.faithful_signals()
    lo = min(faithful)
    down = lo - 2 ** np.arange(plan.max_power + 1)
    sig = np.concatenate([down[::-1], np.arange(lo, max(faithful) + 1)])
    lr = np.array([logsumexp([c + model.log_ratio(int(s), x, w) for x, c in weights]) for s in sig])
    log = [[int(s), float(v)] for s, v in zip(sig, lr)]
    i = int(np.argmin(lr))
    wit = {"min_signal": int(sig[i]), "min_log_ratio": float(lr[i]), "faithful_signals": [int(lo), int(max(faithful))],
           "log_ratio_at_top_faithful_signal": float(lr[-1])}
    if lr[i] > plan.log_delta:
        return CheckReport("distinguishability", FAILS, wit, log, method="exact-faithful-range", truncated_domain=True)
    verdict, _ = _verdict_from_records(lr, plan)
    return CheckReport("distinguishability", verdict, wit, log, method="exact-faithful-range", truncated_domain=True)


# --- directional unboundedness --------------------------------------------------------

def _location_direction(model: LocationFamily, w, others, direction: int, plan: ProbePlan, anchor=None):
    """Probe max_{w2 in others} f(s|w2)/f(s|w) along s = anchor + direction * spread * 2^k."""
    s = _location_probes(model, w if anchor is None else anchor, direction, plan)
    lr = np.vstack([_pair_log_ratio(model, s, x, w) for x in others])
    metric = lr.max(axis=0)
    return s, lr, metric


def _family_certificate(model: LocationFamily, w, others) -> Optional[dict]:
    """Pointwise lower bound for the closest comparison state, if the family admits one."""
    x = min(others, key=lambda o: abs(o - w))
    lb = model.log_ratio_lower_bound(w - x)
    if lb is None:
        return None
    return {"state": w, "other": x, "log_lower_bound": lb}


def _laplace_constancy(model: LocationFamily, w, x, plan: ProbePlan) -> dict:
    """Check f(s|x)/f(s|w) = exp((x - w)/b) exactly for s beyond both states."""
    top = max(w, x)
    s = top + model.spread * 2.0 ** np.arange(plan.max_power + 1)
    s = np.concatenate([top + np.array([1e-9, 0.5, 1.0]), s])
    lr = model.log_g(s - x) - model.log_g(s - w)
    expected = (x - w) / model.p0
    dev = float(np.max(np.abs(np.exp(lr) - math.exp(expected))))
    return {"state": w, "other": x, "log_ratio": expected, "max_abs_deviation": dev, "probes": len(s)}


def check_dub(model: SignalModel, plan: Optional[ProbePlan] = None) -> CheckReport:
    """Directionally unbounded beliefs with a certified uniform bound C per state.

    For each state, a lower witness sequence must drive the likelihood
    ratio of every lower state to zero while all those ratios stay below
    C, and symmetrically for upper states.
    """
    plan = plan or ProbePlan()
    name = "dub"
    space = model.space
    trunc = space.truncated
    if isinstance(model, MixtureAtomFamily):
        return _mixture_dub(model, plan)
    if isinstance(model, FiniteMatrix):
        for w in space.states:
            for comp in ("lower", "upper"):
                others = _comparison_states(space, w, comp)
                if not others:
                    continue
                m = np.max(np.vstack([_pair_log_ratio(model, None, x, w) for x in others]), axis=0)
                i = int(np.argmin(m))
                return CheckReport(name, FAILS, {"state": w, "direction": comp, "signal": model.signals[i],
                                                 "min_max_log_ratio": float(m[i])},
                                   [[s, float(v)] for s, v in zip(model.signals, m)], method="finite-minimum")
        return CheckReport(name, HOLDS, {"reason": "single state"}, method="exact")

    per_state, log, verdicts = {}, [], []
    if isinstance(model, PosteriorSequence):
        for w in space.states:
            entry = {}
            for comp in ("lower", "upper"):
                others = _comparison_states(space, w, comp)
                if not others:
                    continue
                lr = np.vstack([_pair_log_ratio(model, None, x, w) for x in others])
                metric = lr.max(axis=0)
                v, rec = _verdict_from_records(metric, plan)
                verdicts.append(v)
                entry[comp] = {"verdict": v, "subsequence": [model.signals[i] for i in rec],
                               "final_log_ratio": float(metric[rec[-1]]), "min_log_ratio": float(metric.min())}
                if v == HOLDS:
                    entry[comp]["C"] = _bound_C(float(lr[:, rec].max()))
                log += [[f"{w}:{comp}:{s}", float(x)] for s, x in zip(model.signals, metric)]
            per_state[w] = entry
        return _dub_report(name, per_state, verdicts, log, "subsequence", trunc)

    # location families
    tail = tail_classify(model)
    method = "numeric"
    for w in space.states:
        entry = {}
        for comp, direction in (("lower", +1), ("upper", -1)):
            others = _comparison_states(space, w, comp)
            if not others:
                continue
            cert = _family_certificate(model, w, others)
            s, lr, metric = _location_direction(model, w, others, direction, plan)
            log += [[float(a), float(b)] for a, b in zip(s, metric)]
            if cert is not None:
                v = FAILS
                entry[comp] = {"verdict": v, "certificate": cert}
                if model.kind == "laplace":
                    entry[comp]["constancy"] = _laplace_constancy(model, w, cert["other"], plan)
                method = "analytic"
            else:
                v = _verdict_from_trend(metric, plan)
                if v == INCONCLUSIVE and tail.cls == "strictly_subexponential" and metric[-1] < plan.log_eps:
                    v = HOLDS
                entry[comp] = {"verdict": v, "direction": "+inf" if direction > 0 else "-inf",
                               "final_signal": float(s[-1]), "final_log_ratio": float(metric[-1])}
                if v == HOLDS:
                    entry[comp]["C"] = _bound_C(float(lr.max()))
                    if tail.cls == "strictly_subexponential":
                        method = "analytic+numeric"
            verdicts.append(v)
        per_state[w] = entry
    rep = _dub_report(name, per_state, verdicts, log, method, trunc)
    rep.witnesses["tail_class"] = tail.cls
    return rep


def _dub_report(name, per_state, verdicts, log, method, trunc) -> CheckReport:
    if any(v == FAILS for v in verdicts):
        verdict = FAILS
    elif all(v == HOLDS for v in verdicts):
        verdict = HOLDS
    else:
        verdict = INCONCLUSIVE
    wit = {"per_state": per_state}
    if verdict == HOLDS:
        cs = [d["C"] for e in per_state.values() for d in e.values() if "C" in d]
        wit["C"] = max(cs) if cs else 1.0
    else:
        bad = [(w, c) for w, e in per_state.items() for c, d in e.items() if d["verdict"] != HOLDS]
        wit["first_failure"] = {"state": bad[0][0], "direction": bad[0][1]} if bad else None
    return CheckReport(name, verdict, wit, log, method=method, truncated_domain=trunc)


def _mixture_dub(model: MixtureAtomFamily, plan: ProbePlan) -> CheckReport:
    # top state of the window against its lower states: bounded signals keep the
    # ratio against the neighbour below above a constant, while every large
    # signal s is the atom of state -s, whose ratio grows like exp(s^2)
    w = model.space.states[-1]
    lower = model.space.lower(w)
    x = lower[-1]
    neg = np.arange(-50, 1)
    lr_neg = np.array([model.log_ratio(int(s), x, w) for s in neg])
    pos = np.array([s for s in model.faithful_signals() if s > 0 and -s in lower])
    lr_atom = np.array([model.log_ratio(int(s), -int(s), w) for s in pos])
    log = [[int(s), float(v)] for s, v in zip(neg, lr_neg)] + [[int(s), float(v)] for s, v in zip(pos, lr_atom)]
    wit = {"state": w, "neighbour": x, "min_log_ratio_nonpositive_signals": float(lr_neg.min()),
           "atom_log_ratios_increasing": bool(np.all(np.diff(lr_atom) > 0)),
           "max_atom_log_ratio": float(lr_atom.max()) if len(lr_atom) else None}
    ok = lr_neg.min() > plan.log_delta and wit["atom_log_ratios_increasing"] and lr_atom.max() > -plan.log_eps
    return CheckReport("dub", FAILS if ok else INCONCLUSIVE, wit, log, method="atom-certificate",
                       truncated_domain=True)


def check_universal_dub(model: SignalModel, plan: Optional[ProbePlan] = None) -> CheckReport:
    """DUB with one pair of witness sequences shared by all states."""
    plan = plan or ProbePlan()
    name = "universal_dub"
    space = model.space
    if isinstance(model, LocationFamily):
        base = check_dub(model, plan)
        # shifts of a location family carry witness sequences across states
        return CheckReport(name, base.verdict, {"via": "shift invariance", "dub": base.witnesses}, base.probe_log,
                           method=base.method, truncated_domain=base.truncated_domain)
    if isinstance(model, (FiniteMatrix, MixtureAtomFamily)):
        base = check_dub(model, plan)
        return CheckReport(name, FAILS if base.fails else base.verdict, base.witnesses, base.probe_log,
                           method=base.method, truncated_domain=base.truncated_domain)
    wit, log, verdicts = {}, [], []
    for comp, pairs in (("lower", [(x, w) for w in space.states for x in space.lower(w)]),
                        ("upper", [(x, w) for w in space.states for x in space.upper(w)])):
        if not pairs:
            continue
        lr = np.vstack([_pair_log_ratio(model, None, x, w) for x, w in pairs])
        metric = lr.max(axis=0)
        v, rec = _verdict_from_records(metric, plan)
        verdicts.append(v)
        wit[comp] = {"verdict": v, "subsequence": [model.signals[i] for i in rec],
                     "final_log_ratio": float(metric[rec[-1]]), "min_log_ratio": float(metric.min())}
        if v == HOLDS:
            wit[comp]["C"] = _bound_C(float(lr[:, rec].max()))
        log += [[f"{comp}:{s}", float(x)] for s, x in zip(model.signals, metric)]
    verdict = FAILS if FAILS in verdicts else HOLDS if all(v == HOLDS for v in verdicts) else INCONCLUSIVE
    return CheckReport(name, verdict, wit, log, method="subsequence")


def check_pairwise_ub(model: SignalModel, plan: Optional[ProbePlan] = None) -> CheckReport:
    """Every state distinguishable from every other state separately."""
    plan = plan or ProbePlan()
    name = "pairwise_ub"
    space = model.space
    pairs = [(w, x) for w in space.states for x in space.states if x != w]
    if not pairs:
        return CheckReport(name, HOLDS, {"reason": "single state"}, method="exact")
    if isinstance(model, MixtureAtomFamily):
        # each fixed pair: ratio against a lower state falls along large signals
        # (the atom of a fixed state is passed once); against an upper state
        # along very negative signals
        wit, log, verdicts = {}, [], []
        for w, x in pairs:
            sgn = 1 if x < w else -1
            sig = [sgn * (2 ** k) for k in range(plan.max_power + 1) if 2 ** k < 1e6]
            lr = np.array([model.log_ratio(s, x, w) for s in sig])
            v = _verdict_from_trend(lr, plan)
            verdicts.append(v)
            log += [[f"{w}|{x}:{s}", float(r)] for s, r in zip(sig, lr)]
        verdict = FAILS if FAILS in verdicts else HOLDS if all(v == HOLDS for v in verdicts) else INCONCLUSIVE
        return CheckReport(name, verdict, {"pairs": len(pairs)}, log, method="exact", truncated_domain=True)
    if isinstance(model, FiniteMatrix):
        w, x = pairs[0]
        lr = _pair_log_ratio(model, None, x, w)
        i = int(np.argmin(lr))
        return CheckReport(name, FAILS, {"state": w, "other": x, "signal": model.signals[i],
                                         "min_log_ratio": float(lr[i])},
                           [[s, float(v)] for s, v in zip(model.signals, lr)], method="finite-minimum")
    per_pair, log, verdicts = {}, [], []
    method = "numeric"
    for w, x in pairs:
        key = f"{x}/{w}"
        if isinstance(model, PosteriorSequence):
            lr = _pair_log_ratio(model, None, x, w)
            v, rec = _verdict_from_records(lr, plan)
            per_pair[key] = {"verdict": v, "subsequence": [model.signals[i] for i in rec],
                             "final_log_ratio": float(lr[rec[-1]])}
            log += [[f"{key}:{s}", float(r)] for s, r in zip(model.signals, lr)]
            method = "subsequence"
        else:
            lb = model.log_ratio_lower_bound(w - x)
            s = _location_probes(model, w, 1 if x < w else -1, plan)
            lr = _pair_log_ratio(model, s, x, w)
            log += [[float(a), float(b)] for a, b in zip(s, lr)]
            if lb is not None:
                v = FAILS
                per_pair[key] = {"verdict": v, "log_lower_bound": lb, "tail_log_ratio": float(lr[-1])}
                method = "analytic"
            else:
                v = _verdict_from_trend(lr, plan)
                per_pair[key] = {"verdict": v, "final_log_ratio": float(lr[-1])}
        verdicts.append(v)
    verdict = FAILS if FAILS in verdicts else HOLDS if all(v == HOLDS for v in verdicts) else INCONCLUSIVE
    return CheckReport(name, verdict, {"pairs": per_pair}, log, method=method, truncated_domain=space.truncated)


def check_unbounded_beliefs(model: SignalModel, plan: Optional[ProbePlan] = None) -> CheckReport:
    """For each state one sequence driving the ratios of all other states to zero at once."""
    plan = plan or ProbePlan()
    name = "unbounded_beliefs"
    space = model.space
    if len(space) == 1:
        return CheckReport(name, HOLDS, {"reason": "single state"}, method="exact")
    if isinstance(model, (FiniteMatrix, MixtureAtomFamily)):
        base = check_pairwise_ub(model, plan) if len(space) == 2 else check_dub(model, plan)
        if len(space) == 2 or base.fails:
            return CheckReport(name, base.verdict, base.witnesses, base.probe_log, method=base.method,
                               truncated_domain=base.truncated_domain)
    per_state, log, verdicts = {}, [], []
    method = "numeric"
    mlrp = None
    if isinstance(model, LocationFamily) and len(space) > 2:
        mlrp = check_mlrp(model)
    for w in space.states:
        others = _comparison_states(space, w, "complement")
        if isinstance(model, PosteriorSequence):
            lr = np.vstack([_pair_log_ratio(model, None, x, w) for x in others])
            metric = lr.max(axis=0)
            v, rec = _verdict_from_records(metric, plan)
            per_state[w] = {"verdict": v, "subsequence": [model.signals[i] for i in rec],
                            "final_log_ratio": float(metric[rec[-1]])}
            log += [[f"{w}:{s}", float(x)] for s, x in zip(model.signals, metric)]
            method = "subsequence"
        else:
            lower, upper = space.lower(w), space.upper(w)
            bound = None
            if lower and upper:
                terms = [(x, 0.0) for x in others]
                lbs = [model.log_ratio_lower_bound(w - x) for x in others]
                if all(b is not None for b in lbs):
                    bound = float(max(lbs))
                elif model.kind == "normal":
                    bound = _normal_pair_bound(model, w, terms)
                    bound = None if bound is None else bound - math.log(len(others))
            if bound is not None:
                v = FAILS
                per_state[w] = {"verdict": v, "log_lower_bound_max_ratio": bound}
                method = "analytic"
            elif lower and upper and mlrp is not None and mlrp.holds:
                v = FAILS
                per_state[w] = {"verdict": v, "reason": "monotone likelihood ratios with an interior state"}
                method = "mlrp-certificate"
            else:
                # a boundary state: the only candidate direction pushes away from the others
                direction = +1 if not upper else -1
                s, lr, metric = _location_direction(model, w, others, direction, plan)
                lb = _family_certificate(model, w, others)
                v = FAILS if lb is not None else _verdict_from_trend(metric, plan)
                per_state[w] = {"verdict": v, "final_log_ratio": float(metric[-1])}
                if lb is not None:
                    per_state[w]["certificate"] = lb
                log += [[float(a), float(b)] for a, b in zip(s, metric)]
        verdicts.append(v)
    verdict = FAILS if FAILS in verdicts else HOLDS if all(v == HOLDS for v in verdicts) else INCONCLUSIVE
    return CheckReport(name, verdict, {"per_state": per_state}, log, method=method, truncated_domain=space.truncated)


# --- prior independence -------------------------------------------------------------------

def adversarial_priors(space, w) -> list:
    """Priors putting mass 1/2 on ``w`` and halving geometrically on states moving away from it."""
    out = []
    for side in (space.lower(w)[::-1], space.upper(w)):
        if not side:
            continue
        wts = np.zeros(len(space))
        wts[space.index(w)] = 0.5
        for k, x in enumerate(side):
            wts[space.index(x)] = 0.5 ** (k + 2)
        out.append(make_belief(space, wts))
    return out


def check_pidd(model: SignalModel, prior_sample: Sequence[Belief], plan: Optional[ProbePlan] = None) -> CheckReport:
    """Prior-independent directional distinguishability along the DUB witness sequences.

    The sample is extended by adversarial priors concentrating
    geometrically on states far from each target state.
    """
    plan = plan or ProbePlan()
    name = "pidd"
    dub = check_dub(model, plan)
    space = model.space
    priors = list(prior_sample)
    for w in space.states:
        priors += adversarial_priors(space, w)
    if isinstance(model, MixtureAtomFamily):
        top = space.states[-1]
        mu = adversarial_priors(space, top)[0]
        others = [(x, float(mu.log_mass[space.index(x)] - mu.log_mass[space.index(top)]))
                  for x in space.lower(top)]
        sig = [s for s in model.faithful_signals() if s > 0]
        lr = np.array([logsumexp([c + model.log_ratio(s, x, top) for x, c in others]) for s in sig])
        wit = {"dub": dub.verdict, "state": top, "log_ratio_along_large_signals": float(lr[-1]),
               "diverges": bool(np.all(np.diff(lr) > 0) and lr[-1] > -plan.log_eps)}
        return CheckReport(name, FAILS if dub.fails else INCONCLUSIVE, wit,
                           [[int(s), float(v)] for s, v in zip(sig, lr)], method="atom-certificate",
                           truncated_domain=True)
    if not dub.holds:
        return CheckReport(name, dub.verdict, {"dub": dub.verdict, "reason": "no DUB witness sequences",
                                               "dub_witnesses": dub.witnesses}, method=dub.method,
                           truncated_domain=dub.truncated_domain)
    log, verdicts, checked = [], [], 0
    per_state = dub.witnesses["per_state"]
    for k, mu in enumerate(priors):
        if mu.space != space:
            raise InvalidPrimitive("prior sample lives on a different state space")
        for w in space.states:
            if mu[w] <= 0:
                continue
            for comp, direction in (("lower", +1), ("upper", -1)):
                others = [x for x in _comparison_states(space, w, comp) if mu[x] > 0]
                if not others:
                    continue
                if isinstance(model, PosteriorSequence):
                    idx = [model.signal_index(s) for s in per_state[w][comp]["subsequence"]]
                    lr = _weighted_log_r(model, None, w, others, mu)[idx]
                else:
                    s = _location_probes(model, w, direction, plan)
                    lr = _weighted_log_r(model, s, w, others, mu)
                v = HOLDS if lr[-1] < plan.log_eps else INCONCLUSIVE
                verdicts.append(v)
                checked += 1
                log.append([f"prior{k}:{w}:{comp}", float(lr[-1])])
    verdict = HOLDS if all(v == HOLDS for v in verdicts) else INCONCLUSIVE
    return CheckReport(name, verdict, {"priors": len(priors), "checks": checked}, log, method="witness-reuse",
                       truncated_domain=dub.truncated_domain)


# --- implication lattice ------------------------------------------------------------------

CONDITIONS = ("mlrp", "unbounded_beliefs", "universal_dub", "dub", "pairwise_ub")


def audit_verdicts(verdicts: dict, n_states: int) -> list:
    """Check a verdict table against the implications between conditions.

    Missing or inconclusive entries are compatible with anything.

    Raises
    ------
    ImplicationViolation
        Listing every violated implication.
    """
    v = {k: verdicts.get(k) for k in CONDITIONS}
    h = lambda k: v[k] == HOLDS
    f = lambda k: v[k] == FAILS
    bad = []
    if h("unbounded_beliefs") and f("dub"):
        bad.append("unbounded beliefs holds but DUB fails")
    if h("dub") and f("pairwise_ub"):
        bad.append("DUB holds but pairwise unbounded beliefs fails")
    if h("unbounded_beliefs") and f("pairwise_ub"):
        bad.append("unbounded beliefs holds but pairwise unbounded beliefs fails")
    if h("universal_dub") and f("dub"):
        bad.append("universal DUB holds but DUB fails")
    if h("universal_dub") and f("pairwise_ub"):
        bad.append("universal DUB holds but pairwise unbounded beliefs fails")
    if h("mlrp"):
        trio = [v[k] for k in ("pairwise_ub", "dub", "universal_dub") if v[k] in (HOLDS, FAILS)]
        if len(set(trio)) > 1:
            bad.append("under MLRP pairwise UB, DUB and universal DUB disagree")
        if n_states > 2 and h("unbounded_beliefs"):
            bad.append("MLRP with more than two states but unbounded beliefs holds")
    if n_states == 2:
        quad = [v[k] for k in ("unbounded_beliefs", "universal_dub", "dub", "pairwise_ub") if v[k] in (HOLDS, FAILS)]
        if len(set(quad)) > 1:
            bad.append("two states but the unboundedness conditions disagree")
    if bad:
        raise ImplicationViolation("; ".join(bad))
    return []


def run_all_checks(model: SignalModel, plan: Optional[ProbePlan] = None) -> dict:
    plan = plan or ProbePlan()
    out = {}
    try:
        out["mlrp"] = check_mlrp(model)
    except Unsupported:
        out["mlrp"] = None
    out["unbounded_beliefs"] = check_unbounded_beliefs(model, plan)
    out["universal_dub"] = check_universal_dub(model, plan)
    out["dub"] = check_dub(model, plan)
    out["pairwise_ub"] = check_pairwise_ub(model, plan)
    return out


def implication_audit(model: SignalModel, plan: Optional[ProbePlan] = None, reports: Optional[dict] = None) -> CheckReport:
    """Run the five checkers and test their verdicts for mutual consistency."""
    reports = reports if reports is not None else run_all_checks(model, plan)
    table = {k: (r.verdict if r is not None else "n/a") for k, r in reports.items()}
    try:
        audit_verdicts(table, len(model.space))
    except ImplicationViolation as exc:
        return CheckReport("implication_audit", FAILS, {"verdicts": table, "violations": str(exc).split("; ")},
                           method="lattice")
    return CheckReport("implication_audit", HOLDS, {"verdicts": table}, method="lattice")
