"""Registry of reproducible scenarios with machine-checked expectations."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .._io import atomic_write_text
from ..conditions import check_dub, check_mlrp, check_scd, implication_audit, run_all_checks
from ..core import Belief, StateSpace, UtilityTable, adequate_knowledge, choice_set, make_belief
from ..dynamics import detect_stationary, faces, scan_hits, stationary_scan
from ..errors import UnknownScenario
from ..reports import HOLDS, ProbePlan, _jsonable
from ..signals import LocationFamily, MixtureAtomFamily
from . import structures
from .montecarlo import MC_GRID_POINTS, monte_carlo, rows_csv, simulate_many


@dataclass
class Options:
    seed: int = 0
    runs: Optional[int] = None
    horizon: Optional[int] = None
    grid_step: Optional[float] = None
    jobs: int = 1


@dataclass
class GalleryReport:
    name: str
    key: str
    claim: str
    checks: dict
    data: dict
    artifacts: dict = field(default_factory=dict)

    @property
    def expectation_met(self) -> bool:
        return all(self.checks.values())

    def to_json(self) -> dict:
        return _jsonable({"scenario": self.name, "key": self.key, "claim": self.claim,
                          "expectation_met": self.expectation_met, "checks": self.checks, "data": self.data,
                          "artifacts": sorted(self.artifacts)})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def write(self, out) -> list:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        paths = [atomic_write_text(out / fname, text) for fname, text in sorted(self.artifacts.items())]
        paths.append(atomic_write_text(out / f"{self.name}.json", self.dumps()))
        return paths


@dataclass(frozen=True)
class Scenario:
    key: str
    name: str
    claim: str
    run: Callable[[Options], GalleryReport]


# --- primitives shared with the CLI and tests ---------------------------------------------

def three_states() -> StateSpace:
    return StateSpace.window(1, 3)


def binary_table(space: StateSpace, d, labels=("a'", "a*")) -> UtilityTable:
    """Two actions with u(first) = d and u(second) = 0."""
    return UtilityTable(space, labels, [list(map(float, d)), [0.0] * len(space)])


def laplace_tail_constant(model: LocationFamily, mu: Belief, w_star: int) -> float:
    """inf_s of the lower-set likelihood ratio of ``w_star`` under a log-concave family.

    Under monotone likelihood ratios the ratio is nonincreasing in s, so the
    infimum is its value beyond every state.
    """
    sp = mu.space
    lower = [x for x in sp.lower(w_star) if mu[x] > 0]
    s = max(sp.states) + model.spread * 2.0 ** np.arange(0, 8)
    lr = logsumexp(np.vstack([math.log(mu[x]) + model.log_g(s - x) for x in lower]), axis=0)
    lr = lr - math.log(mu[w_star]) - model.log_g(s - w_star)
    return float(np.exp(lr[-1])), float(np.max(np.abs(np.diff(lr))))


def thm1_3_setup():
    sp = three_states()
    model = LocationFamily("laplace", {"b": 1.0}, sp)
    mu = Belief.uniform(sp)
    w_star = 3
    L, flat = laplace_tail_constant(model, mu, w_star)
    eps = L / 2.0
    u = binary_table(sp, [1.0, 1.0, -eps])
    return sp, model, mu, u, {"omega_star": w_star, "ratio_infimum": L, "tail_flatness": flat, "epsilon": eps}


def prop1_setup(sigma: float = 1.0):
    sp = three_states()
    model = LocationFamily("normal", {"sigma": sigma}, sp)
    # likelihood ratios of the outer states against the middle one, at the middle state
    s_mid = 2.0
    h = math.exp(model.log_g(s_mid - 1) - model.log_g(s_mid - 2))
    g = math.exp(model.log_g(s_mid - 3) - model.log_g(s_mid - 2))
    delta = min(h, g)
    eps = 0.5 * delta / (2.0 + delta)
    mu = make_belief(sp, [(1 - eps) / 2, eps, (1 - eps) / 2])
    u = binary_table(sp, [1.0, -1.0, 1.0])
    margin = (1 - eps) / 2 * delta - eps
    return sp, model, mu, u, {"s_prime": s_mid, "delta": delta, "epsilon": eps, "analytic_margin": margin}


G4_PRIORS = ((1 / 3, 1 / 3, 1 / 3), (0.5, 0.25, 0.25), (0.25, 0.25, 0.5), (0.2, 0.6, 0.2))


def prop2_setup():
    sp = three_states()
    model = LocationFamily("laplace", {"b": 1.0}, sp)
    u = binary_table(sp, [1.0, -1.0, -1.0])
    return sp, model, u, 2


def safe_action_setup(M: int = 20, eps: float = 0.01, rho: float = 0.5):
    ks = np.arange(-M, M + 1)
    w = rho ** np.abs(ks)
    total = (1 + rho) / (1 - rho)
    trunc = 1.0 - w.sum() / total
    sp = StateSpace.window(-M, M, truncated_mass=float(trunc))
    mu = make_belief(sp, w)
    labels = tuple(int(k) for k in ks) + ("a*",)
    table = np.full((len(labels), len(sp)), -1.0 / eps)
    table[np.arange(len(sp)), np.arange(len(sp))] = eps
    table[-1] = 0.0
    u = UtilityTable(sp, labels, table)
    model = LocationFamily("normal", {"sigma": 1.0}, sp)
    return sp, model, mu, u, {"M": M, "epsilon": eps, "rho": rho, "truncated_mass": float(trunc)}


def mixture_setup(M: int = 50, lam: float = 0.5):
    ks = np.arange(-M, 1)
    # prior proportional to e^w on w <= 0; lost mass is the tail below -M
    total = 1.0 / (1.0 - math.exp(-1.0))
    trunc = 1.0 - float(np.exp(ks).sum()) / total
    sp = StateSpace.window(-M, 0, truncated_mass=max(trunc, 0.0))
    mu = make_belief(sp, np.exp(ks.astype(float)))
    return sp, MixtureAtomFamily(sp, lam), mu


# --- scenarios -----------------------------------------------------------------------------------

def _mc_block(rows) -> list:
    return [r.to_json() for r in rows]


def run_thm1_sufficiency(opt: Options) -> GalleryReport:
    sp = three_states()
    u = UtilityTable.quadratic_loss(sp)
    model = LocationFamily("normal", {"sigma": 1.0}, sp)
    step = opt.grid_step or 0.02
    entries = stationary_scan(u, model, None, step)
    hits = scan_hits(entries)
    per_face = {"-".join(map(str, f)): sum(1 for e in entries if e.belief.support == f) for f in faces(sp)}
    n_runs = opt.runs or 1000
    horizons = [100, opt.horizon or 4000]
    rows, runs = monte_carlo(u, model, Belief.uniform(sp), n_runs, horizons, opt.seed, jobs=opt.jobs,
                             return_runs=True)
    lo, hi = rows[0], rows[-1]
    checks = {"scd_holds": check_scd(u).holds, "dub_holds": check_dub(model).holds,
              "scan_empty": not hits,
              "correct_freq_increases": hi.correct_freq > lo.correct_freq,
              "intervals_separate": hi.correct_ci[0] > lo.correct_ci[1]}
    data = {"grid_step": step, "beliefs_per_face": per_face, "hits": [list(e.belief.mass) for e in hits],
            "monte_carlo": _mc_block(rows), "master_seed": opt.seed, "grid_points": MC_GRID_POINTS}
    arts = {"thm1_sufficiency_montecarlo.csv": rows_csv(rows), "thm1_sufficiency_run0.csv": runs[0].csv_text()}
    return GalleryReport("thm1_sufficiency", "g1", SCENARIOS_CLAIMS["g1"], checks, data, arts)


def _cascade_block(u, model, mu, opt: Options, name: str, n_default: int = 200):
    n_runs = opt.runs or n_default
    horizon = opt.horizon or 5000
    runs = simulate_many(u, model, mu, horizon, n_runs, opt.seed, grid_points=MC_GRID_POINTS, jobs=opt.jobs)
    immediate = [tr.cascade_at == 1 for tr in runs]
    inadequate = [not adequate_knowledge(u, tr.final_belief).holds for tr in runs]
    constant = [len(set(tr.actions.tolist())) == 1 for tr in runs]
    data = {"runs": n_runs, "horizon": horizon, "cascade_at_1_freq": float(np.mean(immediate)),
            "inadequate_final_freq": float(np.mean(inadequate)), "constant_action_freq": float(np.mean(constant)),
            "herd_action": sorted({tr.action_at(1) for tr in runs}), "master_seed": opt.seed}
    checks = {"cascade_at_1_always": all(immediate), "inadequate_final_always": all(inadequate),
              "constant_action_always": all(constant)}
    return checks, data, {f"{name}_run0.csv": runs[0].csv_text()}


def run_thm1_3_laplace(opt: Options) -> GalleryReport:
    sp, model, mu, u, setup = thm1_3_setup()
    rep = detect_stationary(u, mu, model)
    checks = {"scd_holds": check_scd(u).holds, "dub_fails": check_dub(model).fails,
              "tail_ratio_constant": setup["tail_flatness"] < 1e-12,
              "stationary": rep.holds and rep.method == "laplace-breakpoints",
              "inadequate_knowledge": not adequate_knowledge(u, mu).holds}
    c2, data, arts = _cascade_block(u, model, mu, opt, "thm1_3_laplace")
    checks.update(c2)
    data.update(setup=setup, stationarity=rep.to_json(), prior=list(mu.mass))
    return GalleryReport("thm1_3_laplace", "g2", SCENARIOS_CLAIMS["g2"], checks, data, arts)


def run_prop1_nonscd(opt: Options) -> GalleryReport:
    sp, model, mu, u, setup = prop1_setup()
    rep = detect_stationary(u, mu, model)
    checks = {"scd_fails": check_scd(u).fails, "mlrp_holds": check_mlrp(model).holds,
              "analytic_margin_positive": setup["analytic_margin"] > 0, "stationary": rep.holds,
              "inadequate_knowledge": not adequate_knowledge(u, mu).holds}
    c2, data, arts = _cascade_block(u, model, mu, opt, "prop1_nonscd")
    checks.update(c2)
    data.update(setup=setup, stationarity=rep.to_json(), prior=list(mu.mass))
    return GalleryReport("prop1_nonscd", "g3", SCENARIOS_CLAIMS["g3"], checks, data, arts)


def run_prop2_fullsupport(opt: Options) -> GalleryReport:
    sp, model, u, w_star = prop2_setup()
    n_runs = opt.runs or 2000
    horizon = opt.horizon or 2000
    table, arts = [], {}
    for k, p in enumerate(G4_PRIORS):
        mu = make_belief(sp, p)
        rows, runs = monte_carlo(u, model, mu, n_runs, [horizon], opt.seed, true_state=w_star, jobs=opt.jobs,
                                 return_runs=True)
        table.append({"prior": list(mu.mass), "rows": _mc_block(rows)})
        arts[f"prop2_fullsupport_prior{k}_montecarlo.csv"] = rows_csv(rows)
    first = table[0]["rows"][-1]
    checks = {"scd_holds": check_scd(u).holds, "mlrp_holds": check_mlrp(model).holds,
              "dub_fails": check_dub(model).fails,
              "wrong_herd_lower_bound_positive": first["wrong_herd_ci"][0] > 0}
    data = {"omega_star": w_star, "runs": n_runs, "horizon": horizon, "priors": table, "master_seed": opt.seed}
    return GalleryReport("prop2_fullsupport", "g4", SCENARIOS_CLAIMS["g4"], checks, data, arts)


SAFE_SIGNAL_RANGE = (-15.0, 15.0)


def run_safe_action(opt: Options) -> GalleryReport:
    sp, model, mu, u, setup = safe_action_setup()
    rho, eps = setup["rho"], setup["epsilon"]
    # odds of the neighbours against any state are at least rho times the
    # neighbour likelihood ratio sum, minimized where the signal sits on the state
    sig = model.p0
    floor = rho * 2.0 * math.exp(-1.0 / (2 * sig * sig))
    cap = 1.0 / (1.0 + floor)
    threshold = 1.0 / (1.0 + eps * eps)
    plan = ProbePlan(signal_range=SAFE_SIGNAL_RANGE, stationary_grid=4096)
    rep = detect_stationary(u, mu, model, plan)
    s = np.linspace(*SAFE_SIGNAL_RANGE, 4001)
    lw = mu.log_mass[None, :] + model.log_likelihood_matrix(s)
    post_max = float(np.max(np.exp(lw - logsumexp(lw, axis=1, keepdims=True))))
    checks = {"scd_fails": check_scd(u).fails, "posterior_cap_below_threshold": cap < threshold,
              "probed_posterior_below_cap": post_max <= cap + 1e-12,
              "stationary_at_prior": rep.holds and rep.witnesses.get("action") == "a*",
              "inadequate_knowledge": not adequate_knowledge(u, mu).holds,
              "safe_action_chosen": choice_set(u, mu) == frozenset({"a*"})}
    data = {"setup": setup, "posterior_cap": cap, "optimality_threshold": threshold,
            "max_probed_posterior": post_max, "signal_range": list(SAFE_SIGNAL_RANGE),
            "stationarity": rep.to_json(), "label": "truncated-domain"}
    return GalleryReport("safe_action", "g5", SCENARIOS_CLAIMS["g5"], checks, data)


def run_appendixB_mixture(opt: Options, M: int = 50, lam: float = 0.5) -> GalleryReport:
    sp, model, mu = mixture_setup(M, lam)
    # pointwise ratios against the top state for every fixed lower state
    s_probe = [2 ** k for k in range(0, 11)]
    point = {w: [model.log_ratio(s, w, 0) for s in s_probe] for w in sp.lower(0)}
    final = max(v[-1] for v in point.values())
    # infinite-model prior k' e^w: the atom of state -s dominates the lower-set sum
    log_kp = math.log(1 - math.exp(-1.0))
    bound = [(-s + log_kp) - log_kp + model.log_ratio(s, -s, 0) for s in s_probe]
    # window prior: full lower-set sum over the faithful signals 1..M
    faithful = np.arange(1, M + 1)
    lower = sp.lower(0)
    lw = np.array([math.log(mu[w]) for w in lower]) - math.log(mu[0])
    weighted = [float(logsumexp(lw + np.array([model.log_ratio(int(s), w, 0) for w in lower]))) for s in faithful]
    log_lim, log_big = math.log(1e-8), math.log(1e8)
    checks = {"pointwise_ratios_vanish": final < log_lim,
              "weighted_ratio_exceeds_1e8": weighted[-1] > log_big and bound[-1] > log_big,
              "weighted_ratio_increasing": bool(np.all(np.diff(weighted) > 0)),
              "dub_fails": check_dub(model).fails}
    data = {"M": M, "lambda": lam, "signals": s_probe, "max_final_pointwise_log_ratio": final,
            "atom_bound_log_ratio": bound, "window_weighted_log_ratio": weighted,
            "truncated_mass": sp.truncated_mass, "label": "truncated-domain"}
    rows = ["s," + ",".join(f"w{w}" for w in lower)]
    rows += [f"{s}," + ",".join(f"{point[w][i]:.17g}" for w in lower) for i, s in enumerate(s_probe)]
    arts = {"appendixB_mixture_pointwise.csv": "\n".join(rows) + "\n"}
    return GalleryReport("appendixB_mixture", "g6", SCENARIOS_CLAIMS["g6"], checks, data, arts)


def run_fig6_lattice(opt: Options) -> GalleryReport:
    models = {k: f() for k, f in structures.RICH.items()}
    models["normal"] = LocationFamily("normal", {"sigma": 1.0}, three_states())
    table, checks = {}, {}
    for key, m in models.items():
        reps = run_all_checks(m)
        verdicts = {c: (r.verdict if r is not None else "n/a") for c, r in reps.items()}
        table[key] = verdicts
        exp = structures.RICH_EXPECTED[key]
        checks[f"{key}_matches"] = all(verdicts[c] == v for c, v in exp.items())
        checks[f"{key}_audit_consistent"] = implication_audit(m, reports=reps).holds
    data = {"verdicts": table, "expected": structures.RICH_EXPECTED}
    return GalleryReport("fig6_lattice", "g7", SCENARIOS_CLAIMS["g7"], checks, data)


def _curve_csv(signals, post) -> str:
    xy = structures.barycentric_xy(post)
    rows = ["index,signal,nu_1,nu_2,nu_3,x,y"]
    for i, (s, p, (x, y)) in enumerate(zip(signals, post, xy)):
        rows.append(",".join([str(i), "" if s is None else f"{s:.17g}", *(f"{v:.17g}" for v in p),
                              f"{x:.17g}", f"{y:.17g}"]))
    return "\n".join(rows) + "\n"


def run_fig_geometry(opt: Options) -> GalleryReport:
    s, post = structures.normal_curve()
    tri = structures.triangle_structure()
    tri_post = np.vstack(list(tri.posteriors) + [tri.residual_posterior])
    curve_struct = structures.normal_curve_structure()
    arts = {"fig_geometry_normal_curve.csv": _curve_csv(s, post),
            "fig_geometry_triangle.csv": _curve_csv([None] * len(tri_post), tri_post)}
    mu = structures.prior()
    checks = {"curve_starts_near_vertex1": bool(post[0, 0] > 0.999), "curve_ends_near_vertex3": bool(post[-1, 2] > 0.999),
              "curve_balance": curve_struct.balance_error() <= 1e-12,
              "triangle_balance": tri.balance_error() <= 1e-12,
              "triangle_interior": bool(np.all(np.asarray(tri.posteriors) > 0))}
    data = {"prior": list(mu.mass), "curve_points": len(s), "triangle_points": len(tri_post),
            "vertices_xy": {"1": [0, 0], "2": [4, 0], "3": [2, 3]}}
    return GalleryReport("fig_geometry", "g8", SCENARIOS_CLAIMS["g8"], checks, data, arts)


SCENARIOS_CLAIMS = {
    "g1": "quadratic loss with normal signals: no stationary belief lacks adequate knowledge; correct actions become more frequent",
    "g2": "Laplace signals with single-crossing preferences: a stationary prior without adequate knowledge herds at once",
    "g3": "normal signals with a non-single-crossing difference: a prior light on the middle state is stationary",
    "g4": "Laplace signals, threshold preferences, full-support priors: wrong herds in the middle state occur",
    "g5": "a uniformly safe action stays optimal after every signal under a double-geometric prior",
    "g6": "mixture with atoms: pointwise ratios vanish while the prior-weighted lower-set ratio explodes",
    "g7": "verdict table of the unboundedness conditions on the three rich posterior structures and normal signals",
    "g8": "posterior curves and triangle in barycentric coordinates",
}

SCENARIOS = {s.key: s for s in (
    Scenario("g1", "thm1_sufficiency", SCENARIOS_CLAIMS["g1"], run_thm1_sufficiency),
    Scenario("g2", "thm1_3_laplace", SCENARIOS_CLAIMS["g2"], run_thm1_3_laplace),
    Scenario("g3", "prop1_nonscd", SCENARIOS_CLAIMS["g3"], run_prop1_nonscd),
    Scenario("g4", "prop2_fullsupport", SCENARIOS_CLAIMS["g4"], run_prop2_fullsupport),
    Scenario("g5", "safe_action", SCENARIOS_CLAIMS["g5"], run_safe_action),
    Scenario("g6", "appendixB_mixture", SCENARIOS_CLAIMS["g6"], run_appendixB_mixture),
    Scenario("g7", "fig6_lattice", SCENARIOS_CLAIMS["g7"], run_fig6_lattice),
    Scenario("g8", "fig_geometry", SCENARIOS_CLAIMS["g8"], run_fig_geometry),
)}


def lookup(name: str) -> Scenario:
    """Scenario by key ("g3") or name ("prop1_nonscd")."""
    if name in SCENARIOS:
        return SCENARIOS[name]
    for s in SCENARIOS.values():
        if s.name == name:
            return s
    raise UnknownScenario(name)


def registry() -> list:
    return [(s.key, s.name, s.claim) for s in SCENARIOS.values()]


def run_gallery(name: str, out=None, **options) -> GalleryReport:
    """Run one scenario; artifacts and the JSON report go to ``out`` when given."""
    rep = lookup(name).run(Options(**options))
    if out is not None:
        rep.write(out)
    return rep
