"""Seeded Monte Carlo over simulated runs with Wilson intervals."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import TIE_TOL, Belief, UtilityTable, point_choice_indices
from ..dynamics import Trajectory, simulate_run
from ..signals import SignalModel

MC_GRID_POINTS = 256   # coarser bracketing grid for bulk runs; tails are probed identically
HERD_MIN_RUN = 50
Z95 = 1.959963984540054


def wilson(k: int, n: int, z: float = Z95) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("n must be positive")
    p = k / n
    den = 1.0 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, mid - half)
    hi = 1.0 if k == n else min(1.0, mid + half)
    return lo, hi


def run_seed(master: int, i: int) -> list:
    """Stream seed of run ``i``: one master number reproduces every run."""
    return [int(master), int(i)]


@dataclass(frozen=True)
class MCRow:
    horizon: int
    n_runs: int
    correct: int
    correct_freq: float
    correct_ci: tuple
    wrong_herd: int
    wrong_herd_freq: float
    wrong_herd_ci: tuple

    def to_json(self) -> dict:
        d = asdict(self)
        d["correct_ci"] = list(self.correct_ci)
        d["wrong_herd_ci"] = list(self.wrong_herd_ci)
        return d


def _one(args):
    u, model, prior, horizon, seed, true_state, grid_points, tie_tol = args
    return simulate_run(u, model, prior, horizon, seed, true_state=true_state, tie_tol=tie_tol,
                        grid_points=grid_points)


def simulate_many(u: UtilityTable, model: SignalModel, prior: Belief, horizon: int, n_runs: int,
                  master_seed: int = 0, *, true_state: Optional[int] = None, grid_points: int = MC_GRID_POINTS,
                  tie_tol: float = TIE_TOL, jobs: int = 1) -> list:
    """Runs in seed order; parallel workers do not change the result."""
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    tasks = [(u, model, prior, horizon, run_seed(master_seed, i), true_state, grid_points, tie_tol)
             for i in range(n_runs)]
    if jobs <= 1:
        return [_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_one, tasks, chunksize=max(1, n_runs // (4 * jobs))))


def wrong_herd_at(tr: Trajectory, h: int, correct: set, min_run: int = HERD_MIN_RUN) -> bool:
    """Action at ``h`` is wrong and has persisted for ``min_run`` agents or sits in a cascade."""
    if tr.action_index_at(h) in correct:
        return False
    if tr.cascade_at is not None and tr.cascade_at <= h:
        return True
    return h - tr.run_start(h) + 1 >= min_run


def tabulate(runs: Sequence[Trajectory], u: UtilityTable, horizons: Sequence[int], tie_tol: float = TIE_TOL,
             min_run: int = HERD_MIN_RUN) -> list:
    per_state = point_choice_indices(u, tie_tol)
    sp = u.space
    rows = []
    for h in horizons:
        good = bad = 0
        for tr in runs:
            corr = per_state[sp.index(tr.true_state)]
            good += tr.action_index_at(h) in corr
            bad += wrong_herd_at(tr, h, corr, min_run)
        n = len(runs)
        rows.append(MCRow(int(h), n, good, good / n, wilson(good, n), bad, bad / n, wilson(bad, n)))
    return rows


def monte_carlo(u: UtilityTable, model: SignalModel, prior: Belief, n_runs: int, horizons: Sequence[int],
                master_seed: int = 0, *, true_state: Optional[int] = None, grid_points: int = MC_GRID_POINTS,
                tie_tol: float = TIE_TOL, jobs: int = 1, return_runs: bool = False):
    """Correct-action and wrong-herd frequencies at each horizon with Wilson 95% intervals."""
    horizons = sorted(int(h) for h in horizons)
    runs = simulate_many(u, model, prior, horizons[-1], n_runs, master_seed, true_state=true_state,
                         grid_points=grid_points, tie_tol=tie_tol, jobs=jobs)
    rows = tabulate(runs, u, horizons, tie_tol)
    return (rows, runs) if return_runs else rows


def rows_csv(rows: Sequence[MCRow]) -> str:
    out = ["horizon,n_runs,correct,correct_freq,correct_lo,correct_hi,wrong_herd,wrong_herd_freq,"
           "wrong_herd_lo,wrong_herd_hi"]
    for r in rows:
        out.append(",".join([str(r.horizon), str(r.n_runs), str(r.correct), f"{r.correct_freq:.17g}",
                             f"{r.correct_ci[0]:.17g}", f"{r.correct_ci[1]:.17g}", str(r.wrong_herd),
                             f"{r.wrong_herd_freq:.17g}", f"{r.wrong_herd_ci[0]:.17g}",
                             f"{r.wrong_herd_ci[1]:.17g}"]))
    return "\n".join(out) + "\n"
