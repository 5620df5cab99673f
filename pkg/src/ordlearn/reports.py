"""Verdict reports and probe budgets shared by the checkers."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

HOLDS, FAILS, INCONCLUSIVE = "holds", "fails", "inconclusive"
VERDICTS = (HOLDS, FAILS, INCONCLUSIVE)


@dataclass(frozen=True)
class ProbePlan:
    """Numeric budget for limit checks.

    Attributes
    ----------
    eps_limit : float
        A ratio below this counts as driven to zero.
    delta : float
        A minimum above this counts as bounded away from zero.
    trend_window : int
        Number of trailing probes that must be non-increasing.
    max_power : int
        Geometric probes reach ``spread * 2**max_power`` beyond the window.
    stationary_grid : int
        Grid size for grid-based stationarity checks.
    signal_range : (float, float), optional
        Restrict stationarity probes to this signal interval.
    """

    eps_limit: float = 1e-8
    delta: float = 1e-4
    trend_window: int = 5
    max_power: int = 40
    stationary_grid: int = 2048
    signal_range: Optional[tuple] = None

    @property
    def log_eps(self) -> float:
        return math.log(self.eps_limit)

    @property
    def log_delta(self) -> float:
        return math.log(self.delta)


def _jsonable(x: Any):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


@dataclass
class CheckReport:
    """Outcome of a condition check.

    ``probe_log`` rows are ``[probe, value]`` pairs; ratio probes log the
    natural logarithm of the ratio so deep tails stay representable.
    """

    condition: str
    verdict: str
    witnesses: dict = field(default_factory=dict)
    probe_log: list = field(default_factory=list)
    method: str = "numeric"
    truncated_domain: bool = False

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    @property
    def fails(self) -> bool:
        return self.verdict == FAILS

    def to_json(self) -> dict:
        d = {"condition": self.condition, "verdict": self.verdict, "method": self.method,
             "witnesses": self.witnesses, "probe_log": self.probe_log}
        if self.truncated_domain:
            d["label"] = "truncated-domain"
        return _jsonable(d)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)
