"""Ordered state spaces, beliefs, utilities and the choice correspondence."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import InvalidBelief, InvalidPrimitive, UnknownAction

TIE_TOL = 1e-12
MASS_TOL = 1e-12


@dataclass(frozen=True)
class StateSpace:
    """Strictly increasing window of integer states.

    Parameters
    ----------
    states : tuple of int
        The states in increasing order.
    original : {"finite", "infinite"}
        Whether the window stands for a genuinely finite state set or is a
        truncation of an infinite one.
    truncated_mass : float, optional
        Prior mass lost by truncation. Required iff ``original == "infinite"``.
    """

    states: tuple
    original: str = "finite"
    truncated_mass: Optional[float] = None

    def __post_init__(self):
        st = tuple(int(s) for s in self.states)
        if not st:
            raise InvalidPrimitive("state space must be nonempty")
        if any(b <= a for a, b in zip(st, st[1:])):
            raise InvalidPrimitive(f"states must be strictly increasing, got {st}")
        object.__setattr__(self, "states", st)
        if self.original not in ("finite", "infinite"):
            raise InvalidPrimitive(f"unknown original {self.original!r}")
        if (self.truncated_mass is None) != (self.original == "finite"):
            raise InvalidPrimitive("truncated_mass is required exactly for infinite state sets")
        if self.truncated_mass is not None and not 0.0 <= self.truncated_mass < 1.0:
            raise InvalidPrimitive("truncated_mass must lie in [0, 1)")

    @classmethod
    def window(cls, lo: int, hi: int, truncated_mass: Optional[float] = None) -> "StateSpace":
        if truncated_mass is None:
            return cls(tuple(range(lo, hi + 1)))
        return cls(tuple(range(lo, hi + 1)), "infinite", truncated_mass)

    @property
    def truncated(self) -> bool:
        return self.original == "infinite"

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.states, dtype=float)

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def index(self, w: int) -> int:
        try:
            return self.states.index(int(w))
        except ValueError:
            raise InvalidPrimitive(f"state {w} not in {self.states}") from None

    def lower(self, w: int) -> tuple:
        return tuple(x for x in self.states if x < w)

    def upper(self, w: int) -> tuple:
        return tuple(x for x in self.states if x > w)


@dataclass(frozen=True, eq=False)
class Belief:
    """Probability mass function on a state space with exact-zero support."""

    space: StateSpace
    mass: np.ndarray

    def __post_init__(self):
        m = np.array(self.mass, dtype=float)
        if m.shape != (len(self.space),):
            raise InvalidBelief(f"expected {len(self.space)} masses, got shape {m.shape}")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise InvalidBelief("masses must be finite and nonnegative")
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise InvalidBelief(f"masses sum to {m.sum()!r}, not 1")
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)

    @classmethod
    def from_log_weights(cls, space: StateSpace, logw) -> "Belief":
        logw = np.asarray(logw, dtype=float)
        if not np.any(np.isfinite(logw)):
            raise InvalidBelief("all weights are zero")
        return cls(space, _kernels.normalize_log(logw))

    @classmethod
    def point(cls, space: StateSpace, w: int) -> "Belief":
        m = np.zeros(len(space))
        m[space.index(w)] = 1.0
        return cls(space, m)

    @classmethod
    def uniform(cls, space: StateSpace, support: Optional[Iterable[int]] = None) -> "Belief":
        sup = space.states if support is None else tuple(support)
        return make_belief(space, [1.0 if w in sup else 0.0 for w in space.states])

    @property
    def support(self) -> tuple:
        return tuple(w for w, m in zip(self.space.states, self.mass) if m > 0)

    @property
    def support_mask(self) -> np.ndarray:
        return self.mass > 0

    @property
    def log_mass(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.mass)

    def __getitem__(self, w) -> float:
        return float(self.mass[self.space.index(w)])

    def __eq__(self, other):
        return (isinstance(other, Belief) and self.space == other.space
                and np.array_equal(self.mass, other.mass))

    def __hash__(self):
        return hash((self.space, self.mass.tobytes()))

    def __repr__(self):
        body = ", ".join(f"{w}: {m:.6g}" for w, m in zip(self.space.states, self.mass))
        return f"Belief({{{body}}})"


def make_belief(space: StateSpace, weights: Sequence[float]) -> Belief:
    """Normalize nonnegative weights into a belief.

    Raises
    ------
    InvalidBelief
        On negative, non-finite or all-zero weights.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(space),):
        raise InvalidBelief(f"expected {len(space)} weights, got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidBelief("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise InvalidBelief("weights are all zero")
    return Belief(space, w / total)


@dataclass(frozen=True, eq=False)
class UtilityTable:
    """Bounded utility u(a, w) on a finite action set.

    ``u[i, j]`` is the utility of ``actions[i]`` in state ``space.states[j]``.
    """

    space: StateSpace
    actions: tuple
    u: np.ndarray = field(repr=False)

    def __post_init__(self):
        acts = tuple(self.actions)
        if len(acts) < 2:
            raise InvalidPrimitive("need at least two actions")
        if len(set(acts)) != len(acts):
            raise InvalidPrimitive("action labels must be distinct")
        u = np.array(self.u, dtype=float)
        if u.shape != (len(acts), len(self.space)):
            raise InvalidPrimitive(f"utility matrix must have shape {(len(acts), len(self.space))}, got {u.shape}")
        if not np.all(np.isfinite(u)):
            raise InvalidPrimitive("utilities must be finite")
        u.setflags(write=False)
        object.__setattr__(self, "actions", acts)
        object.__setattr__(self, "u", u)

    @classmethod
    def quadratic_loss(cls, space: StateSpace, actions: Optional[Sequence[int]] = None) -> "UtilityTable":
        acts = tuple(space.states if actions is None else actions)
        a = np.asarray(acts, dtype=float)[:, None]
        return cls(space, acts, -(a - space.values[None, :]) ** 2)

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.u)))

    def tie_abs(self, tie_tol: float = TIE_TOL) -> float:
        return tie_tol * self.scale

    def index(self, a: Hashable) -> int:
        try:
            return self.actions.index(a)
        except ValueError:
            raise UnknownAction(a) from None

    def difference(self, a, a2) -> np.ndarray:
        """D_{a,a2}(w) = u(a, w) - u(a2, w) for every state."""
        return self.u[self.index(a)] - self.u[self.index(a2)]


def _check_space(u: UtilityTable, mu: Belief):
    if u.space != mu.space:
        raise InvalidPrimitive("utility table and belief live on different state spaces")


def optimal_mask(u: UtilityTable, masses: np.ndarray, tie_tol: float = TIE_TOL) -> np.ndarray:
    """Boolean (..., n_actions) mask of optimal actions for a stack of beliefs."""
    eu = np.asarray(masses) @ u.u.T
    return eu >= eu.max(axis=-1, keepdims=True) - u.tie_abs(tie_tol)


def choice_indices(u: UtilityTable, mass: np.ndarray, tie_tol: float = TIE_TOL) -> np.ndarray:
    """Indices of the optimal actions in increasing order."""
    return np.flatnonzero(optimal_mask(u, mass, tie_tol))


def choice_set(u: UtilityTable, mu: Belief, tie_tol: float = TIE_TOL) -> frozenset:
    """Actions maximizing expected utility under ``mu`` up to ``tie_tol * max|u|``."""
    _check_space(u, mu)
    return frozenset(u.actions[i] for i in choice_indices(u, mu.mass, tie_tol))


def point_choice_indices(u: UtilityTable, tie_tol: float = TIE_TOL) -> list:
    """c(delta_w) as index sets, one per state."""
    return [set(choice_indices(u, np.eye(len(u.space))[j], tie_tol).tolist()) for j in range(len(u.space))]


@dataclass(frozen=True)
class AdequacyResult:
    holds: bool
    witness: Optional[Hashable] = None

    def __bool__(self):
        return self.holds


def adequate_knowledge(u: UtilityTable, mu: Belief, tie_tol: float = TIE_TOL) -> AdequacyResult:
    """Whether one action is optimal in every state of the support of ``mu``."""
    _check_space(u, mu)
    per_state = point_choice_indices(u, tie_tol)
    common = set(range(len(u.actions)))
    for j in np.flatnonzero(mu.support_mask):
        common &= per_state[j]
    if not common:
        return AdequacyResult(False)
    return AdequacyResult(True, u.actions[min(common)])


def expected_difference(u: UtilityTable, a, a2, mu: Belief) -> float:
    """Expected utility gain of ``a`` over ``a2`` under ``mu``."""
    _check_space(u, mu)
    return float(mu.mass @ u.difference(a, a2))
