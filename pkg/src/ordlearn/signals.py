"""Signal structures: finite matrices, posterior-generated structures and location families."""
from __future__ import annotations

import math
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special, stats

from . import _kernels as K
from .core import Belief, StateSpace, make_belief
from .errors import (InvalidPrimitive, NonExhaustivePartition, NotBayesPlausible,
                     SignalOutOfDomain, Unsupported)

COLUMN_TOL = 1e-12
PLAUSIBILITY_SLACK = 1e-9


class SignalModel:
    """Common interface. Subclasses set ``space``, ``discrete`` and ``ordered``."""

    space: StateSpace
    discrete: bool = False
    ordered: bool = True

    def log_likelihoods(self, s) -> np.ndarray:
        """log f(s|w) for every state of the window."""
        raise NotImplementedError

    def log_likelihood(self, s, w) -> float:
        return float(self.log_likelihoods(s)[self.space.index(w)])

    def sample(self, w, rng: np.random.Generator):
        raise NotImplementedError


class DiscreteSignals(SignalModel):
    """Shared machinery for structures with finitely many signals."""

    discrete = True
    signals: tuple
    log_f: np.ndarray  # (n_signals, n_states)

    def signal_index(self, s) -> int:
        try:
            return self._index[s]
        except (KeyError, TypeError):
            raise SignalOutOfDomain(f"signal {s!r} is not in the signal set") from None

    def log_likelihoods(self, s) -> np.ndarray:
        return self.log_f[self.signal_index(s)]

    @property
    def f(self) -> np.ndarray:
        return np.exp(self.log_f)

    def signal_from_uniform(self, w, v: float):
        """Inverse-CDF draw of a signal in state ``w`` from a uniform ``v``."""
        col = self.f[:, self.space.index(w)]
        i = int(np.searchsorted(np.cumsum(col), v * col.sum(), side="right"))
        return self.signals[min(i, len(self.signals) - 1)]

    def sample(self, w, rng):
        return self.signal_from_uniform(w, rng.random())

    def sample_many(self, w, rng, n: int) -> np.ndarray:
        """``n`` draws; the same inverse CDF as ``signal_from_uniform``, returned as signal indices."""
        col = self.f[:, self.space.index(w)]
        idx = np.searchsorted(np.cumsum(col), rng.random(n) * col.sum(), side="right")
        return np.minimum(idx, len(self.signals) - 1)

    def _build_index(self):
        self._index = {s: i for i, s in enumerate(self.signals)}


class FiniteMatrix(DiscreteSignals):
    """Finite signal set with ``f_matrix[i, j] = f(signals[i] | states[j])``."""

    def __init__(self, space: StateSpace, signals: Sequence[float], f_matrix):
        sig = tuple(float(s) for s in signals)
        if any(b <= a for a, b in zip(sig, sig[1:])):
            raise InvalidPrimitive("signal labels must be strictly increasing")
        f = np.array(f_matrix, dtype=float)
        if f.shape != (len(sig), len(space)):
            raise InvalidPrimitive(f"matrix must have shape {(len(sig), len(space))}, got {f.shape}")
        if not np.all(np.isfinite(f)) or np.any(f <= 0):
            raise InvalidPrimitive("every likelihood must be strictly positive")
        sums = f.sum(axis=0)
        if np.max(np.abs(sums - 1.0)) > COLUMN_TOL:
            raise InvalidPrimitive(f"columns must sum to 1, got {sums.tolist()}")
        f.setflags(write=False)
        self.space = space
        self.signals = sig
        self.f_matrix = f
        self.log_f = np.log(f)
        self._build_index()

    @classmethod
    def uninformative(cls, space: StateSpace, n_signals: int = 2) -> "FiniteMatrix":
        return cls(space, tuple(range(1, n_signals + 1)), np.full((n_signals, len(space)), 1.0 / n_signals))

    def __repr__(self):
        return f"FiniteMatrix(states={self.space.states}, signals={self.signals})"


class PosteriorSequence(DiscreteSignals):
    """Structure induced by a Bayes-plausible list of weighted posteriors.

    Signal ``i`` (1-based) induces posterior ``entries[i-1][1]`` from the
    prior; the last signal is the residual that restores the balance.
    """

    ordered = False

    def __init__(self, prior: Belief, entries: Sequence[tuple]):
        if not np.all(prior.mass > 0):
            raise InvalidPrimitive("the prior must have full support")
        qs = np.array([float(q) for q, _ in entries])
        if np.any(qs <= 0):
            raise InvalidPrimitive("weights must be positive")
        if qs.sum() > 1.0 - PLAUSIBILITY_SLACK:
            raise NotBayesPlausible(f"weights sum to {qs.sum()}, leaving no residual mass")
        nus = []
        for _, nu in entries:
            nu = nu if isinstance(nu, Belief) else make_belief(prior.space, nu)
            if nu.space != prior.space or not np.all(nu.mass > 0):
                raise InvalidPrimitive("every posterior must have full support on the prior's space")
            nus.append(nu.mass)
        nus = np.array(nus).reshape(len(entries), len(prior.space))
        mix = qs @ nus
        rest = prior.mass - mix
        if np.any(rest <= 0):
            bad = int(np.argmin(rest))
            raise NotBayesPlausible(f"residual posterior is nonpositive at state {prior.space.states[bad]}")
        self.space = prior.space
        self.prior = prior
        self.weights = qs
        self.posteriors = nus
        self.residual_weight = 1.0 - qs.sum()
        self.residual_posterior = rest / rest.sum()
        with np.errstate(divide="ignore"):
            lf = np.vstack([np.log(qs)[:, None] + np.log(nus) - np.log(prior.mass)[None, :],
                            np.log(rest)[None, :] - np.log(prior.mass)[None, :]])
        self.log_f = lf
        self.signals = tuple(range(1, len(entries) + 2))
        self._build_index()

    @property
    def residual_signal(self) -> int:
        return self.signals[-1]

    def balance_error(self) -> float:
        """max_w |sum_i q_i nu_i(w) + q_res nu_res(w) - prior(w)|."""
        total = self.weights @ self.posteriors + self.residual_weight * self.residual_posterior
        return float(np.max(np.abs(total - self.prior.mass)))


# --- location families ----------------------------------------------------------

_KIND_CODES = {"normal": K.NORMAL, "laplace": K.LAPLACE, "student_t": K.STUDENT_T}


class LocationFamily(SignalModel):
    """f(s|w) = g(s - w) for a bounded, strictly positive standard density g.

    Parameters
    ----------
    kind : {"normal", "laplace", "student_t", "custom"}
    params : mapping
        ``sigma`` for normal, ``b`` for laplace, ``df`` and ``scale`` for
        student_t. Custom kinds are generalized normal densities
        exp(-|x/scale|**exponent) with keys ``exponent`` and ``scale``,
        or an arbitrary ``log_g`` callable passed separately.
    space : StateSpace
    log_g : callable, optional
        Vectorized log density for custom kinds; normalized numerically.
    tail_exponent : float, optional
        Declared tail exponent p of a custom density, if known.
    """

    discrete = False
    ordered = True

    def __init__(self, kind: str, params: Mapping, space: StateSpace,
                 log_g: Optional[Callable] = None, tail_exponent: Optional[float] = None):
        self.kind = kind
        self.params = dict(params)
        self.space = space
        self.tail_exponent = tail_exponent
        self.code = _KIND_CODES.get(kind)
        if kind == "normal":
            self.p0, self.p1 = float(self.params["sigma"]), 0.0
            self.scale = self.p0
        elif kind == "laplace":
            self.p0, self.p1 = float(self.params["b"]), 0.0
            self.scale = self.p0
        elif kind == "student_t":
            self.p0, self.p1 = float(self.params["df"]), float(self.params.get("scale", 1.0))
            self.scale = self.p1
        elif kind == "custom":
            self.p0 = self.p1 = 0.0
            if log_g is None:
                p = float(self.params["exponent"])
                b = float(self.params.get("scale", 1.0))
                norm = math.log(p / (2.0 * b * math.gamma(1.0 / p)))
                log_g = lambda x, p=p, b=b, c=norm: c - np.abs(np.asarray(x, dtype=float) / b) ** p
                self.tail_exponent = p if tail_exponent is None else tail_exponent
                self.scale = b
            else:
                self.scale = float(self.params.get("scale", 1.0))
                raw = log_g
                peak = float(raw(0.0))
                z, _ = integrate.quad(lambda t: math.exp(float(raw(t)) - peak), -np.inf, np.inf, epsabs=0, epsrel=1e-13)
                c = -(peak + math.log(z))
                log_g = lambda x, raw=raw, c=c: np.asarray(raw(x), dtype=float) + c
            self._log_g = log_g
        else:
            raise InvalidPrimitive(f"unknown location family {kind!r}")
        if self.scale <= 0 or (kind == "student_t" and self.p0 <= 0):
            raise InvalidPrimitive("scale parameters must be positive")
        self._states = space.values

    # standard density ---------------------------------------------------------

    @property
    def named(self) -> bool:
        return self.code is not None

    def log_g(self, x):
        x = np.asarray(x, dtype=float)
        if self.named:
            return K.v_log_density(self.code, self.p0, self.p1, x)
        return self._log_g(x)

    def log_cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.named:
            return K.v_log_cdf(self.code, self.p0, self.p1, x)
        return np.vectorize(self._custom_log_cdf)(x)

    def log_sf(self, x):
        x = np.asarray(x, dtype=float)
        if self.named:
            return K.v_log_cdf(self.code, self.p0, self.p1, -x)
        return np.vectorize(lambda t: self._custom_log_cdf(t, upper=True))(x)

    def _custom_log_cdf(self, x: float, upper: bool = False) -> float:
        # integrate exp(log g(t) - log g(x0)) to keep deep tails representable
        if math.isinf(x):
            return 0.0 if (x > 0) != upper else -math.inf
        tail_side = (x > 0) == upper
        if tail_side:
            ref = float(self._log_g(x))
            f = lambda t: math.exp(float(self._log_g(t)) - ref)
            lo, hi = (x, np.inf) if upper else (-np.inf, x)
            val, _ = integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-12, limit=200)
            return ref + math.log(val)
        return float(K.log1mexp(self._custom_log_cdf(x, upper=not upper)))

    def log_interval(self, lo, hi):
        """log (G(hi) - G(lo)) for standardized endpoints."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if self.named:
            return K.v_log_interval(self.code, self.p0, self.p1, lo, hi)
        return np.vectorize(self._custom_log_interval)(lo, hi)

    def _custom_log_interval(self, lo: float, hi: float) -> float:
        if hi <= lo:
            return -math.inf
        if hi <= 0:
            lb, la = self._custom_log_cdf(hi), self._custom_log_cdf(lo)
            return lb + float(K.log1mexp(la - lb)) if la > -math.inf else lb
        if lo >= 0:
            sa, sb = self._custom_log_cdf(lo, True), self._custom_log_cdf(hi, True)
            return sa + float(K.log1mexp(sb - sa)) if sb > -math.inf else sa
        return math.log1p(-(math.exp(self._custom_log_cdf(lo)) + math.exp(self._custom_log_cdf(hi, True))))

    def quantile(self, q: float) -> float:
        if self.kind == "normal":
            return float(stats.norm.ppf(q, scale=self.p0))
        if self.kind == "laplace":
            return float(stats.laplace.ppf(q, scale=self.p0))
        if self.kind == "student_t":
            return float(stats.t.ppf(q, self.p0, scale=self.p1))
        target = math.log(q)
        f = lambda x: self._custom_log_cdf(x) - target
        lo, hi = -self.scale, self.scale
        while f(lo) > 0:
            lo *= 2
        while f(hi) < 0:
            hi *= 2
        return float(optimize.brentq(f, lo, hi, xtol=1e-12))

    def sample_noise(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "normal":
            return rng.normal(0.0, self.p0, n)
        if self.kind == "laplace":
            return rng.laplace(0.0, self.p0, n)
        if self.kind == "student_t":
            return self.p1 * rng.standard_t(self.p0, n)
        return np.array([self.quantile(v) for v in rng.random(n)])

    # signal model interface ---------------------------------------------------

    def log_likelihoods(self, s) -> np.ndarray:
        return self.log_g(float(s) - self._states)

    def log_likelihood_matrix(self, s: np.ndarray) -> np.ndarray:
        """(len(s), n_states) matrix of log f(s_i | w_j)."""
        return self.log_g(np.asarray(s, dtype=float)[:, None] - self._states[None, :])

    def sample(self, w, rng):
        self.space.index(w)
        return float(w + self.sample_noise(rng, 1)[0])

    @property
    def spread(self) -> float:
        """Probe unit: the width of the state window, at least one scale unit."""
        st = self.space.states
        return float(max(st[-1] - st[0], self.scale, 1.0))

    def log_ratio_lower_bound(self, d: float) -> Optional[float]:
        """Certified inf over x of log g(x + d) - log g(x), or None if unbounded below."""
        if d == 0:
            return 0.0
        if self.kind == "laplace":
            return -abs(d) / self.p0
        if self.kind == "student_t":
            return -(self.p0 + 1.0) * math.log1p(abs(d) / (self.p1 * math.sqrt(self.p0)))
        return None

    def describe(self) -> dict:
        return {"kind": "location", "family": self.kind, "params": self.params,
                "state_window": [self.space.states[0], self.space.states[-1]]}

    def __repr__(self):
        return f"LocationFamily({self.kind}, {self.params}, states={self.space.states})"


class MixtureAtomFamily(SignalModel):
    """Signals on the integers: f(s|w) = (1-lam) g(s-w) + lam 1[s = -w].

    The base g defaults to the discrete Gaussian k exp(-x^2) on the integers.
    """

    discrete = True
    ordered = True

    def __init__(self, space: StateSpace, lam: float, base_log_pmf: Optional[Callable] = None, support: int = 60):
        if not 0.0 < lam < 1.0:
            raise InvalidPrimitive("lambda must lie in (0, 1)")
        self.space = space
        self.lam = float(lam)
        if base_log_pmf is None:
            xs = np.arange(-support, support + 1)
            log_k = -float(special.logsumexp(-xs.astype(float) ** 2))
            base_log_pmf = lambda x, c=log_k: c - np.asarray(x, dtype=float) ** 2
        self.base_log_pmf = base_log_pmf
        self._support = support
        self._states = space.values

    def _check(self, s) -> int:
        if isinstance(s, (bool, np.bool_)) or float(s) != round(float(s)):
            raise SignalOutOfDomain(f"signal {s!r} is not an integer")
        return int(round(float(s)))

    def log_likelihoods(self, s) -> np.ndarray:
        s = self._check(s)
        base = math.log1p(-self.lam) + self.base_log_pmf(s - self._states)
        atom = (s == -self._states)
        out = np.array(base, dtype=float)
        out[atom] = np.logaddexp(base[atom], math.log(self.lam))
        return out

    def log_ratio(self, s, w2, w) -> float:
        """log f(s|w2) - log f(s|w) for any integer states, inside or outside the window."""
        s = self._check(s)

        def lf(x):
            b = math.log1p(-self.lam) + float(self.base_log_pmf(s - x))
            return float(np.logaddexp(b, math.log(self.lam))) if s == -x else b

        return lf(w2) - lf(w)

    def sample(self, w, rng):
        self.space.index(w)
        if rng.random() < self.lam:
            return -int(w)
        xs = np.arange(-self._support, self._support + 1)
        p = np.exp(self.base_log_pmf(xs))
        return int(w + xs[min(int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right")), len(xs) - 1)])

    def faithful_signals(self) -> tuple:
        """Signals whose atoms belong to states inside the window."""
        return tuple(sorted(-w for w in self.space.states))


# --- module-level operations ---------------------------------------------------

def log_likelihood(model: SignalModel, s, w) -> float:
    """log f(s|w); raises SignalOutOfDomain for signals outside a discrete domain."""
    return model.log_likelihood(s, w)


def bayes_update(mu: Belief, model: SignalModel, s) -> Belief:
    """Posterior after observing signal ``s``; the support is preserved exactly."""
    if mu.space != model.space:
        raise InvalidPrimitive("belief and signal model live on different state spaces")
    return Belief(mu.space, K.update_mass(mu.mass, model.log_likelihoods(s)))


def from_posteriors(prior: Belief, entries: Sequence[tuple]) -> PosteriorSequence:
    """Signal structure inducing the listed (weight, posterior) pairs from ``prior``."""
    return PosteriorSequence(prior, entries)


def sample_signal(model: SignalModel, w, rng: np.random.Generator):
    return model.sample(w, rng)


def _assignment(partition) -> Mapping:
    return partition.assignment if hasattr(partition, "assignment") else partition


def action_probability(model: SignalModel, partition, w) -> dict:
    """Pr(action | state w) for a disjoint, exhaustive assignment of signals to actions.

    ``partition`` maps each action to a collection of signals (discrete
    backends) or to a list of ``(lo, hi)`` intervals, left-open and
    right-closed (location families). Objects with an ``assignment``
    attribute are accepted.
    """
    assign = _assignment(partition)
    j = model.space.index(w)
    if isinstance(model, LocationFamily):
        pieces = sorted((float(lo), float(hi), a) for a, ivs in assign.items() for lo, hi in ivs)
        edges = [p[0] for p in pieces] + [pieces[-1][1]] if pieces else []
        if (not pieces or pieces[0][0] != -np.inf or pieces[-1][1] != np.inf
                or any(pieces[i][1] != pieces[i + 1][0] for i in range(len(pieces) - 1))):
            raise NonExhaustivePartition(f"intervals do not tile the real line: {edges}")
        out = {a: 0.0 for a in assign}
        for lo, hi, a in pieces:
            out[a] += float(np.exp(model.log_interval(lo - w, hi - w)))
        return out
    if not isinstance(model, DiscreteSignals):
        raise Unsupported(f"action probabilities are not available for {type(model).__name__}")
    seen = {}
    for a, sigs in assign.items():
        for s in sigs:
            i = model.signal_index(s)
            if i in seen:
                raise NonExhaustivePartition(f"signal {s!r} assigned to both {seen[i]!r} and {a!r}")
            seen[i] = a
    if len(seen) != len(model.signals):
        missing = [s for i, s in enumerate(model.signals) if i not in seen]
        raise NonExhaustivePartition(f"signals without an action: {missing}")
    f = np.exp(model.log_f[:, j])
    out = {a: 0.0 for a in assign}
    for i, a in seen.items():
        out[a] += float(f[i])
    return out


# --- JSON descriptors ----------------------------------------------------------

def from_descriptor(d: Mapping) -> SignalModel:
    """Build a signal model from its JSON descriptor."""
    kind = d.get("kind")
    if kind == "finite":
        space = StateSpace(tuple(d["states"]))
        return FiniteMatrix(space, tuple(d["signals"]), np.array(d["matrix"], dtype=float))
    if kind == "location":
        lo, hi = d["state_window"]
        space = StateSpace.window(int(lo), int(hi))
        return LocationFamily(d["family"], d.get("params", {}), space)
    if kind == "posterior_sequence":
        states = tuple(d.get("states", range(1, len(d["prior"]) + 1)))
        space = StateSpace(states)
        prior = make_belief(space, d["prior"])
        return from_posteriors(prior, [(e["q"], make_belief(space, e["nu"])) for e in d["entries"]])
    raise InvalidPrimitive(f"unknown model kind {kind!r}")
