"""Compiled numeric kernels.

Location kinds are coded as integers: 0 normal(sigma), 1 laplace(b),
2 student t(df, scale). All three standard densities are symmetric, so
log G(-x) doubles as the log survival function.
"""
import math

import numpy as np
from numba import njit, vectorize

NORMAL, LAPLACE, STUDENT_T = 0, 1, 2

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_LOG_HALF = math.log(0.5)
_SQRT_HALF = math.sqrt(0.5)
_INF = np.inf
_TINY = 2.2250738585072014e-308


# --- log-domain helpers -----------------------------------------------------

@njit(cache=True)
def log1mexp(x):
    """log(1 - exp(x)) for x <= 0."""
    if x > -0.6931471805599453:
        return math.log(-math.expm1(x))
    return math.log1p(-math.exp(x))


@njit(cache=True)
def logaddexp(a, b):
    if a == -_INF:
        return b
    if b == -_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def normalize_log(logw):
    """exp(logw) / sum(exp(logw)); entries equal to -inf map to exact zeros.

    Finite entries whose share underflows are floored at the smallest normal
    double so the support is structural rather than numerical.
    """
    m = -_INF
    for k in range(logw.shape[0]):
        if logw[k] > m:
            m = logw[k]
    out = np.empty(logw.shape[0])
    z = 0.0
    for k in range(logw.shape[0]):
        out[k] = math.exp(logw[k] - m)
        z += out[k]
    for k in range(logw.shape[0]):
        out[k] /= z
        if out[k] < _TINY and logw[k] > -_INF:
            out[k] = _TINY
    return out


@njit(cache=True)
def log_of(mass):
    out = np.empty(mass.shape[0])
    for k in range(mass.shape[0]):
        out[k] = math.log(mass[k]) if mass[k] > 0.0 else -_INF
    return out


@njit(cache=True)
def update_mass(mass, loglik):
    """Posterior mass from prior mass and per-state log likelihoods."""
    lw = log_of(mass)
    for k in range(mass.shape[0]):
        if lw[k] > -_INF:
            lw[k] += loglik[k]
    return normalize_log(lw)


# --- standard densities -------------------------------------------------------

@njit(cache=True)
def log_density(kind, p0, p1, x):
    if kind == NORMAL:
        z = x / p0
        return -0.5 * z * z - _LOG_SQRT_2PI - math.log(p0)
    if kind == LAPLACE:
        return -abs(x) / p0 - math.log(2.0 * p0)
    y = x / p1
    return (math.lgamma(0.5 * (p0 + 1.0)) - math.lgamma(0.5 * p0) - 0.5 * math.log(p0 * math.pi)
            - math.log(p1) - 0.5 * (p0 + 1.0) * math.log1p(y * y / p0))


@njit(cache=True)
def _log_ndtr(z):
    if z > 6.0:
        return math.log1p(-0.5 * math.erfc(z * _SQRT_HALF))
    if z > -20.0:
        return math.log(0.5 * math.erfc(-z * _SQRT_HALF))
    # asymptotic expansion of the Mills ratio
    z2 = z * z
    s = 1.0
    term = 1.0
    for k in range(1, 12):
        term *= -(2.0 * k - 1.0) / z2
        s += term
    return -0.5 * z2 - _LOG_SQRT_2PI - math.log(-z) + math.log(s)


@njit(cache=True)
def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        de = d * c
        h *= de
        if abs(de - 1.0) < 1e-16:
            break
    return h


@njit(cache=True)
def log_betainc(a, b, x, xc):
    """log of the regularized incomplete beta I_x(a, b); ``xc`` is 1 - x."""
    if x <= 0.0:
        return -_INF
    if xc <= 0.0:
        return 0.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = lbeta + a * math.log(x) + b * math.log(xc)
    if x < (a + 1.0) / (a + b + 2.0):
        return front + math.log(_betacf(a, b, x)) - math.log(a)
    return log1mexp(front + math.log(_betacf(b, a, xc)) - math.log(b))


@njit(cache=True)
def log_cdf(kind, p0, p1, x):
    if x == _INF:
        return 0.0
    if x == -_INF:
        return -_INF
    if kind == NORMAL:
        return _log_ndtr(x / p0)
    if kind == LAPLACE:
        if x < 0.0:
            return _LOG_HALF + x / p0
        return math.log1p(-0.5 * math.exp(-x / p0))
    y = x / p1
    y2 = y * y
    li = log_betainc(0.5 * p0, 0.5, p0 / (p0 + y2), y2 / (p0 + y2))
    if y < 0.0:
        return _LOG_HALF + li
    return math.log1p(-0.5 * math.exp(li))


@njit(cache=True)
def log_interval(kind, p0, p1, lo, hi):
    """log of G(hi) - G(lo) for standardized endpoints lo < hi."""
    if hi <= lo:
        return -_INF
    if hi <= 0.0:
        lb = log_cdf(kind, p0, p1, hi)
        la = log_cdf(kind, p0, p1, lo)
        return lb + log1mexp(la - lb)
    if lo >= 0.0:
        sa = log_cdf(kind, p0, p1, -lo)
        sb = log_cdf(kind, p0, p1, -hi)
        return sa + log1mexp(sb - sa)
    return math.log1p(-(math.exp(log_cdf(kind, p0, p1, lo)) + math.exp(log_cdf(kind, p0, p1, -hi))))


@vectorize(["float64(int64, float64, float64, float64)"], cache=True)
def v_log_density(kind, p0, p1, x):
    return log_density(kind, p0, p1, x)


@vectorize(["float64(int64, float64, float64, float64)"], cache=True)
def v_log_cdf(kind, p0, p1, x):
    return log_cdf(kind, p0, p1, x)


@vectorize(["float64(int64, float64, float64, float64, float64)"], cache=True)
def v_log_interval(kind, p0, p1, lo, hi):
    return log_interval(kind, p0, p1, lo, hi)


# --- canonical choice and partition search ----------------------------------

@njit(cache=True)
def log_shape(kind, inv, p1, x):
    """log g(x) up to an additive constant; ``inv`` is 1/scale."""
    y = x * inv
    if kind == NORMAL:
        return -0.5 * y * y
    if kind == LAPLACE:
        return -abs(y)
    return -0.5 * (p1 + 1.0) * math.log1p(y * y / p1)


@njit(cache=True, inline="always")
def choose(kind, inv, nu, states, logmu, u, tie_abs, s, w, eu):
    """Lowest-index optimal action at the posterior after signal ``s``.

    ``inv`` is the reciprocal scale and ``nu`` the t degrees of freedom.
    ``states``/``logmu``/``u`` are restricted to the support of the belief;
    ``w`` and ``eu`` are scratch buffers.
    """
    ns = states.shape[0]
    m = -_INF
    if kind == NORMAL:
        for k in range(ns):
            y = (s - states[k]) * inv
            w[k] = logmu[k] - 0.5 * y * y
    elif kind == LAPLACE:
        for k in range(ns):
            w[k] = logmu[k] - abs(s - states[k]) * inv
    else:
        for k in range(ns):
            w[k] = logmu[k] + log_shape(kind, inv, nu, s - states[k])
    for k in range(ns):
        if w[k] > m:
            m = w[k]
    z = 0.0
    for k in range(ns):
        w[k] = math.exp(w[k] - m)
        z += w[k]
    na = u.shape[0]
    best = -_INF
    for a in range(na):
        e = 0.0
        for k in range(ns):
            e += w[k] * u[a, k]
        eu[a] = e
        if e > best:
            best = e
    thr = best - tie_abs * z
    for a in range(na):
        if eu[a] >= thr:
            return a
    return 0


@njit(cache=True)
def shape_params(kind, p0, p1):
    if kind == STUDENT_T:
        return 1.0 / p1, p0
    return 1.0 / p0, 0.0


@njit(cache=True)
def probe_points(glo, ghi, n_grid, spread, n_tail):
    """Grid on [glo, ghi] flanked by geometric tail probes spread * 2**k."""
    pts = np.empty(n_grid + 2 * n_tail)
    for i in range(n_tail):
        pts[i] = glo - spread * 2.0 ** (n_tail - 1 - i)
    for j in range(n_grid):
        pts[n_tail + j] = glo + (ghi - glo) * j / (n_grid - 1)
    for i in range(n_tail):
        pts[n_tail + n_grid + i] = ghi + spread * 2.0 ** i
    return pts


@njit(cache=True)
def _scan_normal(inv, states, logmu, u, tie_abs, pts, j0, n, out):
    """Canonical choices on the uniform stretch pts[j0:j0+n] for the normal kind.

    The quadratic term of the log density is common to all states, so the
    unnormalized posterior weights follow w_k(s + h) = w_k(s) exp(h k inv^2)
    along the grid; they are recomputed from logs every 32 points.
    """
    ns = states.shape[0]
    na = u.shape[0]
    h = pts[j0 + 1] - pts[j0]
    i2 = inv * inv
    beta = np.empty(ns)
    r = np.empty(ns)
    w = np.empty(ns)
    eu = np.empty(na)
    for k in range(ns):
        beta[k] = states[k] * i2
        r[k] = math.exp(beta[k] * h)
    for j in range(n):
        s = pts[j0 + j]
        if j % 32 == 0:
            m = -_INF
            for k in range(ns):
                w[k] = logmu[k] + beta[k] * s - 0.5 * states[k] * states[k] * i2
                if w[k] > m:
                    m = w[k]
            for k in range(ns):
                w[k] = math.exp(w[k] - m)
        else:
            for k in range(ns):
                w[k] *= r[k]
        z = 0.0
        for k in range(ns):
            z += w[k]
        best = -_INF
        for a in range(na):
            e = 0.0
            for k in range(ns):
                e += w[k] * u[a, k]
            eu[a] = e
            if e > best:
                best = e
        thr = best - tie_abs * z
        for a in range(na):
            if eu[a] >= thr:
                out[j0 + j] = a
                break


@njit(cache=True)
def partition(kind, p0, p1, states, logmu, u, tie_abs, pts, n_tail, bisect_tol, max_bounds, bounds, acts):
    """Threshold strategy for a location family.

    ``pts`` holds ``n_tail`` left tail probes, a uniform grid, then
    ``n_tail`` right tail probes. Grid choices only flag brackets; every
    bracket is re-labelled and bisected with the exact choice rule.
    Returns the number of thresholds m; ``bounds[:m]`` are increasing and
    ``acts[i]`` is the action on (bounds[i-1], bounds[i]] with the outer
    pieces unbounded. Returns -1 when more than ``max_bounds`` thresholds
    appear.
    """
    inv, nu = shape_params(kind, p0, p1)
    ns = states.shape[0]
    w = np.empty(ns)
    eu = np.empty(u.shape[0])
    npts = pts.shape[0]
    lab = np.empty(npts, dtype=np.int64)
    n_grid = npts - 2 * n_tail
    if kind == NORMAL and n_grid > 1:
        _scan_normal(inv, states, logmu, u, tie_abs, pts, n_tail, n_grid, lab)
        for i in range(n_tail):
            lab[i] = choose(kind, inv, nu, states, logmu, u, tie_abs, pts[i], w, eu)
            lab[npts - 1 - i] = choose(kind, inv, nu, states, logmu, u, tie_abs, pts[npts - 1 - i], w, eu)
    else:
        for i in range(npts):
            lab[i] = choose(kind, inv, nu, states, logmu, u, tie_abs, pts[i], w, eu)
    st_lo = np.empty(256)
    st_la = np.empty(256, dtype=np.int64)
    st_hi = np.empty(256)
    st_ha = np.empty(256, dtype=np.int64)
    prev = choose(kind, inv, nu, states, logmu, u, tie_abs, pts[0], w, eu)
    acts[0] = prev
    m = 0
    for i in range(1, npts):
        if lab[i] == lab[i - 1]:
            continue
        cur = choose(kind, inv, nu, states, logmu, u, tie_abs, pts[i], w, eu)
        if cur == prev:
            continue
        st_lo[0] = pts[i - 1]
        st_la[0] = prev
        st_hi[0] = pts[i]
        st_ha[0] = cur
        top = 1
        while top > 0:
            top -= 1
            lo = st_lo[top]
            la = st_la[top]
            hi = st_hi[top]
            ha = st_ha[top]
            for _ in range(400):
                tol = max(bisect_tol, 4e-16 * max(abs(lo), abs(hi)))
                if hi - lo <= tol:
                    break
                mid = 0.5 * (lo + hi)
                am = choose(kind, inv, nu, states, logmu, u, tie_abs, mid, w, eu)
                if am == la:
                    lo = mid
                elif am == ha:
                    hi = mid
                else:
                    if top >= 255:
                        return -1
                    st_lo[top] = mid
                    st_la[top] = am
                    st_hi[top] = hi
                    st_ha[top] = ha
                    top += 1
                    hi = mid
                    ha = am
            if m >= max_bounds:
                return -1
            bounds[m] = 0.5 * (lo + hi)
            acts[m + 1] = ha
            m += 1
        prev = cur
    return m


@njit(cache=True)
def locate(bounds, m, s):
    """Index of the partition piece containing s (pieces are left-open)."""
    lo = 0
    hi = m
    while lo < hi:
        mid = (lo + hi) // 2
        if bounds[mid] < s:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def log_action_prob(kind, p0, p1, bounds, m, acts, a, w):
    """log Pr(action a | state w) under a threshold strategy."""
    total = -_INF
    for i in range(m + 1):
        if acts[i] != a:
            continue
        lo = bounds[i - 1] - w if i > 0 else -_INF
        hi = bounds[i] - w if i < m else _INF
        total = logaddexp(total, log_interval(kind, p0, p1, lo, hi))
    return total


@njit(cache=True)
def run_location(kind, p0, p1, states, mass0, u, tie_abs, pts, n_tail, bisect_tol, max_bounds,
                 true_state, noise, still_tol, still_steps, early_stop,
                 out_signal, out_action, out_mass):
    """Simulate agents one by one under a location family.

    ``states``/``mass0`` cover the full window; ``u`` is the full utility
    matrix. Returns (steps simulated, first step of the final run of
    single-action partitions or -1, status) where status is 0 on success
    and -1 on a pathological partition.
    """
    ns = states.shape[0]
    na = u.shape[0]
    sup = np.empty(ns, dtype=np.int64)
    nsup = 0
    for k in range(ns):
        if mass0[k] > 0.0:
            sup[nsup] = k
            nsup += 1
    sup = sup[:nsup]
    sstates = np.empty(nsup)
    su = np.empty((na, nsup))
    for j in range(nsup):
        sstates[j] = states[sup[j]]
        for a in range(na):
            su[a, j] = u[a, sup[j]]
    bounds = np.empty(max_bounds + 1)
    acts = np.empty(max_bounds + 2, dtype=np.int64)
    mass = mass0.copy()
    loglik = np.zeros(ns)
    still = 0
    streak = -1
    horizon = noise.shape[0]
    for n in range(horizon):
        smass = np.empty(nsup)
        for j in range(nsup):
            smass[j] = mass[sup[j]]
        logmu = log_of(smass)
        m = partition(kind, p0, p1, sstates, logmu, su, tie_abs, pts, n_tail, bisect_tol, max_bounds, bounds, acts)
        if m < 0:
            return n, streak, -1
        s = true_state + noise[n]
        a = acts[locate(bounds, m, s)]
        for k in range(ns):
            loglik[k] = log_action_prob(kind, p0, p1, bounds, m, acts, a, states[k]) if mass[k] > 0.0 else 0.0
        new = update_mass(mass, loglik)
        moved = 0.0
        for k in range(ns):
            moved = max(moved, abs(new[k] - mass[k]))
        mass = new
        out_signal[n] = s
        out_action[n] = a
        out_mass[n, :] = mass
        if m == 0:
            if streak < 0:
                streak = n
        else:
            streak = -1
        still = still + 1 if moved < still_tol else 0
        if early_stop and m == 0 and still >= still_steps:
            return n + 1, streak, 0
    return horizon, streak, 0
