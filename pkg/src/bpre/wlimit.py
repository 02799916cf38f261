"""The limit W = lim W_n: Laplace transforms, left-tail decay, harmonic
moments and the geometric L^p convergence rate of W_n."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

from .environment import a0_bound
from .offspring import pgf_complement
from .simulator import coupled_logw_increments, replication_rng, run_monte_carlo

MONTE_CARLO = "monte_carlo"
QUENCHED = "quenched_recursion"
DIRECT = "direct"
GAMMA_INTEGRAL = "gamma_integral"


@dataclass
class LaplaceCurve:
    t: np.ndarray
    phi: np.ndarray
    se: np.ndarray
    estimator: str
    n: int
    replications: int

    def rows(self):
        for t, p, s in zip(self.t, self.phi, self.se):
            yield float(t), float(p), float(s), self.estimator


LAPLACE_COLUMNS = ("t", "phi", "se", "estimator")


def _exp_laplace(W, t):
    """Row-wise mean and standard error of exp(-t W) over samples W."""
    W = np.asarray(W, dtype=float)
    t = np.asarray(t, dtype=float)
    phi = np.empty(t.size)
    se = np.empty(t.size)
    for k, tk in enumerate(t):
        v = np.exp(-tk * W)
        phi[k] = v.mean()
        se[k] = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0
    return phi, se


def laplace_mc(model, t_grid, n, replications, seed, workers=1, **sim):
    """phi_hat(t) = mean of exp(-t W_n), with W_n standing in for W."""
    ss = run_monte_carlo(model, n, replications, seed, workers, **sim)
    phi, se = _exp_laplace(ss.W, t_grid)
    return LaplaceCurve(np.asarray(t_grid, float), phi, se, MONTE_CARLO, n, replications)


def laplace_quenched_recursion(env_path, t, depth=None):
    """phi_xi(t) = f_0(phi_{T xi}(t/m_0)) unrolled ``depth`` times over a fixed path.

    The base case uses e^{-s}.  Internally everything runs on 1 - phi so the
    tiny arguments t/Pi_depth keep their digits.
    """
    depth = len(env_path) if depth is None else int(depth)
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if depth > len(env_path):
        raise ValueError("environment path shorter than requested depth")
    laws = env_path[:depth]
    log_pi = sum(math.log(l.mean) for l in laws)
    t_arr = np.asarray(t, dtype=float)
    u = -np.expm1(-t_arr * math.exp(-log_pi))
    for law in reversed(laws):
        u = pgf_complement(law, u)
    out = 1.0 - u
    return float(out) if out.ndim == 0 else out


def sample_env_paths(model, depth, paths, seed):
    """Environment indices, one row per path, each row from its own stream."""
    cum = np.cumsum(model.weights)
    out = np.empty((paths, depth), dtype=np.int64)
    for i in range(paths):
        u = replication_rng(seed, i).random(depth)
        out[i] = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
    return out


def quenched_values(model, idx, t_grid):
    """phi_xi(t) for every sampled path (rows) and t (columns)."""
    t = np.asarray(t_grid, dtype=float)
    paths, depth = idx.shape
    log_pi = model.log_means[idx].sum(axis=1)
    u = -np.expm1(-np.outer(np.exp(-log_pi), t))
    for j in range(depth - 1, -1, -1):
        col = idx[:, j]
        for a, law in enumerate(model.laws):
            rows = col == a
            if rows.any():
                u[rows] = pgf_complement(law, u[rows])
    return 1.0 - u


def laplace_quenched(model, t_grid, depth, env_paths, seed):
    """Annealed phi(t) as the average of quenched recursions over sampled paths."""
    idx = sample_env_paths(model, depth, env_paths, seed)
    vals = quenched_values(model, idx, t_grid)
    phi = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(env_paths) if env_paths > 1 else np.zeros(len(phi))
    return LaplaceCurve(np.asarray(t_grid, float), phi, se, QUENCHED, depth, env_paths)


@dataclass
class TailFit:
    exponent: float
    intercept: float
    rms_residual: float
    super_polynomial: bool
    points: int


def tail_exponent_fit(curve, t_min=None, t_max=None, noise_floor=None, max_rms=0.25):
    """Least-squares power law log phi = intercept - exponent log t.

    Points with phi below the noise floor (3 SE, or ``noise_floor``) are
    dropped.  A fit whose rms log-residual exceeds ``max_rms`` is flagged as
    super-polynomial decay rather than trusted.
    """
    t = np.asarray(curve.t, float)
    phi = np.asarray(curve.phi, float)
    if t.size < 3:
        raise ValueError("tail fit needs at least 3 grid points")
    keep = (t > 0) & np.isfinite(phi)
    if t_min is not None:
        keep &= t >= t_min
    if t_max is not None:
        keep &= t <= t_max
    floor = 3.0 * np.asarray(curve.se, float) if noise_floor is None else np.full(t.size, noise_floor)
    floor = np.maximum(floor, np.finfo(float).tiny)
    usable = keep & (phi > floor)
    if usable.sum() < 3:
        raise ValueError("fewer than 3 Laplace-transform values above the noise floor")
    lt, lp = np.log(t[usable]), np.log(phi[usable])
    A = np.vstack([lt, np.ones(lt.size)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, lp, rcond=None)
    rms = float(np.sqrt(np.mean((lp - (slope * lt + icpt)) ** 2)))
    return TailFit(float(-slope), float(icpt), rms, rms > max_rms, int(usable.sum()))


@dataclass
class HarmonicEstimate:
    a: float
    estimate: float
    se: float
    method: str
    warn: bool

    def row(self):
        return (self.a, self.estimate, self.se, self.method, int(self.warn))


HARMONIC_COLUMNS = ("a", "estimate", "se", "method", "warn_flag")
DEFAULT_GAMMA_GRID = np.logspace(-6, 8, 281)


def _gamma_integral(t, phi, a, tail_exponent):
    """(1/Gamma(a)) int_0^inf phi(t) t^(a-1) dt for a curve sampled on ``t``.

    [0, t_0]: phi ~ 1 - (1 - phi_0) t/t_0; between nodes: power law through
    both endpoints (linear when one of them is 0); beyond the grid: the
    fitted power law t^(-tail_exponent).
    """
    t0, p0 = t[0], phi[0]
    total = t0**a / a - (1.0 - p0) * t0**a / (a + 1.0)
    for k in range(len(t) - 1):
        ta, tb, pa, pb = t[k], t[k + 1], phi[k], phi[k + 1]
        if pa > 0 and pb > 0:
            beta = math.log(pb / pa) / math.log(tb / ta)
            e = beta + a
            r = math.log(tb / ta)
            if abs(e * r) < 1e-12:
                total += pa * ta**a * r
            else:
                total += pa * ta**a * math.expm1(e * r) / e
        elif pa > 0 or pb > 0:
            s = (pb - pa) / (tb - ta)
            c = pa - s * ta
            total += c * (tb**a - ta**a) / a + s * (tb ** (a + 1) - ta ** (a + 1)) / (a + 1)
    tn, pn = t[-1], phi[-1]
    if pn > 0:
        if tail_exponent is None or tail_exponent <= a:
            return math.inf
        total += pn * tn**a / (tail_exponent - a)
    return total / gamma_fn(a)


def harmonic_moment(model, a, n, replications, seed, method=DIRECT, workers=1,
                    t_grid=None, batches=20, **sim):
    """Estimate E W^{-a} from W_n samples, directly or through the Laplace transform."""
    if a < 0:
        raise ValueError("harmonic order a must be >= 0")
    try:
        warn = a >= a0_bound(model)
    except ValueError:
        warn = True
    if warn:
        warnings.warn(f"a={a} is not below a0; E W^-a may be infinite", RuntimeWarning, stacklevel=2)
    if a == 0:
        return HarmonicEstimate(0.0, 1.0, 0.0, method, warn)
    ss = run_monte_carlo(model, n, replications, seed, workers, **sim)
    if method == DIRECT:
        v = np.exp(-a * ss.logW)
        se = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0
        return HarmonicEstimate(a, float(v.mean()), float(se), DIRECT, warn)
    if method != GAMMA_INTEGRAL:
        raise ValueError(f"unknown harmonic-moment method {method!r}")
    t = DEFAULT_GAMMA_GRID if t_grid is None else np.asarray(t_grid, float)
    W = ss.W

    def estimate(ws):
        phi, se = _exp_laplace(ws, t)
        tail = _tail_for_integral(t, phi, se)
        return _gamma_integral(t, phi, a, tail)

    full = estimate(W)
    nb = max(2, min(batches, W.size))
    parts = np.array_split(W, nb)
    vals = np.array([estimate(p) for p in parts])
    se = float(vals.std(ddof=1) / math.sqrt(nb))
    return HarmonicEstimate(a, float(full), se, GAMMA_INTEGRAL, warn)


def _tail_for_integral(t, phi, se):
    """Power-law exponent from the last two decades of resolvable curve, if any."""
    ok = np.nonzero(phi > np.maximum(3 * se, np.finfo(float).tiny))[0]
    if ok.size < 3:
        return None
    t_hi = t[ok[-1]]
    sel = ok[t[ok] >= t_hi / 100.0]
    if sel.size < 3:
        sel = ok[-3:]
    curve = LaplaceCurve(t[sel], phi[sel], se[sel], MONTE_CARLO, 0, 0)
    return tail_exponent_fit(curve).exponent


@dataclass
class LpRateFit:
    p: float
    n_grid: tuple
    norms: tuple
    delta: float
    ci_low: float
    ci_high: float
    exact_zero: bool
    growth: bool


def lp_rate_fit(model, p, n_grid, replications, seed, k=20, workers=1, n_boot=200, **sim):
    """Fit (E|W_n - W_{n+k}|^p)^{1/p} ~ C delta^n over ``n_grid``.

    W is proxied by W_{n+k} on the same path; fluctuations are kept at every
    population size so the differences do not freeze once Z_n is large.
    """
    if not 1.0 < p <= 2.0:
        raise ValueError("p must lie in (1, 2]")
    ns = sorted(set(int(n) for n in n_grid))
    if len(ns) < 3:
        raise ValueError("lp_rate_fit needs at least 3 distinct n values")
    marks = sorted(set(ns) | {n + k for n in ns})
    marks, inc = coupled_logw_increments(model, marks, replications, seed, workers, **sim)
    col = {m: j for j, m in enumerate(marks)}
    diffs = []
    for n in ns:
        logw_n = inc[:, col[n]]
        delta_log = inc[:, col[n + k]] - logw_n
        diffs.append(np.exp(logw_n) * np.abs(np.expm1(delta_log)))
    diffs = np.array(diffs)

    def fit(d):
        norms = np.mean(d**p, axis=1) ** (1.0 / p)
        if np.any(norms == 0):
            return norms, math.nan
        slope = np.polyfit(ns, np.log(norms), 1)[0]
        return norms, float(slope)

    norms, slope = fit(diffs)
    if np.all(diffs == 0):
        return LpRateFit(p, tuple(ns), tuple(norms), 0.0, 0.0, 0.0, True, False)
    rng = np.random.default_rng([int(seed), 0x1F])
    boots = []
    for _ in range(n_boot):
        pick = rng.integers(0, replications, replications)
        s = fit(diffs[:, pick])[1]
        if math.isfinite(s):
            boots.append(math.exp(s))
    lo, hi = np.percentile(boots, [2.5, 97.5]) if boots else (math.nan, math.nan)
    delta = math.exp(slope) if math.isfinite(slope) else math.nan
    return LpRateFit(p, tuple(ns), tuple(float(v) for v in norms), delta, float(lo), float(hi),
                     False, bool(math.isfinite(slope) and slope > 0))
