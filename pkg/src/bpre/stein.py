"""Stein's equation for the standard normal and Kolmogorov-distance tools."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erfcx

from .normal import SQRT2, SQRT2PI, Phi, Phi_bar
from .simulator import run_monte_carlo


@dataclass(frozen=True)
class SteinEval:
    x: float
    w: float
    f: float
    f_prime: float
    residual: float


def _half_erfcx(z):
    return 0.5 * erfcx(z)


def _f_left(x, w):
    """Branch w <= x: sqrt(2 pi) e^{w^2/2} Phi(w) (1 - Phi(x)), overflow-free."""
    x, w = np.broadcast_arrays(np.asarray(x, float), np.asarray(w, float))
    with np.errstate(over="ignore", invalid="ignore"):
        # w <= 0: e^{w^2/2} Phi(w) = erfcx(-w/sqrt2)/2 is bounded
        a = _half_erfcx(-w / SQRT2) * Phi_bar(x)
        # w > 0: pair e^{w^2/2} with the x-tail instead
        b = Phi(w) * _half_erfcx(x / SQRT2) * np.exp(0.5 * (w * w - x * x))
    return SQRT2PI * np.where(w <= 0, a, b)


def _f_right(x, w):
    """Branch w > x: sqrt(2 pi) e^{w^2/2} Phi(x) (1 - Phi(w))."""
    x, w = np.broadcast_arrays(np.asarray(x, float), np.asarray(w, float))
    with np.errstate(over="ignore", invalid="ignore"):
        a = Phi(x) * _half_erfcx(w / SQRT2)
        b = Phi_bar(w) * _half_erfcx(-x / SQRT2) * np.exp(0.5 * (w * w - x * x))
    return SQRT2PI * np.where(w >= 0, a, b)


def stein_f(x, w):
    """Bounded solution f_x(w) of f'(w) - w f(w) = 1{w <= x} - Phi(x)."""
    x_a, w_a = np.asarray(x, float), np.asarray(w, float)
    out = np.where(w_a <= x_a, _f_left(x_a, w_a), _f_right(x_a, w_a))
    return float(out) if out.ndim == 0 else out


def stein_f_prime(x, w):
    """f_x'(w) read off the equation itself; left-closed at the jump w = x."""
    x_a, w_a = np.asarray(x, float), np.asarray(w, float)
    out = w_a * stein_f(x_a, w_a) + (w_a <= x_a) - Phi(x_a)
    return float(out) if np.ndim(out) == 0 else out


def stein_f_quad(x, w):
    """f_x(w) by quadrature of its integral form; cross-check for stein_f.

    Uses e^{w^2/2} int_{-inf}^w e^{-t^2/2}(1{t<=x} - Phi(x)) dt for w <= x and the
    mirror integral over [w, inf) otherwise, so the integrand never exceeds 1.
    """
    px = float(Phi(x))

    def g(t):
        return math.exp(0.5 * (w * w - t * t))

    if w <= x:
        v, _ = integrate.quad(g, -math.inf, w, epsabs=0.0, epsrel=1e-12, limit=200)
        return v * (1.0 - px)
    v, _ = integrate.quad(g, w, math.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return v * px


def stein_residual_fd(x, w, h=1e-6):
    """|central-difference f'(w) - w f(w) - (1{w<=x} - Phi(x))|, away from w = x."""
    if abs(w - x) <= 2 * h:
        raise ValueError(f"w={w} lies within 2h of the jump at x={x}")
    return float(_fd_residual(np.asarray(x, float), np.asarray(w, float), h))


def _fd_residual(x, w, h):
    d = (stein_f(x, w + h) - stein_f(x, w - h)) / (2.0 * h)
    return np.abs(d - w * stein_f(x, w) - ((w <= x) - Phi(x)))


def stein_solution(x, w, h=1e-6):
    f = stein_f(x, w)
    fp = stein_f_prime(x, w)
    res = stein_residual_fd(x, w, h) if abs(w - x) > 2 * h else math.nan
    return SteinEval(float(x), float(w), f, fp, res)


def kolmogorov_distance(samples):
    """sup_t |F_hat(t) - Phi(t)|, evaluated on both sides of every jump."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    m = s.size
    if m == 0:
        raise ValueError("kolmogorov_distance needs at least one sample")
    cdf = Phi(s)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - cdf), np.max(cdf - (i - 1) / m)))


def empirical_cdf(samples, x):
    s = np.asarray(samples, dtype=float)
    return float(np.mean(s <= x))


def empirical_stein_expectation(samples, x):
    """(1/m) sum_i [f_x'(s_i) - s_i f_x(s_i)]."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("empirical_stein_expectation needs at least one sample")
    f = stein_f(x, s)
    fp = s * f + (s <= x) - Phi(x)
    return float(np.mean(fp - s * f))


@dataclass
class BerryEsseenFit:
    n_grid: tuple
    distances: tuple
    replications: int
    slope: float
    intercept: float
    ci_low: float
    ci_high: float

    @property
    def amplitude(self):
        return math.exp(self.intercept)

    @property
    def rate(self):
        return self.slope


def _loglog_fit(ns, ds):
    A = np.vstack([np.log(ns), np.ones(len(ns))]).T
    slope, intercept = np.linalg.lstsq(A, np.log(ds), rcond=None)[0]
    return float(slope), float(intercept)


def berry_esseen_fit(model, n_grid, replications, seed, workers=1, n_boot=200, boot_seed=None, **sim):
    """Fit log d_n = slope log n + intercept, d_n the Kolmogorov distance of
    (log Z_n - n mu)/(sigma sqrt n) to N(0,1); percentile-bootstrap CI for the slope."""
    ns = sorted(set(int(n) for n in n_grid))
    if len(ns) < 3:
        raise ValueError("berry_esseen_fit needs at least 3 distinct n values")
    mu, sigma = model.mu, math.sqrt(model.sigma2)
    standardized = []
    for k, n in enumerate(ns):
        ss = run_monte_carlo(model, n, replications, seed + k, workers, **sim)
        standardized.append(ss.standardized_logz(mu, sigma))
    ds = [kolmogorov_distance(y) for y in standardized]
    slope, intercept = _loglog_fit(ns, ds)
    rng = np.random.default_rng([int(seed if boot_seed is None else boot_seed), 0xBE])
    boots = []
    for _ in range(n_boot):
        bd = [kolmogorov_distance(y[rng.integers(0, len(y), len(y))]) for y in standardized]
        boots.append(_loglog_fit(ns, bd)[0])
    lo, hi = np.percentile(boots, [2.5, 97.5]) if boots else (math.nan, math.nan)
    return BerryEsseenFit(tuple(ns), tuple(ds), int(replications), slope, intercept, float(lo), float(hi))
