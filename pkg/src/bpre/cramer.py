"""Large-deviation machinery for log Z_n: tilted moments, the Cramer series,
the saddlepoint lambda(x), the integral I1 and tail-ratio predictions."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate

from .environment import CumulantSet
from .normal import Phi

DEFAULT_REGIME_GUARD = 0.5
DEFAULT_SERIES_RADIUS = 0.25


class ConvergenceError(RuntimeError):
    pass


class RegimeError(ValueError):
    """x is too large relative to sqrt(n) for the Cramer-zone machinery."""


@dataclass(frozen=True)
class GaussianIncrements:
    """Increment law X ~ N(mu, sigma2): all cumulants beyond the second vanish.

    Shares the increment-law interface of EnvironmentModel so that the
    saddlepoint and prediction routines can be checked against exact algebra.
    """

    mu: float
    sigma2: float
    lambda0: float = 1.0

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)

    def log_mgf(self, lam):
        return self.mu * lam + 0.5 * self.sigma2 * lam * lam

    def tilted_mean(self, lam):
        return self.mu + self.sigma2 * lam

    def tilted_variance(self, lam):
        return self.sigma2

    def tilted_abs3(self, lam):
        return 2.0 * math.sqrt(2.0 / math.pi) * self.sigma2**1.5

    def cumulants(self, K=6):
        return CumulantSet((self.mu, self.sigma2) + (0.0,) * (K - 2))


@dataclass(frozen=True)
class TiltedMoments:
    lam: float
    mu_lambda: float
    sigma2_lambda: float
    rho_lambda: float

    @property
    def sigma_lambda(self):
        return math.sqrt(self.sigma2_lambda)


@dataclass(frozen=True)
class Prediction:
    x: float
    n: int
    lambda_x: float
    cramer_term: float
    ratio_upper: float
    ratio_lower: float
    normal_zone: bool

    @property
    def normal_zone_ratio(self):
        """Leading normal-zone prediction (ratio 1), defined only for x <= n^(1/6)."""
        return 1.0 if self.normal_zone else math.nan

    def row(self):
        return (self.x, self.n, self.lambda_x, self.cramer_term, self.ratio_upper, self.ratio_lower)


PREDICTION_COLUMNS = ("x", "n", "lambda", "cramer_term", "ratio_upper", "ratio_lower")


def tilted_moments(model, lam):
    """mu_lambda, sigma_lambda^2 and rho_lambda computed from the tilted law itself."""
    if lam > model.lambda0:
        raise ValueError(f"lambda={lam} exceeds lambda0={model.lambda0}")
    return TiltedMoments(lam, model.tilted_mean(lam), model.tilted_variance(lam), model.tilted_abs3(lam))


def series_radius(cumulants, radius=DEFAULT_SERIES_RADIUS):
    return radius / math.sqrt(cumulants[2])


def cramer_series(cumulants, t, radius=DEFAULT_SERIES_RADIUS):
    """Cramer series L(t), truncated after its t^2 term.

    ``radius`` is scaled by 1/sqrt(gamma_2); |t| beyond that raises ValueError.
    """
    g2, g3, g4, g5 = cumulants[2], cumulants[3], cumulants[4], cumulants[5]
    if abs(t) > series_radius(cumulants, radius):
        raise ValueError(f"|t|={abs(t):g} outside the Cramer-series radius {series_radius(cumulants, radius):g}")
    c0 = g3 / (6.0 * g2**1.5)
    c1 = (g4 * g2 - 3.0 * g3**2) / (24.0 * g2**3)
    c2 = (g5 * g2**2 - 10.0 * g4 * g3 * g2 + 15.0 * g3**3) / (120.0 * g2**4.5)
    return c0 + c1 * t + c2 * t * t


def lambda_series(cumulants, t):
    """Power-series start for lambda(x) with t = x/sqrt(n), three terms."""
    g2, g3, g4 = cumulants[2], cumulants[3], cumulants[4]
    return (t / math.sqrt(g2) - g3 / (2.0 * g2**2) * t**2
            - (g4 * g2 - 3.0 * g3**2) / (6.0 * g2**3.5) * t**3)


def check_regime(model, x, n, guard=DEFAULT_REGIME_GUARD):
    limit = guard * math.sqrt(n) * model.lambda0 * math.sqrt(model.sigma2)
    if x > limit:
        raise RegimeError(f"x={x:g} exceeds the regime guard {limit:g} for n={n}")


def solve_lambda(model, x, n, guard=DEFAULT_REGIME_GUARD, max_iter=100):
    """Solve x sigma sqrt(n) = n (mu_lambda - mu) for lambda.

    Newton on the increasing map lambda -> mu_lambda, falling back to bisection
    whenever a step leaves the current bracket.
    """
    if x < 0:
        raise ValueError("x must be >= 0")
    check_regime(model, x, n, guard)
    if x == 0:
        return 0.0
    mu, sigma = model.mu, math.sqrt(model.sigma2)
    target = x * sigma / math.sqrt(n)
    scale = max(1.0, x * sigma * math.sqrt(n))

    def g(lam):
        return model.tilted_mean(lam) - mu - target

    lo, hi = 0.0, model.lambda0
    while g(hi) <= 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise ConvergenceError(f"no root for x={x} n={n}: tilted mean never reaches the target")
    lam = lambda_series(model.cumulants(6), x / math.sqrt(n))
    if not lo < lam < hi:
        lam = 0.5 * (lo + hi)
    for _ in range(max_iter):
        val = g(lam)
        if abs(n * val) <= 1e-13 * scale:
            return lam
        if val > 0:
            hi = lam
        else:
            lo = lam
        d = model.tilted_variance(lam)
        new = lam - val / d if d > 0 else math.nan
        if not lo < new < hi:
            new = 0.5 * (lo + hi)
        if new == lam or hi - lo <= 4e-16 * max(1.0, abs(lam)):
            break
        lam = new
    if abs(n * g(lam)) <= 1e-10 * scale:
        return lam
    raise ConvergenceError(f"saddlepoint solver did not converge for x={x}, n={n}")


def cramer_term(cumulants, x, n, radius=DEFAULT_SERIES_RADIUS):
    """x^3/sqrt(n) * L(x/sqrt(n)); negative x gives the lower-tail exponent argument."""
    rn = math.sqrt(n)
    return x**3 / rn * cramer_series(cumulants, x / rn, radius)


def tail_ratio_prediction(model, x, n, radius=DEFAULT_SERIES_RADIUS, guard=DEFAULT_REGIME_GUARD):
    """Leading-order predicted tail ratios P(.>x)/(1-Phi(x)) and P(.<-x)/Phi(-x)."""
    lam = solve_lambda(model, x, n, guard)
    cs = model.cumulants(6)
    up = cramer_term(cs, x, n, radius)
    # lower tail: exp{-x^3/sqrt(n) L(-x/sqrt(n))} = exp{cramer_term(cs, -x, n)}
    down = cramer_term(cs, -x, n, radius)
    return Prediction(float(x), int(n), lam, up, math.exp(up), math.exp(down), x <= n ** (1.0 / 6.0))


def integral_I1(lam, sigma_lambda, n):
    """lambda sigma_lambda sqrt(n) * int_0^inf exp(-lambda sigma_lambda sqrt(n) y) (Phi(y) - 1/2) dy.

    Integrated numerically in the rescaled variable u = c y so that the
    exponential weight does not collapse onto y = 0 for large c.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    c = lam * sigma_lambda * math.sqrt(n)

    def f(u):
        return math.exp(-u) * (Phi(u / c) - 0.5)

    # Phi(u/c) - 1/2 changes on the scale u ~ c, the weight on u ~ 1
    breaks = sorted({1.0, min(c, 50.0), 50.0})
    total = 0.0
    lo = 0.0
    for b in breaks + [math.inf]:
        if b <= lo:
            continue
        v, _ = integrate.quad(f, lo, b, epsabs=0.0, epsrel=1e-12, limit=200)
        total += v
        lo = b
    return total


def key_identity_residual(model, x, n, radius=DEFAULT_SERIES_RADIUS, guard=DEFAULT_REGIME_GUARD):
    """|x^2/2 + n(psi(lambda) - lambda mu_lambda) - x^3/sqrt(n) L(x/sqrt(n))| at lambda = lambda(x)."""
    lam = solve_lambda(model, x, n, guard)
    lhs = 0.5 * x * x + n * (model.log_mgf(lam) - lam * model.tilted_mean(lam))
    rhs = cramer_term(model.cumulants(6), x, n, radius)
    return abs(lhs - rhs)


key_identity_check = key_identity_residual


def exact_exponent(model, x, n, guard=DEFAULT_REGIME_GUARD):
    """x^2/2 + n(psi(lambda) - lambda mu_lambda): the untruncated Cramer exponent."""
    lam = solve_lambda(model, x, n, guard)
    return 0.5 * x * x + n * (model.log_mgf(lam) - lam * model.tilted_mean(lam))

