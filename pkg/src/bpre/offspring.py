"""Reproduction laws supported on {1, 2, 3, ...}.

Three families are available: a geometric law shifted by one, a Poisson law
shifted by one, and an arbitrary finite pmf on {1, ..., K}.  Mass at zero is
impossible by construction, so no individual ever dies childless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import stats

SHIFTED_GEOMETRIC = "shifted_geometric"
SHIFTED_POISSON = "shifted_poisson"
FINITE = "finite"
FAMILIES = (SHIFTED_GEOMETRIC, SHIFTED_POISSON, FINITE)

# sums of z draws are exact integers only while they fit comfortably in int64
EXACT_CAPACITY = 2**62
# below this z a finite pmf is summed draw by draw, above it via category counts
FINITE_DIRECT_MAX = 64


class ExactOverflow(OverflowError):
    """Raised when an exact population count would leave int64 range."""


@dataclass(frozen=True)
class OffspringLaw:
    family: str
    p: float = math.nan
    rate: float = math.nan
    support: tuple = ()
    weights: tuple = ()
    mean: float = field(init=False)
    factorial2: float = field(init=False)

    def __post_init__(self):
        if self.family == SHIFTED_GEOMETRIC:
            if not 0.0 < self.p <= 1.0:
                raise ValueError(f"geometric success probability must lie in (0, 1], got {self.p}")
            m = 1.0 / self.p
            # E N(N-1) for N = 1 + Geom failures
            f2 = 2.0 * (1.0 - self.p) / self.p**2
        elif self.family == SHIFTED_POISSON:
            if not self.rate >= 0.0 or not math.isfinite(self.rate):
                raise ValueError(f"Poisson rate must be finite and >= 0, got {self.rate}")
            m = 1.0 + self.rate
            f2 = self.rate**2 + 2.0 * self.rate
        elif self.family == FINITE:
            k = np.asarray(self.support, dtype=float)
            w = np.asarray(self.weights, dtype=float)
            if k.size == 0 or k.size != w.size:
                raise ValueError("finite law needs matching support and weights")
            if np.any(k < 1) or np.any(k != np.round(k)):
                raise ValueError("finite law support must be positive integers (no mass at 0)")
            if np.any(w < 0):
                raise ValueError("finite law weights must be nonnegative")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ValueError(f"finite law weights sum to {w.sum()!r}, not 1")
            m = float(np.dot(k, w))
            f2 = float(np.dot(k * (k - 1), w))
        else:
            raise ValueError(f"unknown offspring family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "factorial2", f2)

    # constructors -------------------------------------------------------

    @classmethod
    def shifted_geometric(cls, p):
        return cls(SHIFTED_GEOMETRIC, p=float(p))

    @classmethod
    def shifted_poisson(cls, rate):
        return cls(SHIFTED_POISSON, rate=float(rate))

    @classmethod
    def finite(cls, pmf):
        """Build from a mapping {count: probability}; zero-weight entries are dropped."""
        items = sorted((int(k), float(v)) for k, v in dict(pmf).items() if float(v) != 0.0)
        if not items:
            raise ValueError("finite law needs at least one positive weight")
        return cls(FINITE, support=tuple(k for k, _ in items), weights=tuple(v for _, v in items))

    @classmethod
    def from_dict(cls, d):
        fam = d.get("family")
        if fam == SHIFTED_GEOMETRIC:
            return cls.shifted_geometric(d["p"])
        if fam == SHIFTED_POISSON:
            return cls.shifted_poisson(d["rate"])
        if fam == FINITE:
            return cls.finite({int(k): v for k, v in d["pmf"].items()})
        raise ValueError(f"unknown offspring family {fam!r}; expected one of {FAMILIES}")

    def to_dict(self):
        if self.family == SHIFTED_GEOMETRIC:
            return {"family": self.family, "p": self.p}
        if self.family == SHIFTED_POISSON:
            return {"family": self.family, "rate": self.rate}
        return {"family": self.family, "pmf": {str(k): w for k, w in zip(self.support, self.weights)}}

    # derived quantities -------------------------------------------------

    @property
    def variance(self):
        return self.factorial2 + self.mean - self.mean**2

    @property
    def normalized_variance(self):
        """Var(N / m): the per-individual variance of the normalized offspring count."""
        return max(self.variance, 0.0) / self.mean**2

    @property
    def p1(self):
        """Probability of exactly one child."""
        if self.family == SHIFTED_GEOMETRIC:
            return self.p
        if self.family == SHIFTED_POISSON:
            return math.exp(-self.rate)
        return dict(zip(self.support, self.weights)).get(1, 0.0)

    def moment(self, power):
        """E N^power for real power >= 0."""
        if self.family == SHIFTED_GEOMETRIC:
            if self.p == 1.0:
                return 1.0
            q = 1.0 - self.p
            # sum_k k^s p q^(k-1) = (p/q) Li_{-s}(q)
            return float(self.p / q * mpmath.polylog(-power, q))
        if self.family == SHIFTED_POISSON:
            if self.rate == 0.0:
                return 1.0
            # pmf below 1e-300 well before rate + 40 sd; isf is NaN this far out
            hi = int(self.rate + 40.0 * math.sqrt(self.rate) + 50)
            j = np.arange(hi + 1)
            return float(np.sum((j + 1.0) ** power * stats.poisson.pmf(j, self.rate)))
        k = np.asarray(self.support, dtype=float)
        return float(np.dot(k**power, self.weights))

    def pmf(self, k):
        k = np.asarray(k)
        if self.family == SHIFTED_GEOMETRIC:
            return stats.geom.pmf(k, self.p)
        if self.family == SHIFTED_POISSON:
            return stats.poisson.pmf(k - 1, self.rate)
        table = dict(zip(self.support, self.weights))
        return np.vectorize(lambda i: table.get(int(i), 0.0), otypes=[float])(k)


def pgf_eval(law, s):
    """Probability generating function sum_i p_i s^i on [0, 1]."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0.0) or np.any(s_arr > 1.0) or np.any(np.isnan(s_arr)):
        raise ValueError(f"pgf argument must lie in [0, 1], got {s}")
    if law.family == SHIFTED_GEOMETRIC:
        out = law.p * s_arr / (1.0 - (1.0 - law.p) * s_arr)
    elif law.family == SHIFTED_POISSON:
        out = s_arr * np.exp(law.rate * (s_arr - 1.0))
    else:
        out = np.zeros_like(s_arr)
        for k, w in zip(law.support, law.weights):
            out = out + w * s_arr**k
    return float(out) if np.ndim(out) == 0 else out


def pgf_complement(law, u):
    """1 - f(1 - u), evaluated without cancellation for u near 0.

    The Laplace-transform recursion pushes its arguments to within 1e-14 of 1,
    where f itself has no usable digits left.
    """
    u = np.asarray(u, dtype=float)
    if law.family == SHIFTED_GEOMETRIC:
        return u / (law.p + (1.0 - law.p) * u)
    if law.family == SHIFTED_POISSON:
        e = np.exp(-law.rate * u)
        return -np.expm1(-law.rate * u) + u * e
    with np.errstate(divide="ignore"):
        l1 = np.log1p(-np.minimum(u, 1.0))
    out = np.zeros_like(u)
    for k, w in zip(law.support, law.weights):
        out = out - w * np.expm1(k * l1)
    # u = 1 gives expm1(-inf) = -1, which is exact
    return out


def law_mean(law):
    return law.mean


def sample_sum(law, z, rng, size=None):
    """Exact draw of N_1 + ... + N_z for i.i.d. N_i ~ law.

    With ``size`` given, returns an int64 array of independent such sums.
    Raises ExactOverflow if the result could exceed int64 range.
    """
    z = int(z)
    if z < 1:
        raise ValueError(f"population count must be >= 1, got {z}")
    # the sum exceeds z*m by more than a few sd only with negligible probability
    if z * law.mean + 40.0 * math.sqrt(z * max(law.variance, 1.0)) > EXACT_CAPACITY:
        raise ExactOverflow(f"sum of {z} offspring counts leaves exact range")
    if law.family == SHIFTED_GEOMETRIC:
        if law.p == 1.0:
            extra = np.zeros(size, dtype=np.int64) if size is not None else 0
        else:
            extra = rng.negative_binomial(z, law.p, size=size)
    elif law.family == SHIFTED_POISSON:
        extra = rng.poisson(z * law.rate, size=size)
    else:
        support = np.asarray(law.support, dtype=np.int64)
        if len(support) == 1:
            total = z * int(support[0])
            return np.full(size, total, dtype=np.int64) if size is not None else total
        if z <= FINITE_DIRECT_MAX:
            shape = (z,) if size is None else (size, z)
            draws = rng.choice(support, size=shape, p=law.weights)
            out = draws.sum(axis=-1)
        else:
            counts = rng.multinomial(z, law.weights, size=size)
            out = counts @ support
        return int(out) if size is None else np.asarray(out, dtype=np.int64)
    if size is None:
        return z + int(extra)
    return z + np.asarray(extra, dtype=np.int64)
