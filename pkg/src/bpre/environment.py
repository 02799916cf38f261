"""I.i.d. random environments given as finite mixtures of offspring laws.

Every quantity of interest here (log-mgf of X = log m_0, its cumulants, tilted
weights, the moment conditions) reduces to an exact finite sum over atoms.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb, logsumexp

from .offspring import OffspringLaw


@dataclass(frozen=True)
class EnvironmentModel:
    laws: tuple
    probs: tuple
    lambda0: float = 1.0
    log_means: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.laws) == 0 or len(self.laws) != len(self.probs):
            raise ValueError("environment needs matching, nonempty laws and probabilities")
        q = np.asarray(self.probs, dtype=float)
        if np.any(q <= 0.0):
            raise ValueError("atom probabilities must be positive")
        if abs(q.sum() - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {q.sum()!r}, not 1")
        if not self.lambda0 > 0.0:
            raise ValueError("lambda0 must be positive")
        object.__setattr__(self, "log_means", np.array([math.log(l.mean) for l in self.laws]))

    @classmethod
    def from_atoms(cls, atoms, lambda0=1.0):
        laws, probs = zip(*atoms)
        return cls(tuple(laws), tuple(float(p) for p in probs), float(lambda0))

    @classmethod
    def from_dict(cls, d):
        try:
            atoms = [(OffspringLaw.from_dict(a["law"]), float(a["prob"])) for a in d["atoms"]]
        except KeyError as exc:
            raise ValueError(f"environment atom is missing key {exc}") from None
        return cls.from_atoms(atoms, d.get("lambda0", 1.0))

    def to_dict(self):
        return {
            "atoms": [{"law": l.to_dict(), "prob": p} for l, p in zip(self.laws, self.probs)],
            "lambda0": self.lambda0,
        }

    @property
    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def weights(self):
        return np.asarray(self.probs, dtype=float)

    @property
    def mu(self):
        return float(np.dot(self.weights, self.log_means))

    @property
    def sigma2(self):
        return float(np.dot(self.weights, (self.log_means - self.mu) ** 2))

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)

    @property
    def mean_p1(self):
        return float(sum(q * l.p1 for l, q in zip(self.laws, self.probs)))

    # increment-law interface shared with the Gaussian surrogate in cramer.py

    def log_mgf(self, lam):
        return float(logsumexp(np.log(self.weights) + lam * self.log_means))

    def tilted_weights(self, lam):
        a = np.log(self.weights) + lam * self.log_means
        return np.exp(a - logsumexp(a))

    def tilted_mean(self, lam):
        return float(np.dot(self.tilted_weights(lam), self.log_means))

    def tilted_variance(self, lam):
        w = self.tilted_weights(lam)
        c = self.log_means - np.dot(w, self.log_means)
        return float(np.dot(w, c * c))

    def tilted_abs3(self, lam):
        w = self.tilted_weights(lam)
        c = self.log_means - np.dot(w, self.log_means)
        return float(np.dot(w, np.abs(c) ** 3))

    def cumulants(self, K=6):
        return cumulants(self, K)


@dataclass(frozen=True)
class CumulantSet:
    gamma: tuple

    def __getitem__(self, k):
        """1-based access: cs[k] is gamma_k."""
        if k < 1:
            raise IndexError("cumulants are indexed from 1")
        return self.gamma[k - 1] if k <= len(self.gamma) else 0.0

    @property
    def order(self):
        return len(self.gamma)

    def psi_series(self, lam):
        return sum(self[k] * lam**k / math.factorial(k) for k in range(1, self.order + 1))

    def mu_series(self, lam):
        return sum(self[k] * lam ** (k - 1) / math.factorial(k - 1) for k in range(1, self.order + 1))

    def sigma2_series(self, lam):
        return sum(self[k] * lam ** (k - 2) / math.factorial(k - 2) for k in range(2, self.order + 1))


@dataclass
class AssumptionReport:
    p: float
    epsilon: float
    lambda0: float
    moment3_eps: float
    a1: bool
    a2_value: float
    a2: bool
    a3_value: float
    a3: bool
    a4_value: float
    a4: bool
    p0: bool
    mu: float
    supercritical: bool
    sigma2: float
    nondegenerate: bool
    mean_p1: float
    ep1: bool

    @property
    def admissible(self):
        return all(ok for _, ok, _, _ in self.conditions())

    def conditions(self):
        """(name, ok, diagnostic value, failure message) for every checked condition."""
        return [
            ("A1", self.a1, self.moment3_eps, f"A1 fails: E X^(3+{self.epsilon:g}) diverges"),
            ("A2", self.a2, self.a2_value, f"A2 fails: E (Z_1/m_0)^{self.p:g} diverges"),
            ("A3", self.a3, self.a3_value, f"A3 fails: E m_0^{self.lambda0:g} diverges"),
            ("A4", self.a4, self.a4_value, f"A4 fails: E Z_1^{self.p:g}/m_0 diverges"),
            ("p0", self.p0, 0.0, "p0 fails: offspring laws must put no mass at 0"),
            ("supercritical", self.supercritical, self.mu, "supercritical mu > 0 required"),
            ("nondegenerate", self.nondegenerate, self.sigma2, "non-degenerate sigma^2 > 0 required"),
            ("EP1", self.ep1, self.mean_p1, "E p_1 < 1 required"),
        ]

    def failures(self):
        return [msg for _, ok, _, msg in self.conditions() if not ok]


def log_mgf(model, lam):
    """psi(lam) = log E m_0^lam."""
    return model.log_mgf(lam)


def _moments_to_cumulants(m):
    """Raw moments m[1..K] (m[0] = 1) to cumulants k[1..K]."""
    K = len(m) - 1
    k = [0.0] * (K + 1)
    for n in range(1, K + 1):
        k[n] = m[n] - sum(comb(n - 1, j - 1, exact=True) * k[j] * m[n - j] for j in range(1, n))
    return k[1:]


def cumulants(model, K=6):
    """gamma_1..gamma_K of X from exact moments (no numerical differentiation)."""
    if K < 3:
        raise ValueError("cumulant order K must be >= 3")
    w = model.weights
    mu = model.mu
    # centred moments keep the recursion away from catastrophic cancellation
    c = model.log_means - mu
    raw = [1.0] + [float(np.dot(w, c**j)) for j in range(1, K + 1)]
    g = _moments_to_cumulants(raw)
    g[0] = mu
    return CumulantSet(tuple(g))


def tilt(model, lam):
    """Cramer change of measure on the environment: q_j -> q_j m_j^lam / L(lam)."""
    if lam == 0.0:
        return model
    w = model.tilted_weights(lam)
    w = w / w.sum()
    return EnvironmentModel(model.laws, tuple(float(x) for x in w), model.lambda0)


def a0_bound(model, lambda0=None):
    """Harmonic-moment threshold a_0 built from E m_0^lambda0 and E p_1."""
    lam0 = model.lambda0 if lambda0 is None else float(lambda0)
    if not lam0 > 0.0:
        raise ValueError("lambda0 must be positive")
    ep1 = model.mean_p1
    if ep1 == 0.0:
        return lam0
    if ep1 >= 1.0:
        raise ValueError("E p_1 = 1: every individual has exactly one child")
    return _a0_formula(lam0, model.log_mgf(lam0), ep1)


def _a0_formula(lambda0, log_l0, ep1):
    return lambda0 / (1.0 - log_l0 / math.log(ep1))


def validate_assumptions(model, p=1.5, epsilon=1.0):
    """Check every standing condition by exact sums over atoms; never raises."""
    w = model.weights
    m = np.exp(model.log_means)
    x = model.log_means
    # X >= 0 under positive support, so E X^(3+eps) is a plain finite sum
    moment3 = float(np.dot(w, x ** (3.0 + epsilon)))
    enp = np.array([law.moment(p) for law in model.laws])
    a2 = float(np.dot(w, enp / m**p))
    a4 = float(np.dot(w, enp / m))
    a3 = float(np.dot(w, m**model.lambda0))
    mu, s2 = model.mu, model.sigma2
    ep1 = model.mean_p1
    return AssumptionReport(
        p=p,
        epsilon=epsilon,
        lambda0=model.lambda0,
        moment3_eps=moment3,
        a1=math.isfinite(moment3),
        a2_value=a2,
        a2=bool(p > 1 and math.isfinite(a2)),
        a3_value=a3,
        a3=math.isfinite(a3),
        a4_value=a4,
        a4=bool(p > 1 and math.isfinite(a4)),
        p0=all(law.pmf(0) == 0.0 for law in model.laws),
        mu=mu,
        supercritical=mu > 0.0,
        sigma2=s2,
        nondegenerate=s2 > 0.0,
        mean_p1=ep1,
        ep1=ep1 < 1.0,
    )
