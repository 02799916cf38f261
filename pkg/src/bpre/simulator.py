"""Trajectory simulation of Z_n together with S_n and W_n.

Populations are tracked as exact integers until they pass ``exact_threshold``;
from then on only log Z is kept and each generation adds log m plus a
delta-method Gaussian fluctuation of variance Var(N/m)/Z.  Once Z exceeds
``fluctuation_cutoff`` the fluctuation is dropped and log Z just follows S_n.

Replication ``i`` of a run seeded with ``seed`` always draws from its own
Philox stream keyed by (seed, i), so results do not depend on how
replications are split across worker processes.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .environment import tilt
from .offspring import ExactOverflow, sample_sum

EXACT = "exact"
LOGSCALE = "log"
DEFAULT_EXACT_THRESHOLD = 2**40
DEFAULT_FLUCTUATION_CUTOFF = 1e12


def replication_rng(seed, rep):
    """Counter-based stream for one replication, derived from (seed, rep)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(rep)])))


def default_workers():
    env = os.environ.get("BPRE_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class PopulationState:
    mode: str
    count: int = 1
    logz: float = 0.0
    n: int = 0

    @classmethod
    def start(cls):
        return cls(EXACT, 1, 0.0, 0)

    @property
    def log_size(self):
        return math.log(self.count) if self.mode == EXACT else self.logz


def _advance(state, law, rng, exact_threshold, fluctuation_cutoff):
    """One generation; also returns the increment of log W over the step."""
    log_m = math.log(law.mean)
    if state.mode == EXACT:
        try:
            z = sample_sum(law, state.count, rng)
        except ExactOverflow:
            return PopulationState(LOGSCALE, 0, state.log_size + log_m, state.n + 1), 0.0
        dlogw = math.log(z / (state.count * law.mean))
        if z > exact_threshold:
            return PopulationState(LOGSCALE, 0, math.log(z), state.n + 1), dlogw
        return PopulationState(EXACT, z, 0.0, state.n + 1), dlogw
    if state.logz > math.log(fluctuation_cutoff):
        return PopulationState(LOGSCALE, 0, state.logz + log_m, state.n + 1), 0.0
    g = rng.normal(0.0, math.sqrt(law.normalized_variance)) * math.exp(-0.5 * state.logz)
    return PopulationState(LOGSCALE, 0, state.logz + log_m + g, state.n + 1), g


def step(state, law, rng, exact_threshold=DEFAULT_EXACT_THRESHOLD,
         fluctuation_cutoff=DEFAULT_FLUCTUATION_CUTOFF):
    return _advance(state, law, rng, exact_threshold, fluctuation_cutoff)[0]


@dataclass(frozen=True)
class TrajectorySample:
    logZ: float
    S: float
    weight: float = 1.0
    mode_switch_generation: int | None = None

    @property
    def logW(self):
        return self.logZ - self.S

    def Y(self, n, mu, sigma):
        return (self.S - n * mu) / (sigma * math.sqrt(n))

    def V(self, n, sigma):
        return self.logW / (sigma * math.sqrt(n))


def _path(model, n, rng, exact_threshold, fluctuation_cutoff, marks=()):
    """Run one path for n generations.

    Returns (logZ, S, switch generation or -1, cumulative log W increments at
    each generation listed in ``marks``).
    """
    cum = np.cumsum(model.weights)
    idx = np.minimum(np.searchsorted(cum, rng.random(n), side="right"), len(cum) - 1)
    log_m = model.log_means[idx]
    laws = model.laws
    marks = sorted(set(marks))
    marked = {}
    dlogw_total = 0.0
    state = PopulationState.start()
    switch = -1
    lln_log = math.log(fluctuation_cutoff)
    j = 0
    while j < n:
        if j in marks:
            marked[j] = dlogw_total
        if state.mode == LOGSCALE and state.logz > lln_log and not any(mk > j for mk in marks):
            # law-of-large-numbers regime: log Z simply tracks S from here on
            rest = float(np.sum(log_m[j:]))
            state = PopulationState(LOGSCALE, 0, state.logz + rest, n)
            break
        state, d = _advance(state, laws[idx[j]], rng, exact_threshold, fluctuation_cutoff)
        dlogw_total += d
        if switch < 0 and state.mode == LOGSCALE:
            switch = j + 1
        j += 1
    if n in marks:
        marked[n] = dlogw_total
    S = float(np.sum(log_m))
    return state.log_size, S, switch, marked


def simulate_trajectory(model, n, rng, exact_threshold=DEFAULT_EXACT_THRESHOLD,
                        fluctuation_cutoff=DEFAULT_FLUCTUATION_CUTOFF):
    if n < 1:
        raise ValueError("number of generations must be >= 1")
    logz, S, switch, _ = _path(model, n, rng, exact_threshold, fluctuation_cutoff)
    return TrajectorySample(logz, S, 1.0, None if switch < 0 else switch)


@dataclass
class SampleSet:
    """Columnar store of terminal statistics, ordered by replication index."""

    fingerprint: str
    n: int
    seed: int
    logZ: np.ndarray
    S: np.ndarray
    weight: np.ndarray
    mode_switch_gen: np.ndarray
    tilt_lambda: float = 0.0

    def __len__(self):
        return len(self.logZ)

    def __getitem__(self, i):
        sw = int(self.mode_switch_gen[i])
        return TrajectorySample(float(self.logZ[i]), float(self.S[i]), float(self.weight[i]),
                                None if sw < 0 else sw)

    @property
    def logW(self):
        return self.logZ - self.S

    @property
    def W(self):
        return np.exp(self.logW)

    def standardized_logz(self, mu, sigma):
        return (self.logZ - self.n * mu) / (sigma * math.sqrt(self.n))

    def rows(self):
        for i in range(len(self)):
            sw = int(self.mode_switch_gen[i])
            yield (i, self.n, float(self.logZ[i]), float(self.S[i]), float(self.logW[i]),
                   float(self.weight[i]), "" if sw < 0 else sw)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SAMPLE_COLUMNS)
            for row in self.rows():
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])


SAMPLE_COLUMNS = ("rep", "n", "logZ", "S", "logW", "weight", "mode_switch_gen")


def _chunk(args):
    model, n, seed, lo, hi, exact_threshold, fluctuation_cutoff = args
    out = np.empty((hi - lo, 3))
    for r in range(lo, hi):
        logz, S, sw, _ = _path(model, n, replication_rng(seed, r), exact_threshold, fluctuation_cutoff)
        out[r - lo] = (logz, S, sw)
    return out


def _split(replications, workers):
    pieces = max(1, min(replications, workers * 4))
    edges = np.linspace(0, replications, pieces + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def map_replications(fn, jobs, workers):
    """Apply ``fn`` to each job, in order, possibly across processes."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def run_monte_carlo(model, n, replications, seed, workers=1, *,
                    exact_threshold=DEFAULT_EXACT_THRESHOLD,
                    fluctuation_cutoff=DEFAULT_FLUCTUATION_CUTOFF, tilt_lambda=0.0):
    """Simulate ``replications`` independent paths of length n.

    With ``tilt_lambda`` != 0 the environment is drawn from the tilted model and
    each path carries the importance weight exp(-lambda S_n + n psi(lambda)).
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if n < 1:
        raise ValueError("number of generations must be >= 1")
    sim_model = tilt(model, tilt_lambda)
    jobs = [(sim_model, n, seed, lo, hi, exact_threshold, fluctuation_cutoff)
            for lo, hi in _split(replications, workers)]
    parts = map_replications(_chunk, jobs, workers)
    arr = np.concatenate(parts, axis=0)
    logz, S = arr[:, 0].copy(), arr[:, 1].copy()
    if tilt_lambda == 0.0:
        weight = np.ones(replications)
    else:
        weight = np.exp(-tilt_lambda * S + n * model.log_mgf(tilt_lambda))
    return SampleSet(model.fingerprint, n, int(seed), logz, S, weight,
                     arr[:, 2].astype(np.int64), float(tilt_lambda))


def weighted_tail(samples, threshold):
    """Weighted estimate of P(log Z_n > threshold) and its standard error."""
    v = samples.weight * (samples.logZ > threshold)
    m = len(v)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(m)) if m > 1 else math.inf


def tilted_estimate(model, lam, n, replications, event_threshold, seed, workers=1, **kw):
    """Importance-sampling estimate of P(log Z_n > event_threshold) under P_lambda."""
    if lam < 0.0 or lam > model.lambda0:
        raise ValueError(f"tilt parameter {lam} outside [0, lambda0={model.lambda0}]")
    samples = run_monte_carlo(model, n, replications, seed, workers, tilt_lambda=lam, **kw)
    return weighted_tail(samples, event_threshold)


def _coupled_chunk(args):
    model, n_total, marks, seed, lo, hi, exact_threshold, fluctuation_cutoff = args
    out = np.empty((hi - lo, len(marks)))
    for r in range(lo, hi):
        _, _, _, marked = _path(model, n_total, replication_rng(seed, r), exact_threshold,
                                fluctuation_cutoff, marks)
        out[r - lo] = [marked[m] for m in marks]
    return out


def coupled_logw_increments(model, marks, replications, seed, workers=1, *,
                            exact_threshold=DEFAULT_EXACT_THRESHOLD,
                            fluctuation_cutoff=math.inf):
    """log W_m - log W_0 (= log W_m) at every generation m in ``marks``, one path per row.

    Increments are accumulated step by step, so differences between marks
    remain accurate even when W has converged to 1e-13 relative precision.
    """
    marks = sorted(set(int(m) for m in marks))
    n_total = marks[-1]
    jobs = [(model, n_total, marks, seed, lo, hi, exact_threshold, fluctuation_cutoff)
            for lo, hi in _split(replications, workers)]
    return marks, np.concatenate(map_replications(_coupled_chunk, jobs, workers), axis=0)
