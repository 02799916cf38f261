"""Experiment configs, orchestration and deterministic CSV reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .cramer import PREDICTION_COLUMNS, RegimeError, check_regime, tail_ratio_prediction
from .environment import EnvironmentModel, a0_bound, validate_assumptions
from .normal import Phi_bar
from .simulator import (DEFAULT_EXACT_THRESHOLD, DEFAULT_FLUCTUATION_CUTOFF, SAMPLE_COLUMNS,
                        default_workers, run_monte_carlo, weighted_tail)
from .stein import (_f_left, _f_right, _fd_residual, berry_esseen_fit, empirical_cdf,
                    empirical_stein_expectation, stein_f, stein_f_prime)
from .wlimit import (DIRECT, GAMMA_INTEGRAL, harmonic_moment, laplace_mc, laplace_quenched,
                     tail_exponent_fit)

KINDS = ("validate", "simulate", "be-scan", "cramer-scan", "stein-check", "wtail")
_ALIASES = {"Simulate": "simulate", "BeScan": "be-scan", "CramerScan": "cramer-scan",
            "SteinCheck": "stein-check", "WTail": "wtail", "Validate": "validate"}


class ConfigError(ValueError):
    """Malformed or inadmissible experiment description (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    replications: int
    model: EnvironmentModel | None = None
    n: int = 100
    n_grid: tuple = (16, 64, 256, 1024)
    workers: int = 1
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD
    fluctuation_cutoff: float = DEFAULT_FLUCTUATION_CUTOFF
    x_grid: tuple = (0.0, 0.5, 1.0, 1.5, 2.0)
    direct_replications: int | None = None
    t_grid: tuple = tuple(float(v) for v in np.logspace(2, 6, 9))
    t_grid_mc: tuple = tuple(float(v) for v in np.logspace(-2, 2, 9))
    depth: int = 40
    harmonic_a: tuple | None = None
    p: float = 1.5
    epsilon: float = 1.0
    bootstrap: int = 200
    grid_points: int = 161
    grid_range: float = 8.0
    extra: dict = field(default_factory=dict)

    def params(self):
        """Every resolved setting except ``workers``, which must not change output."""
        d = asdict(self)
        d.pop("workers")
        d.pop("extra")
        d["model"] = self.model.to_dict() if self.model is not None else None
        return d

    @property
    def config_hash(self):
        blob = json.dumps(self.params(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_INT_KEYS = ("seed", "replications", "n", "exact_threshold", "direct_replications", "depth",
             "bootstrap", "grid_points")
_FLOAT_KEYS = ("fluctuation_cutoff", "p", "epsilon", "grid_range")
_LIST_KEYS = ("n_grid", "x_grid", "t_grid", "t_grid_mc", "harmonic_a")


def parse_config(text, kind=None, require_admissible=True):
    """Parse and validate a JSON experiment description."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc.msg} at line {exc.lineno}, column {exc.colno}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    kind = kind or raw.get("kind")
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    for key in ("seed", "replications"):
        if key not in raw:
            raise ConfigError(f"config is missing mandatory key {key!r}")
    known = set(ExperimentConfig.__dataclass_fields__) - {"extra", "kind"}
    kwargs = {"kind": kind, "extra": {k: v for k, v in raw.items() if k not in known | {"kind"}}}
    try:
        for k in _INT_KEYS:
            if raw.get(k) is not None:
                kwargs[k] = int(raw[k])
        for k in _FLOAT_KEYS:
            if k in raw:
                kwargs[k] = float(raw[k])
        for k in _LIST_KEYS:
            if k in raw and raw[k] is not None:
                kwargs[k] = tuple(int(v) if k == "n_grid" else float(v) for v in raw[k])
        if "workers" in raw:
            kwargs["workers"] = int(raw["workers"])
        else:
            kwargs["workers"] = default_workers()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    if "model" in raw:
        try:
            kwargs["model"] = EnvironmentModel.from_dict(raw["model"])
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"bad environment model: {exc}") from None
    cfg = ExperimentConfig(**kwargs)
    if cfg.replications < 1:
        raise ConfigError("replications must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if kind != "stein-check":
        if cfg.model is None:
            raise ConfigError(f"experiment kind {kind!r} needs a 'model'")
        report = validate_assumptions(cfg.model, cfg.p, cfg.epsilon)
        if require_admissible and not report.admissible:
            raise ConfigError("; ".join(report.failures()))
    if kind == "cramer-scan":
        for x in cfg.x_grid:
            if x < 0:
                raise ConfigError(f"x_grid values must be >= 0, got {x}")
            try:
                check_regime(cfg.model, x, cfg.n)
            except RegimeError as exc:
                raise ConfigError(str(exc)) from None
    if kind == "be-scan" and len(set(cfg.n_grid)) < 3:
        raise ConfigError("be-scan needs at least 3 distinct n_grid values")
    return cfg


@dataclass
class ResultTable:
    columns: tuple
    rows: list
    meta: dict

    def column(self, name):
        j = self.columns.index(name)
        return [r[j] for r in self.rows]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_csv(table, destination):
    """Write header, one '#' metadata line, then rows; reals use shortest round-trip repr.

    ``destination`` is a path or a text stream.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    buf.write("# " + json.dumps(table.meta, sort_keys=True, separators=(",", ":"), default=_fmt) + "\n")
    for row in table.rows:
        w.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if hasattr(destination, "write"):
        destination.write(text)
        return
    try:
        with open(destination, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write CSV to {destination}: {exc.strerror}") from exc


def csv_text(table):
    buf = io.StringIO()
    emit_csv(table, buf)
    return buf.getvalue()


def _sim(cfg):
    return {"exact_threshold": cfg.exact_threshold, "fluctuation_cutoff": cfg.fluctuation_cutoff}


def _run_validate(cfg):
    rep = validate_assumptions(cfg.model, cfg.p, cfg.epsilon)
    rows = [(name, ok, value) for name, ok, value, _ in rep.conditions()]
    rows.append(("admissible", rep.admissible, math.nan))
    try:
        rows.append(("a0", True, a0_bound(cfg.model)))
    except ValueError:
        rows.append(("a0", False, math.nan))
    return ("condition", "ok", "value"), rows


def _run_simulate(cfg):
    ss = run_monte_carlo(cfg.model, cfg.n, cfg.replications, cfg.seed, cfg.workers, **_sim(cfg))
    return SAMPLE_COLUMNS, list(ss.rows())


BE_COLUMNS = ("row", "n", "d_n", "replications", "slope", "intercept", "ci_low", "ci_high")


def _run_be_scan(cfg):
    fit = berry_esseen_fit(cfg.model, cfg.n_grid, cfg.replications, cfg.seed, cfg.workers,
                           n_boot=cfg.bootstrap, **_sim(cfg))
    rows = [("n", n, d, fit.replications, None, None, None, None) for n, d in zip(fit.n_grid, fit.distances)]
    rows.append(("fit", None, None, fit.replications, fit.slope, fit.intercept, fit.ci_low, fit.ci_high))
    return BE_COLUMNS, rows


CRAMER_COLUMNS = PREDICTION_COLUMNS + ("tail_normal", "p_direct", "se_direct", "ratio_direct",
                                       "p_tilted", "se_tilted", "ratio_tilted")


def _run_cramer_scan(cfg):
    model, n = cfg.model, cfg.n
    mu, sigma = model.mu, model.sigma
    direct_reps = cfg.direct_replications or cfg.replications
    direct = run_monte_carlo(model, n, direct_reps, cfg.seed, cfg.workers, **_sim(cfg))
    rows = []
    for k, x in enumerate(cfg.x_grid):
        pred = tail_ratio_prediction(model, x, n)
        thr = n * mu + x * sigma * math.sqrt(n)
        tail = float(Phi_bar(x))
        pd, sd = weighted_tail(direct, thr)
        tilted = run_monte_carlo(model, n, cfg.replications, cfg.seed + 1 + k, cfg.workers,
                                 tilt_lambda=pred.lambda_x, **_sim(cfg))
        pt, st = weighted_tail(tilted, thr)
        rows.append(pred.row() + (tail, pd, sd, pd / tail, pt, st, pt / tail))
    return CRAMER_COLUMNS, rows


STEIN_COLUMNS = ("check", "value", "tolerance", "passed")


def stein_checks(grid_points=161, grid_range=8.0, samples=10_000, seed=0):
    """Grid verification of the Stein-solution properties; rows of STEIN_COLUMNS."""
    g = np.linspace(-grid_range, grid_range, grid_points)
    X, Wg = np.meshgrid(g, g, indexing="ij")
    f = stein_f(X, Wg)
    fp = stein_f_prime(X, Wg)
    cont = np.max(np.abs(_f_left(g, g) - _f_right(g, g)))
    off = X != Wg
    fd = np.max(_fd_residual(X[off], Wg[off], 1e-6))
    rng = np.random.default_rng([int(seed), 0x57])
    s = rng.standard_normal(samples)
    ident = max(abs(empirical_stein_expectation(s, x) - (empirical_cdf(s, x) - float(1 - Phi_bar(x))))
                for x in g)
    # Lipschitz-type bound on f' with its two indicator corrections
    w = rng.uniform(-4, 4, 20_000)
    sh = rng.uniform(-1, 1, (2, 20_000))
    xs = rng.uniform(-4, 4, 20_000)
    sa, ta = sh
    lhs = np.abs(stein_f_prime(xs, w + sa) - stein_f_prime(xs, w + ta))
    rhs = ((np.abs(ta) + np.abs(sa)) * (np.abs(w) + 1)
           + ((xs - ta <= w) & (w <= xs - sa) & (sa <= ta))
           + ((xs - sa <= w) & (w <= xs - ta) & (sa > ta)))
    excess = float(np.max(lhs - rhs))
    return [
        ("max_abs_f", float(np.max(np.abs(f))), 1.0, bool(np.max(np.abs(f)) <= 1.0)),
        ("max_abs_f_prime", float(np.max(np.abs(fp))), 1.0, bool(np.max(np.abs(fp)) <= 1.0)),
        ("branch_continuity", float(cont), 1e-10, bool(cont <= 1e-10)),
        ("fd_residual", float(fd), 1e-8, bool(fd <= 1e-8)),
        ("samplewise_identity", float(ident), 1e-12, bool(ident <= 1e-12)),
        ("lipschitz_excess", excess, 1e-12, bool(excess <= 1e-12)),
    ]


def _run_stein_check(cfg):
    return STEIN_COLUMNS, stein_checks(cfg.grid_points, cfg.grid_range, cfg.replications, cfg.seed)


WTAIL_COLUMNS = ("section", "t", "phi", "se", "estimator", "exponent", "rms_residual",
                 "a", "estimate", "method", "warn_flag")


def _run_wtail(cfg):
    model = cfg.model
    rows = []
    mc = laplace_mc(model, cfg.t_grid_mc, cfg.n, cfg.replications, cfg.seed, cfg.workers, **_sim(cfg))
    for t, phi, se, est in mc.rows():
        rows.append(("laplace", t, phi, se, est) + (None,) * 6)
    qc = laplace_quenched(model, cfg.t_grid, cfg.depth, cfg.replications, cfg.seed + 1)
    for t, phi, se, est in qc.rows():
        rows.append(("laplace", t, phi, se, est) + (None,) * 6)
    fit = tail_exponent_fit(qc)
    rows.append(("tail_fit", None, None, None, qc.estimator, fit.exponent, fit.rms_residual,
                 None, None, None, int(fit.super_polynomial)))
    a0 = a0_bound(model)
    rows.append(("a0", None, None, None, None, None, None, a0, None, None, None))
    a_values = cfg.harmonic_a if cfg.harmonic_a is not None else (a0 / 4, a0 / 2)
    for a in a_values:
        for method in (DIRECT, GAMMA_INTEGRAL):
            h = harmonic_moment(model, a, cfg.n, cfg.replications, cfg.seed + 2, method,
                                cfg.workers, **_sim(cfg))
            rows.append(("harmonic", None, None, h.se, None, None, None, h.a, h.estimate, h.method, int(h.warn)))
    return WTAIL_COLUMNS, rows


_RUNNERS = {
    "validate": _run_validate,
    "simulate": _run_simulate,
    "be-scan": _run_be_scan,
    "cramer-scan": _run_cramer_scan,
    "stein-check": _run_stein_check,
    "wtail": _run_wtail,
}


def run_experiment(cfg):
    columns, rows = _RUNNERS[cfg.kind](cfg)
    meta = {"config_hash": cfg.config_hash, "seed": cfg.seed, "version": __version__,
            "kind": cfg.kind, "params": cfg.params()}
    return ResultTable(tuple(columns), rows, meta)
