"""Monte Carlo estimators for ergodic averages, the capacitary constant and
Matérn retention."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .energy import ScalingParams
from .errors import InvalidParameter, MomentInfinite, WindowTooSmall
from .point_process import (MarkedConfiguration, ProcessSpec, Window, analytic_mark_moment,
                            child_seed, matern_thin)

TRACE_COLUMNS = ("quantity", "eps", "seed", "value")
SUMMARY_COLUMNS = ("quantity", "eps", "mean", "stderr", "analytic_limit")


def rescaled_sum(config: MarkedConfiguration, eps: float, U: Window, h=None) -> float:
    """``eps^n sum_{x_i in U/eps} h(rho_i)``; ``h=None`` counts points."""
    if not eps > 0:
        raise InvalidParameter("eps must be > 0")
    target = U.scaled(1.0 / eps)
    if not config.window.covers(target):
        raise WindowTooSmall(f"configuration window does not cover U/eps for eps={eps:g}")
    if len(config) == 0:
        return 0.0
    rho = config.marks[target.contains(config.positions)]
    vals = np.ones_like(rho) if h is None else np.asarray(h(rho), dtype=float)
    return eps ** config.n * math.fsum(vals)


def _stderr(x):
    x = np.asarray(x, float)
    return float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.nan


@dataclass
class ErgodicTrace:
    quantity: str
    eps: list
    seeds: list
    values: np.ndarray  # shape (len(eps), len(seeds))
    analytic: float = math.nan

    def __post_init__(self):
        e = np.asarray(self.eps, float)
        if len(e) > 1 and np.any(np.diff(e) >= 0):
            raise InvalidParameter("eps ladder must be strictly decreasing")

    @property
    def mean(self):
        return self.values.mean(axis=1)

    @property
    def stderr(self):
        return np.array([_stderr(v) for v in self.values])

    @property
    def spread(self):
        return self.values.std(axis=1, ddof=1)

    def rows(self):
        for a, e in enumerate(self.eps):
            for b, s in enumerate(self.seeds):
                yield {"quantity": self.quantity, "eps": e, "seed": s, "value": self.values[a, b]}

    def summary(self):
        for e, m, se in zip(self.eps, self.mean, self.stderr):
            yield {"quantity": self.quantity, "eps": e, "mean": m, "stderr": se,
                   "analytic_limit": self.analytic}


def ergodic_trace(process: ProcessSpec, eps_ladder, U: Window, replicas: int, seed: int,
                  h=None, quantity="rescaled_sum", analytic=math.nan) -> ErgodicTrace:
    """Rescaled sums along an eps ladder.

    Each replica is one realization sampled on ``U/eps_min`` and reused for
    every eps, as in the single-realization statement of the ergodic theorem.
    """
    if replicas < 2:
        raise InvalidParameter("standard errors need at least 2 replicas")
    eps_ladder = [float(e) for e in eps_ladder]
    big = U.scaled(1.0 / min(eps_ladder))
    seeds = [child_seed(seed, k) for k in range(replicas)]
    vals = np.empty((len(eps_ladder), replicas))
    for b, s in enumerate(seeds):
        cfg = process.sample(big, s)
        for a, e in enumerate(eps_ladder):
            vals[a, b] = rescaled_sum(cfg, e, U, h)
    return ErgodicTrace(quantity, eps_ladder, seeds, vals, analytic)


def analytic_rescaled_limit(process: ProcessSpec, U: Window, q: float | None = None) -> float:
    """``m_g L^n(U) E[rho^q]`` (``q=None`` counts points)."""
    m = 1.0 if q is None else analytic_mark_moment(process.marks, q)
    return process.intensity * U.volume * m


@dataclass
class GammaEstimate:
    value: float
    stderr: float
    wald: float
    samples: np.ndarray = field(repr=False)

    def within(self, k=3.0) -> bool:
        if self.stderr == 0:
            return math.isclose(self.value, self.wald, rel_tol=1e-12, abs_tol=1e-300)
        return abs(self.value - self.wald) <= k * self.stderr


def gamma_estimate(process: ProcessSpec, params: ScalingParams, cap_unit_ball: float,
                   replicas: int, seed: int, origin=None) -> GammaEstimate:
    """``cap(B_1) E[sum_{x_i in Q} rho_i^(n-sp)]`` over the unit cube ``Q``
    (translated to ``origin``), with the Wald form ``cap(B_1) m_g E[rho^(n-sp)]``."""
    q = params.cap_exponent
    moment = analytic_mark_moment(process.marks, q)
    if math.isinf(moment):
        raise MomentInfinite(f"mark moment of order n - sp = {q:g} is infinite")
    if replicas < 1:
        raise InvalidParameter("replicas must be >= 1")
    Q = Window.cube(params.n)
    if origin is not None:
        Q = Q.translated(origin)
    sums = np.empty(replicas)
    for k in range(replicas):
        cfg = process.sample(Q, child_seed(seed, k))
        sums[k] = math.fsum(cfg.marks ** q)
    samples = cap_unit_ball * sums
    se = _stderr(samples) if replicas > 1 else math.nan
    wald = cap_unit_ball * process.intensity * moment if process.wald_applicable else math.nan
    return GammaEstimate(float(samples.mean()), se, wald, samples)


def ball_volume(n: int, r: float) -> float:
    return math.pi ** (n / 2) / special.gamma(n / 2 + 1) * r ** n


def poisson_retention(intensity: float, n: int, delta: float) -> float:
    """Matérn-I retention probability ``exp(-m |B_delta|)`` for Poisson input."""
    return math.exp(-intensity * ball_volume(n, delta))


@dataclass
class RetentionCurve:
    deltas: list
    fractions: np.ndarray  # (len(deltas), replicas)
    intensity: np.ndarray  # per replica, inner window
    thinned_intensity: np.ndarray  # (len(deltas), replicas)

    @property
    def mean(self):
        return self.fractions.mean(axis=1)

    @property
    def stderr(self):
        return np.array([_stderr(f) for f in self.fractions])


def retention_curve(process: ProcessSpec, deltas, replicas: int, seed: int,
                    window: Window) -> RetentionCurve:
    """Fraction of points of ``window`` kept by Matérn-I thinning, per delta.

    Each replica is sampled once on ``window`` enlarged by the largest delta,
    so neighbours across the window edge are seen and the kept sets are
    nested in delta.  Replicas with no points in the window count as full
    retention.
    """
    deltas = [float(d) for d in deltas]
    if not deltas or min(deltas) <= 0:
        raise InvalidParameter("deltas must be positive")
    big = window.enlarged(max(deltas))
    frac = np.empty((len(deltas), replicas))
    thin_int = np.empty((len(deltas), replicas))
    inten = np.empty(replicas)
    for b in range(replicas):
        cfg = process.sample(big, child_seed(seed, b))
        inner = window.contains(cfg.positions) if len(cfg) else np.zeros(0, bool)
        total = int(inner.sum())
        inten[b] = total / window.volume
        nn = cfg.nearest_neighbor_distance()
        for a, d in enumerate(deltas):
            kept = int(np.sum(inner & (nn >= d)))
            frac[a, b] = kept / total if total else 1.0
            thin_int[a, b] = kept / window.volume
    return RetentionCurve(deltas, frac, inten, thin_int)


def thinned_config(config: MarkedConfiguration, delta: float, window: Window) -> MarkedConfiguration:
    """Thin the full configuration, then restrict to ``window``."""
    return matern_thin(config, delta).restrict(window)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row[k]) for k in columns})


def write_traces(path, traces):
    write_csv(path, TRACE_COLUMNS, (r for t in traces for r in t.rows()))


def write_summary(path, traces):
    write_csv(path, SUMMARY_COLUMNS, (r for t in traces for r in t.summary()))
