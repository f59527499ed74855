"""Estimators built on simulated BBMMI trajectories.

* :func:`many_to_one` -- unbiased weighted estimate of ``m_0 Q_t f``;
* :func:`normalized` -- ``m_t f / m_t 1`` (undefined for an empty system);
* :func:`lambda_hat`, :func:`lambda_bar` -- growth-rate estimates from one
  trajectory;
* :func:`pf_lambda` -- growth rate from a particle filter whose particles
  are whole BBMMI systems;
* :func:`stationary_metrics` -- bias, spread and interaction cost of the
  normalised occupation measure in the long-time regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .batch import ReplicaBatch, make_engine
from .engine import SNAPSHOT_COLUMNS, Trajectory
from .process import derive_stream

UNDEFINED = None
PF_RESAMPLE_ROLE = "pf-resample"

_C = {name: i for i, name in enumerate(SNAPSHOT_COLUMNS)}


class EmptySystem(RuntimeError):
    """A growth-rate estimator met an extinct system."""


class AllWeightsZero(RuntimeError):
    """Every system of the particle filter died out within one window."""


def _rows(trajectory) -> np.ndarray:
    return trajectory.snapshots if isinstance(trajectory, Trajectory) else np.asarray(trajectory)


def _row_at(rows: np.ndarray, t: float) -> np.ndarray:
    idx = np.flatnonzero(np.isclose(rows[:, 0], t, rtol=0.0, atol=1e-12))
    if idx.size == 0:
        raise KeyError(f"time {t} is not on the snapshot grid")
    return rows[idx[0]]


# ---------------------------------------------------------------------------
# weighted and normalised occupation
# ---------------------------------------------------------------------------


def many_to_one(batch: ReplicaBatch, t: float, column: str = "occ_f") -> tuple[float, float]:
    """Mean of ``Pi^A_t Pi^B_t m_t f`` over replicas, with its standard error.

    Extinct replicas contribute 0; replicas stopped by the explosion guard
    are excluded.
    """
    g = batch.grid_index(t)
    s = batch.snapshots[batch.ok, g, :]
    if s.shape[0] == 0:
        raise ValueError("no usable replica")
    vals = np.exp(s[:, _C["logPiA"]] + s[:, _C["logPiB"]]) * s[:, _C[column]]
    vals = np.where(s[:, _C["N"]] > 0, vals, 0.0)
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
    return float(vals.mean()), se


def normalized(trajectory, t: float):
    """``m_t f / m_t 1``, or :data:`UNDEFINED` when the system is empty."""
    row = _row_at(_rows(trajectory), t)
    if row[_C["occ_1"]] == 0:
        return UNDEFINED
    return float(row[_C["occ_f"]] / row[_C["occ_1"]])


def normalized_series(batch: ReplicaBatch) -> np.ndarray:
    """``m_t f / m_t 1`` for every replica and grid time (NaN when empty)."""
    occ1 = batch.column("occ_1")
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(occ1 > 0, batch.column("occ_f") / occ1, np.nan)


# ---------------------------------------------------------------------------
# growth rate
# ---------------------------------------------------------------------------


def lambda_hat(trajectory, T: float | None = None) -> float:
    """``(log Pi^A_T + log Pi^B_T + log(m_T 1 / m_0 1)) / T``."""
    rows = _rows(trajectory)
    last = rows[-1] if T is None else _row_at(rows, T)
    T = float(last[0])
    if last[_C["occ_1"]] == 0:
        raise EmptySystem(f"system extinct by time {T}")
    if T <= 0:
        raise ValueError("horizon must be positive")
    n0 = rows[0][_C["occ_1"]]
    return float(last[_C["logPiA"]] + last[_C["logPiB"]]
                 + math.log(last[_C["occ_1"]] / n0)) / T


def lambda_bar(trajectory, n_windows: int | None = None) -> float:
    """``(1/dt) log[(1/n) sum_i Pi_{t_{i+1}} / Pi_{t_i}]`` on equal windows.

    The windows are read off the snapshot grid, which must be equally
    spaced from 0; ``n_windows`` (if given) must divide it evenly.
    """
    rows = _rows(trajectory)
    t = rows[:, 0]
    if np.any(rows[:, _C["occ_1"]] == 0):
        raise EmptySystem("system extinct before the horizon")
    lw = rows[:, _C["logPiA"]] + rows[:, _C["logPiB"]]
    if n_windows is not None:
        k, rem = divmod(len(t) - 1, n_windows)
        if rem or k == 0:
            raise ValueError("the snapshot grid does not split into that many windows")
        t, lw = t[::k], lw[::k]
    dt = np.diff(t)
    if t[0] != 0 or dt.size == 0 or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("lambda_bar needs an equally spaced grid starting at 0")
    ratios = np.diff(lw)
    return float(logsumexp(ratios) - math.log(ratios.size)) / float(dt[0])


@dataclass
class PFConfig:
    """Particle filter over BBMMI systems.

    ``ess_threshold`` in ``[0, 1]``: resample when the normalised effective
    sample size is at most this value (1 means always, 0 never).
    """

    horizon: float
    window: float
    systems: int
    n0: int
    x0: object
    ess_threshold: float = 1.0

    def __post_init__(self):
        if self.systems < 1:
            raise ValueError("need at least one system")
        if not self.window > 0 or not self.horizon > 0:
            raise ValueError("window and horizon must be positive")
        if not 0.0 <= self.ess_threshold <= 1.0:
            raise ValueError("ESS threshold must lie in [0, 1]")
        if self.n0 < 1:
            raise ValueError("need at least one initial particle")

    def window_ends(self) -> list[float]:
        ends = []
        t = 0.0
        k = 0
        while t < self.horizon:
            k += 1
            t = min(k * self.window, self.horizon)
            if self.horizon - t < 1e-12 * self.horizon:
                t = self.horizon
            ends.append(t)
        return ends


@dataclass
class PFResult:
    value: float
    log_W: float
    resamplings: int
    events: int
    ess: list = field(default_factory=list)


def _multinomial(weights: np.ndarray, rng) -> np.ndarray:
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    u = rng.random(weights.size)
    return np.minimum(np.searchsorted(cdf, u, side="right"), weights.size - 1)


def pf_lambda(config: PFConfig, model, policy, seed: int, *, engine: str = "auto",
              details: bool = False):
    """Growth-rate estimate ``log(W) / T`` from the interacting-systems filter.

    System slot ``i`` draws its dynamics from ``derive_stream(seed, i)``
    (the same stream as replica ``i`` of a batch); multinomial resampling
    uses a separate stream, so the result does not depend on scheduling.
    """
    eng = make_engine(model, policy, engine=engine)
    n = config.systems
    rngs = [derive_stream(seed, i).generator() for i in range(n)]
    rs_rng = derive_stream(seed, 0, PF_RESAMPLE_ROLE).generator()
    systems = [eng.system([config.x0] * config.n0, rngs[i]) for i in range(n)]
    log_c = np.zeros(n)  # carried log-weights between resamplings
    log_W = 0.0
    resamplings = 0
    ess_hist = []
    ends = config.window_ends()
    for w_idx, t_next in enumerate(ends):
        log_w = np.empty(n)
        for i, s in enumerate(systems):
            before = s.log_weight
            eng.advance(s, t_next, rngs[i])
            log_w[i] = -math.inf if s.size == 0 else s.log_weight - before
        if np.all(np.isneginf(log_w)):
            raise AllWeightsZero(f"all systems extinct by time {t_next}")
        total = log_c + log_w
        log_W += float(logsumexp(total) - logsumexp(log_c))
        if t_next >= config.horizon:
            break
        p = np.exp(total - total.max())
        ess = float(p.sum() ** 2 / (n * (p * p).sum()))
        ess_hist.append(ess)
        if ess <= config.ess_threshold:
            idx = _multinomial(p, rs_rng)
            systems = [systems[j].copy() for j in idx]
            log_c = np.zeros(n)
            resamplings += 1
        else:
            log_c = total
    value = log_W / config.horizon
    if details:
        events = int(sum(event_count(s) for s in systems))
        return PFResult(value, log_W, resamplings, events, ess_hist)
    return value


def event_count(system) -> int:
    """Simulated events so far (either engine's system type)."""
    counts = getattr(system, "counts", None)
    if counts is not None:
        from .fast import I_STEPS
        return int(counts[I_STEPS])
    return int(system.steps)


# ---------------------------------------------------------------------------
# long-time metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricReport:
    """Stationary-regime summary of the normalised occupation ``theta``.

    ``std`` is the spread of ``theta`` itself in the stationary regime
    (pooled over replicas and post-burn-in snapshots); ``std_time_average``
    is the replica-to-replica spread of the per-replica time averages.
    """

    bias: float
    std: float
    event_rate: float
    replicas: int
    mean: float
    target: float
    bias_radius: float
    event_rate_radius: float
    std_time_average: float


def stationary_metrics(batch: ReplicaBatch, target: float, *, burn_in: float | None = None,
                       z: float = 1.96) -> MetricReport:
    """Bias, spread and ``(A + B)/T`` after a burn-in (default 20% of T)."""
    T = float(batch.grid[-1])
    if burn_in is None:
        burn_in = 0.2 * T
    if not 0 <= burn_in < T:
        raise ValueError("burn-in must lie in [0, T)")
    keep = batch.grid >= burn_in - 1e-12
    g0 = int(np.argmax(keep))
    theta = normalized_series(batch)[batch.ok][:, keep]
    per_rep = np.nanmean(theta, axis=1)
    per_rep = per_rep[np.isfinite(per_rep)]
    R = per_rep.size
    mean = float(per_rep.mean())
    pooled = theta[np.isfinite(theta)]
    std = float(pooled.std(ddof=1)) if pooled.size > 1 else 0.0
    std_ta = float(per_rep.std(ddof=1)) if R > 1 else 0.0
    ab = batch.column("A") + batch.column("B")
    ab = ab[batch.ok]
    span = T - float(batch.grid[g0])
    rates = (ab[:, -1] - ab[:, g0]) / span if span > 0 else np.zeros(ab.shape[0])
    rate_se = float(rates.std(ddof=1) / math.sqrt(rates.size)) if rates.size > 1 else 0.0
    return MetricReport(
        bias=abs(mean - target), std=std, event_rate=float(rates.mean()), replicas=R,
        mean=mean, target=float(target), bias_radius=z * std_ta / math.sqrt(max(R, 1)),
        event_rate_radius=z * rate_se, std_time_average=std_ta)
