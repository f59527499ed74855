"""Event-driven BBMMI simulation (reference implementation).

Particles move as independent copies of the underlying process.  At each
system event one particle branches or is killed (softly at rate ``kappa`` or
hard at the boundary); a killing triggers a *resampling* (a uniformly chosen
survivor is duplicated) with probability ``p`` and a branching triggers a
*selection* (one of the ``N + 1`` particles, newborn included, is removed)
with probability ``q``.  Resamplings multiply the weight ``Pi^A`` by
``(N - 1)/N`` and selections multiply ``Pi^B`` by ``(N + 1)/N``; both are
tracked as compensated sums of logarithms.

Random draws, in order, for a jump-model event:

1. one uniform for the holding time ``-log(1 - u) / Lambda``;
2. one uniform to pick the particle and channel (motion, branch, kill);
3. the model's own draws for a motion jump;
4. one uniform for the resampling/selection coin, only when ``0 < p < 1``;
5. one uniform for the partner index of a resampling or selection.

The compiled kernel in :mod:`bbmmi.fast` consumes the stream in exactly the
same way, so both engines produce identical trajectories from one stream.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .process import CEMETERY, EnvironmentJumpModel, FlowModel, exp1

log = logging.getLogger(__name__)

DEFAULT_MAX_EVENTS = 10**8
BALANCE_TOL = 1e-9

SNAPSHOT_COLUMNS = ("time", "N", "A", "B", "C", "beta", "logPiA", "logPiB", "occ_f", "occ_1")


class ExplosionGuard(RuntimeError):
    """Too many events in one trajectory; the system is suspected to explode."""


class PolicyViolation(RuntimeError):
    """A policy asked for a resampling in a system with a single particle."""


class BalanceViolation(RuntimeError):
    """Configuration-dependent rates broke ``b_i - kappa_i = b(x_i) - kappa(x_i)``."""


class SimultaneousHardKill(RuntimeWarning):
    """Two particles hit the boundary at the same floating-point time."""


class RateBoundViolation(RuntimeError):
    """A thinning bound was below the actual event rate."""


def _nadd(s: float, c: float, x: float) -> tuple[float, float]:
    # Neumaier compensated summation
    t = s + x
    if abs(s) >= abs(x):
        c += (s - t) + x
    else:
        c += (x - t) + s
    return t, c


@dataclass
class Particle:
    id: int
    state: object
    birth_time: float


@dataclass(frozen=True)
class EventRecord:
    """One system event.

    ``kind`` is one of ``motion``, ``branch``, ``softkill``, ``hardkill``,
    ``resample``, ``select`` or ``environment``.  A killing that triggers a
    resampling is recorded once, as ``resample``, with ``cause`` telling
    which kind of killing it was; likewise ``select`` has cause ``branch``.
    """

    time: float
    kind: str
    actor: int
    partner: int | None
    size_before: int
    size_after: int
    cause: str | None = None

    def as_dict(self) -> dict:
        return {
            "time": self.time, "kind": self.kind, "actor": self.actor,
            "partner": self.partner, "size_before": self.size_before,
            "size_after": self.size_after, "cause": self.cause,
        }


@dataclass
class SystemState:
    """Indexed configuration plus counters and log-weights.

    Particles are kept in increasing id order.  ``C`` counts branching and
    killing events; ``steps`` counts every simulated event including motion
    jumps and is what the explosion guard watches.
    """

    ids: list = field(default_factory=list)
    states: list = field(default_factory=list)
    births: list = field(default_factory=list)
    time: float = 0.0
    A: int = 0
    B: int = 0
    C: int = 0
    beta: int = 0
    kills: int = 0
    steps: int = 0
    next_id: int = 1
    max_seen: int = 0
    env: object = None
    flagged: bool = False
    _logA: float = 0.0
    _logA_c: float = 0.0
    _logB: float = 0.0
    _logB_c: float = 0.0

    @classmethod
    def from_states(cls, states: Iterable, time: float = 0.0) -> "SystemState":
        states = list(states)
        n = len(states)
        return cls(ids=list(range(1, n + 1)), states=states, births=[time] * n,
                   time=time, next_id=n + 1, max_seen=n)

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def log_weight_A(self) -> float:
        return self._logA + self._logA_c

    @property
    def log_weight_B(self) -> float:
        return self._logB + self._logB_c

    @property
    def log_weight(self) -> float:
        return self.log_weight_A + self.log_weight_B

    @property
    def weight(self) -> float:
        return math.exp(self.log_weight_A + self.log_weight_B)

    def particles(self) -> list[Particle]:
        return [Particle(i, s, b) for i, s, b in zip(self.ids, self.states, self.births)]

    def position(self, pid: int) -> int:
        return self.ids.index(pid)

    def copy(self) -> "SystemState":
        new = SystemState(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        new.ids = list(self.ids)
        new.states = list(self.states)
        new.births = list(self.births)
        return new

    # -- mutation helpers (kept private; the public API is step/apply_*) ----
    def _append(self, state) -> int:
        pid = self.next_id
        self.next_id += 1
        self.ids.append(pid)
        self.states.append(state)
        self.births.append(self.time)
        if len(self.states) > self.max_seen:
            self.max_seen = len(self.states)
        return pid

    def _remove_at(self, k: int) -> int:
        pid = self.ids.pop(k)
        self.states.pop(k)
        self.births.pop(k)
        return pid

    def _weight_A(self, n: int):
        self._logA, self._logA_c = _nadd(self._logA, self._logA_c, math.log((n - 1.0) / n))

    def _weight_B(self, n: int):
        self._logB, self._logB_c = _nadd(self._logB, self._logB_c, math.log((n + 1.0) / n))


def occupation(system: SystemState, f: Callable | None = None, normalized_by: float | None = None) -> float:
    """``sum_i f(x_i)`` over living particles (``f = 1`` when omitted).

    ``normalized_by`` divides by the initial particle count to give the
    normalised occupation measure.
    """
    if f is None:
        total = float(system.size)
    else:
        total = 0.0
        for x in system.states:
            if x is not CEMETERY:
                total += f(x)
    if normalized_by is not None:
        total /= normalized_by
    return total


def _coin(prob: float, rng) -> bool:
    if prob >= 1.0:
        return True
    if prob <= 0.0:
        return False
    return rng.random() < prob


# ---------------------------------------------------------------------------
# interaction events
# ---------------------------------------------------------------------------


def _resample_at(system: SystemState, k0: int, rng) -> int:
    n = system.size
    if n < 2:
        raise PolicyViolation("resampling requested with a single particle")
    u = rng.random()
    k = int(u * (n - 1))
    j = k if k < k0 else k + 1
    partner = system.ids[j]
    state = system.states[j]
    system._remove_at(k0)
    system._append(state)
    system.A += 1
    system._weight_A(n)
    return partner


def _select_after_birth(system: SystemState, n: int, rng) -> int:
    # n is the size before the birth; the newborn sits last
    u = rng.random()
    k = int(u * (n + 1))
    removed = system._remove_at(k)
    system.B += 1
    system._weight_B(n)
    return removed


def apply_resampling(system: SystemState, killed_id: int, rng) -> SystemState:
    """Remove ``killed_id`` and duplicate a uniformly chosen survivor."""
    _resample_at(system, system.position(killed_id), rng)
    return system


def apply_selection(system: SystemState, branched_id: int, rng) -> SystemState:
    """Add a copy of ``branched_id``, then remove one of the ``N + 1`` uniformly."""
    k0 = system.position(branched_id)
    n = system.size
    system._append(system.states[k0])
    _select_after_birth(system, n, rng)
    return system


def _kill(system, k0, final_state, policy, rng, kind) -> EventRecord:
    n = system.size
    actor = system.ids[k0]
    prob = policy.p(system, actor, final_state)
    if n == 1 and prob > 0.0:
        raise PolicyViolation("p must vanish for a single-particle configuration")
    system.kills += 1
    system.C += 1
    if _coin(prob, rng):
        partner = _resample_at(system, k0, rng)
        return EventRecord(system.time, "resample", actor, partner, n, n, kind)
    system._remove_at(k0)
    return EventRecord(system.time, kind, actor, None, n, n - 1)


def _branch(system, k0, policy, rng) -> EventRecord:
    n = system.size
    actor = system.ids[k0]
    state = system.states[k0]
    prob = policy.q(system, actor, state)
    system.beta += 1
    system.C += 1
    system._append(state)
    if _coin(prob, rng):
        removed = _select_after_birth(system, n, rng)
        return EventRecord(system.time, "select", actor, removed, n, n, "branch")
    return EventRecord(system.time, "branch", actor, None, n, n + 1)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------


def _particle_rates(system, model, k, rate_hook, env_model):
    x = system.states[k]
    if env_model:
        m, b, kap = model.rates_env(x, system.env)
    else:
        m, b, kap = model.rates(x)
    if rate_hook is not None:
        bi, ki = rate_hook(system, k)
        if abs((bi - ki) - (b - kap)) > BALANCE_TOL:
            raise BalanceViolation(
                f"particle {system.ids[k]}: b_i - kappa_i = {bi - ki}, b - kappa = {b - kap}")
        if bi < 0 or ki < 0:
            raise BalanceViolation("configuration-dependent rates must be nonnegative")
        b, kap = bi, ki
    return m, b, kap


def _guard(system, max_events):
    system.steps += 1
    if system.steps > max_events:
        raise ExplosionGuard(f"more than {max_events} events by time {system.time}")


def _step_jump(system, model, policy, rng, t_end, rate_hook, max_events):
    env_model = isinstance(model, EnvironmentJumpModel)
    n = system.size
    rates = []
    lam = 0.0
    env_rate = 0.0
    if env_model:
        env_rate = model.env_rate(system.env)
        lam += env_rate
    for k in range(n):
        m, b, kap = _particle_rates(system, model, k, rate_hook, env_model)
        r = (m + b) + kap
        rates.append((m, b, kap, r))
        lam += r
    u = rng.random()
    dt = -math.log(1.0 - u) / lam if lam > 0.0 else math.inf
    if system.time + dt > t_end:
        system.time = t_end
        return None
    system.time = system.time + dt
    _guard(system, max_events)

    target = rng.random() * lam
    if env_model and target < env_rate:
        system.env = model.env_jump(system.env, rng)
        return EventRecord(system.time, "environment", 0, None, n, n)
    acc = env_rate
    sel = -1
    prev = 0.0
    for k in range(n):
        prev = acc
        acc += rates[k][3]
        if target < acc:
            sel = k
            break
    if sel < 0:
        local = math.inf
        for k in range(n - 1, -1, -1):
            if rates[k][3] > 0.0:
                sel = k
                break
    else:
        local = target - prev
    m, b, kap, _ = rates[sel]
    if local < m:
        channel = 0
    elif local < m + b:
        channel = 1
    elif kap > 0.0:
        channel = 2
    elif b > 0.0:
        channel = 1
    else:
        channel = 0

    if channel == 0:
        x = system.states[sel]
        if env_model:
            y = model.sample_motion_jump_env(x, system.env, rng)
        else:
            y = model.sample_motion_jump(x, rng)
        if model.is_absorbed(y):
            return _kill(system, sel, y, policy, rng, "hardkill")
        system.states[sel] = y
        return EventRecord(system.time, "motion", system.ids[sel], None, n, n)
    if channel == 1:
        return _branch(system, sel, policy, rng)
    return _kill(system, sel, system.states[sel], policy, rng, "softkill")


def _step_flow(system, model: FlowModel, policy, rng, t_end, max_events):
    n = system.size
    best = math.inf
    best_kind = None
    best_k = -1
    hits = []
    bounds = []
    for k in range(n):
        x = system.states[k]
        hit = model.boundary_hit_time(x)
        horizon = min(model.lookahead(x), hit)
        bound = model.rate_bound(x, horizon)
        bounds.append(bound)
        cand = exp1(rng) / bound if bound > 0.0 else math.inf
        hits.append(hit)
        # precedence at equal times: hit, candidate, horizon
        for when, kind in ((hit, "hit"), (cand, "cand"), (horizon, "horizon")):
            if when < best:
                best, best_kind, best_k = when, kind, k
    if system.time + best > t_end:
        dt = t_end - system.time
        system.states = [model.flow(x, dt) for x in system.states]
        system.time = t_end
        return None
    dt = best
    if best_kind == "hit":
        tied = [k for k in range(n) if hits[k] == best]
        if len(tied) > 1:
            warnings.warn(f"{len(tied)} simultaneous hard kills at t={system.time + dt}",
                          SimultaneousHardKill, stacklevel=3)
            system.flagged = True
            best_k = min(tied, key=lambda k: system.ids[k])
    system.states = [model.flow(x, dt) for x in system.states]
    system.time = system.time + dt
    if best_kind == "horizon":
        return None
    _guard(system, max_events)
    if best_kind == "hit":
        return _kill(system, best_k, system.states[best_k], policy, rng, "hardkill")
    x = system.states[best_k]
    rate = model.event_rate(x)
    bound = bounds[best_k]
    if rate > bound * (1.0 + 1e-12):
        raise RateBoundViolation(f"event rate {rate} above bound {bound} at {x!r}")
    if not rng.random() < rate / bound:
        return None
    kind, payload = model.sample_event(x, rng)
    if kind == "motion":
        if model.is_absorbed(payload):
            return _kill(system, best_k, payload, policy, rng, "hardkill")
        system.states[best_k] = payload
        return EventRecord(system.time, "motion", system.ids[best_k], None, n, n)
    if kind == "branch":
        return _branch(system, best_k, policy, rng)
    if kind == "kill":
        return _kill(system, best_k, x, policy, rng, "softkill")
    raise ValueError(f"unknown event kind {kind!r}")


def step(system: SystemState, model, policy, rng, t_end: float = math.inf, *,
         rate_hook: Callable | None = None,
         max_events: int = DEFAULT_MAX_EVENTS) -> tuple[SystemState, Optional[EventRecord]]:
    """Advance ``system`` in place to its next event (or to ``t_end``).

    Returns the system and the event record, or ``None`` when no event
    happened: the horizon was reached, the system is empty, or (for flow
    models) a thinning candidate was rejected.

    ``rate_hook(system, k) -> (b_k, kappa_k)`` replaces the branching and
    killing rates of the particle at position ``k``; it is only accepted for
    jump models and must respect the balance condition.
    """
    if system.size == 0:
        system.time = max(system.time, t_end) if math.isfinite(t_end) else system.time
        return system, None
    if isinstance(model, FlowModel):
        if rate_hook is not None:
            raise TypeError("configuration-dependent rates are only supported for jump models")
        return system, _step_flow(system, model, policy, rng, t_end, max_events)
    return system, _step_jump(system, model, policy, rng, t_end, rate_hook, max_events)


def advance(system: SystemState, model, policy, rng, t_end: float, *, rate_hook=None,
            max_events: int = DEFAULT_MAX_EVENTS, events: list | None = None) -> SystemState:
    """Step until ``t_end`` or extinction."""
    while system.time < t_end and system.size > 0:
        _, rec = step(system, model, policy, rng, t_end, rate_hook=rate_hook,
                      max_events=max_events)
        if rec is not None and events is not None:
            events.append(rec)
    if system.size == 0 and system.time < t_end:
        system.time = t_end
    return system


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Grid snapshots plus the final state of one replica.

    ``snapshots`` has one row per grid time with columns
    :data:`SNAPSHOT_COLUMNS`.
    """

    snapshots: np.ndarray
    final: object
    events: list | None = None
    n0: int = 0
    flagged: bool = False
    replica: int = 0

    @property
    def grid(self) -> np.ndarray:
        return self.snapshots[:, 0]

    def column(self, name: str) -> np.ndarray:
        return self.snapshots[:, SNAPSHOT_COLUMNS.index(name)]

    def row_at(self, t: float) -> np.ndarray:
        idx = np.flatnonzero(np.isclose(self.grid, t, rtol=0.0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(f"time {t} is not on the snapshot grid")
        return self.snapshots[idx[0]]

    @property
    def log_weight(self) -> np.ndarray:
        return self.column("logPiA") + self.column("logPiB")


def snapshot_row(system: SystemState, f: Callable | None) -> list[float]:
    return [system.time, float(system.size), float(system.A), float(system.B),
            float(system.C), float(system.beta), system.log_weight_A,
            system.log_weight_B, occupation(system, f), float(system.size)]


def make_grid(horizon: float, grid=None, dt: float | None = None) -> np.ndarray:
    if grid is not None:
        g = np.asarray(grid, dtype=float)
    elif dt is not None:
        n = int(round(horizon / dt))
        g = np.linspace(0.0, horizon, n + 1)
    else:
        g = np.array([0.0, horizon]) if horizon > 0 else np.array([0.0])
    if g.size == 0 or np.any(np.diff(g) < 0) or g[0] < 0:
        raise ValueError("grid must be nonempty, nondecreasing and nonnegative")
    return g


def run(initial_states: Sequence, model, policy, horizon: float, grid=None, rng=None, *,
        f: Callable | None = None, log_events: bool = False, rate_hook=None,
        max_events: int = DEFAULT_MAX_EVENTS, env=None) -> Trajectory:
    """Simulate one BBMMI trajectory on ``[0, horizon]``.

    Snapshots are taken at every grid time (the horizon is always the last
    one).  An emptied system keeps its frozen weights and zero occupation.
    """
    if not math.isfinite(horizon) or horizon < 0:
        raise ValueError("horizon must be finite and nonnegative")
    g = make_grid(horizon, grid)
    if g[-1] > horizon:
        raise ValueError("grid extends past the horizon")
    if g[-1] < horizon:
        g = np.append(g, horizon)
    if rng is None:
        raise ValueError("an explicit random generator is required")
    system = SystemState.from_states(initial_states)
    if system.size < 1:
        raise ValueError("need at least one initial particle")
    if isinstance(model, EnvironmentJumpModel):
        system.env = model.initial_env(rng) if env is None else env
    events = [] if log_events else None
    rows = []
    for t in g:
        advance(system, model, policy, rng, float(t), rate_hook=rate_hook,
                max_events=max_events, events=events)
        rows.append(snapshot_row(system, f))
    return Trajectory(np.array(rows, dtype=float), system, events,
                      n0=len(initial_states), flagged=system.flagged)


class PyEngine:
    """Adapter giving the reference engine the interface of :class:`bbmmi.fast.FastEngine`."""

    def __init__(self, model, policy, *, rate_hook=None, max_events: int = DEFAULT_MAX_EVENTS):
        self.model = model
        self.policy = policy
        self.rate_hook = rate_hook
        self.max_events = int(max_events)

    def system(self, initial_states, rng=None) -> SystemState:
        s = SystemState.from_states(initial_states)
        if isinstance(self.model, EnvironmentJumpModel):
            s.env = self.model.initial_env(rng)
        return s

    def advance(self, system: SystemState, t_end: float, rng) -> SystemState:
        return advance(system, self.model, self.policy, rng, t_end, rate_hook=self.rate_hook,
                       max_events=self.max_events)

    def run(self, initial_states, horizon, grid=None, rng=None, *, f=None, log_events=False):
        return run(initial_states, self.model, self.policy, horizon, grid, rng, f=f,
                   log_events=log_events, rate_hook=self.rate_hook, max_events=self.max_events)
