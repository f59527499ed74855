"""Compiled event loop for finite jump models with size-only policies.

Covers the hot path of every tabulated experiment.  The algorithm, and the
order in which it consumes the random stream, is that of
:mod:`bbmmi.engine`; ``tests/test_fast.py`` checks that both produce the
same snapshots from the same stream.  Particles are stored as indices into
the model's state enumeration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .engine import (DEFAULT_MAX_EVENTS, ExplosionGuard, PolicyViolation, SystemState,
                     Trajectory, make_grid)
from .models.finite import DEST_CEMETERY, DEST_OVERFLOW, FiniteJumpModel, StateSpaceOverflow
from .policies import SizePolicy

# kernel status codes
OK, EXPLODED, SIZE_CAP, CONSTRAINT, OVERFLOW = 0, 1, 2, 3, 4

# counters layout
I_A, I_B, I_C, I_BETA, I_KILLS, I_STEPS, I_MAXSEEN = range(7)
# log-weight layout: Neumaier sums (value, compensation)
J_A, J_AC, J_B, J_BC = range(4)

DEFAULT_SIZE_CAP = 1 << 20


@njit(cache=True, inline="always")
def _nadd(w, i, x):
    s = w[i]
    t = s + x
    if abs(s) >= abs(x):
        w[i + 1] += (s - t) + x
    else:
        w[i + 1] += (x - t) + s
    w[i] = t


@njit(cache=True)
def _grow(xs):
    out = np.empty(2 * xs.shape[0] + 8, dtype=np.int64)
    out[: xs.shape[0]] = xs
    return out


@njit(cache=True)
def _remove(xs, n, k):
    for i in range(k, n - 1):
        xs[i] = xs[i + 1]


@njit(cache=True)
def _kill(xs, n, sel, p_tab, counts, logw, gen):
    """Returns the new size, or -1 on a constraint violation."""
    prob = p_tab[n]
    if n == 1 and prob > 0.0:
        return -1
    counts[I_KILLS] += 1
    counts[I_C] += 1
    if prob >= 1.0:
        resample = True
    elif prob <= 0.0:
        resample = False
    else:
        resample = gen.random() < prob
    if resample:
        u = gen.random()
        k = int(u * (n - 1))
        j = k if k < sel else k + 1
        x = xs[j]
        _remove(xs, n, sel)
        xs[n - 1] = x
        counts[I_A] += 1
        _nadd(logw, J_A, math.log((n - 1.0) / n))
        return n
    _remove(xs, n, sel)
    return n - 1


@njit(cache=True)
def _advance(xs, n, t, t_end, counts, logw, tot, motion, branch, kill, indptr, dest, cum,
             p_tab, q_tab, gen, max_steps):
    """Run until ``t_end`` or extinction; returns ``(xs, n, t, status)``."""
    cap = q_tab.shape[0] - 1
    while t < t_end and n > 0:
        lam = 0.0
        for i in range(n):
            lam += tot[xs[i]]
        u = gen.random()
        if lam > 0.0:
            dt = -math.log(1.0 - u) / lam
        else:
            dt = np.inf
        if t + dt > t_end:
            t = t_end
            break
        t = t + dt
        counts[I_STEPS] += 1
        if counts[I_STEPS] > max_steps:
            return xs, n, t, EXPLODED

        target = gen.random() * lam
        acc = 0.0
        prev = 0.0
        sel = -1
        for i in range(n):
            prev = acc
            acc += tot[xs[i]]
            if target < acc:
                sel = i
                break
        if sel < 0:
            local = np.inf
            for i in range(n - 1, -1, -1):
                if tot[xs[i]] > 0.0:
                    sel = i
                    break
        else:
            local = target - prev
        s = xs[sel]
        m = motion[s]
        b = branch[s]
        kp = kill[s]
        if local < m:
            channel = 0
        elif local < m + b:
            channel = 1
        elif kp > 0.0:
            channel = 2
        elif b > 0.0:
            channel = 1
        else:
            channel = 0

        if channel == 0:
            u = gen.random()
            k = indptr[s]
            hi = indptr[s + 1] - 1
            while k < hi and u >= cum[k]:
                k += 1
            d = dest[k]
            if d == DEST_OVERFLOW:
                return xs, n, t, OVERFLOW
            if d == DEST_CEMETERY:
                n2 = _kill(xs, n, sel, p_tab, counts, logw, gen)
                if n2 < 0:
                    return xs, n, t, CONSTRAINT
                n = n2
            else:
                xs[sel] = d
        elif channel == 1:
            if n + 1 > cap:
                return xs, n, t, SIZE_CAP
            prob = q_tab[n]
            counts[I_BETA] += 1
            counts[I_C] += 1
            if n + 1 > xs.shape[0]:
                xs = _grow(xs)
            xs[n] = s
            if prob >= 1.0:
                select = True
            elif prob <= 0.0:
                select = False
            else:
                select = gen.random() < prob
            if select:
                u = gen.random()
                k = int(u * (n + 1))
                _remove(xs, n + 1, k)
                counts[I_B] += 1
                _nadd(logw, J_B, math.log((n + 1.0) / n))
            else:
                n += 1
                if n > counts[I_MAXSEEN]:
                    counts[I_MAXSEEN] = n
        else:
            n2 = _kill(xs, n, sel, p_tab, counts, logw, gen)
            if n2 < 0:
                return xs, n, t, CONSTRAINT
            n = n2
    if n == 0 and t < t_end:
        t = t_end
    return xs, n, t, OK


@njit(cache=True)
def _run_grid(xs, n, t, counts, logw, grid, fvals, tot, motion, branch, kill, indptr, dest,
              cum, p_tab, q_tab, gen, max_steps, out):
    for g in range(grid.shape[0]):
        xs, n, t, status = _advance(xs, n, t, grid[g], counts, logw, tot, motion, branch,
                                    kill, indptr, dest, cum, p_tab, q_tab, gen, max_steps)
        if status != OK:
            return xs, n, t, status, g
        occ = 0.0
        for i in range(n):
            occ += fvals[xs[i]]
        out[g, 0] = t
        out[g, 1] = n
        out[g, 2] = counts[I_A]
        out[g, 3] = counts[I_B]
        out[g, 4] = counts[I_C]
        out[g, 5] = counts[I_BETA]
        out[g, 6] = logw[J_A] + logw[J_AC]
        out[g, 7] = logw[J_B] + logw[J_BC]
        out[g, 8] = occ
        out[g, 9] = n
    return xs, n, t, OK, grid.shape[0]


def _policy_tables(policy: SizePolicy, cap: int):
    if not isinstance(policy, SizePolicy):
        raise TypeError("the compiled engine needs a size-only policy")
    limit = policy.max_size()
    if math.isfinite(limit):
        cap = min(cap, int(limit) + 1)
    return policy.size_tables(cap)


@dataclass
class FastSystem:
    """Compact mutable system for the compiled kernel."""

    xs: np.ndarray
    n: int
    time: float
    counts: np.ndarray
    logw: np.ndarray

    @classmethod
    def from_indices(cls, idx, time: float = 0.0) -> "FastSystem":
        idx = np.asarray(idx, dtype=np.int64)
        xs = np.empty(max(2 * idx.size, 16), dtype=np.int64)
        xs[: idx.size] = idx
        counts = np.zeros(7, dtype=np.int64)
        counts[I_MAXSEEN] = idx.size
        return cls(xs, int(idx.size), float(time), counts, np.zeros(4))

    def copy(self) -> "FastSystem":
        return FastSystem(self.xs.copy(), self.n, self.time, self.counts.copy(), self.logw.copy())

    @property
    def log_weight(self) -> float:
        w = self.logw
        return (w[J_A] + w[J_AC]) + (w[J_B] + w[J_BC])

    @property
    def size(self) -> int:
        return self.n

    def indices(self) -> np.ndarray:
        return self.xs[: self.n].copy()

    def to_system_state(self, model: FiniteJumpModel) -> SystemState:
        s = SystemState.from_states([model.state(int(i)) for i in self.indices()], self.time)
        c = self.counts
        s.A, s.B, s.C, s.beta, s.kills, s.steps = (int(c[I_A]), int(c[I_B]), int(c[I_C]),
                                                   int(c[I_BETA]), int(c[I_KILLS]),
                                                   int(c[I_STEPS]))
        s._logA, s._logA_c, s._logB, s._logB_c = map(float, self.logw)
        return s


class FastEngine:
    """Binds a finite model and a size policy to the compiled kernel."""

    def __init__(self, model: FiniteJumpModel, policy: SizePolicy, *,
                 size_cap: int = DEFAULT_SIZE_CAP, max_events: int = DEFAULT_MAX_EVENTS):
        if not isinstance(model, FiniteJumpModel):
            raise TypeError("the compiled engine needs a FiniteJumpModel")
        self.model = model
        self.policy = policy
        self.p_tab, self.q_tab = _policy_tables(policy, size_cap)
        self.max_events = int(max_events)
        self._tables = (model.total, model.motion, model.branch, model.kill,
                        model.indptr, model.dest, model.cum)

    def system(self, initial_states, rng=None) -> FastSystem:
        idx = [self.model.index(x) for x in initial_states]
        if len(idx) >= self.q_tab.size:
            raise ValueError("initial size exceeds the policy's size cap")
        return FastSystem.from_indices(idx)

    def _raise(self, status, sys):
        if status == EXPLODED:
            raise ExplosionGuard(f"more than {self.max_events} events by time {sys.time}")
        if status == CONSTRAINT:
            raise PolicyViolation("p must vanish for a single-particle configuration")
        if status == OVERFLOW:
            raise StateSpaceOverflow("a particle left the enumerated state space")
        if status == SIZE_CAP:
            raise RuntimeError(f"population exceeded the size cap {self.q_tab.size - 1}")

    def advance(self, sys: FastSystem, t_end: float, rng: np.random.Generator) -> FastSystem:
        xs, n, t, status = _advance(sys.xs, sys.n, sys.time, float(t_end), sys.counts, sys.logw,
                                    *self._tables, self.p_tab, self.q_tab, rng, self.max_events)
        sys.xs, sys.n, sys.time = xs, int(n), float(t)
        self._raise(status, sys)
        return sys

    def run(self, initial_states, horizon: float, grid=None, rng=None, *, f=None,
            fvals=None, log_events: bool = False) -> Trajectory:
        """Same contract as :func:`bbmmi.engine.run` (without event logs)."""
        if log_events:
            raise ValueError("event logs need the reference engine")
        if rng is None:
            raise ValueError("an explicit random generator is required")
        if not math.isfinite(horizon) or horizon < 0:
            raise ValueError("horizon must be finite and nonnegative")
        g = make_grid(horizon, grid)
        if g[-1] > horizon:
            raise ValueError("grid extends past the horizon")
        if g[-1] < horizon:
            g = np.append(g, horizon)
        if fvals is None:
            fvals = (np.ones(self.model.n_states) if f is None else self.model.values(f))
        sys = self.system(initial_states)
        if sys.n < 1:
            raise ValueError("need at least one initial particle")
        out = np.zeros((g.size, 10))
        xs, n, t, status, _ = _run_grid(sys.xs, sys.n, sys.time, sys.counts, sys.logw, g,
                                        np.asarray(fvals, dtype=float), *self._tables,
                                        self.p_tab, self.q_tab, rng, self.max_events, out)
        sys.xs, sys.n, sys.time = xs, int(n), float(t)
        self._raise(status, sys)
        return Trajectory(out, sys, None, n0=len(initial_states))
