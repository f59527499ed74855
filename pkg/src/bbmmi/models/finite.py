"""Jump models on an enumerated (finite or truncated) state space."""

from __future__ import annotations

import math
from typing import Hashable, Sequence

import numpy as np

from ..process import CEMETERY, JumpModel

# destination codes in the CSR transition table
DEST_CEMETERY = -1
DEST_OVERFLOW = -2


class StateSpaceOverflow(RuntimeError):
    """A particle left the enumerated part of an unbounded state space."""


class FiniteJumpModel(JumpModel):
    """Jump model given by per-state tables.

    Parameters
    ----------
    states : sequence of hashable
        Enumeration of the (non-absorbed) state space, in a fixed order.
    motion, branch, kill : array_like
        Per-state total motion jump rate, branching rate ``b`` and soft
        killing rate ``kappa``.
    transitions : sequence of sequence of (dest, prob)
        Jump law from each state.  ``dest`` is a state, ``CEMETERY`` (hard
        kill) or ``None`` (overflow of a truncated infinite space).
        Destinations equal to the origin are kept as no-op jumps.
    """

    def __init__(self, states: Sequence[Hashable], motion, branch, kill, transitions,
                 *, name: str = "finite", branch_bound: float | None = None):
        self.states = list(states)
        self.name = name
        self._index = {s: i for i, s in enumerate(self.states)}
        if len(self._index) != len(self.states):
            raise ValueError("duplicate states in enumeration")
        S = len(self.states)
        self.motion = np.asarray(motion, dtype=float).copy()
        self.branch = np.asarray(branch, dtype=float).copy()
        self.kill = np.asarray(kill, dtype=float).copy()
        for arr, label in ((self.motion, "motion"), (self.branch, "branch"), (self.kill, "kill")):
            if arr.shape != (S,):
                raise ValueError(f"{label} table has shape {arr.shape}, expected ({S},)")
            if np.any(~np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{label} rates must be finite and nonnegative")
        if len(transitions) != S:
            raise ValueError("one transition row per state is required")
        self.total = (self.motion + self.branch) + self.kill

        indptr = [0]
        dest: list[int] = []
        cum: list[float] = []
        self.has_overflow = False
        self.has_cemetery = False
        for i, row in enumerate(transitions):
            probs = []
            for d, pr in row:
                if pr < 0:
                    raise ValueError(f"negative jump probability from {self.states[i]!r}")
                if pr == 0:
                    continue
                if d is CEMETERY:
                    code = DEST_CEMETERY
                    self.has_cemetery = True
                elif d is None:
                    code = DEST_OVERFLOW
                    self.has_overflow = True
                else:
                    code = self._index[d]
                dest.append(code)
                probs.append(float(pr))
            if self.motion[i] > 0:
                if not probs:
                    raise ValueError(f"state {self.states[i]!r} has a motion rate but no jumps")
                if abs(sum(probs) - 1.0) > 1e-9:
                    raise ValueError(f"jump law from {self.states[i]!r} sums to {sum(probs)}")
            c = np.cumsum(probs) if probs else np.empty(0)
            if c.size:
                c[-1] = 1.0
            cum.extend(c.tolist())
            indptr.append(len(dest))
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.dest = np.asarray(dest, dtype=np.int64)
        self.cum = np.asarray(cum, dtype=float)
        bmax = float(self.branch.max()) if S else 0.0
        self.branch_bound = bmax if branch_bound is None else branch_bound

    # -- enumeration ------------------------------------------------------
    @property
    def n_states(self) -> int:
        return len(self.states)

    def index(self, x) -> int:
        return self._index[x]

    def state(self, i: int):
        return self.states[i]

    def values(self, f) -> np.ndarray:
        """Tabulate ``f`` over the enumeration."""
        return np.array([float(f(s)) for s in self.states])

    # -- JumpModel contract ------------------------------------------------
    def motion_rate(self, x):
        return float(self.motion[self._index[x]])

    def branch_rate(self, x):
        return float(self.branch[self._index[x]])

    def kill_rate(self, x):
        return float(self.kill[self._index[x]])

    def rates(self, x):
        i = self._index[x]
        return float(self.motion[i]), float(self.branch[i]), float(self.kill[i])

    def jump_law(self, x) -> list[tuple[object, float]]:
        i = self._index[x]
        lo, hi = self.indptr[i], self.indptr[i + 1]
        out = []
        prev = 0.0
        for k in range(lo, hi):
            out.append((self._decode(self.dest[k]), float(self.cum[k] - prev)))
            prev = float(self.cum[k])
        return out

    def _decode(self, code):
        if code == DEST_CEMETERY:
            return CEMETERY
        if code == DEST_OVERFLOW:
            return None
        return self.states[code]

    def sample_motion_jump(self, x, rng):
        i = self._index[x]
        u = rng.random()
        k = self.indptr[i]
        hi = self.indptr[i + 1] - 1
        while k < hi and u >= self.cum[k]:
            k += 1
        code = self.dest[k]
        if code == DEST_OVERFLOW:
            raise StateSpaceOverflow(f"left the enumerated state space from {x!r}")
        return self._decode(code)

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, states={self.n_states})"


def tabulate(fn, states) -> np.ndarray:
    return np.array([float(fn(s)) for s in states])


def is_finite_cap(m) -> bool:
    return m is not None and not (isinstance(m, float) and math.isinf(m))
