"""Multi-dimensional birth-death chains with branching and killing.

Also provides the one-dimensional benchmark chain on ``{1, ..., M}`` that
jumps at rate ``x**2`` (down with probability ``x/(x+1)``, up otherwise),
branches at rate ``b(x) = x`` and never dies, together with its
killed counterpart used by the fixed-size Fleming-Viot system.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .finite import FiniteJumpModel

# enumeration bound per coordinate used when the cap is infinite
DEFAULT_TRUNCATION = 400


def _isinf(m) -> bool:
    return m is None or (isinstance(m, float) and math.isinf(m))


@dataclass
class BirthDeathSpec:
    """Rates of a birth-death chain on ``{lower, ..., cap}**d``.

    ``birth[i](x)`` is the rate of ``x -> x + e_i`` and ``death[i](x)`` the
    rate of ``x -> x - e_i``.  Moves leaving the box are kept as no-op jumps
    (reflection at ``lower``, capping at ``cap``).
    """

    dim: int
    birth: Sequence[Callable]
    death: Sequence[Callable]
    branch: Callable
    kill: Callable = lambda x: 0.0
    cap: float = math.inf
    lower: int = 0
    name: str = "birth-death"
    truncation: int | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")
        if len(self.birth) != self.dim or len(self.death) != self.dim:
            raise ValueError("need one birth and one death rate per coordinate")
        if self.truncation is None:
            self.truncation = DEFAULT_TRUNCATION if self.dim == 1 else 40


def _point(x, dim):
    return x[0] if dim == 1 else tuple(x)


def bd_make(spec: BirthDeathSpec, *, unbounded_ok: bool = False) -> FiniteJumpModel:
    """Build the jump model of a birth-death spec.

    With an infinite cap the state space is enumerated up to
    ``spec.truncation`` per coordinate; a particle stepping past it raises
    :class:`~bbmmi.models.finite.StateSpaceOverflow`.  Unbounded caps are
    refused unless ``unbounded_ok`` is set, since the branching rate is then
    typically unbounded.
    """
    d = spec.dim
    infinite = _isinf(spec.cap)
    if infinite and not unbounded_ok:
        raise ValueError("infinite state space requires unbounded_ok=True")
    top = spec.truncation if infinite else int(spec.cap)
    if top < spec.lower:
        raise ValueError("cap below the lower bound of the state space")
    coords = range(spec.lower, top + 1)
    states = [_point(p, d) for p in itertools.product(coords, repeat=d)]

    motion, branch, kill, transitions = [], [], [], []
    for s in states:
        x = (s,) if d == 1 else s
        moves = []
        total = 0.0
        for i in range(d):
            up = float(spec.birth[i](s))
            down = float(spec.death[i](s))
            if up < 0 or down < 0:
                raise ValueError(f"negative rate at {s!r}")
            if x[i] == 0 and down != 0.0:
                raise ValueError(f"death rate must vanish when coordinate {i} is 0 (state {s!r})")
            for rate, step in ((up, 1), (down, -1)):
                if rate == 0.0:
                    continue
                y = list(x)
                y[i] += step
                if y[i] < spec.lower:
                    target = s
                elif y[i] > top:
                    target = None if infinite else s
                else:
                    target = _point(y, d)
                moves.append((target, rate))
                total += rate
        motion.append(total)
        transitions.append([(t, r / total) for t, r in moves] if total > 0 else [])
        branch.append(float(spec.branch(s)))
        kill.append(float(spec.kill(s)))
    bound = math.inf if infinite else None
    return FiniteJumpModel(states, motion, branch, kill, transitions, name=spec.name,
                           branch_bound=bound)


def _benchmark_tables(M: int, top: int, infinite: bool):
    states = list(range(1, top + 1))
    transitions = []
    for x in states:
        left = max(1, x - 1)
        right = x + 1
        if right > top:
            right = None if infinite else top
        transitions.append([(left, x / (x + 1.0)), (right, 1.0 / (x + 1.0))])
    motion = [float(x * x) for x in states]
    return states, motion, transitions


def benchmark(M: float = 10, *, unbounded_ok: bool = False,
              truncation: int = DEFAULT_TRUNCATION) -> FiniteJumpModel:
    """Branching birth-death benchmark on ``{1, ..., M}`` with ``b(x) = x``."""
    infinite = _isinf(M)
    if infinite and not unbounded_ok:
        raise ValueError("M = inf has unbounded branching; pass unbounded_ok=True")
    if not infinite and int(M) < 2:
        raise ValueError("benchmark needs M >= 2")
    top = truncation if infinite else int(M)
    states, motion, transitions = _benchmark_tables(M, top, infinite)
    branch = [float(x) for x in states]
    kill = [0.0] * len(states)
    name = "benchmark-Minf" if infinite else f"benchmark-M{int(M)}"
    return FiniteJumpModel(states, motion, branch, kill, transitions, name=name,
                           branch_bound=math.inf if infinite else float(top))


def bd_killed_make(M: float) -> FiniteJumpModel:
    """Benchmark chain without branching, killed at rate ``M - x``."""
    if _isinf(M):
        raise ValueError("the killed chain (Fleming-Viot counterpart) is undefined for M = inf")
    M = int(M)
    if M < 2:
        raise ValueError("need M >= 2")
    states, motion, transitions = _benchmark_tables(M, M, False)
    kill = [float(M - x) for x in states]
    return FiniteJumpModel(states, motion, [0.0] * M, kill, transitions,
                           name=f"killed-benchmark-M{M}", branch_bound=0.0)


def single_state(growth: float, *, name: str = "single-state") -> FiniteJumpModel:
    """One motionless state with net growth rate ``growth`` (= b - kappa)."""
    b = max(growth, 0.0)
    k = max(-growth, 0.0)
    return FiniteJumpModel([0], [0.0], [b], [k], [[]], name=name)


def constant_kill(rate: float, n_states: int = 2, jump: float = 1.0) -> FiniteJumpModel:
    """Symmetric walk on a ring of ``n_states`` points with constant killing."""
    states = list(range(n_states))
    transitions = [[((s - 1) % n_states, 0.5), ((s + 1) % n_states, 0.5)] for s in states]
    return FiniteJumpModel(states, [jump] * n_states, [0.0] * n_states,
                           [float(rate)] * n_states, transitions,
                           name=f"constant-kill-{rate}")
