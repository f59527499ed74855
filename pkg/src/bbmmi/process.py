"""Underlying Markov process contracts, exponential clocks and random streams.

Every particle in a BBMMI system moves as an independent copy of a Markov
process ``X`` on ``E`` with an absorbing cemetery.  Two model classes are
supported by the engine:

* :class:`JumpModel` -- all rates are constant between system events, so
  the next event is sampled exactly by competing exponentials.
* :class:`FlowModel` -- rates vary along a deterministic flow and events are
  sampled by thinning against a per-particle dominating rate.

Random numbers come from Philox4x64-10 (the Random123 counter-based
generator) keyed directly by ``(master seed, replica index, role)``, so any
implementation of Philox reproduces the same streams.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

RNG_ALGORITHM = "philox4x64-10"

INF = math.inf


class _Cemetery:
    """The absorbing set; a single shared sentinel."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "CEMETERY"

    def __reduce__(self):
        return (_Cemetery, ())


CEMETERY = _Cemetery()


def is_cemetery(x) -> bool:
    return x is CEMETERY


# ---------------------------------------------------------------------------
# exponential clocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateSegment:
    """Constant ``rate`` held for ``duration`` time units (may be infinite)."""

    rate: float
    duration: float = INF

    def __post_init__(self):
        if not (self.rate >= 0.0) or math.isinf(self.rate):
            raise ValueError(f"rate must be finite and nonnegative, got {self.rate}")
        if not (self.duration > 0.0):
            raise ValueError(f"duration must be positive, got {self.duration}")


def _as_segments(segments) -> list[RateSegment]:
    out = []
    for s in segments:
        out.append(s if isinstance(s, RateSegment) else RateSegment(*s))
    if not out:
        raise ValueError("segments must be nonempty")
    return out


def cumulative_rate(segments: Sequence, t: float) -> float:
    """Integral of the piecewise constant rate over ``[0, t]``."""
    total = 0.0
    remaining = t
    for seg in _as_segments(segments):
        if remaining <= 0.0:
            break
        span = min(seg.duration, remaining)
        if seg.rate > 0.0:
            total += seg.rate * span
        remaining -= span
    return total


def exp_clock_invert(segments: Sequence, threshold: float) -> float:
    """First time at which the cumulative rate reaches ``threshold``.

    ``segments`` is an ordered sequence of :class:`RateSegment` (or
    ``(rate, duration)`` pairs).  Returns ``math.inf`` when the total
    integral stays below the threshold.

    >>> exp_clock_invert([(2.0, 1.0), (4.0, math.inf)], 3.0)
    1.25
    """
    if not threshold > 0.0:
        raise ValueError("threshold must be positive")
    elapsed = 0.0
    acc = 0.0
    for seg in _as_segments(segments):
        if seg.rate > 0.0:
            need = threshold - acc
            if seg.rate * seg.duration >= need:
                return elapsed + need / seg.rate
            acc += seg.rate * seg.duration
        elapsed += seg.duration
        if math.isinf(elapsed):
            break
    return INF


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------


def role_code(role: str) -> int:
    return zlib.crc32(role.encode("utf-8")) & 0xFFFFFFFF


@dataclass(frozen=True)
class RngStream:
    """Identity of one Philox stream.

    The 128-bit Philox key is ``(seed, index << 32 | crc32(role))``; the
    counter starts at zero.  Distinct ``(seed, index, role)`` triples give
    distinct keys as long as ``index < 2**32``.
    """

    seed: int
    index: int
    role: str = "engine"
    algorithm: str = RNG_ALGORITHM

    @property
    def key(self) -> int:
        return ((self.index << 32 | role_code(self.role)) << 64) | self.seed

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key))


def derive_stream(seed: int, index: int, role: str = "engine") -> RngStream:
    seed = int(seed)
    index = int(index)
    if not 0 <= seed < 2**64:
        raise ValueError("master seed must fit in an unsigned 64-bit integer")
    if not 0 <= index < 2**32:
        raise ValueError("stream index must be in [0, 2**32)")
    return RngStream(seed, index, role)


def exp1(rng: np.random.Generator) -> float:
    """Standard exponential by inversion of a single uniform.

    Kept as explicit inversion so that the compiled kernels, which use the
    same formula, consume the stream identically.
    """
    return -math.log(1.0 - rng.random())


# ---------------------------------------------------------------------------
# model contracts
# ---------------------------------------------------------------------------


class JumpModel:
    """Pure jump process with constant rates between jumps.

    Subclasses implement :meth:`motion_rate`, :meth:`sample_motion_jump`,
    :meth:`branch_rate` and :meth:`kill_rate`.  ``branch_bound`` declares
    ``sup b`` (``math.inf`` for models outside the bounded-branching
    hypothesis).
    """

    branch_bound: float = INF

    def motion_rate(self, x) -> float:
        raise NotImplementedError

    def sample_motion_jump(self, x, rng: np.random.Generator):
        raise NotImplementedError

    def branch_rate(self, x) -> float:
        raise NotImplementedError

    def kill_rate(self, x) -> float:
        raise NotImplementedError

    def is_absorbed(self, x) -> bool:
        return x is CEMETERY

    def rates(self, x) -> tuple[float, float, float]:
        return self.motion_rate(x), self.branch_rate(x), self.kill_rate(x)


class EnvironmentJumpModel(JumpModel):
    """Jump model whose rates also read a global environment value.

    The environment is part of the system state and switches as a system
    event at rate :meth:`env_rate`.
    """

    def initial_env(self, rng: np.random.Generator) -> Any:
        raise NotImplementedError

    def env_rate(self, env) -> float:
        raise NotImplementedError

    def env_jump(self, env, rng: np.random.Generator) -> Any:
        raise NotImplementedError

    def rates_env(self, x, env) -> tuple[float, float, float]:
        raise NotImplementedError

    def sample_motion_jump_env(self, x, env, rng):
        return self.sample_motion_jump(x, rng)


class FlowModel:
    """Piecewise deterministic process, simulated by thinning.

    ``sample_event`` returns one of ``("motion", new_state)``,
    ``("branch", None)`` or ``("kill", None)`` with probabilities
    proportional to the channel rates at ``x``.
    """

    branch_bound: float = INF

    def flow(self, x, dt: float):
        raise NotImplementedError

    def boundary_hit_time(self, x) -> float:
        return INF

    def event_rate(self, x) -> float:
        raise NotImplementedError

    def lookahead(self, x) -> float:
        """Horizon over which :meth:`rate_bound` is requested."""
        raise NotImplementedError

    def rate_bound(self, x, horizon: float) -> float:
        raise NotImplementedError

    def sample_event(self, x, rng: np.random.Generator):
        raise NotImplementedError

    def is_absorbed(self, x) -> bool:
        return x is CEMETERY
