"""Branching random walk on ``{0, ..., n}`` with a switching branching rate.

Each particle steps right with probability ``p`` (left otherwise) after an
Exp(1) holding time; steps leaving ``{0, ..., n}`` are clamped, i.e. the
walk stays put.  The branching rate alternates between an *off* regime
(rate 0, left at rate ``s_on``) and an *on* regime (left at rate ``s_off``)
in which every particle branches at a level drawn from the exponential law
with rate ``B`` when the regime switched on.  ``kill(site)`` is an optional
site-dependent soft killing rate.

Two variants are provided:

* ``variant="global"`` (default) -- one regime shared by the whole system,
  toggled as a system event;
* ``variant="particle"`` -- each particle carries its own regime in its
  state ``(site, on, level)`` and newborns inherit it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from ..process import EnvironmentJumpModel, JumpModel


@dataclass(frozen=True)
class BRWSpec:
    n: int = 10
    p: float = 0.5
    s_on: float = 1.0
    s_off: float = 1.0
    B: float = 1.0
    kill: Callable | Sequence[float] | float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("lattice needs n >= 1")
        if not 0.0 < self.p < 1.0:
            raise ValueError("right-step probability must lie in (0, 1)")
        for name in ("s_on", "s_off", "B"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")

    def kill_rate(self, site: int) -> float:
        k = self.kill
        if callable(k):
            return float(k(site))
        if isinstance(k, (int, float)):
            return float(k)
        return float(k[site])


def _step(site: int, n: int, p: float, u: float) -> int:
    y = site + 1 if u < p else site - 1
    return min(max(y, 0), n)


def _draw_level(B: float, rng) -> float:
    return -math.log(1.0 - rng.random()) / B


class GlobalSwitchBRW(EnvironmentJumpModel):
    """States are sites; the environment is ``(on, level)``."""

    def __init__(self, spec: BRWSpec):
        self.spec = spec
        self.kills = [spec.kill_rate(s) for s in range(spec.n + 1)]
        for k in self.kills:
            if not (k >= 0.0 and math.isfinite(k)):
                raise ValueError("kill rates must be finite and nonnegative")

    def initial_env(self, rng):
        return (False, 0.0)

    def env_rate(self, env):
        return self.spec.s_off if env[0] else self.spec.s_on

    def env_jump(self, env, rng):
        if env[0]:
            return (False, 0.0)
        return (True, _draw_level(self.spec.B, rng))

    def rates_env(self, x, env):
        return 1.0, (env[1] if env[0] else 0.0), self.kills[x]

    def sample_motion_jump(self, x, rng):
        return _step(x, self.spec.n, self.spec.p, rng.random())

    # the regime-free contract (environment off)
    def motion_rate(self, x):
        return 1.0

    def branch_rate(self, x):
        return 0.0

    def kill_rate(self, x):
        return self.kills[x]


class ParticleSwitchBRW(JumpModel):
    """States are ``(site, on, level)``; regime switches are motion jumps."""

    def __init__(self, spec: BRWSpec):
        self.spec = spec
        self.kills = [spec.kill_rate(s) for s in range(spec.n + 1)]

    def _switch_rate(self, on: bool) -> float:
        return self.spec.s_off if on else self.spec.s_on

    def motion_rate(self, x):
        return 1.0 + self._switch_rate(x[1])

    def branch_rate(self, x):
        return x[2] if x[1] else 0.0

    def kill_rate(self, x):
        return self.kills[x[0]]

    def sample_motion_jump(self, x, rng):
        site, on, level = x
        s = self._switch_rate(on)
        u = rng.random() * (1.0 + s)
        if u < 1.0:
            return (_step(site, self.spec.n, self.spec.p, u), on, level)
        if on:
            return (site, False, 0.0)
        return (site, True, _draw_level(self.spec.B, rng))


def brw_make(spec: BRWSpec, variant: str = "global"):
    """Build the switching branching random walk (``global`` or ``particle``)."""
    if variant == "global":
        return GlobalSwitchBRW(spec)
    if variant == "particle":
        return ParticleSwitchBRW(spec)
    raise ValueError(f"unknown BRW variant {variant!r}")
