"""Resampling / selection probability functionals ``(p, q)``.

A policy is asked ``p(system, i0, state)`` when particle ``i0`` is killed
(``state`` is its final position, possibly the cemetery) and
``q(system, i0, state)`` when it branches.  ``system`` is the configuration
*before* the event.  Policies that only look at the population size also
export lookup tables for the compiled engine.
"""

from __future__ import annotations

import math

import numpy as np


class InteractionPolicy:
    def p(self, system, i0, state) -> float:
        raise NotImplementedError

    def q(self, system, i0, state) -> float:
        raise NotImplementedError


class SizePolicy(InteractionPolicy):
    """Policy depending on the configuration only through its size."""

    def p_of_size(self, n: int) -> float:
        raise NotImplementedError

    def q_of_size(self, n: int) -> float:
        raise NotImplementedError

    def p(self, system, i0, state):
        return self.p_of_size(system.size)

    def q(self, system, i0, state):
        return self.q_of_size(system.size)

    def size_tables(self, cap: int) -> tuple[np.ndarray, np.ndarray]:
        """``p`` and ``q`` evaluated at sizes ``0..cap``."""
        p = np.array([self.p_of_size(n) if n >= 1 else 0.0 for n in range(cap + 1)])
        q = np.array([self.q_of_size(n) if n >= 1 else 0.0 for n in range(cap + 1)])
        if p.size > 1 and p[1] != 0.0:
            raise ValueError("resampling probability must vanish at size 1")
        return p, q

    def max_size(self) -> float:
        return math.inf


class NminNmaxPolicy(SizePolicy):
    """``p = 1{N = nmin}``, ``q = 1{N = nmax}``.

    ``nmin = 0`` disables resampling, ``nmax = inf`` disables selection.
    """

    def __init__(self, nmin: int, nmax: float):
        if nmin == 1:
            raise ValueError("nmin = 1 would resample a lone particle")
        if nmin < 0 or nmax < nmin:
            raise ValueError(f"need 0 <= nmin <= nmax, got {nmin}, {nmax}")
        self.nmin = int(nmin)
        self.nmax = nmax if math.isinf(nmax) else int(nmax)

    def p_of_size(self, n):
        return 1.0 if n == self.nmin else 0.0

    def q_of_size(self, n):
        return 1.0 if n == self.nmax else 0.0

    def max_size(self):
        return self.nmax

    def __repr__(self):
        return f"NminNmaxPolicy(nmin={self.nmin}, nmax={self.nmax})"


class ConstantPolicy(SizePolicy):
    """Fixed probabilities; ``p`` is forced to zero for a lone particle."""

    def __init__(self, p: float = 0.0, q: float = 0.0):
        if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        self.p_value = float(p)
        self.q_value = float(q)

    def p_of_size(self, n):
        return self.p_value if n >= 2 else 0.0

    def q_of_size(self, n):
        return self.q_value

    def __repr__(self):
        return f"ConstantPolicy(p={self.p_value}, q={self.q_value})"


class ReciprocalPolicy(SizePolicy):
    """``p = 1{N >= 2}/(N + 1)`` and ``q = 1 - 1/(N + 1)``.

    Resampling gets rarer and selection stronger as the population grows.
    """

    def p_of_size(self, n):
        return 1.0 / (n + 1) if n >= 2 else 0.0

    def q_of_size(self, n):
        return 1.0 - 1.0 / (n + 1)

    def __repr__(self):
        return "ReciprocalPolicy()"


def fleming_viot(n: int) -> NminNmaxPolicy:
    """Fixed-size policy: every death triggers a resampling."""
    return NminNmaxPolicy(n, n)


def make_policy(name: str, **kw) -> SizePolicy:
    name = name.lower()
    if name in ("nminnmax", "nmin-nmax"):
        return NminNmaxPolicy(kw["nmin"], kw.get("nmax", math.inf))
    if name in ("fv", "fleming-viot"):
        return fleming_viot(kw["n"])
    if name == "constant":
        return ConstantPolicy(kw.get("p", 0.0), kw.get("q", 0.0))
    if name == "reciprocal":
        return ReciprocalPolicy()
    if name == "none":
        return ConstantPolicy(0.0, 0.0)
    raise ValueError(f"unknown policy {name!r}")
