"""h-transformed neutron random walk in a one-dimensional slab.

A particle at ``r`` in ``(0, L)`` moves at a velocity from a finite set
``V`` and scatters at rate ``alpha(r, v)`` to a velocity drawn from the
stochastic matrix ``pi``.  The process is killed on reaching the slab
faces.  Writing ``kappa_{r,v}`` for the time to reach a face along the
current flight, the weight ``h = phi(kappa_{r,v})`` biases scattering
towards velocities that keep the particle inside, and the leftover
``Lh/h`` is carried as branching (its positive part) and soft killing (its
negative part), so that the transformed process never reaches the faces.

States are ``(r, k)`` with ``k`` the index of the velocity in ``V``.  The
simulator carries a third component, the distance ``L - r`` to the right
face, evolved on its own: near ``r = L`` the difference ``L - r`` would
otherwise run out of floating-point precision long before the walk is
pushed back, whereas distances to the left face stay accurate down to the
smallest doubles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..process import CEMETERY, FlowModel

# sup of phi' over the cubic joint
PHI_SLOPE_MAX = 4.0 / 3.0


def make_phi(delta: float) -> tuple[Callable[[float], float], Callable[[float], float]]:
    """Smoothing profile ``phi`` and its derivative.

    ``phi(x) = x`` on ``[0, delta/2]``, ``phi(x) = delta`` for ``x >= delta``
    and a monotone cubic Hermite joint in between with ``phi'(delta/2) = 1``
    and ``phi'(delta) = 0``.
    """
    half = 0.5 * delta

    def phi(x: float) -> float:
        if x <= half:
            return x
        if x >= delta:
            return delta
        s = (x - half) / half
        # Hermite basis on [half, delta] with values (half, delta), slopes (1, 0)
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        return h00 * half + h10 * half + h01 * delta

    def dphi(x: float) -> float:
        if x <= half:
            return 1.0
        if x >= delta:
            return 0.0
        s = (x - half) / half
        d00 = 6 * s**2 - 6 * s
        d10 = 3 * s**2 - 4 * s + 1
        d01 = -6 * s**2 + 6 * s
        return (d00 * half + d10 * half + d01 * delta) / half

    return phi, dphi


@dataclass
class NRWSlabSpec:
    """Slab ``(0, L)`` with velocity set ``V``.

    ``alpha`` is a scatter rate, either a constant or a function of
    ``(r, v)``; in the latter case ``alpha_max`` must bound it.  ``pi`` is a
    ``|V| x |V|`` stochastic matrix (or a function of ``r`` returning one).
    """

    L: float = 1.0
    V: Sequence[float] = (-1.0, -0.5, 0.5, 1.0)
    alpha: float | Callable = 1.0
    pi: np.ndarray | Callable | None = None
    v_min: float | None = None
    v_max: float | None = None
    alpha_max: float | None = None
    delta: float = field(init=False)

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("slab length must be positive")
        self.V = tuple(float(v) for v in self.V)
        if not self.V:
            raise ValueError("velocity set is empty")
        speeds = [abs(v) for v in self.V]
        if min(speeds) == 0.0:
            raise ValueError("velocity set must not contain 0")
        lo = min(speeds) if self.v_min is None else self.v_min
        hi = max(speeds) if self.v_max is None else self.v_max
        if not 0 < lo <= hi or any(s < lo or s > hi for s in speeds):
            raise ValueError("velocities must lie in the annulus v_min <= |v| <= v_max")
        self.v_min, self.v_max = lo, hi
        if self.pi is None:
            n = len(self.V)
            self.pi = np.full((n, n), 1.0 / n)
        if not callable(self.pi):
            self.pi = np.asarray(self.pi, dtype=float)
            _check_stochastic(self.pi, len(self.V))
        if callable(self.alpha):
            if self.alpha_max is None:
                raise ValueError("alpha_max is required when alpha is a function")
        else:
            self.alpha = float(self.alpha)
            if self.alpha_max is None:
                self.alpha_max = self.alpha
        if not self.alpha_max > 0:
            raise ValueError("scatter rate bound must be positive")
        self.delta = 1.0 / (2.0 * self.alpha_max)

    def alpha_at(self, r: float, k: int) -> float:
        a = self.alpha(r, self.V[k]) if callable(self.alpha) else self.alpha
        if a < 0 or a > self.alpha_max * (1 + 1e-12):
            raise ValueError(f"alpha({r}, {self.V[k]}) = {a} outside [0, alpha_max]")
        return a

    def pi_at(self, r: float) -> np.ndarray:
        if callable(self.pi):
            m = np.asarray(self.pi(r), dtype=float)
            _check_stochastic(m, len(self.V))
            return m
        return self.pi


def _check_stochastic(m: np.ndarray, n: int):
    if m.shape != (n, n):
        raise ValueError(f"scatter kernel has shape {m.shape}, expected ({n}, {n})")
    if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("scatter kernel rows must be probability vectors")


def exit_time(spec: NRWSlabSpec, r: float, k: int, right: float | None = None) -> float:
    """Time to leave ``(0, L)`` flying from ``r`` at velocity ``V[k]``.

    ``right`` is the distance to the right face when known more accurately
    than ``L - r``.
    """
    v = spec.V[k]
    if v > 0:
        return (spec.L - r if right is None else right) / v
    return r / (-v)


def _split(spec: NRWSlabSpec, x) -> tuple[float, int, float]:
    r, k = x[0], x[1]
    return r, k, (x[2] if len(x) > 2 else spec.L - r)


class HTransformedNRW(FlowModel):
    """Flow model of the h-transformed walk with ``b = (Lh/h)+``, ``kappa = (Lh/h)-``.

    With ``tilt=False`` only the biased scattering is simulated (no
    branching, no soft killing), i.e. the motion law of the transformed walk.
    """

    def __init__(self, spec: NRWSlabSpec, *, tilt: bool = True):
        self.spec = spec
        self.tilt = tilt
        self.phi, self.dphi = make_phi(spec.delta)
        self.branch_bound = self._branch_bound()

    def _branch_bound(self) -> float:
        # Lh <= alpha_max * delta on the plateau and h >= delta/2 wherever phi' < 1
        return 2.0 * self.spec.alpha_max

    # -- h and its generator --------------------------------------------
    def h(self, r: float, k: int, right: float | None = None) -> float:
        return self.phi(exit_time(self.spec, r, k, right))

    def h_row(self, r: float, right: float | None = None) -> np.ndarray:
        return np.array([self.h(r, j, right) for j in range(len(self.spec.V))])

    def Lh(self, r: float, k: int, right: float | None = None) -> float:
        hs = self.h_row(r, right)
        a = self.spec.alpha_at(r, k)
        pi = self.spec.pi_at(r)[k]
        return -self.dphi(exit_time(self.spec, r, k, right)) + a * float(np.dot(hs - hs[k], pi))

    def Lh_over_h(self, r: float, k: int, right: float | None = None) -> float:
        return self.Lh(r, k, right) / self.h(r, k, right)

    def channel_rates(self, x) -> tuple[float, float, float]:
        """(biased scatter, branch, kill) rates at ``x``."""
        r, k, right = _split(self.spec, x)
        hs = self.h_row(r, right)
        a = self.spec.alpha_at(r, k)
        pi = self.spec.pi_at(r)[k]
        hk = hs[k]
        scatter = a * float(np.dot(pi, hs)) / hk
        if not self.tilt:
            return scatter, 0.0, 0.0
        g = (-self.dphi(exit_time(self.spec, r, k, right)) + a * float(np.dot(hs - hk, pi))) / hk
        return scatter, (g if g > 0 else 0.0), (-g if g < 0 else 0.0)

    def scatter_law(self, x) -> np.ndarray:
        r, k, right = _split(self.spec, x)
        w = self.spec.pi_at(r)[k] * self.h_row(r, right)
        return w / w.sum()

    # -- FlowModel contract ---------------------------------------------
    def flow(self, x, dt):
        if x is CEMETERY:
            return x
        r, k, right = _split(self.spec, x)
        v = self.spec.V[k]
        return (r + v * dt, k, right - v * dt)

    def boundary_hit_time(self, x):
        return exit_time(self.spec, *_split(self.spec, x))

    def event_rate(self, x):
        s, b, kp = self.channel_rates(x)
        return s + b + kp

    def lookahead(self, x):
        return 0.5 * exit_time(self.spec, *_split(self.spec, x))

    def rate_bound(self, x, horizon):
        remaining = exit_time(self.spec, *_split(self.spec, x)) - horizon
        if remaining <= 0:
            return math.inf
        num = 2.0 * self.spec.alpha_max * self.spec.delta + PHI_SLOPE_MAX
        return num / self.phi(remaining)

    def sample_event(self, x, rng):
        s, b, kp = self.channel_rates(x)
        u = rng.random() * (s + b + kp)
        if u < s:
            law = self.scatter_law(x)
            c = np.cumsum(law)
            c[-1] = 1.0
            j = int(np.searchsorted(c, rng.random(), side="right"))
            return "motion", (x[0], j, _split(self.spec, x)[2])
        if u < s + b:
            return "branch", None
        return "kill", None

    # rates for the generic jump-model API (used by diagnostics)
    def rates(self, x):
        s, b, kp = self.channel_rates(x)
        return s, b, kp


def nrw_make(spec: NRWSlabSpec, *, tilt: bool = True) -> HTransformedNRW:
    return HTransformedNRW(spec, tilt=tilt)


def nrw_Lh_over_h(spec: NRWSlabSpec, r: float, v: float | int, *, by_index: bool = False) -> float:
    """``Lh/h`` at ``(r, v)``; ``v`` is a velocity value unless ``by_index``."""
    k = int(v) if by_index else spec.V.index(float(v))
    if not 0.0 < r < spec.L:
        raise ValueError("r must lie inside the slab")
    return HTransformedNRW(spec).Lh_over_h(r, k)
