"""Exact Feynman-Kac semigroup of finite jump models.

``A = L_motion + diag(b - kappa)`` on the enumerated non-absorbed states;
jumps to the cemetery leave their rate on the diagonal only, which is the
row/column deletion of the absorbing state.  ``exp(tA) f`` is computed by
uniformization and the leading eigentriple by power iteration on
``exp(A dt)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .models.finite import DEST_CEMETERY, DEST_OVERFLOW, FiniteJumpModel

MAX_STATES = 20000
# cap on c * t per uniformization chunk, keeps Poisson weights representable
CHUNK = 32.0


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class TiltedGenerator:
    """Dense tilted generator over an enumeration of states."""

    matrix: np.ndarray
    states: tuple

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def index(self, x) -> int:
        return self.states.index(x)

    def delta(self, x) -> np.ndarray:
        e = np.zeros(self.size)
        e[self.index(x)] = 1.0
        return e


@dataclass(frozen=True)
class LeadingTriple:
    """Growth rate ``lam``, right eigenvector ``eta`` (sup norm 1), left ``nu`` (mass 1)."""

    lam: float
    eta: np.ndarray
    nu: np.ndarray
    states: tuple = ()

    def nu_of(self, f) -> float:
        vals = np.array([float(f(s)) for s in self.states]) if callable(f) else np.asarray(f)
        return float(self.nu @ vals)


def tilted_generator(model: FiniteJumpModel, *, allow_overflow: bool = False) -> TiltedGenerator:
    """Assemble ``A`` from the model's tables.

    Self-loops cancel out.  A truncated infinite space (overflow jumps) is
    rejected unless ``allow_overflow``; the overflow mass then leaks like a
    hard kill, which is the truncated problem.
    """
    if not isinstance(model, FiniteJumpModel):
        raise TypeError("the oracle needs an enumerated (finite) model")
    S = model.n_states
    if S > MAX_STATES:
        raise ValueError(f"{S} states exceed the oracle limit of {MAX_STATES}")
    if model.has_overflow and not allow_overflow:
        raise ValueError("model is a truncation of an infinite space")
    A = np.zeros((S, S))
    for i in range(S):
        rate = model.motion[i]
        A[i, i] += model.branch[i] - model.kill[i] - rate
        prev = 0.0
        for k in range(model.indptr[i], model.indptr[i + 1]):
            pr = model.cum[k] - prev
            prev = model.cum[k]
            d = model.dest[k]
            if d in (DEST_CEMETERY, DEST_OVERFLOW):
                continue
            A[i, d] += rate * pr
    return TiltedGenerator(A, tuple(model.states))


def _as_matrix(A) -> np.ndarray:
    return A.matrix if isinstance(A, TiltedGenerator) else np.asarray(A, dtype=float)


def _poisson_terms(mu: float, tol: float) -> int:
    # smallest K with P(Poisson(mu) > K) < tol
    return int(stats.poisson.isf(tol, mu)) + 2 if mu > 0 else 0


def semigroup_apply(A, f, t: float, *, tol: float = 1e-13) -> np.ndarray:
    """``exp(tA) f`` by uniformization.

    With ``c = max |A_ii|`` and ``P = I + A/c`` (entrywise nonnegative),
    ``exp(tA) = exp(-ct) sum_k (ct)^k/k! P^k``.  Long times are split into
    chunks with ``c t <= 32``; the series is truncated once the Poisson tail,
    scaled by ``||P||^K``, drops below ``tol`` relative to ``||f||``.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    M = _as_matrix(A)
    v = np.array(f, dtype=float, copy=True)
    if t == 0:
        return v
    c = float(np.max(np.abs(np.diag(M)))) or 1.0
    P = np.eye(M.shape[0]) + M / c
    rho = max(float(np.abs(P).sum(axis=1).max()), 1.0)
    n_chunks = max(1, math.ceil(c * t / CHUNK))
    h = t / n_chunks
    for _ in range(n_chunks):
        v = _uniformized_chunk(P, v, c * h, rho, tol)
    return v


def _uniformized_chunk(P, v, mu, rho, tol):
    # weights of Poisson(mu * rho) bound rho^k * Poisson(mu) weights
    K = _poisson_terms(mu * rho, tol) if rho > 1.0 else _poisson_terms(mu, tol)
    out = np.zeros_like(v)
    term = v.copy()
    logw = -mu
    for k in range(K + 1):
        if k > 0:
            term = P @ term
            logw += math.log(mu) - math.log(k)
        out += math.exp(logw) * term
    return out


def transition_operator(A, t: float) -> np.ndarray:
    """Dense ``exp(tA)`` (columns by uniformization of the unit vectors)."""
    M = _as_matrix(A)
    return semigroup_apply(M, np.eye(M.shape[0]), t)


def _squared_propagator(M: np.ndarray, dt: float, doublings: int) -> tuple[np.ndarray, float]:
    """``exp(A dt 2^doublings)`` rescaled, with the log of the scale removed."""
    E = transition_operator(M, dt)
    log_scale = 0.0
    for _ in range(doublings):
        E = E @ E
        s = float(np.abs(E).max())
        E /= s
        log_scale = 2 * log_scale + math.log(s)
    return E, log_scale


def leading_triple(A, *, tol: float = 1e-10, max_iter: int = 100000,
                   doublings: int | None = None) -> LeadingTriple:
    """Perron eigentriple by power iteration on ``exp(A dt)``.

    ``dt = 1 / (2 max |A_ii|)``; the propagator is squared ``doublings``
    times to speed up the iteration (by default enough times for one
    iteration to cover at least one unit of time).  Convergence is declared once both
    generator residuals ``||A eta - lam eta||`` and ``||nu A - lam nu||``
    (relative to ``||A||``) drop below ``tol``.
    """
    M = _as_matrix(A)
    states = A.states if isinstance(A, TiltedGenerator) else tuple(range(M.shape[0]))
    S = M.shape[0]
    if S == 1:
        return LeadingTriple(float(M[0, 0]), np.ones(1), np.ones(1), states)
    dmax = float(np.max(np.abs(np.diag(M)))) or 1.0
    dt = 1.0 / (2.0 * dmax)
    if doublings is None:
        doublings = max(6, math.ceil(math.log2(2.0 * dmax)))
    E, _ = _squared_propagator(M, dt, doublings)
    scale = max(float(np.abs(M).max()), 1.0)
    eta = np.ones(S)
    nu = np.full(S, 1.0 / S)
    for it in range(max_iter):
        eta = E @ eta
        eta /= np.abs(eta).max()
        nu = nu @ E
        nu /= nu.sum()
        if it % 4 == 3:
            lam = float(nu @ M @ eta) / float(nu @ eta)
            r_right = np.abs(M @ eta - lam * eta).max() / scale
            r_left = np.abs(nu @ M - lam * nu).max() / scale
            if r_right < tol and r_left < tol:
                break
    else:
        raise NonConvergence(f"power iteration did not converge in {max_iter} steps")
    eta, nu = _polish(M, lam, eta, nu)
    lam = float(nu @ M @ eta) / float(nu @ eta)
    eta = np.abs(eta) / np.abs(eta).max()
    nu = np.abs(nu) / np.abs(nu).sum()
    return LeadingTriple(lam, eta, nu, states)


def _polish(M, lam, eta, nu, steps: int = 2):
    # a couple of inverse iterations with a slightly shifted eigenvalue
    S = M.shape[0]
    shift = lam + 1e-10 * max(1.0, abs(lam))
    K = M - shift * np.eye(S)
    try:
        for _ in range(steps):
            eta = np.linalg.solve(K, eta)
            eta /= np.abs(eta).max()
            nu = np.linalg.solve(K.T, nu)
            nu /= nu.sum()
    except np.linalg.LinAlgError:
        pass
    return eta, nu


def leading_triple_dense(A) -> LeadingTriple:
    """Second method: dense eigendecomposition (for cross-checks)."""
    M = _as_matrix(A)
    states = A.states if isinstance(A, TiltedGenerator) else tuple(range(M.shape[0]))
    w, vr = np.linalg.eig(M)
    i = int(np.argmax(w.real))
    eta = np.abs(vr[:, i].real)
    wl, vl = np.linalg.eig(M.T)
    j = int(np.argmax(wl.real))
    nu = np.abs(vl[:, j].real)
    return LeadingTriple(float(w[i].real), eta / eta.max(), nu / nu.sum(), states)


def conditional_law(A, x, t: float) -> np.ndarray:
    """``delta_x exp(tA)`` normalised to a probability vector."""
    G = A if isinstance(A, TiltedGenerator) else None
    M = _as_matrix(A)
    e = G.delta(x) if G is not None else np.eye(M.shape[0])[x]
    row = semigroup_apply(M.T, e, t)
    return row / row.sum()


def benchmark_triple(M: int) -> LeadingTriple:
    """Leading triple of the branching benchmark chain on ``{1, ..., M}``."""
    from .models.birth_death import benchmark
    return leading_triple(tilted_generator(benchmark(M)))
