"""Independent replicas, optionally spread over worker processes.

Replica ``i`` always draws from ``derive_stream(seed, i, "engine")`` and
results are reassembled by replica index, so the output does not depend on
the number of workers or on scheduling.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .engine import SNAPSHOT_COLUMNS, ExplosionGuard, PyEngine, make_grid
from .models.finite import FiniteJumpModel
from .policies import SizePolicy
from .process import derive_stream

log = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_EXPLODED = "explosion-guard"


@dataclass
class ReplicaBatch:
    """Snapshots of ``R`` replicas on a common grid.

    ``snapshots`` has shape ``(R, len(grid), len(SNAPSHOT_COLUMNS))``; rows of
    a replica whose explosion guard tripped are NaN.
    """

    snapshots: np.ndarray
    grid: np.ndarray
    seed: int
    status: list = field(default_factory=list)
    flagged: np.ndarray | None = None

    @property
    def replicas(self) -> int:
        return self.snapshots.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.snapshots[:, :, SNAPSHOT_COLUMNS.index(name)]

    def grid_index(self, t: float) -> int:
        idx = np.flatnonzero(np.isclose(self.grid, t, rtol=0.0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(f"time {t} is not on the grid")
        return int(idx[0])

    @property
    def ok(self) -> np.ndarray:
        return np.array([s == STATUS_OK for s in self.status])

    @property
    def guard_tripped(self) -> bool:
        return any(s == STATUS_EXPLODED for s in self.status)


def make_engine(model, policy, *, engine: str = "auto", max_events: int | None = None,
                rate_hook=None):
    """Pick the compiled engine when the model and policy allow it."""
    kw = {} if max_events is None else {"max_events": max_events}
    fast_ok = (isinstance(model, FiniteJumpModel) and isinstance(policy, SizePolicy)
               and rate_hook is None)
    if engine == "fast" or (engine == "auto" and fast_ok):
        if not fast_ok:
            raise TypeError("the compiled engine needs a finite model and a size-only policy")
        from .fast import FastEngine
        return FastEngine(model, policy, **kw)
    if engine not in ("auto", "python"):
        raise ValueError(f"unknown engine {engine!r}")
    return PyEngine(model, policy, rate_hook=rate_hook, **kw)


# job shared with forked workers (avoids pickling user callables)
_JOB: dict = {}


def _run_one(i: int):
    job = _JOB
    rng = derive_stream(job["seed"], i).generator()
    try:
        traj = job["engine"].run(job["initial"], job["horizon"], job["grid"], rng, f=job["f"])
    except ExplosionGuard as exc:
        log.warning("replica %d: %s", i, exc)
        return i, None, STATUS_EXPLODED, False
    return i, traj.snapshots, STATUS_OK, bool(getattr(traj, "flagged", False))


def _run_chunk(indices):
    return [_run_one(i) for i in indices]


def run_batch(model, policy, initial_states, horizon: float, *, replicas: int, seed: int,
              grid=None, f=None, workers: int = 1, engine: str = "auto",
              max_events: int | None = None) -> ReplicaBatch:
    """Simulate ``replicas`` independent trajectories."""
    if replicas < 1:
        raise ValueError("need at least one replica")
    g = make_grid(horizon, grid)
    if g[-1] < horizon:
        g = np.append(g, horizon)
    eng = make_engine(model, policy, engine=engine, max_events=max_events)
    _JOB.clear()
    _JOB.update(engine=eng, initial=list(initial_states), horizon=float(horizon), grid=g,
                f=f, seed=int(seed))
    workers = max(1, min(int(workers), replicas))
    if workers == 1:
        results = _run_chunk(range(replicas))
    else:
        ctx = mp.get_context("fork")
        chunks = [list(range(k, replicas, workers * 4)) for k in range(workers * 4)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            results = [r for part in pool.map(_run_chunk, chunks) for r in part]
    results.sort(key=lambda r: r[0])
    snaps = np.full((replicas, g.size, len(SNAPSHOT_COLUMNS)), np.nan)
    status, flagged = [], np.zeros(replicas, dtype=bool)
    for i, rows, st, fl in results:
        if rows is not None:
            snaps[i] = rows
        status.append(st)
        flagged[i] = fl
    return ReplicaBatch(snaps, g, int(seed), status, flagged)


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)
