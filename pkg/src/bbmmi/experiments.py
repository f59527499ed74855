"""Named experiments and config-to-object plumbing used by the CLI."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .batch import make_engine, run_batch
from .config import ConfigError, ExperimentConfig, compile_table
from .engine import run as py_run
from .estimators import PFConfig, event_count, lambda_bar, lambda_hat, pf_lambda, stationary_metrics
from .models.birth_death import (BirthDeathSpec, bd_killed_make, bd_make, benchmark,
                                 constant_kill, single_state)
from .models.brw import BRWSpec, brw_make
from .models.finite import FiniteJumpModel
from .models.nrw import NRWSlabSpec, nrw_make
from .oracle import leading_triple, tilted_generator
from .policies import make_policy
from .process import derive_stream

MARK_UNDEFINED = "*"
TABLE_PRESETS = {"table1": 10, "table2": 100}
TABLE_M = (10, 100, 1000, math.inf)
# enumeration bound standing in for M = inf
INF_TRUNCATION = 400


def _num(v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
        return math.inf
    return v


# ---------------------------------------------------------------------------
# config -> objects
# ---------------------------------------------------------------------------


def build_model(cfg: ExperimentConfig, *, unbounded_ok: bool = False):
    m = cfg.model
    preset = cfg.get("model", "preset", "benchmark", str)
    unbounded_ok = unbounded_ok or bool(cfg.get("model", "unbounded_ok", False, bool))
    try:
        if preset == "benchmark":
            M = _num(m.get("M", 10))
            return benchmark(M, unbounded_ok=unbounded_ok,
                             truncation=int(m.get("truncation", INF_TRUNCATION)))
        if preset == "killed-benchmark":
            return bd_killed_make(_num(m.get("M", 10)))
        if preset == "birth-death":
            dim = int(m.get("dim", 1))
            birth = _per_coord(cfg, "birth", dim)
            death = _per_coord(cfg, "death", dim)
            spec = BirthDeathSpec(dim, birth, death, compile_table(m.get("branch", 0.0)),
                                  compile_table(m.get("kill", 0.0)), cap=_num(m.get("cap", math.inf)),
                                  lower=int(m.get("lower", 0)), truncation=m.get("truncation"))
            return bd_make(spec, unbounded_ok=unbounded_ok)
        if preset == "single-state":
            return single_state(float(m.get("growth", 1.0)))
        if preset == "constant-kill":
            return constant_kill(float(m.get("rate", 1.0)), int(m.get("n_states", 2)))
        if preset == "brw":
            spec = BRWSpec(int(m.get("n", 10)), float(m.get("p", 0.5)), float(m.get("s_on", 1.0)),
                           float(m.get("s_off", 1.0)), float(m.get("B", 1.0)),
                           _brw_kill(m.get("kill", 0.0)))
            return brw_make(spec, m.get("variant", "global"))
        if preset == "nrw":
            spec = NRWSlabSpec(float(m.get("L", 1.0)), m.get("V", (-1.0, -0.5, 0.5, 1.0)),
                               float(m.get("alpha", 1.0)), m.get("pi"))
            return nrw_make(spec)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise cfg.error("model", None, f"invalid model: {exc}") from None
    raise cfg.error("model", "preset", f"unknown model preset {preset!r}")


def _per_coord(cfg, key, dim):
    v = cfg.model.get(key, 0.0)
    if dim == 1:
        items = [v]
    else:
        if not isinstance(v, list) or len(v) != dim:
            raise cfg.error("model", key, f"model.{key} needs one entry per coordinate")
        items = v
    try:
        return [compile_table(t) for t in items]
    except ValueError as exc:
        raise cfg.error("model", key, str(exc)) from None


def _brw_kill(v):
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, list):
        return [float(u) for u in v]
    return compile_table(v)


def build_policy(cfg: ExperimentConfig):
    kind = cfg.get("policy", "kind", "nminnmax", str)
    p = cfg.policy
    try:
        if kind in ("nminnmax", "nmin-nmax"):
            n0 = int(cfg.run.get("n0", 2))
            return make_policy(kind, nmin=int(p.get("nmin", n0)), nmax=_num(p.get("nmax", n0)))
        if kind in ("fv", "fleming-viot"):
            return make_policy(kind, n=int(p.get("n", cfg.run.get("n0", 2))))
        return make_policy(kind, p=float(p.get("p", 0.0)), q=float(p.get("q", 0.0)))
    except ValueError as exc:
        raise cfg.error("policy", None, str(exc)) from None


def initial_states(cfg: ExperimentConfig, model) -> list:
    n0 = cfg.get("run", "n0", 1, int)
    if n0 < 1:
        raise cfg.error("run", "n0", "run.n0 must be at least 1")
    x0 = cfg.run.get("x0", _default_x0(model))
    if isinstance(x0, list):
        x0 = tuple(x0)
    if isinstance(model, FiniteJumpModel):
        try:
            model.index(x0)
        except KeyError:
            raise cfg.error("run", "x0", f"initial state {x0!r} is not in the state space") from None
    return [x0] * n0


def _default_x0(model):
    if isinstance(model, FiniteJumpModel):
        return model.states[0]
    spec = getattr(model, "spec", None)
    if isinstance(spec, NRWSlabSpec):
        return (0.5 * spec.L, 0)
    if isinstance(spec, BRWSpec):
        return spec.n // 2 if getattr(model, "env_rate", None) else (spec.n // 2, False, 0.0)
    return 0


def grid_of(cfg: ExperimentConfig) -> tuple[float, np.ndarray]:
    T = cfg.get("run", "horizon", 1.0, (int, float))
    if T < 0 or not math.isfinite(T):
        raise cfg.error("run", "horizon", "run.horizon must be finite and nonnegative")
    if "grid" in cfg.run:
        g = np.asarray(cfg.get("run", "grid", None, list), dtype=float)
        if g.size == 0 or np.any(np.diff(g) < 0) or g[0] < 0 or g[-1] > T:
            raise cfg.error("run", "grid", "run.grid must be sorted within [0, horizon]")
    elif "grid_step" in cfg.run:
        step = cfg.get("run", "grid_step", None, (int, float))
        if not step > 0:
            raise cfg.error("run", "grid_step", "run.grid_step must be positive")
        n = max(1, int(round(T / step))) if T > 0 else 0
        g = np.linspace(0.0, T, n + 1)
    else:
        g = np.array([0.0, T]) if T > 0 else np.array([0.0])
    return float(T), g


def f_of(cfg: ExperimentConfig):
    src = cfg.run.get("f", 1.0)
    try:
        return compile_table(src)
    except ValueError as exc:
        raise cfg.error("run", "f", str(exc)) from None


def oracle_for(model):
    """Leading triple when the model has an exact finite enumeration."""
    if isinstance(model, FiniteJumpModel) and not model.has_overflow:
        return leading_triple(tilted_generator(model))
    return None


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------


TABLE_COLUMNS = ("preset", "N", "M", "algorithm", "bias", "std", "event_rate", "replicas",
                 "nu_f", "mean", "bias_radius", "event_rate_radius", "note")


def benchmark_target(M) -> float:
    if math.isinf(M):
        model = benchmark(M, unbounded_ok=True, truncation=INF_TRUNCATION)
        A = tilted_generator(model, allow_overflow=True)
    else:
        A = tilted_generator(benchmark(M))
    return leading_triple(A).nu_of(lambda x: x)


def table_row(N: int, M, algorithm: str, *, horizon: float, replicas: int, seed: int,
              workers: int = 1, burn_in: float | None = None, unbounded_ok: bool = False,
              preset: str = "") -> dict:
    """One row of the benchmark comparison (``algorithm`` is ``NminNmax`` or ``FV``)."""
    row = dict.fromkeys(TABLE_COLUMNS + ("seconds",), "")
    row.update(preset=preset, N=N, M="inf" if math.isinf(M) else int(M), algorithm=algorithm)
    if algorithm == "FV" and math.isinf(M):
        for k in ("bias", "std", "event_rate", "nu_f", "mean"):
            row[k] = MARK_UNDEFINED
        row["note"] = "FV undefined for M=inf"
        return row
    if algorithm == "NminNmax" and math.isinf(M) and not unbounded_ok:
        for k in ("bias", "std", "event_rate", "nu_f", "mean"):
            row[k] = MARK_UNDEFINED
        row["note"] = "unbounded branching; rerun with --unbounded-ok"
        return row
    t0 = time.perf_counter()
    if algorithm == "FV":
        model, policy = bd_killed_make(M), make_policy("fv", n=N)
    else:
        model = benchmark(M, unbounded_ok=True, truncation=INF_TRUNCATION)
        policy = make_policy("nminnmax", nmin=N, nmax=N)
    grid = np.linspace(0.0, horizon, int(round(horizon)) + 1)
    batch = run_batch(model, policy, [1] * N, horizon, replicas=replicas, seed=seed, grid=grid,
                      f=lambda x: x, workers=workers)
    target = benchmark_target(M)
    rep = stationary_metrics(batch, target, burn_in=burn_in)
    row.update(bias=rep.bias, std=rep.std, event_rate=rep.event_rate, replicas=rep.replicas,
               nu_f=target, mean=rep.mean, bias_radius=rep.bias_radius,
               event_rate_radius=rep.event_rate_radius,
               seconds=round(time.perf_counter() - t0, 3),
               note="guard tripped" if batch.guard_tripped else "")
    return row


def table(preset: str, *, horizon: float = 200.0, replicas: int = 200, seed: int = 0,
          workers: int = 1, Ms=TABLE_M, burn_in: float | None = None,
          unbounded_ok: bool = False, algorithms=("NminNmax", "FV")) -> list[dict]:
    if preset not in TABLE_PRESETS:
        raise ValueError(f"unknown table preset {preset!r}")
    N = TABLE_PRESETS[preset]
    return [table_row(N, M, alg, horizon=horizon, replicas=replicas, seed=seed, workers=workers,
                      burn_in=burn_in, unbounded_ok=unbounded_ok, preset=preset)
            for M in Ms for alg in algorithms]


# ---------------------------------------------------------------------------
# growth-rate comparison
# ---------------------------------------------------------------------------


LAMBDA_COLUMNS = ("estimator", "model", "params", "value", "stderr", "seed", "seconds",
                  "events", "oracle", "abs_error", "note")


@dataclass
class LambdaSettings:
    horizon: float = 4000.0
    window: float = 1.0
    pf_systems: int = 100
    pf_window: float = 0.4
    pf_horizon: float = 40.0
    pf_ess_threshold: float = 1.0


def lambda_settings(cfg: ExperimentConfig) -> LambdaSettings:
    e = cfg.estimators
    s = LambdaSettings()
    for key, attr in (("lambda_horizon", "horizon"), ("lambda_window", "window"),
                      ("pf_systems", "pf_systems"), ("pf_window", "pf_window"),
                      ("pf_horizon", "pf_horizon"), ("pf_ess_threshold", "pf_ess_threshold")):
        if key in e:
            setattr(s, attr, cfg.get("estimators", key, None, (int, float)))
    return s


def lambda_rows(cfg: ExperimentConfig, *, seed: int, unbounded_ok: bool = False) -> list[dict]:
    model = build_model(cfg, unbounded_ok=unbounded_ok)
    policy = build_policy(cfg)
    init = initial_states(cfg, model)
    s = lambda_settings(cfg)
    oracle = oracle_for(model)
    lam = oracle.lam if oracle is not None else None
    name = cfg.model.get("preset", "benchmark")
    note = "" if oracle is not None else "property-based only (no oracle)"
    params = f"N0={len(init)};policy={policy!r}"
    rows = []

    def add(est, value, stderr, secs, events, extra=""):
        rows.append(dict(estimator=est, model=name, params=params + extra, value=value,
                         stderr=stderr, seed=seed, seconds=round(secs, 3), events=events,
                         oracle="" if lam is None else lam,
                         abs_error="" if lam is None else abs(value - lam), note=note))

    eng = make_engine(model, policy, engine=cfg.run.get("engine", "auto"))
    n_win = max(1, int(round(s.horizon / s.window)))
    grid = np.linspace(0.0, s.horizon, n_win + 1)
    t0 = time.perf_counter()
    traj = eng.run(init, s.horizon, grid, derive_stream(seed, 0).generator())
    secs = time.perf_counter() - t0
    events = event_count(traj.final)
    add("lambda_hat", lambda_hat(traj), float("nan"), secs, events, f";T={s.horizon}")
    lw = traj.log_weight
    ratios = np.exp(np.diff(lw) - np.diff(lw).max())
    se = float(ratios.std(ddof=1) / (ratios.mean() * math.sqrt(ratios.size) * s.window)) \
        if ratios.size > 1 else float("nan")
    add("lambda_bar", lambda_bar(traj), se, secs, events, f";T={s.horizon};dt={s.window}")
    pfc = PFConfig(s.pf_horizon, s.pf_window, int(s.pf_systems), len(init), init[0],
                   s.pf_ess_threshold)
    pf_seed = int(cfg.estimators.get("pf_seed", seed))
    t0 = time.perf_counter()
    res = pf_lambda(pfc, model, policy, pf_seed, engine=cfg.run.get("engine", "auto"),
                    details=True)
    add("pf_lambda", res.value, float("nan"), time.perf_counter() - t0, res.events,
        f";T={s.pf_horizon};dt={s.pf_window};systems={s.pf_systems}")
    if lam is not None:
        rows.append(dict(estimator="oracle", model=name, params=params, value=lam, stderr=0.0,
                         seed="", seconds="", events="", oracle=lam, abs_error=0.0, note=""))
    return rows


# ---------------------------------------------------------------------------
# throughput
# ---------------------------------------------------------------------------


BENCH_COLUMNS = ("engine", "M", "N", "horizon", "events", "seconds", "events_per_second")


def bench(*, M: int = 10, N: int = 100, horizon: float = 50.0, seed: int = 0,
          python_horizon: float = 2.0) -> list[dict]:
    model = benchmark(M)
    policy = make_policy("nminnmax", nmin=N, nmax=N)
    rows = []
    for name, T in (("fast", horizon), ("python", python_horizon)):
        eng = make_engine(model, policy, engine=name)
        if name == "fast":  # compile outside the timed run
            eng.run([1] * N, 0.01, None, derive_stream(seed, 1).generator())
        t0 = time.perf_counter()
        tr = eng.run([1] * N, T, None, derive_stream(seed, 0).generator())
        secs = time.perf_counter() - t0
        ev = event_count(tr.final)
        rows.append(dict(engine=name, M=M, N=N, horizon=T, events=ev, seconds=round(secs, 4),
                         events_per_second=round(ev / secs) if secs > 0 else ""))
    return rows


def simulate_python(cfg, model, policy, init, horizon, grid, seed, f):
    """Single replica with the reference engine and its event log."""
    return py_run(init, model, policy, horizon, grid, derive_stream(seed, 0).generator(), f=f,
                  log_events=True)
