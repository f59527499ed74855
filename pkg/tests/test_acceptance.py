"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (the lines are repeated in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
Expected values come from the exact semigroup oracle or from closed-form
bounds; tabulated reference values are compared within fixed bands.
"""

from __future__ import annotations

import csv
import functools
import io
import math
import os
import subprocess
import sys
import tempfile
import time

import numpy as np
import pytest

from bbmmi.batch import default_workers, run_batch
from bbmmi.engine import run
from bbmmi.estimators import PFConfig, lambda_hat, many_to_one, normalized_series, pf_lambda
from bbmmi.experiments import table_row
from bbmmi.fast import FastEngine
from bbmmi.io import split_header
from bbmmi.models.birth_death import bd_killed_make, benchmark
from bbmmi.models.finite import FiniteJumpModel
from bbmmi.models.nrw import NRWSlabSpec, exit_time, nrw_make
from bbmmi.oracle import (conditional_law, leading_triple, semigroup_apply, tilted_generator)
from bbmmi.policies import ConstantPolicy, NminNmaxPolicy
from bbmmi.process import CEMETERY, derive_stream

RESULTS: dict[int, str] = {}
WORKERS = default_workers()


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} [{n:2d}] {title}: {detail}"
    RESULTS[n] = line
    print(line, flush=True)
    assert ok, line


def summary_lines() -> list[str]:
    return [RESULTS[k] for k in sorted(RESULTS)]


# ---------------------------------------------------------------------------
# 1. many-to-one identity
# ---------------------------------------------------------------------------


def test_01_many_to_one():
    t0 = time.perf_counter()
    model = benchmark(5)
    T = 1.0
    batch = run_batch(model, NminNmaxPolicy(2, 6), [2] * 3, T, replicas=20_000, seed=101,
                      workers=WORKERS)
    est, se = many_to_one(batch, T, "occ_1")
    A = tilted_generator(model)
    exact = 3 * semigroup_apply(A, np.ones(A.size), T)[A.index(2)]
    secs = time.perf_counter() - t0
    z = abs(est - exact) / se
    report(1, "many-to-one", z <= 3 and secs < 60,
           f"estimate {est:.4f} +/- {se:.4f} vs exact {exact:.4f} ({z:.2f} SE, {secs:.1f}s)")


# ---------------------------------------------------------------------------
# 2. L2 error scaling
# ---------------------------------------------------------------------------


def test_02_l2_scaling():
    t0 = time.perf_counter()
    model = benchmark(10)
    T = 5.0
    A = tilted_generator(model)
    law = conditional_law(A, 1, T)
    target = float(law @ np.array(A.states, dtype=float))
    Ns = [8, 16, 32, 64, 128, 256]
    rmse = []
    for N in Ns:
        batch = run_batch(model, NminNmaxPolicy(N, N), [1] * N, T, replicas=500, seed=200 + N,
                          f=lambda x: x, workers=WORKERS)
        theta = normalized_series(batch)[:, -1]
        rmse.append(math.sqrt(np.mean((theta - target) ** 2)))
    slope = float(np.polyfit(np.log(Ns), np.log(rmse), 1)[0])
    secs = time.perf_counter() - t0
    report(2, "L2 scaling", -0.7 <= slope <= -0.3 and secs < 600,
           f"slope {slope:.3f} (RMSE {', '.join(f'{r:.4f}' for r in rmse)}; {secs:.1f}s)")


# ---------------------------------------------------------------------------
# 3-4. benchmark tables
# ---------------------------------------------------------------------------

# (N, M, algorithm) -> (bias, std, events per unit time) from the reference tables
REFERENCE = {
    (10, 10, "NminNmax"): (0.08, 0.30, 14.0),
    (10, 10, "FV"): (0.10, 0.41, 87.2),
    (10, 100, "FV"): (0.20, 0.51, 988.0),
    (100, 10, "NminNmax"): (0.01, 0.12, 144.0),
    (100, 10, "FV"): (0.02, 0.18, 857.0),
}


@functools.lru_cache(maxsize=None)
def table_entry(N: int, M: int, algorithm: str) -> dict:
    return table_row(N, M, algorithm, horizon=200.0, replicas=200, seed=300, workers=WORKERS)


def test_03_tables():
    t0 = time.perf_counter()
    bad, parts = [], []
    for key, (b_ref, s_ref, r_ref) in REFERENCE.items():
        row = table_entry(*key)
        ok = (abs(row["bias"] - b_ref) <= 0.05 and abs(row["std"] - s_ref) <= 0.3 * s_ref
              and abs(row["event_rate"] - r_ref) <= 0.25 * r_ref)
        tag = f"N={key[0]} M={key[1]} {key[2]} {row['bias']:.3f}/{row['std']:.3f}/" \
              f"{row['event_rate']:.1f}"
        parts.append(tag)
        if not ok:
            bad.append(tag)
    secs = time.perf_counter() - t0
    report(3, "table reproduction", not bad and secs < 1800,
           "; ".join(parts) + f" ({secs:.0f}s)" + (f" OUT OF BAND: {bad}" if bad else ""))


def test_04_cost_independent_of_M():
    rates = [table_entry(10, M, "NminNmax")["event_rate"] for M in (10, 100, 1000)]
    spread = (max(rates) - min(rates)) / min(rates)
    fv = table_entry(10, 100, "FV")["event_rate"] / table_entry(10, 10, "FV")["event_rate"]
    report(4, "M-independence of interaction cost", spread < 0.05 and fv >= 8,
           f"Nmin-Nmax rates {', '.join(f'{r:.2f}' for r in rates)} (spread {spread:.2%}); "
           f"FV growth x{fv:.1f}")


# ---------------------------------------------------------------------------
# 5. second moment of the selection weight
# ---------------------------------------------------------------------------


def test_05_weight_moment_bound():
    model = benchmark(10)
    T = 0.5
    batch = run_batch(model, NminNmaxPolicy(2, 10), [10] * 10, T, replicas=10_000, seed=500,
                      workers=WORKERS)
    w2 = np.exp(2 * batch.column("logPiB")[:, -1])
    ucb = w2.mean() + 2.326 * w2.std(ddof=1) / math.sqrt(w2.size)
    bound = math.exp(2.5 * 10 * 0.5)
    report(5, "branching-weight moment bound", ucb <= bound,
           f"99% UCB of E[(Pi^B)^2] = {ucb:.3f} <= {bound:.1f}")


# ---------------------------------------------------------------------------
# 6. growth-rate estimators
# ---------------------------------------------------------------------------


def test_06_growth_rate_estimators():
    t0 = time.perf_counter()
    model = benchmark(10)
    lam = leading_triple(tilted_generator(model)).lam
    N = 100
    policy = NminNmaxPolicy(N, N)
    eng = FastEngine(model, policy)
    wins, pf_err, lh_err = 0, [], []
    for rep in range(10):
        tr = eng.run([1] * N, 4000.0, None, derive_stream(1000 + rep, 0).generator())
        e_hat = abs(lambda_hat(tr) - lam)
        e_pf = abs(pf_lambda(PFConfig(40.0, 0.4, 100, N, 1), model, policy, 2000 + rep) - lam)
        wins += e_pf < e_hat
        pf_err.append(e_pf)
        lh_err.append(e_hat)
    secs = time.perf_counter() - t0
    report(6, "particle filter vs single trajectory",
           wins >= 8 and max(pf_err) < 0.05 and secs < 1200,
           f"PF closer in {wins}/10; max |PF - lambda| {max(pf_err):.4f}; "
           f"mean |lambda_hat - lambda| {np.mean(lh_err):.4f} ({secs:.0f}s)")


# ---------------------------------------------------------------------------
# 7. degenerate policies
# ---------------------------------------------------------------------------


def random_chain(g: np.random.Generator) -> FiniteJumpModel:
    S = int(g.integers(1, 7))
    states = list(range(S))
    transitions = []
    for _ in states:
        probs = g.dirichlet(np.ones(S + 1))
        dests = states + [CEMETERY if g.random() < 0.3 else 0]
        transitions.append(list(zip(dests, probs)))
    motion = g.uniform(0, 3, S)
    return FiniteJumpModel(states, motion, g.uniform(0, 1.5, S), g.uniform(0, 1.5, S),
                           transitions)


def test_07_degenerate_policies():
    g = derive_stream(700, 0, "acceptance").generator()
    violations = []
    n_cfg = 1000
    for c in range(n_cfg):
        model = random_chain(g)
        T = float(g.uniform(0.5, 2.5))
        grid = np.linspace(0, T, 21)
        x0 = [int(g.integers(model.n_states)) for _ in range(int(g.integers(2, 9)))]
        rng = derive_stream(701, c, "acceptance").generator()
        free = run(x0, model, ConstantPolicy(0.0, 0.0), T, grid, rng)
        if np.any(free.column("logPiA") != 0) or np.any(free.column("logPiB") != 0):
            violations.append((c, "weights"))
        moran = run(x0, model, ConstantPolicy(1.0, 1.0), T, grid, rng)
        if np.any(moran.column("N") != len(x0)):
            violations.append((c, "constant size"))
        nmin = int(g.choice([0, 2, 3]))
        nmax = int(g.integers(max(nmin, 2), 12))
        n0 = int(g.integers(max(nmin, 1), nmax + 1))
        tr = run([x0[0]] * n0, model, NminNmaxPolicy(nmin, nmax), T, grid, rng)
        N = tr.column("N")
        if np.any(N[1:] < nmin) or np.any(N > nmax):
            violations.append((c, "size bounds"))
    report(7, "degenerate policies", not violations,
           f"{len(violations)} violations over {n_cfg} random configurations x 3 properties")


# ---------------------------------------------------------------------------
# 8. neutron random walk properties
# ---------------------------------------------------------------------------


def test_08_nrw_properties():
    spec = NRWSlabSpec(L=1.0, V=(-1.0, -0.5, 0.5, 1.0), alpha=1.0)
    g = derive_stream(800, 0, "acceptance").generator()

    walk = nrw_make(spec, tilt=False)
    hits = 0
    for i in range(1000):
        x0 = (float(g.uniform(0.01, 0.99)), int(g.integers(4)))
        tr = run([x0], walk, ConstantPolicy(0.0, 0.0), 10.0,
                 rng=derive_stream(801, i, "acceptance").generator(), log_events=True)
        hits += sum(e.kind == "hardkill" or e.cause == "hardkill" for e in tr.events)

    x = (0.9, 3)
    draws = np.array([walk.sample_event(x, g)[1][1] for _ in range(100_000)])
    emp = np.bincount(draws, minlength=4) / draws.size
    expected = spec.pi[3] * walk.h_row(0.9)
    tv = 0.5 * float(np.abs(emp - expected / expected.sum()).sum())

    tilted = nrw_make(spec)
    fd_err = 0.0
    for _ in range(100):
        k = int(g.integers(4))
        r = float(g.uniform(0.01, 0.99))
        v = spec.V[k]
        fd = (tilted.h(r + v * 1e-8, k) - tilted.h(r - v * 1e-8, k)) / 2e-8
        fd_err = max(fd_err, abs(fd + tilted.dphi(exit_time(spec, r, k))))

    worst_lh, worst_ratio = -math.inf, -math.inf
    for k, v in enumerate(spec.V):
        for s in np.linspace(0.01, 0.99, 40):
            # exit time s * delta/2: the linear part of the profile
            tau = s * spec.delta / 2
            r = spec.L - v * tau if v > 0 else -v * tau
            worst_lh = max(worst_lh, tilted.Lh(r, k))
            worst_ratio = max(worst_ratio, tilted.Lh_over_h(r, k))
    ok = hits == 0 and tv <= 0.02 and fd_err <= 1e-6 and worst_ratio <= 0 \
        and -worst_lh >= 0.5 * (1 - 1e-9)
    report(8, "NRW slab properties", ok,
           f"boundary hits {hits}/1000; scatter TV {tv:.4f}; transport FD error {fd_err:.1e}; "
           f"max Lh/h near faces {worst_ratio:.3f}, max Lh {worst_lh:.3f}")


# ---------------------------------------------------------------------------
# 9. oracle self-consistency
# ---------------------------------------------------------------------------


def test_09_oracle_consistency():
    A = tilted_generator(benchmark(10))
    M = A.matrix
    f = np.arange(1.0, 11.0)
    rhs = semigroup_apply(A, f, 2.0)
    semi = float(np.abs(semigroup_apply(A, semigroup_apply(A, f, 0.8), 1.2) - rhs).max()
                 / np.abs(rhs).max())
    tri = leading_triple(A)
    res = max(float(np.abs(M @ tri.eta - tri.lam * tri.eta).max()),
              float(np.abs(tri.nu @ M - tri.lam * tri.nu).max()))
    Ab = tilted_generator(benchmark(5))
    Ak = tilted_generator(bd_killed_make(5))
    t = 0.3
    tilt = float(np.abs(math.exp(5 * t) * semigroup_apply(Ak, np.ones(5), t)
                        - semigroup_apply(Ab, np.ones(5), t)).max())
    report(9, "oracle self-consistency", semi <= 1e-9 and res <= 1e-10 and tilt <= 1e-8,
           f"semigroup {semi:.1e}; eigen residual {res:.1e}; tilt identity {tilt:.1e}")


# ---------------------------------------------------------------------------
# 10. determinism
# ---------------------------------------------------------------------------

CONFIG = """\
[model]
preset = "benchmark"
M = 10

[policy]
kind = "nminnmax"
nmin = 2
nmax = 12

[run]
n0 = 6
x0 = 1
horizon = 5.0
grid_step = 0.5
replicas = 40
seed = 1234
f = "x"

[estimators]
lambda_horizon = 50.0
pf_systems = 8
pf_horizon = 4.0
pf_window = 0.4
"""


def _cli(*args) -> None:
    subprocess.run([sys.executable, "-m", "bbmmi.cli", *args], check=True,
                   stdout=subprocess.DEVNULL)


def _body(path: str, drop: str | None = None) -> str:
    with open(path) as fh:
        body = split_header(fh.read())[1]
    if drop is None:
        return body
    rows = list(csv.reader(io.StringIO(body)))
    j = rows[0].index(drop)
    return repr([[c for i, c in enumerate(r) if i != j] for r in rows])


def test_10_determinism():
    with tempfile.TemporaryDirectory() as d:
        cfg = os.path.join(d, "c.toml")
        with open(cfg, "w") as fh:
            fh.write(CONFIG)
        sims = []
        for k, w in enumerate((1, 1, 2, 3)):
            out = os.path.join(d, f"s{k}")
            _cli("simulate", "--config", cfg, "--out", out, "--workers", str(w))
            sims.append(_body(os.path.join(out, "simulate.csv")))
        tables = []
        for k, w in enumerate((1, 2)):
            out = os.path.join(d, f"t{k}")
            _cli("table", "table1", "--T", "10", "--replicas", "6", "--M", "10", "--out", out,
                 "--workers", str(w))
            tables.append(_body(os.path.join(out, "table1.csv")))
        lams = []
        for k in range(2):
            out = os.path.join(d, f"l{k}")
            _cli("lambda", "--config", cfg, "--out", out)
            lams.append(_body(os.path.join(out, "lambda.csv"), drop="seconds"))
    ok = len(set(sims)) == 1 and len(set(tables)) == 1 and len(set(lams)) == 1
    report(10, "determinism", ok,
           f"simulate bodies identical over 4 runs (1,1,2,3 workers): {len(set(sims)) == 1}; "
           f"table: {len(set(tables)) == 1}; lambda (timing column excluded): "
           f"{len(set(lams)) == 1}")


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
            except AssertionError:
                failed += 1
    print("\n".join(["", "summary:"] + summary_lines()))
    sys.exit(1 if failed else 0)
