"""Command-line harness: ``bbmmi {simulate,table,lambda,oracle,bench}``.

Exit codes: 0 success, 1 other simulation error, 2 configuration error,
3 explosion guard tripped, 4 estimator undefined (extinct system).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

from . import __version__
from .config import OUT_ENV, ConfigError, ExperimentConfig, load
from .engine import ExplosionGuard, PolicyViolation
from .estimators import AllWeightsZero, EmptySystem
from .models.finite import StateSpaceOverflow

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_UNDEFINED = 0, 2, 3, 4

log = logging.getLogger("bbmmi")


def _out_dir(args, cfg: ExperimentConfig | None = None) -> str:
    if args.out:
        return args.out
    if cfg is not None:
        return cfg.out_dir
    return os.environ.get(OUT_ENV) or "out"


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load(args.config)
    if args.replicas is not None:
        cfg.run["replicas"] = args.replicas
    if args.workers is not None:
        cfg.run["workers"] = args.workers
    return cfg


def _seed(args, cfg: ExperimentConfig | None = None) -> int:
    if args.seed is not None:
        seed = args.seed
    elif cfg is not None:
        seed = cfg.get("run", "seed", 0, int)
    else:
        seed = 0
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return seed


def cmd_simulate(args) -> int:
    from .batch import run_batch
    from .experiments import build_model, build_policy, f_of, grid_of, initial_states
    from .io import events_jsonl, guard_summary, header_lines, snapshot_body, write_text

    cfg = _config(args)
    model = build_model(cfg, unbounded_ok=args.unbounded_ok)
    policy = build_policy(cfg)
    init = initial_states(cfg, model)
    T, grid = grid_of(cfg)
    f = f_of(cfg)
    seed = _seed(args, cfg)
    R = cfg.get("run", "replicas", 1, int)
    if R < 1:
        raise cfg.error("run", "replicas", "run.replicas must be at least 1")
    workers = cfg.get("run", "workers", 1, int)
    engine = cfg.get("run", "engine", "auto", str)
    max_events = cfg.get("run", "max_events", None, int)
    batch = run_batch(model, policy, init, T, replicas=R, seed=seed, grid=grid, f=f,
                      workers=workers, engine=engine, max_events=max_events)
    out = _out_dir(args, cfg)
    header = header_lines(cfg.echo(), guard_summary(batch.status), {"seed": seed})
    path = write_text(os.path.join(out, "simulate.csv"), header, snapshot_body(batch.snapshots))
    if cfg.output.get("events"):
        from .experiments import simulate_python
        tr = simulate_python(cfg, model, policy, init, T, grid, seed, f)
        write_text(os.path.join(out, "events.jsonl"), [], events_jsonl(tr.events))
    print(path)
    return EXIT_GUARD if batch.guard_tripped else EXIT_OK


def cmd_table(args) -> int:
    from .experiments import TABLE_COLUMNS, TABLE_M, table
    from .io import header_lines, rows_body, write_text

    Ms = TABLE_M if not args.M else tuple(math.inf if m == "inf" else int(m) for m in args.M)
    seed = _seed(args)
    rows = table(args.preset, horizon=args.T, replicas=args.replicas or 200, seed=seed,
                 workers=args.workers or 1, Ms=Ms, burn_in=args.burn_in,
                 unbounded_ok=args.unbounded_ok)
    echo = json.dumps({"preset": args.preset, "T": args.T, "replicas": args.replicas or 200,
                       "M": [str(m) for m in Ms], "burn_in": args.burn_in,
                       "unbounded_ok": args.unbounded_ok}, sort_keys=True)
    guard = "tripped" if any(r["note"] == "guard tripped" for r in rows) else "ok"
    body = rows_body(TABLE_COLUMNS, ([r[c] for c in TABLE_COLUMNS] for r in rows))
    # wall times stay in the header so that the body is reproducible
    secs = " ".join(f"{r['M']}/{r['algorithm']}={r['seconds']}" for r in rows)
    path = write_text(os.path.join(_out_dir(args), f"{args.preset}.csv"),
                      header_lines(echo, guard, {"seed": seed, "seconds": secs}), body)
    sys.stdout.write(body)
    print(path)
    return EXIT_GUARD if guard == "tripped" else EXIT_OK


def cmd_lambda(args) -> int:
    from .experiments import LAMBDA_COLUMNS, lambda_rows
    from .io import header_lines, rows_body, write_text

    cfg = _config(args)
    seed = _seed(args, cfg)
    rows = lambda_rows(cfg, seed=seed, unbounded_ok=args.unbounded_ok)
    body = rows_body(LAMBDA_COLUMNS, ([r[c] for c in LAMBDA_COLUMNS] for r in rows))
    path = write_text(os.path.join(_out_dir(args, cfg), "lambda.csv"),
                      header_lines(cfg.echo(), "ok", {"seed": seed}), body)
    sys.stdout.write(body)
    print(path)
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .experiments import build_model, f_of
    from .io import header_lines, rows_body, write_text
    from .oracle import leading_triple, tilted_generator

    if args.config:
        cfg = _config(args)
        model = build_model(cfg, unbounded_ok=args.unbounded_ok)
        f = f_of(cfg) if "f" in cfg.run else (lambda x: x)
        echo = cfg.echo()
    else:
        from .models.birth_death import bd_killed_make, benchmark
        M = math.inf if args.M_value == "inf" else int(args.M_value)
        if math.isinf(M) and not args.unbounded_ok:
            raise ConfigError("M = inf has unbounded branching; rerun with --unbounded-ok")
        if args.preset == "killed-benchmark":
            model = bd_killed_make(M)
        else:
            model = benchmark(M, unbounded_ok=args.unbounded_ok)
        f = lambda x: x
        echo = json.dumps({"preset": args.preset, "M": args.M_value}, sort_keys=True)
    A = tilted_generator(model, allow_overflow=args.unbounded_ok)
    tri = leading_triple(A)
    rows = [("lambda", "", tri.lam), ("nu_f", "", tri.nu_of(f))]
    rows += [("eta", repr(s), v) for s, v in zip(tri.states, tri.eta)]
    rows += [("nu", repr(s), v) for s, v in zip(tri.states, tri.nu)]
    body = rows_body(("quantity", "state", "value"), rows)
    path = write_text(os.path.join(_out_dir(args), "oracle.csv"), header_lines(echo), body)
    sys.stdout.write(body)
    print(path)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .experiments import BENCH_COLUMNS, bench
    from .io import header_lines, rows_body, write_text

    rows = bench(M=int(args.M_value) if args.M_value != "inf" else 10, N=args.N, horizon=args.T,
                 seed=_seed(args))
    body = rows_body(BENCH_COLUMNS, ([r[c] for c in BENCH_COLUMNS] for r in rows))
    path = write_text(os.path.join(_out_dir(args), "bench.csv"),
                      header_lines(json.dumps({"M": args.M_value, "N": args.N, "T": args.T})), body)
    sys.stdout.write(body)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--seed", type=int, metavar="U64")
    common.add_argument("--workers", type=int, metavar="N")
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--replicas", type=int, metavar="R")
    common.add_argument("--unbounded-ok", action="store_true",
                        help="allow unbounded branching rates (e.g. M = inf)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bbmmi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"bbmmi {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate replicas to a snapshot CSV")
    t = sub.add_parser("table", parents=[common], help="benchmark comparison tables")
    t.add_argument("preset", choices=("table1", "table2"))
    t.add_argument("--T", type=float, default=200.0)
    t.add_argument("--M", nargs="+", help="subset of M values (use 'inf' for +infinity)")
    t.add_argument("--burn-in", type=float, default=None)
    sub.add_parser("lambda", parents=[common], help="compare growth-rate estimators")
    o = sub.add_parser("oracle", parents=[common], help="exact leading triple of a preset")
    o.add_argument("--preset", default="benchmark", choices=("benchmark", "killed-benchmark"))
    o.add_argument("--M", dest="M_value", default="10")
    b = sub.add_parser("bench", parents=[common], help="engine throughput")
    b.add_argument("--M", dest="M_value", default="10")
    b.add_argument("--N", type=int, default=100)
    b.add_argument("--T", type=float, default=50.0)
    return p


COMMANDS = {"simulate": cmd_simulate, "table": cmd_table, "lambda": cmd_lambda,
            "oracle": cmd_oracle, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExplosionGuard as exc:
        print(f"explosion guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (EmptySystem, AllWeightsZero) as exc:
        print(f"estimator undefined: {exc}", file=sys.stderr)
        return EXIT_UNDEFINED
    except (PolicyViolation, StateSpaceOverflow) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
