"""Experiment configuration files.

Configurations are TOML documents with the sections ``[model]``,
``[policy]``, ``[run]``, ``[estimators]`` and ``[output]``; see
``docs/config.md`` for the grammar and every key.  Validation errors carry
the line number of the offending key.

Custom rates are written as expressions in ``x`` (one-dimensional states)
or ``x0, x1, ...`` (coordinates of multi-dimensional states), or as
piecewise tables: a list of ``[condition, value]`` pairs where the first
true condition wins.
"""

from __future__ import annotations

import ast
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
from typing import Any, Callable

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

OUT_ENV = "BBMMI_OUT"


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path:
            where = f"{path}:"
        if line:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


# ---------------------------------------------------------------------------
# expressions
# ---------------------------------------------------------------------------

_FUNCS: dict[str, Callable] = {
    "min": min, "max": max, "abs": abs, "exp": math.exp, "log": math.log,
    "sqrt": math.sqrt, "floor": math.floor, "ceil": math.ceil,
}
_CONSTS = {"inf": math.inf, "pi": math.pi, "e": math.e, "true": True, "false": False}
_ALLOWED = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.BoolOp, ast.Compare, ast.IfExp, ast.Call,
    ast.Name, ast.Load, ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.FloorDiv,
    ast.Mod, ast.Pow, ast.USub, ast.UAdd, ast.Not, ast.And, ast.Or, ast.Eq, ast.NotEq,
    ast.Lt, ast.LtE, ast.Gt, ast.GtE,
)
_VAR = re.compile(r"^x\d*$")


def compile_expr(src: str | float | int) -> Callable[[Any], float]:
    """Compile a rate expression into a function of the state.

    >>> compile_expr("x**2 if x < 3 else 9")(2)
    4
    """
    if isinstance(src, bool):
        raise ValueError("booleans are not rates")
    if isinstance(src, (int, float)):
        value = float(src)
        return lambda x: value
    try:
        tree = ast.parse(str(src), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"bad expression {src!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ValueError(f"{type(node).__name__} not allowed in {src!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise ValueError(f"unknown function in {src!r}")
        if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in _CONSTS \
                and not _VAR.match(node.id):
            raise ValueError(f"unknown name {node.id!r} in {src!r}")
    code = compile(tree, "<rate>", "eval")

    def fn(x):
        env = dict(_CONSTS)
        env.update(_FUNCS)
        if isinstance(x, tuple):
            env.update({f"x{i}": v for i, v in enumerate(x)})
        else:
            env["x"] = x
            env["x0"] = x
        return eval(code, {"__builtins__": {}}, env)

    return fn


def compile_table(spec) -> Callable[[Any], float]:
    """Expression, or list of ``[condition, value]`` pairs (first match wins)."""
    if isinstance(spec, list):
        pieces = []
        for item in spec:
            if not (isinstance(item, list) and len(item) == 2):
                raise ValueError("piecewise entries must be [condition, value] pairs")
            pieces.append((compile_expr(item[0]), compile_expr(item[1])))

        def fn(x):
            for cond, val in pieces:
                if cond(x):
                    return float(val(x))
            raise ValueError(f"no piecewise branch matches state {x!r}")

        return fn
    f = compile_expr(spec)
    return lambda x: float(f(x))


# ---------------------------------------------------------------------------
# config object
# ---------------------------------------------------------------------------


SECTIONS = {
    "model": {"preset", "M", "unbounded_ok", "truncation", "dim", "cap", "lower", "birth",
              "death", "branch", "kill", "growth", "rate", "n_states", "n", "p", "s_on",
              "s_off", "B", "variant", "L", "V", "alpha", "pi"},
    "policy": {"kind", "nmin", "nmax", "p", "q", "n"},
    "run": {"n0", "x0", "horizon", "grid", "grid_step", "replicas", "seed", "workers", "f",
            "engine", "max_events"},
    "estimators": {"pf_systems", "pf_window", "pf_horizon", "pf_ess_threshold",
                   "lambda_horizon", "lambda_window", "pf_seed"},
    "output": {"dir", "events"},
}


@dataclass
class ExperimentConfig:
    model: dict = field(default_factory=dict)
    policy: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    estimators: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    source: str = ""
    path: str | None = None

    def echo(self) -> str:
        """Canonical one-line JSON echo of the configuration."""
        d = {k: getattr(self, k) for k in SECTIONS}
        return json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)

    def line_of(self, section: str, key: str | None = None) -> int | None:
        return locate(self.source, section, key)

    def error(self, section: str, key: str | None, message: str) -> ConfigError:
        return ConfigError(message, self.line_of(section, key), self.path)

    # typed accessors ------------------------------------------------------
    def get(self, section: str, key: str, default=None, kind: type | tuple | None = None):
        sec = getattr(self, section)
        if key not in sec:
            return default
        value = sec[key]
        if kind is not None:
            kinds = kind if isinstance(kind, tuple) else (kind,)
            if not isinstance(value, kinds) or (isinstance(value, bool) and bool not in kinds):
                names = "/".join(k.__name__ for k in kinds)
                raise self.error(section, key, f"{section}.{key} must be {names}, got {value!r}")
        return value

    @property
    def out_dir(self) -> str:
        return os.environ.get(OUT_ENV) or self.output.get("dir", "out")


def locate(source: str, section: str, key: str | None = None) -> int | None:
    """Line (1-based) where ``key`` is set in ``[section]`` of a TOML text."""
    current = None
    header = re.compile(r"^\s*\[([^\]]+)\]\s*(#.*)?$")
    for n, line in enumerate(source.splitlines(), 1):
        m = header.match(line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return n
            continue
        if current == section and key is not None:
            if re.match(rf"^\s*{re.escape(key)}\s*=", line):
                return n
    return None


def loads(text: str, path: str | None = None) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", int(m.group(1)) if m else None, path) from None
    cfg = ExperimentConfig(source=text, path=path)
    for name, value in data.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]", locate(text, name), path)
        if not isinstance(value, dict):
            raise ConfigError(f"{name} must be a section", None, path)
        for key in value:
            if key not in SECTIONS[name]:
                raise ConfigError(f"unknown key {name}.{key}", locate(text, name, key), path)
        setattr(cfg, name, dict(value))
    return cfg


def load(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
    return loads(text, path)
