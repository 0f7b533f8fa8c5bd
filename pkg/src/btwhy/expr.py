"""A small JSON expression language.

Expressions are plain JSON values so that state-model functions and leaf
rule tables can be stored in files and evaluated without ``eval``. An
expression is one of:

* a literal (bool, number, string, null),
* ``{"var": name}``,
* ``{"const": value}`` (a literal that may itself be a string or list),
* ``{op: [args...]}`` for the operators in :data:`OPERATORS`,
* ``{"case": [[cond, value], ...], "else": value}``,
* ``{"lookup": {"keys": [names], "table": {key: value}, "default": value}}``
  where each table key joins the key variables' encoded values with ``","``,
* ``{"noise": [seed, scale, key...]}``: a deterministic pseudo-random offset
  in ``[-scale, scale]`` derived from the seed and the key values.

Example::

    >>> evaluate({"and": [{"var": "a"}, {"not": {"var": "b"}}]}, {"a": True, "b": False})
    True
"""

from __future__ import annotations

import hashlib
import math
from typing import Any, Callable, Mapping

Expr = Any


def _all(*xs):
    return all(xs)


def _any(*xs):
    return any(xs)


def _sub(a, b):
    return a - b


def _div(a, b):
    return a / b


def _clip(x, lo, hi):
    return min(max(x, lo), hi)


def _if(c, a, b):
    return a if c else b


OPERATORS: dict[str, Callable[..., Any]] = {
    "not": lambda x: not x,
    "and": _all,
    "or": _any,
    "xor": lambda a, b: bool(a) != bool(b),
    "eq": lambda a, b: a == b,
    "ne": lambda a, b: a != b,
    "lt": lambda a, b: a < b,
    "le": lambda a, b: a <= b,
    "gt": lambda a, b: a > b,
    "ge": lambda a, b: a >= b,
    "add": lambda *xs: sum(xs),
    "sub": _sub,
    "mul": lambda *xs: math.prod(xs),
    "div": _div,
    "neg": lambda x: -x,
    "min": min,
    "max": max,
    "clip": _clip,
    "round": lambda x, n=0: round(x, int(n)),
    "if": _if,
}

_SPECIAL = {"var", "const", "case", "lookup", "noise"}


def encode_key(value: Any) -> str:
    """Canonical string form of a value inside lookup-table keys."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def noise(seed: Any, scale: float, *key: Any) -> float:
    """Deterministic offset in ``[-scale, scale]`` keyed by ``(seed, *key)``."""
    text = "|".join([encode_key(seed), *map(encode_key, key)])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    unit = int.from_bytes(digest[:8], "big") / 2**64
    return (2.0 * unit - 1.0) * scale


def evaluate(expr: Expr, env: Mapping[str, Any]) -> Any:
    if not isinstance(expr, dict):
        if isinstance(expr, list):
            raise ValueError(f"bare list is not an expression: {expr!r}")
        return expr
    if len(expr) == 1:
        (op, arg), = expr.items()
    elif "case" in expr:
        op, arg = "case", expr["case"]
    else:
        raise ValueError(f"malformed expression: {expr!r}")

    if op == "var":
        try:
            return env[arg]
        except KeyError:
            raise KeyError(f"expression reads unbound variable {arg!r}") from None
    if op == "const":
        return arg
    if op == "case":
        for cond, value in arg:
            if evaluate(cond, env):
                return evaluate(value, env)
        if "else" not in expr:
            raise ValueError(f"no case matched and no else branch: {expr!r}")
        return evaluate(expr["else"], env)
    if op == "lookup":
        key = ",".join(encode_key(env[name]) for name in arg["keys"])
        if key in arg["table"]:
            return evaluate(arg["table"][key], env)
        if "default" not in arg:
            raise KeyError(f"lookup has no row for {key!r}")
        return evaluate(arg["default"], env)
    if op == "noise":
        seed, scale, *key = (evaluate(a, env) for a in arg)
        return noise(seed, scale, *key)
    try:
        fn = OPERATORS[op]
    except KeyError:
        raise ValueError(f"unknown operator {op!r}") from None
    args = arg if isinstance(arg, list) else [arg]
    return fn(*(evaluate(a, env) for a in args))


def free_vars(expr: Expr) -> set[str]:
    """Names of all variables an expression may read."""
    out: set[str] = set()
    _collect(expr, out)
    return out


def _collect(expr: Expr, out: set[str]) -> None:
    if isinstance(expr, list):
        for e in expr:
            _collect(e, out)
        return
    if not isinstance(expr, dict):
        return
    if "var" in expr and len(expr) == 1:
        out.add(expr["var"])
        return
    if "const" in expr and len(expr) == 1:
        return
    if "lookup" in expr:
        spec = expr["lookup"]
        out.update(spec["keys"])
        for v in spec["table"].values():
            _collect(v, out)
        if "default" in spec:
            _collect(spec["default"], out)
        return
    for key, arg in expr.items():
        if key not in OPERATORS and key not in _SPECIAL and key != "else":
            raise ValueError(f"unknown operator {key!r}")
        _collect(arg, out)


def var(name: str) -> dict:
    return {"var": name}
