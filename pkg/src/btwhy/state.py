"""State variables, their ranges, and the state causal model.

The state model is a DAG over named state variables. Variables without
parents are *top-level* and are set either by the initial assignment or by
behaviour-tree leaves; every other variable is *derived* and is a pure
function (a :mod:`btwhy.expr` expression) of its parents.
"""

from __future__ import annotations

import graphlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from . import expr as ex
from .errors import RangeViolation, UnknownVariable, ValidationError


class Range:
    """Set of admissible values for a variable."""

    finite = True

    def values(self) -> list:
        raise NotImplementedError

    def contains(self, value: Any) -> bool:
        raise NotImplementedError

    def check(self, name: str, value: Any) -> Any:
        if not self.contains(value):
            raise RangeViolation(f"{name}={value!r} is outside {self}")
        return value

    def parse(self, text: str) -> Any:
        raise NotImplementedError

    def to_json(self) -> Any:
        raise NotImplementedError


@dataclass(frozen=True)
class Boolean(Range):
    def values(self) -> list:
        return [False, True]

    def contains(self, value: Any) -> bool:
        return isinstance(value, bool)

    def parse(self, text: str) -> bool:
        lowered = text.strip().lower()
        if lowered in ("true", "t", "1", "yes"):
            return True
        if lowered in ("false", "f", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")

    def to_json(self) -> Any:
        return "bool"

    def __str__(self) -> str:
        return "Boolean"


@dataclass(frozen=True)
class Categorical(Range):
    symbols: tuple

    def __post_init__(self):
        if not self.symbols:
            raise ValidationError("categorical range needs at least one symbol")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValidationError(f"duplicate symbols in {self.symbols}")

    def values(self) -> list:
        return list(self.symbols)

    def contains(self, value: Any) -> bool:
        return value in self.symbols

    def parse(self, text: str) -> Any:
        for s in self.symbols:
            if str(s) == text or str(getattr(s, "value", s)) == text:
                return s
        raise ValueError(f"{text!r} is not one of {[str(s) for s in self.symbols]}")

    def to_json(self) -> Any:
        return {"categorical": [getattr(s, "value", s) for s in self.symbols]}

    def __str__(self) -> str:
        return "{" + ", ".join(str(getattr(s, "value", s)) for s in self.symbols) + "}"


@dataclass(frozen=True)
class Continuous(Range):
    low: float
    high: float
    finite = False

    def __post_init__(self):
        if not self.low < self.high:
            raise ValidationError(f"continuous range needs low < high, got [{self.low}, {self.high}]")

    def values(self) -> list:
        raise TypeError("a continuous range has no finite value list; discretise it")

    def contains(self, value: Any) -> bool:
        return (
            isinstance(value, (int, float))
            and not isinstance(value, bool)
            and math.isfinite(value)
            and self.low <= value <= self.high
        )

    def parse(self, text: str) -> float:
        return float(text)

    def to_json(self) -> Any:
        return {"continuous": [self.low, self.high]}

    def __str__(self) -> str:
        return f"[{self.low}, {self.high}]"


def range_from_json(doc: Any) -> Range:
    if doc in ("bool", "boolean"):
        return Boolean()
    if isinstance(doc, dict):
        if "categorical" in doc:
            return Categorical(tuple(doc["categorical"]))
        if "continuous" in doc:
            low, high = doc["continuous"]
            return Continuous(float(low), float(high))
    raise ValidationError(f"unrecognised range {doc!r}")


@dataclass(frozen=True)
class StateVariable:
    name: str
    range: Range


@dataclass
class StateModel:
    """Causal DAG over state variables with structural functions for derived ones."""

    variables: dict[str, StateVariable]
    edges: list[tuple[str, str]] = field(default_factory=list)
    functions: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self._parents: dict[str, list[str]] = {name: [] for name in self.variables}
        for parent, child in self.edges:
            for name in (parent, child):
                if name not in self.variables:
                    raise UnknownVariable(name)
            if parent in self._parents[child]:
                raise ValidationError(f"duplicate edge {parent}->{child}")
            self._parents[child].append(parent)
        self.validate()
        self._order = self._topological_order()
        self._ancestors: dict[str, frozenset[str]] = {}

    # -- structure ---------------------------------------------------------

    def validate(self) -> None:
        """Reject cycles, missing or superfluous functions and unknown reads."""
        self._topological_order()
        for name, parents in self._parents.items():
            if not parents:
                if name in self.functions:
                    raise ValidationError(f"top-level variable {name} must not have a function")
                continue
            if name not in self.functions:
                raise ValidationError(f"derived variable {name} has no function")
            extra = ex.free_vars(self.functions[name]) - set(parents)
            if extra:
                raise ValidationError(f"function of {name} reads non-parents {sorted(extra)}")
        for name in self.functions:
            if name not in self.variables:
                raise UnknownVariable(name)

    def _topological_order(self) -> list[str]:
        sorter = graphlib.TopologicalSorter({n: self._parents[n] for n in self.variables})
        try:
            return list(sorter.static_order())
        except graphlib.CycleError as exc:
            raise ValidationError(f"state graph has a cycle: {exc.args[1]}") from None

    @property
    def names(self) -> list[str]:
        return list(self.variables)

    @property
    def order(self) -> list[str]:
        return list(self._order)

    def range(self, name: str) -> Range:
        return self.variable(name).range

    def variable(self, name: str) -> StateVariable:
        try:
            return self.variables[name]
        except KeyError:
            raise UnknownVariable(name) from None

    def parents(self, name: str) -> list[str]:
        self.variable(name)
        return list(self._parents[name])

    def is_top_level(self, name: str) -> bool:
        return not self.parents(name)

    @property
    def top_level(self) -> list[str]:
        return [n for n in self.variables if not self._parents[n]]

    @property
    def derived(self) -> list[str]:
        return [n for n in self.variables if self._parents[n]]

    def ancestors(self, name: str) -> frozenset[str]:
        """Transitive closure of the parent relation, excluding ``name`` itself."""
        self.variable(name)
        cached = self._ancestors.get(name)
        if cached is not None:
            return cached
        seen: set[str] = set()
        stack = list(self._parents[name])
        while stack:
            p = stack.pop()
            if p not in seen:
                seen.add(p)
                stack.extend(self._parents[p])
        result = frozenset(seen)
        self._ancestors[name] = result
        return result

    # -- evaluation --------------------------------------------------------

    def evaluate(self, name: str, parent_values: Mapping[str, Any]) -> Any:
        """Apply the structural function of derived variable ``name``."""
        value = ex.evaluate(self.functions[name], parent_values)
        return self.range(name).check(name, value)

    def propagate(self, top: Mapping[str, Any]) -> dict[str, Any]:
        """Complete an assignment of the top-level variables in topological order."""
        missing = set(self.top_level) - set(top)
        extra = set(top) - set(self.top_level)
        if missing:
            raise UnknownVariable(f"top-level variables not assigned: {sorted(missing)}")
        if extra:
            raise ValidationError(f"not top-level: {sorted(extra)}")
        full = {}
        for name in self._order:
            if name in top:
                full[name] = self.range(name).check(name, top[name])
            else:
                full[name] = self.evaluate(name, {p: full[p] for p in self._parents[name]})
        return {name: full[name] for name in self.variables}

    def refresh(self, state: dict[str, Any]) -> dict[str, Any]:
        """Recompute derived variables of ``state`` in place; return those that changed."""
        changed = {}
        for name in self._order:
            parents = self._parents[name]
            if not parents:
                continue
            value = self.evaluate(name, {p: state[p] for p in parents})
            if state.get(name, _MISSING) != value:
                changed[name] = value
            state[name] = value
        return changed

    def check_assignment(self, state: Mapping[str, Any]) -> None:
        for name, var in self.variables.items():
            if name not in state:
                raise UnknownVariable(f"state does not assign {name}")
            var.range.check(name, state[name])

    # -- serialisation -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "variables": [{"name": v.name, "range": v.range.to_json()} for v in self.variables.values()],
            "edges": [list(e) for e in self.edges],
            "functions": dict(self.functions),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "StateModel":
        variables = {}
        for item in doc["variables"]:
            name = item["name"]
            if name in variables:
                raise ValidationError(f"duplicate variable {name}")
            variables[name] = StateVariable(name, range_from_json(item.get("range", "bool")))
        edges = [tuple(e) for e in doc.get("edges", [])]
        return cls(variables, edges, dict(doc.get("functions", {})))

    @classmethod
    def load(cls, path: str | Path) -> "StateModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


_MISSING = object()


def boolean_model(names: Sequence[str], functions: Mapping[str, Any] = (), edges: Iterable = ()) -> StateModel:
    """Shorthand for an all-boolean model; edges default to each function's free variables."""
    functions = dict(functions)
    if not edges:
        edges = [(p, child) for child, fn in functions.items() for p in sorted(ex.free_vars(fn))]
    return StateModel({n: StateVariable(n, Boolean()) for n in names}, list(edges), functions)


def parse_assignment(model: StateModel, items: Iterable[str]) -> dict[str, Any]:
    """Parse ``NAME=VALUE`` strings against the model's ranges."""
    out = {}
    for item in items:
        name, sep, text = item.partition("=")
        if not sep:
            raise ValueError(f"expected NAME=VALUE, got {item!r}")
        name = name.strip()
        out[name] = model.range(name).parse(text.strip())
    return out
