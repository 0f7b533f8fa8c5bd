"""Behaviour trees: node types, leaf behaviours and the tick executor.

Only the two fundamental composites (sequence and fallback) and the two
leaf kinds (condition and action) are supported. Every leaf declares the
state variables it reads (``inputs``) and, for actions, writes
(``outputs``), together with its action set. Leaf behaviour is supplied by
a :class:`LeafBehaviour`: a decision function, an effect function over the
outputs and a return-status function, all of which must be pure.

Ticks are memoryless: each tick starts again at the root, and a
``Running`` status simply propagates up and ends the tick.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Iterator, Mapping

from . import expr as ex
from .errors import (
    MissingVariable,
    RangeViolation,
    UnknownNode,
    ValidationError,
)

if TYPE_CHECKING:
    from .state import StateModel
    from .trace import EpisodicMemory

NOOP = "noop"


class Status(str, Enum):
    RUNNING = "Running"
    SUCCESS = "Success"
    FAILURE = "Failure"
    INVALID = "Invalid"

    def __str__(self) -> str:
        return self.value


class Kind(str, Enum):
    SEQUENCE = "sequence"
    FALLBACK = "fallback"
    CONDITION = "condition"
    ACTION = "action"

    @property
    def is_composite(self) -> bool:
        return self in (Kind.SEQUENCE, Kind.FALLBACK)


# ---------------------------------------------------------------------------
# leaf behaviours


class LeafBehaviour:
    """Pure decision, effect and return functions of one leaf.

    ``inputs`` maps each of the leaf's input variables to its value. Effect
    and status also see the chosen action; condition leaves get ``NOOP``.
    """

    name: str | None = None

    def decide(self, inputs: Mapping[str, Any]) -> str:
        raise NotImplementedError

    def effect(self, action: str, inputs: Mapping[str, Any]) -> dict[str, Any]:
        raise NotImplementedError

    def status(self, action: str, inputs: Mapping[str, Any]) -> Status:
        raise NotImplementedError

    def to_json(self) -> Any:
        raise NotImplementedError


class RuleBehaviour(LeafBehaviour):
    """Behaviour given by expressions; effect and status rules may read ``"action"``."""

    def __init__(self, decide: Any = None, effect: Mapping[str, Any] | None = None, status: Any = "Success"):
        self.decide_expr = decide
        self.effect_exprs = dict(effect or {})
        self.status_expr = status

    def decide(self, inputs):
        return ex.evaluate(self.decide_expr, inputs)

    def effect(self, action, inputs):
        env = {**inputs, "action": action}
        return {name: ex.evaluate(e, env) for name, e in self.effect_exprs.items()}

    def status(self, action, inputs):
        return Status(ex.evaluate(self.status_expr, {**inputs, "action": action}))

    def to_json(self) -> dict:
        doc: dict[str, Any] = {"status": self.status_expr}
        if self.decide_expr is not None:
            doc["decide"] = self.decide_expr
        if self.effect_exprs:
            doc["effect"] = dict(self.effect_exprs)
        return doc


class FunctionBehaviour(LeafBehaviour):
    """Behaviour backed by Python callables, serialised by registered name."""

    def __init__(
        self,
        name: str,
        status: Callable[[str, Mapping[str, Any]], Any],
        decide: Callable[[Mapping[str, Any]], str] | None = None,
        effect: Callable[[str, Mapping[str, Any]], Mapping[str, Any]] | None = None,
    ):
        self.name = name
        self._status = status
        self._decide = decide
        self._effect = effect

    def decide(self, inputs):
        if self._decide is None:
            raise ValidationError(f"behaviour {self.name} has no decision function")
        return self._decide(inputs)

    def effect(self, action, inputs):
        return dict(self._effect(action, inputs)) if self._effect else {}

    def status(self, action, inputs):
        return Status(self._status(action, inputs))

    def to_json(self) -> str:
        return self.name


BUILTINS: dict[str, FunctionBehaviour] = {}


def register(behaviour: FunctionBehaviour) -> FunctionBehaviour:
    BUILTINS[behaviour.name] = behaviour
    return behaviour


def behaviour_from_json(doc: Any) -> LeafBehaviour:
    if isinstance(doc, str):
        try:
            return BUILTINS[doc]
        except KeyError:
            raise ValidationError(f"unknown built-in behaviour {doc!r}") from None
    if isinstance(doc, dict):
        unknown = set(doc) - {"decide", "effect", "status"}
        if unknown:
            raise ValidationError(f"unknown behaviour fields {sorted(unknown)}")
        return RuleBehaviour(doc.get("decide"), doc.get("effect"), doc.get("status", "Success"))
    raise ValidationError(f"bad behaviour {doc!r}")


# ---------------------------------------------------------------------------
# tree structure


@dataclass(eq=False)
class BTNode:
    id: str
    kind: Kind
    children: list["BTNode"] = field(default_factory=list)
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    actions: tuple[str, ...] = ()
    behaviour: LeafBehaviour | None = None
    dt: float = 1.0

    def __post_init__(self):
        self.kind = Kind(self.kind)
        self.inputs = tuple(self.inputs)
        self.outputs = tuple(self.outputs)
        actions = tuple(self.actions)
        if self.kind is Kind.ACTION and NOOP not in actions:
            actions = actions + (NOOP,)
        self.actions = actions

    @property
    def is_leaf(self) -> bool:
        return not self.kind.is_composite

    def __repr__(self) -> str:
        return f"BTNode({self.id!r}, {self.kind.value})"


def sequence(id: str, *children: BTNode) -> BTNode:
    return BTNode(id, Kind.SEQUENCE, list(children))


def fallback(id: str, *children: BTNode) -> BTNode:
    return BTNode(id, Kind.FALLBACK, list(children))


def condition(id: str, inputs, behaviour: LeafBehaviour) -> BTNode:
    return BTNode(id, Kind.CONDITION, inputs=inputs, behaviour=behaviour)


def action(id: str, inputs, outputs, actions, behaviour: LeafBehaviour) -> BTNode:
    return BTNode(id, Kind.ACTION, inputs=inputs, outputs=outputs, actions=actions, behaviour=behaviour)


class BehaviourTree:
    """A validated, immutable-by-convention tree with navigation indices."""

    def __init__(self, root: BTNode):
        self.root = root
        self._nodes: dict[str, BTNode] = {}
        self._parent: dict[str, BTNode | None] = {}
        self._index: dict[str, int] = {}
        self._visit(root, None)
        self.validate()

    def _visit(self, node: BTNode, parent: BTNode | None) -> None:
        if node.id in self._nodes:
            raise ValidationError(f"duplicate node id {node.id!r} (or a node reused in two places)")
        self._nodes[node.id] = node
        self._parent[node.id] = parent
        for i, child in enumerate(node.children):
            self._index[child.id] = i
            self._visit(child, node)

    def validate(self) -> None:
        for node in self._nodes.values():
            if node.kind.is_composite:
                if len(node.children) < 2:
                    raise ValidationError(f"composite {node.id} needs at least two children")
                continue
            if node.children:
                raise ValidationError(f"leaf {node.id} must not have children")
            if node.behaviour is None:
                raise ValidationError(f"leaf {node.id} has no behaviour")
            if node.kind is Kind.CONDITION and (node.outputs or node.actions):
                raise ValidationError(f"condition {node.id} must not declare outputs or actions")
            if len(set(node.inputs)) != len(node.inputs) or len(set(node.outputs)) != len(node.outputs):
                raise ValidationError(f"leaf {node.id} repeats a variable")
            if len(set(node.actions)) != len(node.actions):
                raise ValidationError(f"leaf {node.id} repeats an action")

    def check_against(self, model: "StateModel") -> None:
        """Every referenced variable must be declared; leaves may only write top-level ones."""
        for leaf in self.leaves:
            for name in leaf.inputs + leaf.outputs:
                if name not in model.variables:
                    raise MissingVariable(f"leaf {leaf.id} refers to undeclared variable {name!r}")
            for name in leaf.outputs:
                if not model.is_top_level(name):
                    raise ValidationError(
                        f"leaf {leaf.id} writes derived variable {name!r}; only top-level variables are writable"
                    )

    # -- navigation --------------------------------------------------------

    def node(self, node_id: str | BTNode) -> BTNode:
        key = node_id.id if isinstance(node_id, BTNode) else node_id
        try:
            return self._nodes[key]
        except KeyError:
            raise UnknownNode(key) from None

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def parent(self, node) -> BTNode | None:
        return self._parent[self.node(node).id]

    def left_sibling(self, node) -> BTNode | None:
        node = self.node(node)
        parent = self._parent[node.id]
        if parent is None:
            return None
        i = self._index[node.id]
        return parent.children[i - 1] if i > 0 else None

    def leftmost_child(self, node) -> BTNode:
        node = self.node(node)
        if not node.children:
            raise ValidationError(f"{node.id} is a leaf and has no children")
        return node.children[0]

    def is_leftmost(self, node) -> bool:
        node = self.node(node)
        return self._parent[node.id] is not None and self._index[node.id] == 0

    def ancestors(self, node) -> list[BTNode]:
        out = []
        p = self.parent(node)
        while p is not None:
            out.append(p)
            p = self._parent[p.id]
        return out

    @property
    def nodes(self) -> list[BTNode]:
        """All nodes in pre-order (left to right)."""
        return list(self._nodes.values())

    @property
    def leaves(self) -> list[BTNode]:
        return [n for n in self._nodes.values() if n.is_leaf]

    @property
    def composites(self) -> list[BTNode]:
        return [n for n in self._nodes.values() if not n.is_leaf]

    def __iter__(self) -> Iterator[BTNode]:
        return iter(self._nodes.values())

    def __len__(self) -> int:
        return len(self._nodes)

    # -- serialisation -----------------------------------------------------

    def to_json(self) -> dict:
        return {"root": _node_to_json(self.root)}

    @classmethod
    def from_json(cls, doc: Mapping) -> "BehaviourTree":
        return cls(_node_from_json(doc["root"]))

    @classmethod
    def load(cls, path: str | Path) -> "BehaviourTree":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


def _node_to_json(node: BTNode) -> dict:
    doc: dict[str, Any] = {"id": node.id, "kind": node.kind.value}
    if node.children:
        doc["children"] = [_node_to_json(c) for c in node.children]
    if node.is_leaf:
        doc["inputs"] = list(node.inputs)
        if node.kind is Kind.ACTION:
            doc["outputs"] = list(node.outputs)
            doc["actions"] = list(node.actions)
        doc["behaviour"] = node.behaviour.to_json()
    if node.dt != 1.0:
        doc["dt"] = node.dt
    return doc


def _node_from_json(doc: Mapping) -> BTNode:
    known = {"id", "kind", "children", "inputs", "outputs", "actions", "behaviour", "dt"}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"node {doc.get('id')!r} has unknown fields {sorted(unknown)}")
    try:
        kind = Kind(doc["kind"])
    except ValueError:
        raise ValidationError(f"unknown node kind {doc['kind']!r}") from None
    behaviour = behaviour_from_json(doc["behaviour"]) if "behaviour" in doc else None
    return BTNode(
        id=str(doc["id"]),
        kind=kind,
        children=[_node_from_json(c) for c in doc.get("children", [])],
        inputs=tuple(doc.get("inputs", ())),
        outputs=tuple(doc.get("outputs", ())),
        actions=tuple(doc.get("actions", ())),
        behaviour=behaviour,
        dt=float(doc.get("dt", 1.0)),
    )


# ---------------------------------------------------------------------------
# execution


def tick(tree: BehaviourTree, model: "StateModel", state: dict[str, Any], memory: "EpisodicMemory") -> Status:
    """Tick ``tree`` once from the root, mutating ``state`` and logging to ``memory``.

    Composite results are logged after their children (completion order).
    A leaf's state changes are logged immediately before its own result;
    derived variables that change as a consequence are logged with them.
    """
    tree.check_against(model)
    model.check_assignment(state)
    status = _tick_node(tree.root, model, state, memory)
    memory.record_tick_boundary()
    return status


def _tick_node(node: BTNode, model, state, memory) -> Status:
    if node.kind is Kind.SEQUENCE:
        result = Status.SUCCESS
        for child in node.children:
            s = _tick_node(child, model, state, memory)
            if s is not Status.SUCCESS:
                result = s
                break
        memory.record_node(node.id, result)
        return result
    if node.kind is Kind.FALLBACK:
        result = Status.FAILURE
        for child in node.children:
            s = _tick_node(child, model, state, memory)
            if s is not Status.FAILURE:
                result = s
                break
        memory.record_node(node.id, result)
        return result

    inputs = {name: state[name] for name in node.inputs}
    beh = node.behaviour
    if node.kind is Kind.CONDITION:
        result = beh.status(NOOP, inputs)
        if result not in (Status.SUCCESS, Status.FAILURE):
            raise ValidationError(f"condition {node.id} returned {result}")
        memory.record_node(node.id, result)
        return result

    chosen = beh.decide(inputs)
    if chosen not in node.actions:
        raise RangeViolation(f"{node.id} chose {chosen!r}, not in {node.actions}")
    effects = beh.effect(chosen, inputs)
    if set(effects) != set(node.outputs):
        raise ValidationError(f"{node.id} effect writes {sorted(effects)}, declared {sorted(node.outputs)}")
    result = beh.status(chosen, inputs)
    if result is Status.INVALID:
        raise ValidationError(f"{node.id} returned Invalid while executing")
    for name in node.outputs:
        value = model.range(name).check(name, effects[name])
        state[name] = value
        memory.record_state(name, value)
    for name, value in model.refresh(state).items():
        memory.record_state(name, value)
    memory.record_node(node.id, result, chosen)
    return result
