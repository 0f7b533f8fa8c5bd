"""The explanation model: a causal DAG compiled from a behaviour tree and its domain knowledge.

Variables come in four kinds, one :class:`Var` each:

* ``E[i]``  whether node *i* executed (boolean),
* ``r[i]``  the return status of node *i*,
* ``d[i]``  the decision of action leaf *i*,
* ``X^(t)`` the *t*-th within-tick version of state variable *X*.

:func:`build` runs the structural pass (:func:`graph_from_structure`) and
then the domain-knowledge pass (:func:`add_domain_knowledge`). The result
carries, for every variable, its range and an evaluator consuming exactly
its parents.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, NamedTuple

from .bt import NOOP, BehaviourTree, Kind, Status
from .errors import MissingParentValue, UnknownVariable, ValidationError
from .state import Boolean, Categorical, Range, StateModel

EXEC, RETURN, DECISION, STATE = "E", "r", "d", "X"

# Edge-construction rules, used as edge tags.
RULE_EXEC_RETURN = "exec-return"
RULE_LEAF = "leaf"
RULE_CHILD_RETURN = "child-return"
RULE_LEFTMOST = "leftmost-child"
RULE_SIBLING = "left-sibling"
RULE_INPUT = "input"
RULE_OUTPUT = "output"
RULE_STATE = "state-graph"
RULE_TEMPORAL = "temporal"
RULES = (
    RULE_EXEC_RETURN,
    RULE_LEAF,
    RULE_CHILD_RETURN,
    RULE_LEFTMOST,
    RULE_SIBLING,
    RULE_INPUT,
    RULE_OUTPUT,
    RULE_STATE,
    RULE_TEMPORAL,
)

RETURN_VALUES = (Status.RUNNING, Status.SUCCESS, Status.FAILURE, Status.INVALID)
CONDITION_RETURN_VALUES = (Status.SUCCESS, Status.FAILURE, Status.INVALID)


class Var(NamedTuple):
    kind: str
    name: str
    version: int = 0

    def __str__(self) -> str:
        if self.kind == STATE:
            return f"{self.name}^({self.version})"
        return f"{self.kind}[{self.name}]"

    @property
    def is_state(self) -> bool:
        return self.kind == STATE


def E(node: str) -> Var:
    return Var(EXEC, node)


def R(node: str) -> Var:
    return Var(RETURN, node)


def D(node: str) -> Var:
    return Var(DECISION, node)


def X(name: str, version: int = 0) -> Var:
    return Var(STATE, name, version)


def parse_var(text: str) -> Var:
    """Parse ``E[id]``, ``r[id]``, ``d[id]``, ``NAME^(t)``, ``NAME^t`` or ``NAME@t``."""
    text = text.strip()
    for kind in (EXEC, RETURN, DECISION):
        if text.startswith(kind + "[") and text.endswith("]"):
            return Var(kind, text[2:-1])
    for sep in ("^", "@"):
        if sep in text:
            name, _, version = text.rpartition(sep)
            version = version.strip("()")
            if not version.isdigit():
                raise ValueError(f"bad version in {text!r}")
            return X(name, int(version))
    if not text:
        raise ValueError("empty variable selector")
    return X(text, 0)


@dataclass
class Graph:
    """Node/edge container shared by the construction passes."""

    nodes: dict[Var, None] = field(default_factory=dict)
    edges: dict[tuple[Var, Var], str] = field(default_factory=dict)

    def add_node(self, v: Var) -> Var:
        self.nodes.setdefault(v, None)
        return v

    def add_edge(self, a: Var, b: Var, rule: str) -> None:
        if a not in self.nodes or b not in self.nodes:
            raise ValidationError(f"edge {a}->{b} references a missing node")
        self.edges.setdefault((a, b), rule)

    def __contains__(self, v: Var) -> bool:
        return v in self.nodes


# ---------------------------------------------------------------------------
# construction


def graph_from_structure(tree: BehaviourTree) -> Graph:
    g = Graph()
    for node in tree.nodes:
        g.add_node(E(node.id))
        g.add_node(R(node.id))
        if node.kind is Kind.ACTION:
            g.add_node(D(node.id))
    for node in tree.nodes:
        g.add_edge(E(node.id), R(node.id), RULE_EXEC_RETURN)
        if node.kind is Kind.ACTION:
            g.add_edge(E(node.id), D(node.id), RULE_LEAF)
            g.add_edge(D(node.id), R(node.id), RULE_LEAF)
        for child in node.children:
            g.add_edge(R(child.id), R(node.id), RULE_CHILD_RETURN)
        parent = tree.parent(node)
        if parent is None:
            continue
        if tree.is_leftmost(node):
            g.add_edge(E(parent.id), E(node.id), RULE_LEFTMOST)
        else:
            g.add_edge(R(tree.left_sibling(node).id), E(node.id), RULE_SIBLING)
    return g


def add_leaf_inputs(g: Graph, leaf, tau: dict[str, int], sm: StateModel) -> None:
    """Link the latest versions of a leaf's inputs (and their state ancestors) into it.

    A state-graph edge ``A -> B`` is instantiated only when ``B`` is the input
    or one of its ancestors; every such ``A`` is then an ancestor too.
    """
    touched: set[str] = set()
    for name in leaf.inputs:
        current = g.add_node(X(name, tau[name]))
        closure = sm.ancestors(name) | {name}
        for anc in sm.ancestors(name):
            g.add_node(X(anc, tau[anc]))
        for a, b in sm.edges:
            if b in closure:
                g.add_edge(X(a, tau[a]), X(b, tau[b]), RULE_STATE)
        g.add_edge(current, R(leaf.id), RULE_INPUT)
        if leaf.kind is Kind.ACTION:
            g.add_edge(current, D(leaf.id), RULE_INPUT)
        touched |= closure
    for name in touched:
        tau[name] += 1


def add_leaf_outputs(g: Graph, leaf, tau: dict[str, int], writers: dict[Var, str]) -> None:
    """Create a fresh version for each output, driven by the leaf's execution and decision."""
    for name in leaf.outputs:
        if X(name, tau[name]) in g:
            # never overwrite a version that already means something else
            tau[name] += 1
        v = g.add_node(X(name, tau[name]))
        g.add_edge(E(leaf.id), v, RULE_OUTPUT)
        g.add_edge(D(leaf.id), v, RULE_OUTPUT)
        writers[v] = leaf.id


def add_temporal_edges(g: Graph, sm: StateModel, writers: Mapping[Var, str], link_unwritten: bool = False) -> None:
    """Chain consecutive materialised versions of each top-level variable.

    By default only versions written by a leaf receive a temporal parent (the
    value they keep when the leaf does not run). A version created merely
    because a leaf reads the variable is then exogenous: its value comes from
    the recorded context, so an intervention on an earlier version does not
    flow through it. ``link_unwritten=True`` chains every pair of consecutive
    versions, making such reads copies of the previous version.
    """
    versions: dict[str, list[int]] = {}
    for v in g.nodes:
        if v.is_state:
            versions.setdefault(v.name, []).append(v.version)
    for name in sm.top_level:
        vs = sorted(versions.get(name, ()))
        for prev, nxt in zip(vs, vs[1:]):
            if link_unwritten or X(name, nxt) in writers:
                g.add_edge(X(name, prev), X(name, nxt), RULE_TEMPORAL)


def add_domain_knowledge(
    g: Graph, tree: BehaviourTree, sm: StateModel, link_unwritten: bool = False
) -> tuple[dict[str, int], dict[Var, str]]:
    tree.check_against(sm)
    tau = {name: 0 for name in sm.names}
    for name in sm.names:
        g.add_node(X(name, 0))
    writers: dict[Var, str] = {}
    for leaf in tree.leaves:
        add_leaf_inputs(g, leaf, tau, sm)
        if leaf.kind is Kind.ACTION:
            add_leaf_outputs(g, leaf, tau, writers)
    add_temporal_edges(g, sm, writers, link_unwritten)
    return tau, writers


def build(tree: BehaviourTree, sm: StateModel, link_unwritten: bool = False) -> "ExplanationModel":
    g = graph_from_structure(tree)
    tau, writers = add_domain_knowledge(g, tree, sm, link_unwritten)
    return ExplanationModel(tree, sm, g, tau, writers)


# ---------------------------------------------------------------------------
# the model


class ExplanationModel:
    """Explanation graph plus ranges and evaluators. Treat as immutable."""

    def __init__(self, tree: BehaviourTree, sm: StateModel, graph: Graph, tau: dict[str, int], writers: dict[Var, str]):
        self.tree = tree
        self.state_model = sm
        self.graph = graph
        self.tau = dict(tau)
        self.writers = dict(writers)
        self.nodes: list[Var] = list(graph.nodes)
        self.edges: dict[tuple[Var, Var], str] = dict(graph.edges)
        self._pos = {v: i for i, v in enumerate(self.nodes)}
        self.parents: dict[Var, list[Var]] = {v: [] for v in self.nodes}
        self.children: dict[Var, list[Var]] = {v: [] for v in self.nodes}
        for a, b in self.edges:
            self.parents[b].append(a)
            self.children[a].append(b)
        for v in self.nodes:
            self.parents[v].sort(key=self._pos.__getitem__)
            self.children[v].sort(key=self._pos.__getitem__)
        self.order = self._topological_order()
        self.rank = {v: i for i, v in enumerate(self.order)}
        self._ancestors: dict[Var, frozenset[Var]] = {}
        self._descendants: dict[Var, frozenset[Var]] = {}
        self._check()

    def _topological_order(self) -> list[Var]:
        indeg = {v: len(self.parents[v]) for v in self.nodes}
        heap = [self._pos[v] for v in self.nodes if indeg[v] == 0]
        heapq.heapify(heap)
        out = []
        while heap:
            v = self.nodes[heapq.heappop(heap)]
            out.append(v)
            for c in self.children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, self._pos[c])
        if len(out) != len(self.nodes):
            raise ValidationError("explanation graph has a cycle")
        return out

    def _check(self) -> None:
        for v, leaf_id in self.writers.items():
            leaf = self.tree.node(leaf_id)
            if leaf.kind is not Kind.ACTION:
                raise ValidationError(f"{v} is written by non-action {leaf_id}")
            extra = [p for p in self.parents[v] if not p.is_state and p not in (E(leaf_id), D(leaf_id))]
            if extra:
                raise ValidationError(f"{v} has unexpected non-state parents {extra}")
            if self.temporal_parent(v) is None:
                raise ValidationError(f"written version {v} has no predecessor")

    # -- structure queries -------------------------------------------------

    def __contains__(self, v: Var) -> bool:
        return v in self._pos

    def __len__(self) -> int:
        return len(self.nodes)

    def check_var(self, v: Var) -> Var:
        if v not in self._pos:
            raise UnknownVariable(str(v))
        return v

    def ancestors(self, v: Var) -> frozenset[Var]:
        self.check_var(v)
        cached = self._ancestors.get(v)
        if cached is None:
            seen: set[Var] = set()
            stack = list(self.parents[v])
            while stack:
                p = stack.pop()
                if p not in seen:
                    seen.add(p)
                    stack.extend(self.parents[p])
            cached = self._ancestors[v] = frozenset(seen)
        return cached

    def descendants(self, v: Var) -> frozenset[Var]:
        self.check_var(v)
        cached = self._descendants.get(v)
        if cached is None:
            seen: set[Var] = set()
            stack = list(self.children[v])
            while stack:
                c = stack.pop()
                if c not in seen:
                    seen.add(c)
                    stack.extend(self.children[c])
            cached = self._descendants[v] = frozenset(seen)
        return cached

    def sorted(self, vs: Iterable[Var]) -> list[Var]:
        """Variables in the model's fixed topological order."""
        return sorted(vs, key=self.rank.__getitem__)

    def versions(self, name: str) -> list[Var]:
        return sorted((v for v in self.nodes if v.is_state and v.name == name), key=lambda v: v.version)

    def last_version(self, name: str) -> Var:
        return self.versions(name)[-1]

    def previous_version(self, v: Var) -> Var | None:
        earlier = [u for u in self.versions(v.name) if u.version < v.version]
        return earlier[-1] if earlier else None

    def temporal_parent(self, v: Var) -> Var | None:
        for p in self.parents[v]:
            if p.is_state and p.name == v.name:
                return p
        return None

    def range(self, v: Var) -> Range:
        self.check_var(v)
        if v.kind == EXEC:
            return Boolean()
        if v.is_state:
            return self.state_model.range(v.name)
        node = self.tree.node(v.name)
        if v.kind == RETURN:
            if node.kind is Kind.CONDITION:
                return Categorical(CONDITION_RETURN_VALUES)
            return Categorical(RETURN_VALUES)
        return Categorical(node.actions)

    def is_exogenous(self, v: Var) -> bool:
        """True for variables whose value comes from the context rather than an evaluator."""
        return not self.parents[v] and (v.is_state or v != E(self.tree.root.id))

    # -- evaluation --------------------------------------------------------

    def evaluate(self, v: Var, values: Mapping[Var, Any]) -> Any:
        """Value of ``v`` given values for (at least) all of its parents."""
        try:
            if v.kind == EXEC:
                return self._execution(v.name, values)
            if v.kind == RETURN:
                return self._return(v, values)
            if v.kind == DECISION:
                return self._decision(v, values)
            return self._state(v, values)
        except KeyError as exc:
            if isinstance(exc, UnknownVariable):
                raise
            raise MissingParentValue(f"evaluating {v}: no value for {exc.args[0]}") from None

    def _inputs(self, v: Var, values: Mapping[Var, Any]) -> dict[str, Any]:
        return {p.name: values[p] for p in self.parents[v] if p.is_state}

    def _execution(self, node_id: str, values) -> bool:
        tree = self.tree
        parent = tree.parent(node_id)
        if parent is None:
            return True
        if tree.is_leftmost(node_id):
            return bool(values[E(parent.id)])
        left = values[R(tree.left_sibling(node_id).id)]
        if parent.kind is Kind.SEQUENCE:
            return left == Status.SUCCESS
        return left == Status.FAILURE

    def _return(self, v: Var, values) -> Status:
        if not values[E(v.name)]:
            return Status.INVALID
        node = self.tree.node(v.name)
        if node.kind is Kind.CONDITION:
            return node.behaviour.status(NOOP, self._inputs(v, values))
        if node.kind is Kind.ACTION:
            return node.behaviour.status(values[D(v.name)], self._inputs(v, values))
        if node.kind is Kind.SEQUENCE:
            for child in node.children:
                status = values[R(child.id)]
                if status in (Status.RUNNING, Status.FAILURE, Status.INVALID):
                    return status
            return Status.SUCCESS
        for child in node.children:
            status = values[R(child.id)]
            if status in (Status.RUNNING, Status.SUCCESS, Status.INVALID):
                return status
        return Status.FAILURE

    def _decision(self, v: Var, values) -> str:
        if not values[E(v.name)]:
            return NOOP
        return self.tree.node(v.name).behaviour.decide(self._inputs(v, values))

    def _state(self, v: Var, values):
        writer = self.writers.get(v)
        if writer is not None:
            if not values[E(writer)]:
                return values[self.temporal_parent(v)]
            leaf = self.tree.node(writer)
            z = self._inputs(D(writer), values)
            return self.state_model.range(v.name).check(str(v), leaf.behaviour.effect(values[D(writer)], z)[v.name])
        parents = self.parents[v]
        if not parents:
            return values[v]
        if self.state_model.is_top_level(v.name):
            (prev,) = parents
            return values[prev]
        return self.state_model.evaluate(v.name, self._inputs(v, values))

    def evaluate_all(self, roots: Mapping[Var, Any]) -> dict[Var, Any]:
        """Evaluate every variable in topological order; exogenous ones come from ``roots``."""
        values: dict[Var, Any] = {}
        for v in self.order:
            if self.is_exogenous(v):
                if v not in roots:
                    raise MissingParentValue(f"no value supplied for exogenous {v}")
                values[v] = roots[v]
            else:
                values[v] = self.evaluate(v, values)
        return values

    # -- export ------------------------------------------------------------

    def to_json(self) -> dict:
        def node_doc(v: Var) -> dict:
            doc = {"id": str(v), "kind": v.kind, "name": v.name}
            if v.is_state:
                doc["version"] = v.version
            rng = self.range(v)
            doc["range"] = rng.to_json()
            if v in self.writers:
                doc["writer"] = self.writers[v]
            return doc

        return {
            "nodes": [node_doc(v) for v in self.nodes],
            "edges": [[str(a), str(b), rule] for (a, b), rule in self.edges.items()],
            "tau": dict(self.tau),
        }

    def to_dot(self) -> str:
        shapes = {EXEC: "box", RETURN: "ellipse", DECISION: "diamond", STATE: "note"}
        lines = ["digraph explanation {", "  rankdir=LR;"]
        for v in self.nodes:
            lines.append(f'  "{v}" [shape={shapes[v.kind]}];')
        for (a, b), rule in self.edges.items():
            lines.append(f'  "{a}" -> "{b}" [label="{rule}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)
