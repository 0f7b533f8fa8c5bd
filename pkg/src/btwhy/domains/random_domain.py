"""Seeded random behaviour trees and boolean state graphs.

Everything is driven by :class:`random.Random` instances derived from the
spec's seed, so a spec always yields byte-identical trees and models.

State graph: variables are put in a random order, the first half are
top-level, and every later variable draws its parents from the variables
before it. ``connectivity`` scales the parent count between one and
:data:`MAX_PARENTS`. Derived functions fold the parents with random
``and``/``or`` operators, negating each literal with probability 1/4.

Tree: starting from a composite with two leaves, each further leaf either
joins an existing composite or wraps an existing child in a new two-child composite.
Leaves are conditions or actions with equal probability. Leaf behaviours
are lookup tables over the boolean input assignment (and the action, for
effects and action statuses).
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

from ..bt import NOOP, BehaviourTree, BTNode, Kind, RuleBehaviour
from ..errors import ValidationError
from ..expr import encode_key
from ..state import Boolean, StateModel, StateVariable

MAX_PARENTS = 3
MAX_INPUTS = 3
ACTIONS = ("a0", "a1")
RUNNING_PROB = 0.1


@dataclass(frozen=True)
class RandomDomainSpec:
    num_leaves: int
    num_state_vars: int
    connectivity: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.num_leaves < 2:
            raise ValidationError("a random tree needs at least two leaves")
        if self.num_state_vars < 2:
            raise ValidationError("a random state graph needs at least two variables")
        if not 0.0 <= self.connectivity <= 1.0:
            raise ValidationError(f"connectivity must lie in [0, 1], got {self.connectivity}")

    @property
    def num_top_level(self) -> int:
        return max(1, self.num_state_vars // 2)

    def rng(self, stream: str) -> random.Random:
        return random.Random(f"{self.seed}:{self.num_leaves}:{self.num_state_vars}:{self.connectivity}:{stream}")


def _literal(rng: random.Random, name: str) -> dict:
    lit = {"var": name}
    return {"not": lit} if rng.random() < 0.25 else lit


def parent_count(spec: RandomDomainSpec, available: int) -> int:
    """Parents for a derived variable with ``available`` earlier variables."""
    cap = min(MAX_PARENTS, available)
    return 1 + round(spec.connectivity * (cap - 1))


def random_state_graph(spec: RandomDomainSpec) -> StateModel:
    rng = spec.rng("state")
    names = [f"X{i}" for i in range(spec.num_state_vars)]
    order = names[:]
    rng.shuffle(order)
    edges = []
    functions = {}
    for j in range(spec.num_top_level, len(order)):
        child = order[j]
        parents = sorted(rng.sample(order[:j], parent_count(spec, j)), key=names.index)
        edges.extend((p, child) for p in parents)
        expr = _literal(rng, parents[0])
        for p in parents[1:]:
            expr = {rng.choice(("and", "or")): [expr, _literal(rng, p)]}
        functions[child] = expr
    variables = {n: StateVariable(n, Boolean()) for n in names}
    return StateModel(variables, edges, functions)


def _rows(inputs) -> list[str]:
    return [",".join(encode_key(v) for v in row) for row in itertools.product((False, True), repeat=len(inputs))]


def _table(rng: random.Random, keys: list[str], rows: list[str], values) -> dict:
    return {"lookup": {"keys": keys, "table": {r: rng.choice(values) for r in rows}}}


def _leaf(rng: random.Random, index: int, sm: StateModel) -> BTNode:
    names = sm.names
    inputs = sorted(rng.sample(names, rng.randint(1, min(MAX_INPUTS, len(names)))), key=names.index)
    rows = _rows(inputs)
    node_id = f"L{index}"
    if rng.random() < 0.5:
        status = _table(rng, inputs, rows, ("Success", "Failure"))
        return BTNode(node_id, Kind.CONDITION, inputs=inputs, behaviour=RuleBehaviour(status=status))
    outputs = [rng.choice(sm.top_level)]
    decide = _table(rng, inputs, rows, ACTIONS)
    acts = (*ACTIONS, NOOP)
    effect_rows = [f"{a},{r}" if r else a for a in acts for r in rows]
    effect = {y: _table(rng, ["action", *inputs], effect_rows, (False, True)) for y in outputs}
    statuses = {a: ("Running" if rng.random() < RUNNING_PROB else rng.choice(("Success", "Failure"))) for a in acts}
    status = {"lookup": {"keys": ["action"], "table": statuses}}
    return BTNode(
        node_id,
        Kind.ACTION,
        inputs=inputs,
        outputs=outputs,
        actions=ACTIONS,
        behaviour=RuleBehaviour(decide=decide, effect=effect, status=status),
    )


def random_bt(spec: RandomDomainSpec, sm: StateModel | None = None) -> BehaviourTree:
    sm = sm or random_state_graph(spec)
    rng = spec.rng("tree")
    leaves = [_leaf(rng, i, sm) for i in range(spec.num_leaves)]
    counter = itertools.count()

    def composite(children) -> BTNode:
        return BTNode(f"C{next(counter)}", rng.choice((Kind.SEQUENCE, Kind.FALLBACK)), list(children))

    root = composite(leaves[:2])
    composites = [root]
    for leaf in leaves[2:]:
        if rng.random() < 0.5:
            host = rng.choice(composites)
            host.children.insert(rng.randint(0, len(host.children)), leaf)
            continue
        # replace an existing child by a composite over it and the new leaf
        host = rng.choice(composites)
        pos = rng.randrange(len(host.children))
        old = host.children[pos]
        pair = [old, leaf] if rng.random() < 0.5 else [leaf, old]
        new = composite(pair)
        host.children[pos] = new
        composites.append(new)
    return BehaviourTree(root)


def default_initial(spec: RandomDomainSpec, sm: StateModel) -> dict:
    rng = spec.rng("init")
    return sm.propagate({n: rng.random() < 0.5 for n in sm.top_level})


def random_domain(spec: RandomDomainSpec) -> tuple[BehaviourTree, StateModel, dict]:
    """Tree, state model and default initial state for ``spec``."""
    sm = random_state_graph(spec)
    return random_bt(spec, sm), sm, default_initial(spec, sm)
