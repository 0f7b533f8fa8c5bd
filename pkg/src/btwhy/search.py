"""Contrastive queries and the minimal-depth counterfactual search.

Answering ``why(fact, foil)`` happens in three steps:

1. :func:`reconstruct` replays the episodic memory up to the queried moment
   and assigns a value to every variable of the explanation model.
2. :func:`counterfactual_search` restricts the model to the ancestors of the
   queried variables and tries every intervention on 1, 2, ... of them
   (through :func:`do`) until some depth yields interventions that move
   every queried variable into its foil range.
3. Each such intervention becomes an :class:`Explanation`: the actual
   values it overrides are the reasons, the intervention plus the resulting
   queried values form the counterfactual.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .bt import Status
from .errors import (
    InvalidQuery,
    NoExplanationFound,
    NoPreviousTick,
    RangeViolation,
    ReplayMismatch,
)
from .model import DECISION, EXEC, RETURN, ExplanationModel, Var
from .state import Continuous, Range
from .trace import EpisodicMemory, NodeResult

DEFAULT_DMAX = 3
DEFAULT_BINS = 10


# ---------------------------------------------------------------------------
# context reconstruction


@dataclass
class Context:
    """Value of every model variable as of event index ``index``.

    ``pending`` holds variables whose value at that moment is not yet
    settled: a node that has not run yet, or anything downstream of one.
    """

    index: int
    tick: int
    values: dict[Var, Any]
    pending: frozenset[Var] = frozenset()
    completed: dict[str, tuple[Status, str | None]] = field(default_factory=dict)

    def __getitem__(self, v: Var) -> Any:
        return self.values[v]


def reconstruct(model: ExplanationModel, memory: EpisodicMemory, k: int) -> Context:
    """Rebuild the model assignment at event index ``k``.

    The tick containing ``k`` starts from the state carried over from the
    previous tick. Nodes that completed by ``k`` take their recorded
    status and action (and the model must agree with them); nodes that have
    not started are unexecuted, composites still running are Invalid.
    """
    start = memory.tick_start(k)
    initial = memory.state_at(start)
    _, completed, tick = memory.slice_until(k)
    tree = model.tree
    started = {tree.root.id}
    for node_id in completed:
        started.add(node_id)
        started.update(a.id for a in tree.ancestors(node_id))

    values: dict[Var, Any] = {}
    pending: set[Var] = set()
    for v in model.order:
        if model.is_exogenous(v):
            if v.version == 0:
                values[v] = initial[v.name]
            else:
                prev = model.previous_version(v)
                values[v] = values[prev]
                if prev in pending:
                    pending.add(v)
            continue
        value = model.evaluate(v, values)
        forced = value
        if v.kind == EXEC:
            forced = v.name in started
            if forced and not value:
                raise ReplayMismatch(f"{v} recorded as executed but the model says it cannot run")
        elif v.name in completed and v.kind in (RETURN, DECISION):
            status, act = completed[v.name]
            recorded = status if v.kind == RETURN else act
            if recorded != value:
                raise ReplayMismatch(f"{v}: memory has {recorded}, model evaluates {value}")
        elif v.kind == RETURN and not tree.node(v.name).is_leaf:
            forced = Status.INVALID
        values[v] = forced
        if forced != value or any(p in pending for p in model.parents[v]):
            pending.add(v)
    return Context(k, tick, values, frozenset(pending), dict(completed))


# ---------------------------------------------------------------------------
# interventions


def do(
    model: ExplanationModel,
    values: Mapping[Var, Any],
    interventions: Mapping[Var, Any],
    within: Iterable[Var] | None = None,
) -> dict[Var, Any]:
    """Force ``interventions`` and re-evaluate their descendants.

    Incoming edges of intervened variables are ignored; everything that is
    not a descendant keeps its value. ``within`` limits re-evaluation to a
    subgraph (e.g. the ancestors of a query).
    """
    for v, value in interventions.items():
        model.check_var(v)
        if not model.range(v).contains(value):
            raise RangeViolation(f"cannot set {v}={value!r}: outside {model.range(v)}")
    new = dict(values)
    new.update(interventions)
    affected: set[Var] = set()
    for v in interventions:
        affected |= model.descendants(v)
    affected -= set(interventions)
    if within is not None:
        affected &= set(within)
    for v in model.sorted(affected):
        new[v] = model.evaluate(v, new)
    return new


def discretize(rng: Range, bins: int = DEFAULT_BINS, actual: Any = None) -> list:
    """Candidate counterfactual values of a variable.

    Continuous ranges are split into ``bins`` half-open bins
    ``[low + j*w, low + (j+1)*w)`` (the last one closed) represented by their
    midpoints; the bin holding ``actual`` is left out. Finite ranges yield
    every value except ``actual``.
    """
    if isinstance(rng, Continuous):
        if bins < 2:
            raise ValueError("need at least two bins")
        width = (rng.high - rng.low) / bins
        skip = None
        if actual is not None:
            # round away float noise so that e.g. 0.3 lands in [0.3, 0.4)
            skip = min(int(math.floor(round((actual - rng.low) / width, 9))), bins - 1)
        return [round(rng.low + (j + 0.5) * width, 12) for j in range(bins) if j != skip]
    return [v for v in rng.values() if v != actual]


# ---------------------------------------------------------------------------
# queries and explanations


@dataclass(frozen=True)
class QueryItem:
    var: Var
    fact: Any
    foil: tuple


@dataclass(frozen=True)
class Query:
    items: tuple[QueryItem, ...]
    index: int

    @property
    def variables(self) -> list[Var]:
        return [it.var for it in self.items]

    def __str__(self) -> str:
        facts = ", ".join(f"{it.var}={_fmt(it.fact)}" for it in self.items)
        foils = ", ".join(f"{it.var}∈{{{', '.join(map(_fmt, it.foil))}}}" for it in self.items)
        return f"why({facts} @event {self.index}; {foils})"


@dataclass(frozen=True)
class Counterfactual:
    J: tuple[tuple[Var, Any], ...]
    K: tuple[tuple[Var, Any], ...]


@dataclass(frozen=True)
class Explanation:
    reasons: tuple[tuple[Var, Any], ...]
    counterfactuals: tuple[Counterfactual, ...]

    @property
    def depth(self) -> int:
        return len(self.reasons)

    @property
    def intervention(self) -> dict[Var, Any]:
        return dict(self.counterfactuals[0].J)

    def to_json(self) -> dict:
        return {
            "reasons": _pairs_json(self.reasons),
            "counterfactuals": [{"J": _pairs_json(c.J), "K": _pairs_json(c.K)} for c in self.counterfactuals],
        }

    def __str__(self) -> str:
        r = " ∧ ".join(f"{v}={_fmt(x)}" for v, x in self.reasons)
        cs = "; ".join(
            "(" + " ∧ ".join(f"{v}={_fmt(x)}" for v, x in c.J) + " ⇒ " + ", ".join(f"{v}={_fmt(x)}" for v, x in c.K) + ")"
            for c in self.counterfactuals
        )
        return f"⟨{r}, {cs}⟩"


@dataclass
class SearchResult:
    explanations: list[Explanation]
    depth: int
    candidates_evaluated: int
    search_space: int

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "candidates_evaluated": self.candidates_evaluated,
            "search_variables": self.search_space,
            "explanations": [e.to_json() for e in self.explanations],
        }


def _fmt(value: Any) -> str:
    if isinstance(value, Status):
        return value.value
    return str(value)


def _json_value(value: Any) -> Any:
    return value.value if isinstance(value, Status) else value


def _pairs_json(pairs) -> list[dict]:
    return [{"var": str(v), "value": _json_value(x)} for v, x in pairs]


def make_query(
    model: ExplanationModel,
    context: Context,
    items: Sequence[tuple[Var, Any, Iterable[Any]]],
) -> Query:
    """Validate ``(variable, fact, foils)`` triples against the model and the context."""
    if not items:
        raise InvalidQuery("a query needs at least one variable")
    out = []
    seen = set()
    for v, fact, foil in items:
        if v not in model:
            raise InvalidQuery(f"unknown variable {v}")
        if v in seen:
            raise InvalidQuery(f"{v} queried twice")
        seen.add(v)
        rng = model.range(v)
        foil = tuple(foil)
        if not rng.contains(fact):
            raise InvalidQuery(f"fact {v}={_fmt(fact)} is outside {rng}")
        if not foil:
            raise InvalidQuery(f"empty foil for {v}")
        for f in foil:
            if not rng.contains(f):
                raise InvalidQuery(f"foil {v}={_fmt(f)} is outside {rng}")
            if f == fact:
                raise InvalidQuery(f"foil for {v} contains the fact value {_fmt(fact)}")
        actual = context[v]
        if actual != fact:
            raise InvalidQuery(f"fact {v}={_fmt(fact)} does not hold at event {context.index}; memory has {_fmt(actual)}")
        if v in context.pending:
            raise InvalidQuery(f"{v} is not yet settled at event {context.index}")
        out.append(QueryItem(v, fact, foil))
    return Query(tuple(out), context.index)


def parse_value(model: ExplanationModel, v: Var, text: str) -> Any:
    rng = model.range(v)
    try:
        return rng.parse(text)
    except ValueError as exc:
        raise InvalidQuery(f"{v}: {exc}") from None


class Searcher:
    """Counterfactual search over one context; reusable for several queries."""

    def __init__(self, model: ExplanationModel, context: Context, dmax: int = DEFAULT_DMAX, bins: int = DEFAULT_BINS):
        if dmax < 1:
            raise ValueError("dmax must be at least 1")
        self.model = model
        self.context = context
        self.dmax = dmax
        self.bins = bins

    def candidates(self, v: Var) -> list:
        return discretize(self.model.range(v), self.bins, self.context[v])

    def search(self, query: Query, prune: bool = True) -> SearchResult:
        model, ctx = self.model, self.context
        queried = query.variables
        if prune:
            star: set[Var] = set(queried)
            for q in queried:
                star |= model.ancestors(q)
        else:
            star = set(model.nodes)
        space = model.sorted(star - set(queried))
        cands = {v: self.candidates(v) for v in space}
        # descendants of each search variable that matter for the query, in order
        relevant = star if prune else set(model.nodes)
        downstream = {v: model.sorted(model.descendants(v) & relevant) for v in space}
        foils = {it.var: it.foil for it in query.items}
        base = ctx.values
        n = 0
        for depth in range(1, self.dmax + 1):
            hits: list[Explanation] = []
            for subset in itertools.combinations(space, depth):
                if depth == 1:
                    order = downstream[subset[0]]
                else:
                    merged: set[Var] = set()
                    for v in subset:
                        merged.update(downstream[v])
                    merged.difference_update(subset)
                    order = model.sorted(merged)
                for values in itertools.product(*(cands[v] for v in subset)):
                    n += 1
                    new = dict(base)
                    new.update(zip(subset, values))
                    for u in order:
                        new[u] = model.evaluate(u, new)
                    if all(new[q] in foils[q] for q in queried):
                        hits.append(
                            Explanation(
                                reasons=tuple((v, base[v]) for v in subset),
                                counterfactuals=(
                                    Counterfactual(
                                        J=tuple(zip(subset, values)),
                                        K=tuple((q, new[q]) for q in queried),
                                    ),
                                ),
                            )
                        )
            if hits:
                return SearchResult(hits, depth, n, len(space))
        raise NoExplanationFound(
            f"no counterfactual within depth {self.dmax} for {query}", candidates_evaluated=n, max_depth=self.dmax
        )


def counterfactual_search(
    model: ExplanationModel,
    context: Context,
    query: Query,
    dmax: int = DEFAULT_DMAX,
    bins: int = DEFAULT_BINS,
    prune: bool = True,
) -> SearchResult:
    return Searcher(model, context, dmax, bins).search(query, prune=prune)


def why(
    model: ExplanationModel,
    memory: EpisodicMemory,
    items: Sequence[tuple[Var, Any, Iterable[Any]]],
    moment: int,
    basis: str = "time",
    dmax: int = DEFAULT_DMAX,
    bins: int = DEFAULT_BINS,
) -> SearchResult:
    """One-shot convenience: reconstruct, validate and search."""
    k = memory.to_event_index(moment, basis)
    ctx = reconstruct(model, memory, k)
    return counterfactual_search(model, ctx, make_query(model, ctx, items), dmax, bins)


# ---------------------------------------------------------------------------
# follow-up queries


def follow_up(
    model: ExplanationModel,
    memory: EpisodicMemory,
    query: Query,
    explanation: Explanation,
    reason: int | Var,
) -> Query:
    """Ask why a reason of ``explanation`` held, with its counterfactual value as foil.

    A reason on a parentless top-level ``X^(0)`` is re-anchored to the last
    version of ``X`` at the final node result of the previous tick, where it
    had the same value. A parentless later version (a read of ``X`` that is
    not linked to its predecessor) is re-anchored to the previous version at
    the same moment.
    """
    if isinstance(reason, int):
        if not 0 <= reason < len(explanation.reasons):
            raise InvalidQuery(f"explanation has no reason #{reason}")
        v, value = explanation.reasons[reason]
    else:
        matches = [(u, x) for u, x in explanation.reasons if u == reason]
        if not matches:
            raise InvalidQuery(f"{reason} is not a reason of this explanation")
        v, value = matches[0]
    foil = tuple(x for cf in explanation.counterfactuals for u, x in cf.J if u == v)

    if model.parents[v]:
        ctx = reconstruct(model, memory, query.index)
        return make_query(model, ctx, [(v, value, foil)])
    if v.is_state and v.version > 0:
        ctx = reconstruct(model, memory, query.index)
        return make_query(model, ctx, [(model.previous_version(v), value, foil)])
    if v.is_state and model.state_model.is_top_level(v.name):
        start = memory.tick_start(query.index)
        if start == 0:
            raise NoPreviousTick(f"{v} is an initial value of the first tick; there is no earlier tick")
        k = max(e.index for e in memory.events[:start] if isinstance(e, NodeResult))
        target = model.last_version(v.name)
        ctx = reconstruct(model, memory, k)
        return make_query(model, ctx, [(target, value, foil)])
    raise InvalidQuery(f"{v} has no causes in the explanation model")


def _masks(n: int, size: int):
    """All ``n``-bit masks with exactly ``size`` bits set, in increasing order."""
    if size > n:
        return
    mask = (1 << size) - 1
    while mask < 1 << n:
        yield mask
        low = mask & -mask
        ripple = mask + low
        mask = (((ripple ^ mask) >> 2) // low) | ripple


def brute_force(
    model: ExplanationModel,
    context: Context,
    query: Query,
    dmax: int,
    bins: int = DEFAULT_BINS,
    space: Iterable[Var] | None = None,
) -> tuple[int, set[frozenset]]:
    """Reference enumeration for testing: every intervention of size <= ``dmax``.

    Walks bitmasks over ``space`` (default: every non-queried variable of
    the model) and recomputes the whole model from scratch for each
    intervention. Returns the minimal satisfying depth (0 if none) and the
    satisfying interventions at that depth as frozensets of ``(var, value)``
    pairs.
    """
    queried = set(query.variables)
    foils = {it.var: it.foil for it in query.items}
    pool = [v for v in (model.nodes if space is None else space) if v not in queried]
    for size in range(1, dmax + 1):
        found: set[frozenset] = set()
        for mask in _masks(len(pool), size):
            members = [pool[i] for i in range(len(pool)) if mask >> i & 1]
            options = [discretize(model.range(v), bins, context[v]) for v in members]
            for values in itertools.product(*options):
                fixed = dict(zip(members, values))
                new: dict[Var, Any] = {}
                for u in model.order:
                    if u in fixed:
                        new[u] = fixed[u]
                    elif model.is_exogenous(u):
                        new[u] = context[u]
                    else:
                        new[u] = model.evaluate(u, new)
                if all(new[q] in foils[q] for q in queried):
                    found.add(frozenset(fixed.items()))
        if found:
            return size, found
    return 0, set()


def parse_statement(model: ExplanationModel, text: str) -> tuple[Var, Any]:
    """Parse ``VAR=VALUE`` (e.g. ``r[L0]=Failure`` or ``Xa^(0)=true``) against the model."""
    from .model import parse_var

    name, sep, raw = text.partition("=")
    if not sep:
        raise InvalidQuery(f"expected VAR=VALUE, got {text!r}")
    try:
        v = parse_var(name)
    except ValueError as exc:
        raise InvalidQuery(str(exc)) from None
    if v not in model:
        raise InvalidQuery(f"unknown variable {v}")
    return v, parse_value(model, v, raw.strip())


def build_items(
    model: ExplanationModel, facts: Iterable[str], foils: Iterable[str]
) -> list[tuple[Var, Any, list]]:
    """Combine ``VAR=FACT`` and ``VAR=FOIL`` statements into query items.

    A variable may be given several foil statements; a foil for a variable
    without a fact is an error.
    """
    items: dict[Var, tuple[Any, list]] = {}
    for text in facts:
        v, value = parse_statement(model, text)
        if v in items:
            raise InvalidQuery(f"{v} has two facts")
        items[v] = (value, [])
    for text in foils:
        v, value = parse_statement(model, text)
        if v not in items:
            raise InvalidQuery(f"foil for {v} has no matching fact")
        items[v][1].append(value)
    return [(v, fact, foil) for v, (fact, foil) in items.items()]


__all__ = [
    "Context",
    "Counterfactual",
    "Explanation",
    "Query",
    "QueryItem",
    "SearchResult",
    "Searcher",
    "brute_force",
    "counterfactual_search",
    "discretize",
    "do",
    "follow_up",
    "make_query",
    "parse_statement",
    "build_items",
    "reconstruct",
    "why",
]
