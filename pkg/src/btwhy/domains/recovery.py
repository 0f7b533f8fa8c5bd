"""Target recovery: does the search name the perturbed initial variable?

A default run and a run with one top-level initial value changed are
compared leaf result by leaf result. At the first difference a query is
posed in the altered run's context and the perturbation counts as
recovered when the perturbed variable, with its perturbed value, is a
reason in some returned explanation. Any temporal version of the variable
counts; :attr:`RecoveryOutcome.exact` records whether the initial version
itself was named.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from ..bt import BehaviourTree
from ..errors import NoExplanationFound
from ..model import ExplanationModel, build, D, E, R, X
from ..search import DEFAULT_BINS, DEFAULT_DMAX, Query, SearchResult, counterfactual_search, make_query, reconstruct
from ..state import StateModel
from ..trace import EpisodicMemory, NodeResult, run
from .random_domain import RandomDomainSpec, random_domain

NO_DIFFERENCE, RECOVERED, MISSED = "NoDifference", "Recovered", "Missed"


@dataclass
class RecoveryOutcome:
    kind: str
    variable: str
    value: Any = None
    query: Query | None = None
    result: SearchResult | None = None
    model_nodes: int = 0
    exact: bool = False

    @property
    def explanations(self) -> list:
        return self.result.explanations if self.result else []

    def to_json(self) -> dict:
        doc: dict[str, Any] = {"outcome": self.kind, "variable": self.variable, "value": self.value}
        if self.query is not None:
            doc["query"] = str(self.query)
        if self.result is not None:
            doc.update(self.result.to_json())
        return doc


def _leaf_results(memory: EpisodicMemory) -> list[NodeResult]:
    return [e for e in memory.events if isinstance(e, NodeResult) and e.leaf]


def _last_index(memory: EpisodicMemory) -> int:
    """Last node result of the (single) tick; the boundary would reset the context."""
    return max(e.index for e in memory.events if isinstance(e, NodeResult))


def divergence(
    tree: BehaviourTree, default: EpisodicMemory, altered: EpisodicMemory
) -> tuple[Any, Any, Any, int] | None:
    """First leaf-level difference as ``(variable, altered value, default value, event index)``.

    Leaves run at most once per tick and in pre-order, so when the two runs
    execute different leaves next, the one earlier in pre-order was skipped
    by the other run, and its execution flag settles at that moment.
    """
    a_seq, d_seq = _leaf_results(altered), _leaf_results(default)
    order = {n.id: i for i, n in enumerate(tree.nodes)}
    for j in range(max(len(a_seq), len(d_seq))):
        a = a_seq[j] if j < len(a_seq) else None
        d = d_seq[j] if j < len(d_seq) else None
        if a is not None and d is not None and a.node == d.node:
            if a.action != d.action:
                return D(a.node), a.action, d.action, a.index
            if a.status != d.status:
                return R(a.node), a.status, d.status, a.index
            continue
        if d is None or (a is not None and order[a.node] < order[d.node]):
            return E(a.node), True, False, a.index
        return E(d.node), False, True, a.index if a is not None else _last_index(altered)
    return None


def target_recovery(
    tree: BehaviourTree,
    sm: StateModel,
    initial: Mapping[str, Any],
    variable: str,
    value: Any = None,
    model: ExplanationModel | None = None,
    dmax: int = DEFAULT_DMAX,
    bins: int = DEFAULT_BINS,
    link_unwritten: bool = False,
) -> RecoveryOutcome:
    """Perturb top-level ``variable`` (default: flip a boolean) and explain the first divergence."""
    if not sm.is_top_level(variable):
        raise ValueError(f"{variable} is not top-level")
    if value is None:
        value = not initial[variable]
    model = model or build(tree, sm, link_unwritten)
    top = {n: initial[n] for n in sm.top_level}
    altered_init = sm.propagate({**top, variable: value})
    default = run(tree, sm, sm.propagate(top), 1, embed=False)
    altered = run(tree, sm, altered_init, 1, embed=False)
    found = divergence(tree, default, altered)
    if found is None:
        return RecoveryOutcome(NO_DIFFERENCE, variable, value, model_nodes=len(model))
    var, fact, foil, k = found
    ctx = reconstruct(model, altered, k)
    query = make_query(model, ctx, [(var, fact, [foil])])
    try:
        result = counterfactual_search(model, ctx, query, dmax, bins)
    except NoExplanationFound:
        return RecoveryOutcome(MISSED, variable, value, query, None, len(model))
    reasons = [(v, x) for e in result.explanations for v, x in e.reasons]
    hit = any(v.is_state and v.name == variable and x == value for v, x in reasons)
    exact = (X(variable, 0), value) in reasons
    return RecoveryOutcome(RECOVERED if hit else MISSED, variable, value, query, result, len(model), exact)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class CellResult:
    spec: RandomDomainSpec
    model_nodes: int
    outcomes: list[RecoveryOutcome] = field(default_factory=list)


def run_cell(
    spec: RandomDomainSpec, dmax: int = DEFAULT_DMAX, bins: int = DEFAULT_BINS, link_unwritten: bool = False
) -> CellResult:
    tree, sm, initial = random_domain(spec)
    model = build(tree, sm, link_unwritten)
    cell = CellResult(spec, len(model))
    for name in sm.top_level:
        cell.outcomes.append(target_recovery(tree, sm, initial, name, model=model, dmax=dmax, bins=bins))
    return cell


DEFAULT_GRID = {"leaves": (2, 4, 8), "vars": (4, 8, 12), "connectivity": (0.0, 0.5, 1.0), "seeds": 3}
FULL_GRID = {"leaves": (2, 4, 8, 16, 32), "vars": (4, 8, 12), "connectivity": (0.0, 0.25, 0.5, 0.75, 1.0), "seeds": 10}


def sweep(
    leaves: Iterable[int],
    num_vars: Iterable[int],
    connectivity: Iterable[float],
    seeds: int | Sequence[int],
    dmax: int = DEFAULT_DMAX,
    bins: int = DEFAULT_BINS,
    link_unwritten: bool = False,
) -> list[CellResult]:
    seed_list = range(seeds) if isinstance(seeds, int) else seeds
    return [
        run_cell(RandomDomainSpec(n_l, n_v, c, s), dmax, bins, link_unwritten)
        for n_v in num_vars
        for n_l in leaves
        for c in connectivity
        for s in seed_list
    ]


def _stats(xs: Sequence[float]) -> dict:
    if not xs:
        return {"min": None, "max": None, "mean": None, "std": None}
    return {
        "min": min(xs),
        "max": max(xs),
        "mean": statistics.fmean(xs),
        "std": statistics.pstdev(xs) if len(xs) > 1 else 0.0,
    }


def summarize(outcomes: Sequence[RecoveryOutcome], model_nodes: Sequence[int] = ()) -> dict:
    """Counts, recovery rate over divergent runs and size statistics."""
    found = sum(o.kind == RECOVERED for o in outcomes)
    missed = sum(o.kind == MISSED for o in outcomes)
    same = sum(o.kind == NO_DIFFERENCE for o in outcomes)
    divergent = found + missed
    return {
        "target_found": found,
        "initial_version_named": sum(o.exact for o in outcomes),
        "missed": missed,
        "no_difference": same,
        "recovery_rate": found / divergent if divergent else None,
        "model_nodes": _stats(list(model_nodes)),
        "explanations": _stats([len(o.explanations) for o in outcomes if o.kind != NO_DIFFERENCE]),
    }


def report(cells: Sequence[CellResult]) -> dict:
    """Per (vars, leaves) rows plus a per-connectivity breakdown and totals."""

    def group(key) -> dict:
        out: dict = {}
        for c in cells:
            out.setdefault(key(c), []).append(c)
        return out

    def row(cs) -> dict:
        return summarize([o for c in cs for o in c.outcomes], [c.model_nodes for c in cs])

    rows = []
    for (n_v, n_l), cs in group(lambda c: (c.spec.num_state_vars, c.spec.num_leaves)).items():
        rows.append({"vars": n_v, "leaves": n_l, **row(cs)})
    by_conn = []
    for conn, cs in group(lambda c: c.spec.connectivity).items():
        by_conn.append({"connectivity": conn, **row(cs)})
    return {"rows": rows, "by_connectivity": by_conn, "total": row(cells)}


def recall_report(
    profiles: Sequence[str],
    seeds: Iterable[int],
    dmax: int = DEFAULT_DMAX,
    bins: int = DEFAULT_BINS,
    link_unwritten: bool = False,
) -> dict:
    """Target recovery on the serial-recall domain, one row per profile."""
    from . import serial_recall

    per_profile: dict[str, list[RecoveryOutcome]] = {p: [] for p in profiles}
    sizes = []
    for seed in seeds:
        tree, sm, table = serial_recall.domain(seed)
        model = build(tree, sm, link_unwritten)
        sizes.append(len(model))
        base = serial_recall.initial(sm)
        for name in profiles:
            variable, value = table[name]
            per_profile[name].append(target_recovery(tree, sm, base, variable, value, model, dmax, bins))
    rows = [{"profile": p, **summarize(outs, sizes)} for p, outs in per_profile.items()]
    total = summarize([o for outs in per_profile.values() for o in outs], sizes)
    return {"rows": rows, "total": total}


def format_report(report: Mapping) -> str:
    """Plain-text table of a :func:`report` or :func:`recall_report` result."""

    def rate(r):
        return "-" if r["recovery_rate"] is None else f"{r['recovery_rate']:.3f}"

    def mean(s):
        return "-" if s["mean"] is None else f"{s['mean']:.1f}"

    head = f"{'found':>6} {'exact':>6} {'missed':>6} {'same':>6} {'rate':>6} {'nodes':>7} {'expl':>5}"

    def cells(r):
        return (
            f"{r['target_found']:>6} {r['initial_version_named']:>6} {r['missed']:>6} "
            f"{r['no_difference']:>6} {rate(r):>6} {mean(r['model_nodes']):>7} {mean(r['explanations']):>5}"
        )

    lines = []
    if report["rows"] and "profile" in report["rows"][0]:
        lines.append(f"{'profile':<14} {head}")
        lines += [f"{r['profile']:<14} {cells(r)}" for r in report["rows"]]
        lines.append(f"{'total':<14} {cells(report['total'])}")
    else:
        lines.append(f"{'vars':>4} {'leaves':>6} {head}")
        lines += [f"{r['vars']:>4} {r['leaves']:>6} {cells(r)}" for r in report["rows"]]
        lines.append(f"{'total':>11} {cells(report['total'])}")
        if report.get("by_connectivity"):
            lines.append("")
            lines.append(f"{'conn':>11} {head}")
            lines += [f"{r['connectivity']:>11} {cells(r)}" for r in report["by_connectivity"]]
    return "\n".join(lines)
