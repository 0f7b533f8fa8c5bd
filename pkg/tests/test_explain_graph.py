import pytest

from btwhy.bt import NOOP, BehaviourTree, Kind, RuleBehaviour, Status, action, condition, sequence
from btwhy.domains import serial_recall
from btwhy.domains.random_domain import RandomDomainSpec, random_domain
from btwhy.errors import MissingParentValue, ValidationError
from btwhy.model import D, E, R, X, build, graph_from_structure, parse_var
from btwhy.search import do, reconstruct
from btwhy.state import boolean_model
from btwhy.trace import NodeResult, run
from oracles import classify_edge, expected_edges, leaf_observations, small_specs, tick_events

CASE_NODES = {
    E("T_fb"), E("T_seq"), E("L0"), E("L1"), E("L2"),
    R("T_fb"), R("T_seq"), R("L0"), R("L1"), R("L2"),
    D("L1"), D("L2"),
    X("Xa", 0), X("Xa", 1), X("Xb", 0), X("Xb", 1), X("Xb", 2), X("Xc", 0), X("Xd", 0),
}
SPECS = small_specs(200)


def test_case_study_nodes(cs_model):
    assert set(cs_model.nodes) == CASE_NODES
    assert len(cs_model) == 19


def test_case_study_structure_edges(cs_model):
    e = cs_model.edges
    assert e[(R("L0"), E("L1"))] == "left-sibling"
    assert e[(R("T_seq"), E("L2"))] == "left-sibling"
    assert e[(E("T_fb"), E("T_seq"))] == "leftmost-child"
    assert e[(E("T_seq"), E("L0"))] == "leftmost-child"


def test_case_study_l1_inputs(cs_model):
    e = cs_model.edges
    for a, b in [(X("Xa", 1), X("Xc", 0)), (X("Xb", 0), X("Xc", 0))]:
        assert e[(a, b)] == "state-graph"
    for src in (X("Xa", 1), X("Xc", 0)):
        for dst in (R("L1"), D("L1")):
            assert e[(src, dst)] == "input"
    assert cs_model.tau == {"Xa": 2, "Xb": 2, "Xc": 1, "Xd": 1}


def test_case_study_temporal_edges(cs_model, cs_tree, cs_sm):
    e = cs_model.edges
    assert e[(X("Xb", 0), X("Xb", 1))] == "temporal"
    assert e[(X("Xb", 1), X("Xb", 2))] == "temporal"
    # Xa^(1) is only read, never written: linked only on request
    assert (X("Xa", 0), X("Xa", 1)) not in e
    full = build(cs_tree, cs_sm, link_unwritten=True)
    assert full.edges[(X("Xa", 0), X("Xa", 1))] == "temporal"
    assert set(full.nodes) == CASE_NODES
    # tau counts past the last materialised version; no dangling endpoints
    assert X("Xa", 2) not in cs_model
    for a, b in full.edges:
        assert a in full and b in full


def test_case_study_ranges(cs_model):
    assert cs_model.range(R("L0")).values() == [Status.SUCCESS, Status.FAILURE, Status.INVALID]
    assert Status.RUNNING in cs_model.range(R("L1")).values()
    assert cs_model.range(D("L2")).values() == ["a2", "a3", NOOP]
    assert cs_model.range(E("L0")).values() == [False, True]
    assert cs_model.range(X("Xb", 2)).values() == [False, True]


@pytest.mark.parametrize(
    "var, values, expected",
    [
        (R("L0"), {E("L0"): True, X("Xa", 0): False}, Status.FAILURE),
        (R("L0"), {E("L0"): True, X("Xa", 0): True}, Status.SUCCESS),
        (R("L0"), {E("L0"): False, X("Xa", 0): True}, Status.INVALID),
        (R("L2"), {E("L2"): False, D("L2"): "a2", X("Xd", 0): True}, Status.INVALID),
        (D("L2"), {E("L2"): True, X("Xd", 0): True}, "a2"),
        (D("L2"), {E("L2"): True, X("Xd", 0): False}, "a3"),
        (D("L2"), {E("L2"): False, X("Xd", 0): True}, NOOP),
        (E("T_fb"), {}, True),
        (E("L2"), {R("T_seq"): Status.FAILURE}, True),
        (E("L2"), {R("T_seq"): Status.SUCCESS}, False),
        (E("L1"), {R("L0"): Status.SUCCESS}, True),
        (E("L1"), {R("L0"): Status.RUNNING}, False),
        (R("T_seq"), {E("T_seq"): True, R("L0"): Status.SUCCESS, R("L1"): Status.INVALID}, Status.INVALID),
        (R("T_fb"), {E("T_fb"): True, R("T_seq"): Status.FAILURE, R("L2"): Status.FAILURE}, Status.FAILURE),
        (R("T_fb"), {E("T_fb"): True, R("T_seq"): Status.RUNNING, R("L2"): Status.INVALID}, Status.RUNNING),
        (X("Xb", 2), {E("L2"): False, D("L2"): NOOP, X("Xb", 1): True, X("Xd", 0): True}, True),
        (X("Xb", 2), {E("L2"): True, D("L2"): "a3", X("Xb", 1): True, X("Xd", 0): True}, False),
        (X("Xd", 0), {X("Xb", 1): False}, True),
    ],
)
def test_evaluators(cs_model, var, values, expected):
    assert cs_model.evaluate(var, values) == expected


def test_missing_parent(cs_model):
    with pytest.raises(MissingParentValue):
        cs_model.evaluate(R("L0"), {E("L0"): True})


@pytest.mark.parametrize(
    "intervention, expected",
    [
        ({E("T_fb"): False}, Status.INVALID),
        ({E("T_seq"): False}, Status.INVALID),
        ({E("L0"): False}, Status.INVALID),
        ({X("Xa", 0): True}, Status.SUCCESS),
    ],
)
def test_case_study_interventions(cs_model, cs_memory, intervention, expected):
    ctx = reconstruct(cs_model, cs_memory, 1)
    assert ctx[R("L0")] is Status.FAILURE
    assert do(cs_model, ctx.values, intervention)[R("L0")] is expected


def test_single_leaf_tree(cs_sm):
    tree = BehaviourTree(condition("only", [], RuleBehaviour(status="Success")))
    model = build(tree, cs_sm)
    assert set(model.nodes) == {E("only"), R("only")} | {X(n, 0) for n in cs_sm.names}
    assert model.edges == {(E("only"), R("only")): "exec-return"}


def test_read_and_write_leaf():
    sm = boolean_model(["A"])
    flip = action("flip", ["A"], ["A"], ["go"], RuleBehaviour("go", {"A": {"not": {"var": "A"}}}))
    tree = BehaviourTree(sequence("S", flip, condition("check", ["A"], RuleBehaviour(status="Success"))))
    model = build(tree, sm)
    assert (X("A", 0), D("flip")) in model.edges
    assert (D("flip"), X("A", 1)) in model.edges
    assert (X("A", 1), R("check")) in model.edges
    assert model.evaluate(X("A", 1), {E("flip"): True, D("flip"): "go", X("A", 0): True}) is False


def test_pure_action_adds_no_state_edges():
    sm = boolean_model(["A", "B"], {"B": {"var": "A"}})
    tree = BehaviourTree(sequence("S", action("a", [], [], ["go"], RuleBehaviour("go")), condition("c", [], RuleBehaviour())))
    model = build(tree, sm)
    assert not any(a.is_state or b.is_state for a, b in model.edges)


def _structure_count(tree):
    composites = [n for n in tree.nodes if n.kind.is_composite]
    actions = [n for n in tree.nodes if n.kind is Kind.ACTION]
    n = len(tree.nodes)
    return sum(len(c.children) for c in composites) + (n - 1) + n + 2 * len(actions)


@pytest.mark.parametrize("seed", range(10))
def test_structure_edge_count(seed):
    tree, _, _ = random_domain(RandomDomainSpec(8, 6, 0.5, seed))
    assert len(graph_from_structure(tree).edges) == _structure_count(tree)


def test_rule_audit_four_leaves_eight_vars():
    tree, sm, _ = random_domain(RandomDomainSpec(4, 8, 0.5, 0))
    model = build(tree, sm)
    for (a, b), rule in model.edges.items():
        assert classify_edge(tree, sm, a, b) == [rule]


def test_parse_var():
    assert parse_var("E[L0]") == E("L0")
    assert parse_var("r[T_fb]") == R("T_fb")
    assert parse_var("d[L2]") == D("L2")
    assert parse_var("Xb^(2)") == X("Xb", 2)
    assert parse_var("Xb^2") == X("Xb", 2)
    assert parse_var("Xb@1") == X("Xb", 1)
    assert parse_var("Xb") == X("Xb", 0)
    with pytest.raises(ValueError):
        parse_var("Xb^(x)")


def test_export(cs_model):
    doc = cs_model.to_json()
    assert len(doc["nodes"]) == 19 and len(doc["edges"]) == len(cs_model.edges)
    writers = {n["id"]: n["writer"] for n in doc["nodes"] if "writer" in n}
    assert writers == {"Xb^(1)": "L1", "Xb^(2)": "L2"}
    dot = cs_model.to_dot()
    assert dot.startswith("digraph") and '"Xb^(0)" -> "Xb^(1)"' in dot


def test_cycle_detection_on_bad_graph(cs_model):
    from btwhy.model import ExplanationModel, Graph

    g = Graph()
    a, b = g.add_node(X("Xa", 0)), g.add_node(X("Xb", 0))
    g.add_edge(a, b, "state-graph")
    g.add_edge(b, a, "state-graph")
    with pytest.raises(ValidationError, match="cycle"):
        ExplanationModel(cs_model.tree, cs_model.state_model, g, {}, {})


def test_serial_recall_model_size():
    model = build(serial_recall.tree(), serial_recall.state_model(0))
    assert (len(model.nodes), len(model.edges)) == (76, 118)


# ---------------------------------------------------------------------------
# property suites over 200 random domains


def _domains():
    for spec in SPECS:
        yield spec, *random_domain(spec)


@pytest.mark.parametrize("link", [False, True], ids=["written-links", "all-links"])
def test_rule_audit_and_dag(link):
    for spec, tree, sm, _ in _domains():
        model = build(tree, sm, link)
        assert len(model.order) == len(model.nodes)
        rank = {v: i for i, v in enumerate(model.order)}
        assert all(rank[a] < rank[b] for a, b in model.edges), spec
        assert model.edges == expected_edges(tree, sm, link), spec
        for (a, b), rule in model.edges.items():
            assert classify_edge(tree, sm, a, b) == [rule], (spec, a, b)
        for v, leaf in model.writers.items():
            others = {p for p in model.parents[v] if not p.is_state}
            assert others == {E(leaf), D(leaf)}
        for v in model.nodes:
            if v.kind == "d":
                assert tree.node(v.name).kind is Kind.ACTION
            if v.is_state:
                assert X(v.name, 0) in model


def _check_replay(model, memory, tree, k_tick):
    results = [e for e in tick_events(memory, k_tick) if isinstance(e, NodeResult)]
    last = results[-1].index
    ctx = reconstruct(model, memory, last)
    ran = {e.node: e for e in results}
    for node in tree.nodes:
        assert ctx[E(node.id)] == (node.id in ran)
        if node.id in ran:
            assert ctx[R(node.id)] == ran[node.id].status
            if node.kind is Kind.ACTION:
                assert ctx[D(node.id)] == ran[node.id].action
        else:
            assert ctx[R(node.id)] is Status.INVALID
            if node.kind is Kind.ACTION:
                assert ctx[D(node.id)] == NOOP
    return ctx, ran


@pytest.mark.parametrize("link", [False, True], ids=["written-links", "all-links"])
def test_replay_fidelity(link):
    for spec, tree, sm, init in _domains():
        model = build(tree, sm, link)
        memory = run(tree, sm, init, 3)
        observed = {e.index: s for e, s in leaf_observations(memory)}
        for t in range(3):
            ctx, ran = _check_replay(model, memory, tree, t)
            # every input version carries the value the leaf actually read
            for node_id, ev in ran.items():
                if ev.leaf:
                    for p in model.parents[R(node_id)]:
                        if p.is_state:
                            assert ctx[p] == observed[ev.index][p.name], (spec, node_id, p)
            end = memory.state_at(memory.tick_range(t)[1])
            for name in sm.top_level:
                assert ctx[model.last_version(name)] == end[name]
            assert not ctx.pending


def test_pure_evaluation_replay_with_full_links():
    # with every version linked, the tick-start state alone determines the whole model
    for spec, tree, sm, init in _domains():
        model = build(tree, sm, link_unwritten=True)
        memory = run(tree, sm, init, 2)
        for t in range(2):
            start = memory.tick_range(t)[0]
            state = memory.state_at(start)
            roots = {X(n, 0): state[n] for n in sm.names}
            values = model.evaluate_all(roots)
            ctx = reconstruct(model, memory, memory.tick_range(t)[1] - 1)
            assert values == ctx.values, spec


def test_evaluators_consume_only_parents():
    for spec, tree, sm, init in list(_domains())[:50]:
        model = build(tree, sm)
        ctx = reconstruct(model, run(tree, sm, init, 1), 1)
        for v in model.nodes:
            if model.is_exogenous(v):
                continue
            assert model.evaluate(v, {p: ctx[p] for p in model.parents[v]}) == model.evaluate(v, ctx.values)


def test_build_deterministic():
    for spec, tree, sm, _ in list(_domains())[:20]:
        assert build(tree, sm).to_json() == build(*random_domain(spec)[:2]).to_json()
