import pytest
from hypothesis import given
from hypothesis import strategies as st

from btwhy.bt import (
    NOOP,
    BehaviourTree,
    BTNode,
    FunctionBehaviour,
    Kind,
    RuleBehaviour,
    Status,
    action,
    behaviour_from_json,
    condition,
    register,
    sequence,
    tick,
)
from btwhy.domains import casestudy
from btwhy.domains.random_domain import RandomDomainSpec, random_domain
from btwhy.errors import MissingVariable, RangeViolation, ValidationError
from btwhy.trace import NodeResult, StateChange, new_memory, run
from oracles import composed_status, small_specs, tick_events

SPECS = small_specs(60, base_seed=5000)


def _always(status):
    return RuleBehaviour(status=status)


def test_case_study_execution(cs_memory):
    # L0 fails, the sequence fails, L2 runs and the fallback succeeds
    results = [(e.node, e.status) for e in cs_memory.node_results()]
    assert results == [
        ("L0", Status.FAILURE),
        ("T_seq", Status.FAILURE),
        ("L2", Status.SUCCESS),
        ("T_fb", Status.SUCCESS),
    ]
    changes = [(e.variable, e.value) for e in cs_memory.events if isinstance(e, StateChange)]
    assert changes == [("Xb", True), ("Xd", False)]
    assert cs_memory.node_results()[2].action == "a2"


@pytest.mark.parametrize("xa, xb", [(False, False), (False, True), (True, False), (True, True)])
def test_case_study_all_initial_states(xa, xb, cs_tree, cs_sm):
    memory = run(cs_tree, cs_sm, casestudy.initial(xa, xb), 1)
    visited = [e.node for e in memory.node_results()]
    if xa:
        # L1 succeeds, so L2 is skipped
        assert visited == ["L0", "L1", "T_seq", "T_fb"]
        l1 = memory.node_results()[1]
        assert l1.action == ("a0" if xb else "a1")
    else:
        assert visited == ["L0", "T_seq", "L2", "T_fb"]


def _visited_ok(tree, results):
    """A node ran iff its execution condition held."""
    status = {e.node: e.status for e in results}
    for node in tree.nodes:
        parent = tree.parent(node)
        if parent is None:
            should = True
        elif tree.is_leftmost(node):
            should = parent.id in status
        else:
            left = status.get(tree.left_sibling(node).id)
            stop = Status.SUCCESS if parent.kind is Kind.SEQUENCE else Status.FAILURE
            should = left is stop
        assert (node.id in status) == should, node.id


@pytest.mark.parametrize("spec", SPECS, ids=str)
def test_tick_invariants(spec):
    tree, sm, init = random_domain(spec)
    memory = run(tree, sm, init, 3)
    for k in range(3):
        results = [e for e in tick_events(memory, k) if isinstance(e, NodeResult)]
        ids = [e.node for e in results]
        assert len(ids) == len(set(ids)), "one result per visited node"
        # completion order is post-order over the visited nodes
        post = [n.id for n in _post_order(tree.root)]
        assert ids == [n for n in post if n in ids]
        status = {e.node: e.status for e in results}
        for node in tree.composites:
            if node.id in status:
                ticked = [status[c.id] for c in node.children if c.id in status]
                assert status[node.id] == composed_status(node.kind, ticked)
        _visited_ok(tree, results)


def _post_order(node):
    for c in node.children:
        yield from _post_order(c)
    yield node


@given(seed=st.integers(0, 2**31), leaves=st.integers(2, 8), n=st.integers(2, 12))
def test_determinism(seed, leaves, n):
    tree, sm, init = random_domain(RandomDomainSpec(leaves, n, 0.5, seed))
    a, b = run(tree, sm, init, 2), run(tree, sm, init, 2)
    assert a.to_lines() == b.to_lines()


def test_noop_added_and_json_round_trip(cs_tree):
    assert cs_tree.node("L1").actions == ("a0", "a1", NOOP)
    again = BehaviourTree.from_json(cs_tree.to_json())
    assert again.to_json() == cs_tree.to_json()
    assert [n.id for n in again.nodes] == ["T_fb", "T_seq", "L0", "L1", "L2"]


def test_navigation(cs_tree):
    assert cs_tree.parent("L1").id == "T_seq"
    assert cs_tree.left_sibling("L2").id == "T_seq"
    assert cs_tree.is_leftmost("L0") and not cs_tree.is_leftmost("L1")
    assert [a.id for a in cs_tree.ancestors("L1")] == ["T_seq", "T_fb"]
    assert [n.id for n in cs_tree.leaves] == ["L0", "L1", "L2"]


@pytest.mark.parametrize(
    "build, message",
    [
        (lambda: sequence("S", condition("A", [], _always("Success"))), "at least two children"),
        (
            lambda: sequence("S", condition("A", [], _always("Success")), condition("A", [], _always("Success"))),
            "duplicate",
        ),
        (lambda: sequence("S", BTNode("A", Kind.CONDITION), condition("B", [], _always("Success"))), "no behaviour"),
        (
            lambda: sequence("S", condition("A", ["x", "x"], _always("Success")), condition("B", [], _always("Success"))),
            "repeats",
        ),
    ],
)
def test_tree_validation(build, message):
    with pytest.raises(ValidationError, match=message):
        BehaviourTree(build())


def test_tick_checks_model(cs_sm):
    tree = BehaviourTree(sequence("S", condition("A", ["nope"], _always("Success")), condition("B", [], _always("Success"))))
    with pytest.raises(MissingVariable):
        run(tree, cs_sm, casestudy.initial(), 1)
    writes_derived = BehaviourTree(
        sequence("S", action("A", [], ["Xc"], ["go"], RuleBehaviour("go", {"Xc": True})), condition("B", [], _always("Success")))
    )
    with pytest.raises(ValidationError, match="derived"):
        run(writes_derived, cs_sm, casestudy.initial(), 1)


def test_bad_decision_and_effect(cs_sm):
    bad_choice = BehaviourTree(
        sequence("S", action("A", [], ["Xa"], ["go"], RuleBehaviour("stay", {"Xa": True})), condition("B", [], _always("Success")))
    )
    with pytest.raises(RangeViolation):
        run(bad_choice, cs_sm, casestudy.initial(), 1)
    missing_effect = BehaviourTree(
        sequence("S", action("A", [], ["Xa"], ["go"], RuleBehaviour("go", {})), condition("B", [], _always("Success")))
    )
    with pytest.raises(ValidationError, match="effect"):
        run(missing_effect, cs_sm, casestudy.initial(), 1)


def test_running_propagates_and_ends_tick(cs_sm):
    tree = BehaviourTree(
        sequence(
            "S",
            action("A", [], ["Xa"], ["go"], RuleBehaviour("go", {"Xa": True}, "Running")),
            condition("B", [], _always("Success")),
        )
    )
    memory = new_memory(tree, cs_sm, casestudy.initial())
    state = casestudy.initial()
    assert tick(tree, cs_sm, state, memory) is Status.RUNNING
    assert [e.node for e in memory.node_results()] == ["A", "S"]
    # memoryless: the next tick starts again at the root
    tick(tree, cs_sm, state, memory)
    assert [e.node for e in memory.node_results()] == ["A", "S", "A", "S"]


def test_function_behaviour_registry():
    beh = register(FunctionBehaviour("test_flip", lambda a, z: "Success", lambda z: "flip", lambda a, z: {"Xa": not z["Xa"]}))
    assert behaviour_from_json("test_flip") is beh
    assert beh.effect("flip", {"Xa": True}) == {"Xa": False}
    with pytest.raises(ValidationError):
        behaviour_from_json("nope")
    with pytest.raises(ValidationError):
        behaviour_from_json({"status": "Success", "extra": 1})


def test_condition_must_not_run(cs_sm):
    tree = BehaviourTree(
        sequence("S", condition("A", [], _always("Running")), condition("B", [], _always("Success")))
    )
    with pytest.raises(ValidationError):
        run(tree, cs_sm, casestudy.initial(), 1)
