"""The five-node worked example: a fallback over a guarded sequence and a recovery action.

Tree::

    T_fb (fallback)
    ├── T_seq (sequence)
    │   ├── L0  condition, reads Xa; succeeds iff Xa
    │   └── L1  action, reads Xa, Xc; writes Xb; chooses a0 iff Xc
    └── L2      action, reads Xd; writes Xb; chooses a2 iff Xd

State graph: ``Xc = Xa and Xb``, ``Xd = not Xb``. Both actions always
succeed; L1 sets ``Xb`` to whether it chose a0, L2 to whether it chose a2.
"""

from __future__ import annotations

from ..bt import BehaviourTree, RuleBehaviour, action, condition, fallback, sequence
from ..state import boolean_model

FALLBACK, SEQUENCE, L0, L1, L2 = "T_fb", "T_seq", "L0", "L1", "L2"
DEFAULT_INITIAL = {"Xa": False, "Xb": False}


def _v(name):
    return {"var": name}


def tree() -> BehaviourTree:
    l0 = condition(L0, ["Xa"], RuleBehaviour(status={"if": [_v("Xa"), "Success", "Failure"]}))
    l1 = action(
        L1,
        ["Xa", "Xc"],
        ["Xb"],
        ["a0", "a1"],
        RuleBehaviour(
            decide={"if": [_v("Xc"), "a0", "a1"]},
            effect={"Xb": {"eq": [_v("action"), "a0"]}},
        ),
    )
    l2 = action(
        L2,
        ["Xd"],
        ["Xb"],
        ["a2", "a3"],
        RuleBehaviour(
            decide={"if": [_v("Xd"), "a2", "a3"]},
            effect={"Xb": {"eq": [_v("action"), "a2"]}},
        ),
    )
    return BehaviourTree(fallback(FALLBACK, sequence(SEQUENCE, l0, l1), l2))


def state_model():
    return boolean_model(
        ["Xa", "Xb", "Xc", "Xd"],
        {"Xc": {"and": [_v("Xa"), _v("Xb")]}, "Xd": {"not": _v("Xb")}},
    )


def initial(xa: bool = False, xb: bool = False) -> dict:
    """Full initial state from the two top-level values."""
    return state_model().propagate({"Xa": xa, "Xb": xb})
