"""Behaviour-tree execution with contrastive, counterfactual explanations.

Typical use::

    from btwhy import E, build, run, why
    from btwhy.domains import casestudy

    tree, sm = casestudy.tree(), casestudy.state_model()
    memory = run(tree, sm, casestudy.initial(), ticks=1)
    model = build(tree, sm)
    result = why(model, memory, [(E("L1"), False, [True])], moment=2)
    print(result.explanations[0])
"""

from .bt import BehaviourTree, BTNode, RuleBehaviour, Status, action, condition, fallback, sequence, tick
from .errors import BTWhyError, InvalidQuery, NoExplanationFound, NoPreviousTick
from .model import D, E, ExplanationModel, R, Var, X, build, parse_var
from .search import Explanation, Query, SearchResult, counterfactual_search, do, follow_up, make_query, reconstruct, why
from .state import Boolean, Categorical, Continuous, StateModel, StateVariable, boolean_model
from .trace import EpisodicMemory, run

__version__ = "0.1.0"

__all__ = [
    "BTNode",
    "BTWhyError",
    "BehaviourTree",
    "Boolean",
    "Categorical",
    "Continuous",
    "D",
    "E",
    "EpisodicMemory",
    "Explanation",
    "ExplanationModel",
    "InvalidQuery",
    "NoExplanationFound",
    "NoPreviousTick",
    "Query",
    "R",
    "RuleBehaviour",
    "SearchResult",
    "StateModel",
    "StateVariable",
    "Status",
    "Var",
    "X",
    "action",
    "boolean_model",
    "build",
    "condition",
    "counterfactual_search",
    "do",
    "fallback",
    "follow_up",
    "make_query",
    "parse_var",
    "reconstruct",
    "run",
    "sequence",
    "tick",
    "why",
]
