"""A simplified serial-recall game between a robot and a user.

Per round the robot makes sure the user is paying attention, picks a
sequence difficulty, presents the sequence, evaluates the answer (praising
or encouraging) and then either repeats the sequence or moves on.

The user is four continuous dimensions in ``[0, 1]``: Attention, Memory,
Reactivity and Frustration. They drive the derived variables Engagement,
Confusion, ResponseTime and Accuracy. Each derived function adds a small
offset from :func:`btwhy.expr.noise` keyed by the domain seed and the
variable name, so a seed fixes one deterministic "user on that day".
"""

from __future__ import annotations

from ..bt import BehaviourTree, RuleBehaviour, action, condition, fallback, sequence
from ..state import Boolean, Categorical, Continuous, StateModel, StateVariable

NOISE = 0.05
USER = ("Attention", "Memory", "Reactivity", "Frustration")

DEFAULT_PROFILE = {"Attention": 0.8, "Memory": 0.8, "Reactivity": 0.8, "Frustration": 0.0}
PROFILES = {
    "frustrated": ("Frustration", 1.0),
    "no_attention": ("Attention", 0.0),
    "no_reactivity": ("Reactivity", 0.0),
    "no_memory": ("Memory", 0.0),
}


def _v(name):
    return {"var": name}


def _clip(expr, lo=0.0, hi=1.0):
    return {"clip": [expr, lo, hi]}


def _long(then, otherwise=0.0):
    return {"if": [{"eq": [_v("Difficulty"), "long"]}, then, otherwise]}


def state_model(seed: int = 0) -> StateModel:
    def noisy(name, expr):
        return {"add": [expr, {"noise": [seed, NOISE, name]}]}

    unit = Continuous(0.0, 1.0)
    variables = {n: StateVariable(n, unit) for n in USER}
    variables["Difficulty"] = StateVariable("Difficulty", Categorical(("short", "long")))
    for flag in ("Presented", "Praised", "Repeat"):
        variables[flag] = StateVariable(flag, Boolean())
    for name in ("Engagement", "Confusion", "Accuracy"):
        variables[name] = StateVariable(name, unit)
    variables["ResponseTime"] = StateVariable("ResponseTime", Continuous(0.0, 3.0))

    functions = {
        "Engagement": _clip(noisy("Engagement", {"sub": [_v("Attention"), {"mul": [0.6, _v("Frustration")]}]})),
        "Confusion": _clip(
            noisy(
                "Confusion",
                {
                    "add": [
                        {"mul": [0.8, {"sub": [1.0, _v("Memory")]}]},
                        {"mul": [0.3, _v("Frustration")]},
                        _long(0.1),
                    ]
                },
            )
        ),
        "ResponseTime": _clip(
            noisy(
                "ResponseTime",
                {"sub": [3.0, {"add": [{"mul": [2.0, _v("Reactivity")]}, {"mul": [0.5, _v("Engagement")]}]}]},
            ),
            0.0,
            3.0,
        ),
        "Accuracy": _clip(
            noisy(
                "Accuracy",
                {
                    "sub": [
                        {"mul": [_v("Memory"), {"add": [0.5, {"mul": [0.5, _v("Engagement")]}]}]},
                        _long(0.15),
                    ]
                },
            )
        ),
    }
    edges = [
        ("Attention", "Engagement"),
        ("Frustration", "Engagement"),
        ("Memory", "Confusion"),
        ("Frustration", "Confusion"),
        ("Difficulty", "Confusion"),
        ("Reactivity", "ResponseTime"),
        ("Engagement", "ResponseTime"),
        ("Memory", "Accuracy"),
        ("Engagement", "Accuracy"),
        ("Difficulty", "Accuracy"),
    ]
    return StateModel(variables, edges, functions)


def _above(name, threshold):
    return {"if": [{"ge": [_v(name), threshold]}, "Success", "Failure"]}


def _set(name, value, acts=None):
    return RuleBehaviour(decide=acts, effect={name: value})


def tree() -> BehaviourTree:
    ensure_attention = fallback(
        "EnsureAttention",
        condition("IsEngaged", ["Engagement"], RuleBehaviour(status=_above("Engagement", 0.4))),
        action(
            "RecaptureAttention",
            ["Engagement", "Attention"],
            ["Attention"],
            ["call_name", "gesture"],
            RuleBehaviour(
                decide={"if": [{"lt": [_v("Engagement"), 0.2]}, "call_name", "gesture"]},
                effect={
                    "Attention": _clip(
                        {"add": [_v("Attention"), {"if": [{"eq": [_v("action"), "call_name"]}, 0.5, 0.3]}]}
                    )
                },
            ),
        ),
    )
    set_sequence = action(
        "SetSequence",
        ["Engagement"],
        ["Difficulty"],
        ["pick_short", "pick_long"],
        RuleBehaviour(
            decide={"if": [{"ge": [_v("Engagement"), 0.6]}, "pick_long", "pick_short"]},
            effect={"Difficulty": {"if": [{"eq": [_v("action"), "pick_long"]}, "long", "short"]}},
        ),
    )
    present = action("PresentSequence", ["Difficulty"], ["Presented"], ["present"], _set("Presented", True, "present"))
    evaluate = fallback(
        "Evaluate",
        sequence(
            "CorrectResponse",
            condition(
                "AnsweredInTime",
                ["ResponseTime"],
                RuleBehaviour(status={"if": [{"le": [_v("ResponseTime"), 1.5]}, "Success", "Failure"]}),
            ),
            condition("AnsweredCorrectly", ["Accuracy"], RuleBehaviour(status=_above("Accuracy", 0.5))),
            action("Praise", [], ["Praised"], ["praise"], _set("Praised", True, "praise")),
        ),
        action(
            "Encourage",
            ["Frustration"],
            ["Frustration"],
            ["encourage", "calm_down"],
            RuleBehaviour(
                decide={"if": [{"gt": [_v("Frustration"), 0.5]}, "calm_down", "encourage"]},
                effect={
                    "Frustration": _clip(
                        {"sub": [_v("Frustration"), {"if": [{"eq": [_v("action"), "calm_down"]}, 0.3, 0.1]}]}
                    )
                },
            ),
        ),
    )
    repeat_or_end = fallback(
        "RepeatOrEnd",
        sequence(
            "RepeatBranch",
            condition("IsConfused", ["Confusion"], RuleBehaviour(status=_above("Confusion", 0.5))),
            action("RepeatSequence", [], ["Repeat"], ["repeat"], _set("Repeat", True, "repeat")),
        ),
        action(
            "EndRound",
            ["Frustration"],
            ["Repeat"],
            ["next_sequence", "end_session"],
            RuleBehaviour(
                decide={"if": [{"ge": [_v("Frustration"), 0.7]}, "end_session", "next_sequence"]},
                effect={"Repeat": False},
            ),
        ),
    )
    return BehaviourTree(sequence("Session", ensure_attention, set_sequence, present, evaluate, repeat_or_end))


def initial(sm: StateModel, profile: str | None = None) -> dict:
    """Full initial state for the default user or one perturbed profile."""
    user = dict(DEFAULT_PROFILE)
    if profile is not None:
        name, value = PROFILES[profile]
        user[name] = value
    top = {**user, "Difficulty": "short", "Presented": False, "Praised": False, "Repeat": False}
    return sm.propagate(top)


def domain(seed: int = 0) -> tuple[BehaviourTree, StateModel, dict]:
    """Tree, state model and the perturbation profiles ``{name: (variable, value)}``."""
    return tree(), state_model(seed), dict(PROFILES)
