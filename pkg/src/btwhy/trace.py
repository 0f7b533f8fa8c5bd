"""Episodic memory of behaviour-tree executions.

The memory is an append-only log. Index 0 is the initial full state
assignment; events occupy indices 1, 2, ... without gaps. Each event also
carries a *time*: the number of node results logged so far. A node result
advances time by one; state changes carry the time of the node result that
follows them, and tick boundaries carry the time of the last node result.

Three ways of naming a moment are supported (:func:`to_event_index`):

``time``
    node-result count, composites included (the default),
``leaf``
    leaf-result count,
``event``
    raw event index.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Union

from .bt import NOOP, Status
from .errors import IndexMismatch, OutOfRange, ValidationError


@dataclass(frozen=True)
class NodeResult:
    index: int
    time: int
    node: str
    status: Status
    action: str | None = None
    leaf: bool = True


@dataclass(frozen=True)
class StateChange:
    index: int
    time: int
    variable: str
    value: Any


@dataclass(frozen=True)
class TickBoundary:
    index: int
    time: int
    tick: int


Event = Union[NodeResult, StateChange, TickBoundary]
_KINDS = {"node": NodeResult, "state": StateChange, "tick": TickBoundary}
_NAMES = {cls: name for name, cls in _KINDS.items()}
BASES = ("time", "leaf", "event")


@dataclass
class EpisodicMemory:
    initial: dict[str, Any]
    events: list[Event] = field(default_factory=list)
    leaf_ids: frozenset[str] | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.events) + 1

    @property
    def last_index(self) -> int:
        return len(self.events)

    @property
    def time(self) -> int:
        return self.events[-1].time if self.events else 0

    @property
    def ticks(self) -> int:
        return sum(isinstance(e, TickBoundary) for e in self.events)

    def append(self, event: Event) -> None:
        if event.index != len(self):
            raise IndexMismatch(f"expected event index {len(self)}, got {event.index}")
        if isinstance(event, NodeResult) and event.status is Status.INVALID:
            raise ValidationError("only executed nodes are logged; Invalid is not a loggable status")
        self.events.append(event)

    # -- convenience recorders used by the executor ------------------------

    def record_node(self, node: str, status: Status, action: str | None = None) -> NodeResult:
        leaf = action is not None or self.leaf_ids is None or node in self.leaf_ids
        ev = NodeResult(len(self), self.time + 1, node, Status(status), action, leaf)
        self.append(ev)
        return ev

    def record_state(self, variable: str, value: Any) -> StateChange:
        ev = StateChange(len(self), self.time + 1, variable, value)
        self.append(ev)
        return ev

    def record_tick_boundary(self) -> TickBoundary:
        ev = TickBoundary(len(self), self.time, self.ticks)
        self.append(ev)
        return ev

    # -- queries -----------------------------------------------------------

    def event(self, index: int) -> Event | None:
        """Event at ``index``; ``None`` for index 0 (the initial snapshot)."""
        self._check(index)
        return self.events[index - 1] if index else None

    def _check(self, k: int) -> None:
        if not 0 <= k <= self.last_index:
            raise OutOfRange(f"index {k} outside [0, {self.last_index}]")

    def node_results(self) -> list[NodeResult]:
        return [e for e in self.events if isinstance(e, NodeResult)]

    def tick_of(self, k: int) -> int:
        """Tick number in effect at event index ``k`` (a boundary opens the next tick)."""
        self._check(k)
        return sum(isinstance(e, TickBoundary) for e in self.events[:k])

    def tick_start(self, k: int) -> int:
        """Index of the boundary that opened the tick containing ``k`` (0 for the first)."""
        self._check(k)
        for i in range(k, 0, -1):
            if isinstance(self.events[i - 1], TickBoundary):
                return i
        return 0

    def tick_range(self, tick: int) -> tuple[int, int]:
        """``(start, end)`` event indices of a tick: opening boundary (or 0) and closing boundary."""
        bounds = [e.index for e in self.events if isinstance(e, TickBoundary)]
        if not 0 <= tick < len(bounds):
            raise OutOfRange(f"tick {tick} not recorded (have {len(bounds)})")
        start = bounds[tick - 1] if tick else 0
        return start, bounds[tick]

    def state_at(self, k: int) -> dict[str, Any]:
        self._check(k)
        state = dict(self.initial)
        for e in self.events[:k]:
            if isinstance(e, StateChange):
                state[e.variable] = e.value
        return state

    def slice_until(self, k: int) -> tuple[dict[str, Any], dict[str, tuple[Status, str | None]], int]:
        """Replay the log up to and including event ``k``.

        Returns the state, the ``(status, action)`` of every node that has
        completed in the current tick (absent nodes are Invalid), and the
        tick number.
        """
        self._check(k)
        state = dict(self.initial)
        statuses: dict[str, tuple[Status, str | None]] = {}
        tick = 0
        for e in self.events[:k]:
            if isinstance(e, StateChange):
                state[e.variable] = e.value
            elif isinstance(e, NodeResult):
                statuses[e.node] = (e.status, e.action)
            else:
                statuses = {}
                tick += 1
        return state, statuses, tick

    def to_event_index(self, moment: int, basis: str = "time") -> int:
        """Convert a moment in the given basis into an event index."""
        if basis == "event":
            self._check(moment)
            return moment
        if basis not in BASES:
            raise ValueError(f"unknown time basis {basis!r}; expected one of {BASES}")
        if moment == 0:
            return 0
        count = 0
        for e in self.events:
            if isinstance(e, NodeResult) and (basis == "time" or e.leaf):
                count += 1
                if count == moment:
                    return e.index
        raise OutOfRange(f"{basis} {moment} not reached (log has {count})")

    def moments(self, index: int) -> dict[str, int]:
        """The three names (time, leaf, event) of event index ``index``."""
        self._check(index)
        t = leaf = 0
        for e in self.events[:index]:
            if isinstance(e, NodeResult):
                t += 1
                leaf += e.leaf
        return {"time": t, "leaf": leaf, "event": index}

    # -- serialisation -----------------------------------------------------

    def header(self) -> dict:
        return {"type": "header", "initial": _encode(self.initial), **self.meta}

    def to_lines(self) -> list[str]:
        lines = [json.dumps(self.header(), sort_keys=True)]
        for e in self.events:
            doc = {"type": _NAMES[type(e)], **_encode(asdict(e))}
            lines.append(json.dumps(doc, sort_keys=True))
        return lines

    def dump(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "EpisodicMemory":
        it = (line for line in lines if line.strip())
        try:
            header = json.loads(next(it))
        except StopIteration:
            raise ValidationError("empty trace") from None
        if header.get("type") != "header":
            raise ValidationError("trace must start with a header line")
        meta = {k: v for k, v in header.items() if k not in ("type", "initial")}
        leaf_ids = meta.get("leaf_ids")
        mem = cls(dict(header["initial"]), leaf_ids=frozenset(leaf_ids) if leaf_ids else None, meta=meta)
        for line in it:
            doc = json.loads(line)
            kind = _KINDS[doc.pop("type")]
            if kind is NodeResult:
                doc["status"] = Status(doc["status"])
            mem.append(kind(**doc))
        return mem

    @classmethod
    def load(cls, path: str | Path) -> "EpisodicMemory":
        with open(path, encoding="utf-8") as fh:
            return cls.from_lines(fh)


def _encode(obj: Any) -> Any:
    if isinstance(obj, Status):
        return obj.value
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    return obj


def digest(doc: Mapping) -> str:
    """Short stable identifier for a JSON document."""
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def new_memory(tree, model, initial: Mapping[str, Any], embed: bool = True) -> EpisodicMemory:
    """Empty memory for a run of ``tree`` over ``model`` from a full initial state."""
    model.check_assignment(initial)
    tree_doc, model_doc = tree.to_json(), model.to_json()
    meta = {
        "tree_id": digest(tree_doc),
        "model_id": digest(model_doc),
        "leaf_ids": sorted(n.id for n in tree.leaves),
    }
    if embed:
        meta["tree"] = tree_doc
        meta["state_model"] = model_doc
    return EpisodicMemory(dict(initial), leaf_ids=frozenset(meta["leaf_ids"]), meta=meta)


def run(tree, model, initial: Mapping[str, Any], ticks: int = 1, embed: bool = True) -> EpisodicMemory:
    """Execute ``ticks`` ticks from ``initial`` and return the memory."""
    from .bt import tick

    memory = new_memory(tree, model, initial, embed)
    state = dict(initial)
    for _ in range(ticks):
        tick(tree, model, state, memory)
    return memory


__all__ = [
    "NOOP",
    "EpisodicMemory",
    "Event",
    "NodeResult",
    "StateChange",
    "TickBoundary",
    "new_memory",
    "run",
]
