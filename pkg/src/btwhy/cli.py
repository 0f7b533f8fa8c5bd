"""Command-line interface.

Subcommands::

    btwhy run          execute ticks and write a trace
    btwhy build-graph  compile and export the explanation model
    btwhy explain      answer one contrastive query against a trace
    btwhy repl         interactive queries with follow-ups
    btwhy eval         target-recovery sweeps (random domains, serial recall)

Exit codes: 0 success, 1 invalid input or query, 2 no explanation within
``--dmax``, 3 a target-recovery sweep missed a target.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence, TextIO

from .bt import BehaviourTree, Status, tick
from .errors import BTWhyError, InvalidQuery, NoExplanationFound
from .model import ExplanationModel, build
from .search import (
    DEFAULT_BINS,
    DEFAULT_DMAX,
    Explanation,
    Query,
    SearchResult,
    build_items,
    counterfactual_search,
    follow_up,
    make_query,
    reconstruct,
)
from .state import StateModel, parse_assignment
from .trace import BASES, EpisodicMemory, new_memory

EXIT_OK, EXIT_INVALID, EXIT_NO_EXPLANATION, EXIT_MISSED = 0, 1, 2, 3
DOMAINS = ("casestudy", "recall")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# loading


def builtin_domain(name: str, seed: int = 0) -> tuple[BehaviourTree, StateModel, dict]:
    if name == "casestudy":
        from .domains import casestudy

        return casestudy.tree(), casestudy.state_model(), casestudy.initial()
    if name == "recall":
        from .domains import serial_recall

        sm = serial_recall.state_model(seed)
        return serial_recall.tree(), sm, serial_recall.initial(sm)
    raise UsageError(f"unknown domain {name!r}; choose from {DOMAINS}")


def data_path(name: str) -> Path:
    """Path of a file shipped in the package's ``data`` directory."""
    return Path(str(resources.files("btwhy") / "data" / name))


def load_domain(args) -> tuple[BehaviourTree, StateModel, dict]:
    initial: dict = {}
    if args.domain:
        if args.tree or args.model:
            raise UsageError("--domain cannot be combined with --tree/--model")
        tree, sm, initial = builtin_domain(args.domain, args.seed)
    else:
        if not (args.tree and args.model):
            raise UsageError("give --domain, or both --tree and --model")
        tree, sm = BehaviourTree.load(args.tree), StateModel.load(args.model)
    if getattr(args, "init", None):
        doc = json.loads(Path(args.init).read_text(encoding="utf-8"))
        initial.update(parse_assignment(sm, [f"{k}={_text(v)}" for k, v in doc.items()]))
    if getattr(args, "set", None):
        initial.update(parse_assignment(sm, args.set))
    missing = [n for n in sm.top_level if n not in initial]
    if missing:
        raise UsageError(f"initial state leaves top-level variables unset: {missing}")
    return tree, sm, sm.propagate({n: initial[n] for n in sm.top_level})


def _text(value: Any) -> str:
    return json.dumps(value) if isinstance(value, bool) else str(value)


def load_trace(args) -> tuple[EpisodicMemory, ExplanationModel]:
    memory = EpisodicMemory.load(args.trace)
    if args.tree or args.model:
        if not (args.tree and args.model):
            raise UsageError("--tree and --model go together")
        tree, sm = BehaviourTree.load(args.tree), StateModel.load(args.model)
    elif "tree" in memory.meta and "state_model" in memory.meta:
        tree = BehaviourTree.from_json(memory.meta["tree"])
        sm = StateModel.from_json(memory.meta["state_model"])
    else:
        raise UsageError("trace does not embed its tree and state model; pass --tree and --model")
    return memory, build(tree, sm, args.link_unwritten)


# ---------------------------------------------------------------------------
# output


def _jsonable(value: Any) -> Any:
    return value.value if isinstance(value, Status) else value


def render(result: SearchResult, query: Query, offset: int = 1) -> str:
    lines = [f"{query}: {len(result.explanations)} explanation(s) at depth {result.depth}"]
    for i, e in enumerate(result.explanations, offset):
        lines.append(f"  [{i}] {e}")
    return "\n".join(lines)


def result_json(result: SearchResult, query: Query) -> dict:
    return {
        "query": {
            "index": query.index,
            "items": [
                {"var": str(it.var), "fact": _jsonable(it.fact), "foil": [_jsonable(f) for f in it.foil]}
                for it in query.items
            ],
        },
        **result.to_json(),
    }


# ---------------------------------------------------------------------------
# commands


def cmd_run(args, out: TextIO) -> int:
    tree, sm, initial = load_domain(args)
    memory = new_memory(tree, sm, initial)
    memory.meta["seed"] = args.seed
    state = dict(initial)
    statuses = []
    for k in range(args.ticks):
        status = tick(tree, sm, state, memory)
        statuses.append(status.value)
        if not args.json:
            print(f"tick {k}: {status.value}", file=out)
    if args.out:
        memory.dump(args.out)
    if args.json:
        print(json.dumps({"ticks": statuses, "events": memory.last_index, "trace": args.out}), file=out)
    elif args.out:
        print(f"wrote {memory.last_index} events to {args.out}", file=out)
    else:
        print("\n".join(memory.to_lines()), file=out)
    return EXIT_OK


def cmd_build_graph(args, out: TextIO) -> int:
    if args.trace:
        _, model = load_trace(args)
    elif args.domain:
        tree, sm, _ = builtin_domain(args.domain, args.seed)
        model = build(tree, sm, args.link_unwritten)
    elif args.tree and args.model:
        model = build(BehaviourTree.load(args.tree), StateModel.load(args.model), args.link_unwritten)
    else:
        raise UsageError("give --trace, --domain, or both --tree and --model")
    text = model.to_dot() if args.format == "dot" else model.dumps() + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"{len(model.nodes)} nodes, {len(model.edges)} edges -> {args.out}", file=out)
    else:
        out.write(text)
    return EXIT_OK


def _query_from_args(args, model: ExplanationModel, memory: EpisodicMemory) -> Query:
    facts, foils, moment, basis = list(args.why or []), list(args.instead or []), args.at, args.basis
    if args.query_file:
        doc = json.loads(Path(args.query_file).read_text(encoding="utf-8"))
        for item in doc["items"]:
            facts.append(f"{item['var']}={_text(item['fact'])}")
            foils.extend(f"{item['var']}={_text(f)}" for f in item["foil"])
        moment = doc.get("at", moment)
        basis = doc.get("basis", basis)
    if not facts:
        raise InvalidQuery("no query given; use --why/--instead or --query-file")
    if moment is None:
        raise InvalidQuery("no moment given; use --at")
    k = memory.to_event_index(int(moment), basis)
    ctx = reconstruct(model, memory, k)
    return make_query(model, ctx, build_items(model, facts, foils))


def cmd_explain(args, out: TextIO) -> int:
    memory, model = load_trace(args)
    query = _query_from_args(args, model, memory)
    ctx = reconstruct(model, memory, query.index)
    try:
        result = counterfactual_search(model, ctx, query, args.dmax, args.bins)
    except NoExplanationFound as exc:
        if args.json:
            print(json.dumps({"error": "no-explanation", "message": str(exc),
                              "candidates_evaluated": exc.candidates_evaluated}), file=out)
        else:
            print(f"no explanation: {exc}", file=out)
        return EXIT_NO_EXPLANATION
    if args.json:
        print(json.dumps(result_json(result, query), indent=2), file=out)
    else:
        print(render(result, query), file=out)
    return EXIT_OK


def cmd_eval(args, out: TextIO) -> int:
    from .domains import recovery

    if args.kind == "random":
        grid = dict(recovery.FULL_GRID if args.full_sweep else recovery.DEFAULT_GRID)
        for key, flag in (("leaves", "leaves"), ("vars", "vars"), ("connectivity", "connectivity")):
            if getattr(args, flag):
                grid[key] = tuple(getattr(args, flag))
        seeds = args.seeds if args.seeds is not None else grid["seeds"]
        if seeds < 1:
            raise UsageError("--seeds must be positive")
        if any(n < 2 for n in grid["leaves"]) or any(n < 2 for n in grid["vars"]):
            raise UsageError("--leaves and --vars must be at least 2")
        if any(not 0.0 <= c <= 1.0 for c in grid["connectivity"]):
            raise UsageError("--connectivity values must lie in [0, 1]")
        cells = recovery.sweep(
            grid["leaves"], grid["vars"], grid["connectivity"],
            range(args.seed, args.seed + seeds), args.dmax, args.bins, args.link_unwritten,
        )
        report = recovery.report(cells)
    else:
        from .domains import serial_recall

        profiles = args.profiles or list(serial_recall.PROFILES)
        unknown = sorted(set(profiles) - set(serial_recall.PROFILES))
        if unknown:
            raise UsageError(f"unknown profiles {unknown}; choose from {sorted(serial_recall.PROFILES)}")
        seeds = args.seeds if args.seeds is not None else (50 if args.full_sweep else 10)
        if seeds < 1:
            raise UsageError("--seeds must be positive")
        report = recovery.recall_report(
            profiles, range(args.seed, args.seed + seeds), args.dmax, args.bins, args.link_unwritten
        )
    total = report["total"]
    if args.json:
        print(json.dumps(report, indent=2), file=out)
    else:
        print(recovery.format_report(report), file=out)
    return EXIT_MISSED if total["missed"] else EXIT_OK


# ---------------------------------------------------------------------------
# repl


REPL_HELP = """\
commands:
  why VAR=FACT [VAR=FACT ...] instead VAR=FOIL [VAR=FOIL ...] at MOMENT
  followup EXPLANATION# REASON#    ask why a reason held (numbers from the last answer)
  basis time|leaf|event            how MOMENT is counted (now: {basis})
  dmax N | bins N                  search limits (now: {dmax}, {bins})
  events                           list the trace
  help | quit"""


@dataclass
class Session:
    memory: EpisodicMemory
    model: ExplanationModel
    dmax: int = DEFAULT_DMAX
    bins: int = DEFAULT_BINS
    basis: str = "time"
    last_query: Query | None = None
    last: list[Explanation] = field(default_factory=list)

    def ask(self, query: Query) -> str:
        ctx = reconstruct(self.model, self.memory, query.index)
        result = counterfactual_search(self.model, ctx, query, self.dmax, self.bins)
        self.last_query, self.last = query, result.explanations
        return render(result, query)

    def handle(self, line: str) -> str | None:
        words = shlex.split(line)
        if not words:
            return ""
        cmd, rest = words[0].lower(), words[1:]
        if cmd in ("quit", "exit"):
            return None
        if cmd == "help":
            return REPL_HELP.format(basis=self.basis, dmax=self.dmax, bins=self.bins)
        if cmd == "events":
            return "\n".join(self.memory.to_lines()[1:])
        if cmd == "basis":
            if len(rest) != 1 or rest[0] not in BASES:
                raise InvalidQuery(f"basis must be one of {BASES}")
            self.basis = rest[0]
            return f"basis = {self.basis}"
        if cmd in ("dmax", "bins"):
            if len(rest) != 1 or not rest[0].isdigit() or int(rest[0]) < (1 if cmd == "dmax" else 2):
                raise InvalidQuery(f"{cmd} needs a positive integer")
            setattr(self, cmd, int(rest[0]))
            return f"{cmd} = {rest[0]}"
        if cmd == "why":
            return self.ask(self._parse_why(rest))
        if cmd == "followup":
            if len(rest) != 2 or not all(w.isdigit() for w in rest):
                raise InvalidQuery("usage: followup EXPLANATION# REASON#")
            if self.last_query is None:
                raise InvalidQuery("nothing to follow up yet")
            e, r = (int(w) for w in rest)
            if not 1 <= e <= len(self.last):
                raise InvalidQuery(f"explanation #{e} does not exist (have {len(self.last)})")
            explanation = self.last[e - 1]
            if not 1 <= r <= len(explanation.reasons):
                raise InvalidQuery(f"reason #{r} does not exist (have {len(explanation.reasons)})")
            return self.ask(follow_up(self.model, self.memory, self.last_query, explanation, r - 1))
        raise InvalidQuery(f"unknown command {cmd!r}; try help")

    def _parse_why(self, words: list[str]) -> Query:
        if "instead" not in words or "at" not in words:
            raise InvalidQuery("usage: why VAR=FACT ... instead VAR=FOIL ... at MOMENT")
        i, j = words.index("instead"), words.index("at")
        if not 0 < i < j or j != len(words) - 2:
            raise InvalidQuery("usage: why VAR=FACT ... instead VAR=FOIL ... at MOMENT")
        try:
            moment = int(words[j + 1])
        except ValueError:
            raise InvalidQuery(f"moment must be an integer, got {words[j + 1]!r}") from None
        k = self.memory.to_event_index(moment, self.basis)
        ctx = reconstruct(self.model, self.memory, k)
        return make_query(self.model, ctx, build_items(self.model, words[:i], words[i + 1 : j]))


def cmd_repl(args, out: TextIO, inp: TextIO | None = None) -> int:
    memory, model = load_trace(args)
    session = Session(memory, model, args.dmax, args.bins, args.basis)
    inp = inp or sys.stdin
    interactive = inp.isatty()
    print(f"{memory.ticks} tick(s), {memory.last_index} events. Type help for commands.", file=out)
    while True:
        if interactive:
            out.write("why> ")
            out.flush()
        line = inp.readline()
        if not line:
            return EXIT_OK
        try:
            reply = session.handle(line)
        except NoExplanationFound as exc:
            reply = f"no explanation: {exc}"
        except (BTWhyError, ValueError, KeyError) as exc:
            reply = f"error: {exc}"
        if reply is None:
            return EXIT_OK
        if reply:
            print(reply, file=out)


# ---------------------------------------------------------------------------
# argument parsing


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for generated domains (default 0)")
    common.add_argument("--dmax", type=int, default=DEFAULT_DMAX, help="maximum intervention size (default 3)")
    common.add_argument("--bins", type=int, default=DEFAULT_BINS, help="bins per continuous variable (default 10)")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--full-sweep", action="store_true", help="run the full evaluation grid")
    common.add_argument("--basis", choices=BASES, default="time", help="how query moments are counted")
    common.add_argument(
        "--link-unwritten",
        action="store_true",
        help="also chain versions that only record a read (every read becomes a copy of the previous version)",
    )

    def domain_args(p):
        p.add_argument("--domain", choices=DOMAINS, help="use a built-in domain")
        p.add_argument("--tree", help="behaviour-tree JSON file")
        p.add_argument("--model", help="state-model JSON file")

    parser = _Parser(prog="btwhy", description="Behaviour-tree execution and contrastive explanation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="execute ticks and record a trace")
    domain_args(p)
    p.add_argument("--init", help="JSON object with initial values")
    p.add_argument("--set", action="append", metavar="VAR=VALUE", help="override an initial value")
    p.add_argument("--ticks", type=int, default=1)
    p.add_argument("--out", "-o", help="trace file to write (default: print)")

    p = sub.add_parser("build-graph", parents=[common], help="compile and export the explanation model")
    domain_args(p)
    p.add_argument("--trace", help="take tree and model from a trace header")
    p.add_argument("--format", choices=("json", "dot"), default="json")
    p.add_argument("--out", "-o")

    p = sub.add_parser("explain", parents=[common], help="answer a contrastive query")
    p.add_argument("trace")
    p.add_argument("--tree")
    p.add_argument("--model")
    p.add_argument("--why", action="append", metavar="VAR=FACT")
    p.add_argument("--instead", action="append", metavar="VAR=FOIL")
    p.add_argument("--at", type=int, metavar="MOMENT")
    p.add_argument("--query-file")

    p = sub.add_parser("repl", parents=[common], help="interactive queries with follow-ups")
    p.add_argument("trace")
    p.add_argument("--tree")
    p.add_argument("--model")

    p = sub.add_parser("eval", parents=[common], help="target-recovery sweeps")
    p.add_argument("kind", choices=("random", "recall"))
    p.add_argument("--leaves", type=int, nargs="+")
    p.add_argument("--vars", type=int, nargs="+")
    p.add_argument("--connectivity", type=float, nargs="+")
    p.add_argument("--seeds", type=int, help="seeds per cell (random) or per profile (recall)")
    p.add_argument("--profiles", nargs="+")
    return parser


COMMANDS = {
    "run": cmd_run,
    "build-graph": cmd_build_graph,
    "explain": cmd_explain,
    "repl": cmd_repl,
    "eval": cmd_eval,
}


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    args = make_parser().parse_args(argv)
    out = out or sys.stdout
    if args.dmax < 1 or args.bins < 2:
        print("btwhy: error: --dmax must be >= 1 and --bins >= 2", file=sys.stderr)
        return EXIT_INVALID
    if getattr(args, "ticks", 0) < 0:
        print("btwhy: error: --ticks must be >= 0", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args, out)
    except (UsageError, BTWhyError, ValueError, KeyError, OSError) as exc:
        print(f"btwhy: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
