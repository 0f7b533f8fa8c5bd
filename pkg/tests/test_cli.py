import io
import json
import shutil
import subprocess
import sys

import pytest

from btwhy import cli
from btwhy.trace import EpisodicMemory


def exit_code(argv):
    try:
        return cli.main(argv, out=io.StringIO())
    except SystemExit as exc:
        return exc.code


def call(*argv, stdin=None, monkeypatch=None):
    out = io.StringIO()
    if stdin is not None:
        monkeypatch.setattr(sys, "stdin", io.StringIO(stdin))
    code = cli.main(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture
def files():
    d = cli.data_path("")
    return {k: str(d / f"casestudy_{k}.json") for k in ("tree", "model", "init")}


@pytest.fixture
def trace(tmp_path, files):
    path = tmp_path / "cs.jsonl"
    code, _ = call("run", "--tree", files["tree"], "--model", files["model"], "--init", files["init"], "--out", str(path))
    assert code == 0
    return str(path)


def test_run_case_study_files(trace):
    memory = EpisodicMemory.load(trace)
    second = memory.event(2)
    assert (second.node, second.status.value) == ("T_seq", "Failure")
    first = memory.event(1)
    assert (first.node, first.status.value) == ("L0", "Failure")
    assert memory.meta["seed"] == 0


def test_run_prints_root_status(files):
    code, text = call("run", "--domain", "casestudy", "--ticks", "2")
    assert code == 0
    assert text.splitlines()[:2] == ["tick 0: Success", "tick 1: Success"]


def test_run_zero_ticks(tmp_path):
    path = tmp_path / "t.jsonl"
    assert call("run", "--domain", "casestudy", "--ticks", "0", "-o", str(path))[0] == 0
    lines = path.read_text().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["type"] == "header"


def test_run_is_reproducible(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for p in (a, b):
        call("run", "--domain", "recall", "--seed", "7", "--ticks", "2", "-o", str(p))
    assert a.read_bytes() == b.read_bytes()


def test_run_overrides(tmp_path):
    path = tmp_path / "t.jsonl"
    call("run", "--domain", "casestudy", "--set", "Xa=true", "-o", str(path))
    memory = EpisodicMemory.load(path)
    assert memory.initial["Xa"] is True and memory.initial["Xc"] is False


@pytest.mark.parametrize(
    "argv",
    [
        ["run"],
        ["run", "--domain", "casestudy", "--tree", "x.json"],
        ["run", "--domain", "casestudy", "--set", "Xa=maybe"],
        ["run", "--domain", "casestudy", "--set", "Zz=true"],
        ["run", "--domain", "casestudy", "--ticks", "-1"],
        ["run", "--tree", "missing.json", "--model", "missing.json"],
        ["run", "--domain", "nowhere"],
        ["frobnicate"],
    ],
)
def test_run_usage_errors(argv, capsys):
    assert exit_code(argv) == 1
    assert "error" in capsys.readouterr().err


def test_explain_table_one(trace):
    code, text = call("explain", trace, "--why", "E[L0]=true", "--instead", "E[L0]=false", "--at", "1")
    assert code == 0
    lines = text.splitlines()
    assert "2 explanation(s) at depth 1" in lines[0]
    assert lines[1:] == [
        "  [1] ⟨E[T_fb]=True, (E[T_fb]=False ⇒ E[L0]=False)⟩",
        "  [2] ⟨E[T_seq]=True, (E[T_seq]=False ⇒ E[L0]=False)⟩",
    ]


def test_explain_json_and_determinism(trace):
    argv = ["explain", trace, "--why", "d[L2]=a2", "--instead", "d[L2]=a3", "--at", "3", "--json"]
    code, text = call(*argv)
    assert code == 0
    doc = json.loads(text)
    assert [e["reasons"][0]["var"] for e in doc["explanations"]] == ["Xb^(0)", "Xb^(1)", "Xd^(0)"]
    assert doc["query"]["items"] == [{"var": "d[L2]", "fact": "a2", "foil": ["a3"]}]
    assert call(*argv)[1] == text


def test_explain_query_file(trace, tmp_path):
    q = tmp_path / "q.json"
    q.write_text(json.dumps({"items": [{"var": "Xc^(0)", "fact": False, "foil": [True]}], "at": 2}))
    code, text = call("explain", trace, "--query-file", str(q))
    assert code == 0 and "depth 2" in text
    assert "Xb^(0)=False ∧ Xa^(1)=False" in text


def test_explain_bases(trace):
    code, text = call("explain", trace, "--why", "d[L2]=a2", "--instead", "d[L2]=a3", "--at", "2", "--basis", "leaf")
    assert code == 0 and "@event 5" in text


def test_explain_link_unwritten(trace):
    code, text = call(
        "explain", trace, "--why", "Xc^(0)=false", "--instead", "Xc^(0)=true", "--at", "2", "--link-unwritten"
    )
    assert code == 0 and "2 explanation(s)" in text


@pytest.mark.parametrize(
    "extra",
    [
        ["--why", "r[L0]=Success", "--instead", "r[L0]=Failure", "--at", "1"],
        ["--why", "r[L0]=Failure", "--instead", "r[L0]=Failure", "--at", "1"],
        ["--why", "r[L9]=Failure", "--instead", "r[L9]=Success", "--at", "1"],
        ["--why", "r[L0]=Failure", "--at", "1"],
        ["--why", "r[L0]=Failure", "--instead", "r[L0]=Success"],
        ["--why", "r[L0]=Failure", "--instead", "r[L0]=Success", "--at", "40"],
        [],
    ],
)
def test_explain_invalid(trace, extra, capsys):
    code, _ = call("explain", trace, *extra)
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_explain_no_explanation(trace):
    code, text = call("explain", trace, "--why", "E[T_fb]=true", "--instead", "E[T_fb]=false", "--at", "4")
    assert code == 2 and "no explanation" in text
    code, text = call("explain", trace, "--why", "Xc^(0)=false", "--instead", "Xc^(0)=true", "--at", "2", "--dmax", "1", "--json")
    assert code == 2 and json.loads(text)["error"] == "no-explanation"


def test_explain_needs_model(tmp_path, files):
    path = tmp_path / "bare.jsonl"
    call("run", "--domain", "casestudy", "-o", str(path))
    doc = [json.loads(line) for line in path.read_text().splitlines()]
    del doc[0]["tree"], doc[0]["state_model"]
    path.write_text("\n".join(json.dumps(d) for d in doc))
    argv = ["explain", str(path), "--why", "r[L0]=Failure", "--instead", "r[L0]=Success", "--at", "1"]
    assert call(*argv)[0] == 1
    assert call(*argv, "--tree", files["tree"], "--model", files["model"])[0] == 0


def test_build_graph(tmp_path, trace):
    code, text = call("build-graph", "--domain", "casestudy")
    doc = json.loads(text)
    assert code == 0 and len(doc["nodes"]) == 19
    code, text = call("build-graph", "--trace", trace, "--format", "dot")
    assert code == 0 and text.startswith("digraph")
    out = tmp_path / "g.json"
    code, text = call("build-graph", "--domain", "recall", "-o", str(out))
    assert code == 0 and "76 nodes" in text and json.loads(out.read_text())["nodes"]
    assert call("build-graph")[0] == 1


REPL_SCRIPT = """\
help
why E[L1]=false instead E[L1]=true at 2
followup 2 1
followup 1 1
followup 9 9
followup x
why r[L0]=Success instead r[L0]=Failure at 1
why nonsense
basis leaf
why d[L2]=a2 instead d[L2]=a3 at 2
dmax 0
bins 4
events
frobnicate
quit
why E[L0]=true instead E[L0]=false at 1
"""


def test_repl_session(trace, monkeypatch):
    code, text = call("repl", trace, stdin=REPL_SCRIPT, monkeypatch=monkeypatch)
    assert code == 0
    assert "followup EXPLANATION# REASON#" in text
    assert "⟨r[L0]=Failure, (r[L0]=Success ⇒ E[L1]=True)⟩" in text
    # follow-up on r[L0]=Failure digs down to Xa^(0)
    assert "why(r[L0]=Failure @event 2; r[L0]∈{Success}): 1 explanation(s)" in text
    assert "there is no earlier tick" in text
    assert "explanation #9 does not exist" in text
    assert "usage: followup" in text
    assert "does not hold" in text
    assert "basis = leaf" in text
    assert "d[L2]=a2 @event 5" in text
    assert "dmax needs a positive integer" in text
    assert "bins = 4" in text
    assert "unknown command" in text
    # nothing after quit runs
    assert "E[L0]=True @" not in text


def test_repl_ends_at_eof(trace, monkeypatch):
    code, text = call("repl", trace, stdin="why E[T_fb]=true instead E[T_fb]=false at 4\n", monkeypatch=monkeypatch)
    assert code == 0 and "no explanation" in text


def test_eval_random_small():
    code, text = call("eval", "random", "--leaves", "2", "--vars", "4", "--seeds", "3")
    assert code == 0
    total = [line for line in text.splitlines() if line.strip().startswith("total")][0]
    assert "1.000" in total


def test_eval_random_json():
    code, text = call("eval", "random", "--leaves", "2", "4", "--vars", "4", "--connectivity", "0.5", "--seeds", "2", "--json")
    doc = json.loads(text)
    assert code == 0 and doc["total"]["recovery_rate"] == 1.0
    assert {(r["vars"], r["leaves"]) for r in doc["rows"]} == {(4, 2), (4, 4)}


def test_eval_recall():
    code, text = call("eval", "recall", "--profiles", "frustrated", "--json")
    doc = json.loads(text)
    assert code == 0
    assert doc["rows"][0]["profile"] == "frustrated" and doc["total"]["recovery_rate"] == 1.0


@pytest.mark.parametrize(
    "argv",
    [
        ["eval", "random", "--leaves", "1"],
        ["eval", "random", "--connectivity", "1.5"],
        ["eval", "random", "--seeds", "0"],
        ["eval", "recall", "--profiles", "sleepy"],
        ["eval", "random", "--dmax", "0"],
        ["eval", "unknown"],
    ],
)
def test_eval_usage_errors(argv):
    assert exit_code(argv) == 1


def test_eval_missed_exit_code(monkeypatch):
    from btwhy.domains import recovery

    real = recovery.target_recovery

    def always_miss(*args, **kwargs):
        out = real(*args, **kwargs)
        if out.kind == recovery.RECOVERED:
            out.kind = recovery.MISSED
        return out

    monkeypatch.setattr(recovery, "target_recovery", always_miss)
    code, _ = call("eval", "random", "--leaves", "2", "--vars", "4", "--seeds", "1")
    assert code == 3


@pytest.mark.skipif(shutil.which("btwhy") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["btwhy", "run", "--domain", "casestudy"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("tick 0: Success")
    proc = subprocess.run(["btwhy", "explain", "nope.jsonl", "--why", "a=b"], capture_output=True, text=True)
    assert proc.returncode == 1
