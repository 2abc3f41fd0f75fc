"""Golden-file tests for every subcommand.

Inputs live in tests/data, expected stdout in tests/golden.  Set
HOSTREE_REGEN=1 to rewrite the golden files after an intended change, then
review the diff; the semantic checks below do not depend on them.
"""

import json
import os
from pathlib import Path

import pytest

from hostree import op_dag as od
from hostree import stack_tree as tr
from hostree.cli import run

from _oracles import self_shuffles

HERE = Path(__file__).parent
DATA = HERE / "data"
GOLDEN = HERE / "golden"
REGEN = os.environ.get("HOSTREE_REGEN", "") not in ("", "0")

CASES = [
    ("check_dag", ["check-dag", "fig2.dag"], 0),
    ("apply", ["apply", "fig2.dag", "fig2_tree.txt"], 0),
    ("apply_leaf", ["apply", "fig2.dag", "fig2_tree.txt", "--leaf", "1"], 0),
    ("reach", ["reach", "shuffle.json", "--depth", "2"], 0),
    ("reach_dot", ["reach", "shuffle.json", "--depth", "1", "--dot"], 0),
    ("traces", ["traces", "shuffle.json", "--maxlen", "4"], 0),
    ("accepts_yes", ["accepts", "shuffle.json", "abab"], 0),
    ("accepts_no", ["accepts", "shuffle.json", "abba"], 2),
    ("auto_union", ["auto-union", "rew_ab.json", "rew_ba.json"], 0),
    ("auto_intersect", ["auto-intersect", "rew_ab.json", "rew_ab.json"], 0),
    ("auto_star", ["auto-star", "rew_ab.json"], 0),
    ("auto_star_dot", ["auto-star", "rew_ab.json", "--dot"], 0),
    ("auto_accepts", ["auto-accepts", "fig2_auto.json", "fig2.dag"], 0),
    ("auto_accepts_list", ["auto-accepts", "rew_ab.json", "--max-vertices", "4"], 0),
    ("auto_normalize", ["auto-normalize", "rew_ab.json"], 0),
    ("relates_yes", ["relates", "fig2_auto.json", "fig2_tree.txt", "fig2_result_c.txt"], 0),
    ("relates_no", ["relates", "rew_ab.json", "ab_tree.txt", "ab_target.txt", "--budget", "1"], 2),
    ("relates_unknown", ["relates", "rew_ab.json", "ab_tree.txt", "ab_target.txt", "--max-configs", "1"], 3),
    ("encode", ["encode", "fig1_tree.json"], 0),
    ("decode", ["decode", "fig1_leaves.txt"], 0),
    ("decode_invalid", ["decode", "fig1_leaves_missing.txt"], 2),
    ("export_dot_dag", ["export-dot", "fig2.dag"], 0),
    ("export_dot_tree", ["export-dot", "fig1_tree.txt"], 0),
    ("export_dot_system", ["export-dot", "shuffle.json", "--depth", "1"], 0),
    ("export_dot_automaton", ["export-dot", "fig2_auto.json"], 0),
]


@pytest.fixture
def in_data(monkeypatch):
    monkeypatch.chdir(DATA)


def invoke(capsys, argv):
    code = run(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("name,argv,code", CASES, ids=[c[0] for c in CASES])
def test_golden(in_data, capsys, name, argv, code):
    got, out, _ = invoke(capsys, argv)
    assert got == code
    path = GOLDEN / (name + (".dot" if "dot" in name else ".json"))
    if REGEN:
        path.write_text(out, encoding="utf-8")
    assert out == path.read_text(encoding="utf-8")


def test_every_subcommand_has_a_golden_case():
    from hostree.cli import cli

    assert set(cli.commands) == {argv[0] for _, argv, _ in CASES}


# -- what the golden files say ------------------------------------------------------


def _json(capsys, argv):
    code, out, _ = invoke(capsys, argv)
    return code, json.loads(out)


def test_check_dag_report(in_data, capsys):
    _, doc = _json(capsys, ["check-dag", "fig2.dag"])
    assert doc["kind"] == "dag-check" and doc["format"] == 1
    assert doc["compound"] is True and doc["reduced"] is True


def test_apply_gives_both_results(in_data, capsys, fig2_dag, fig2_tree):
    _, doc = _json(capsys, ["apply", "fig2.dag", "fig2_tree.txt"])
    assert {tr.parse_tree(x) for x in doc["results"]} == set(od.apply_all(fig2_dag, fig2_tree))


def test_traces_match_shuffle_oracle(in_data, capsys):
    _, doc = _json(capsys, ["traces", "shuffle.json", "--maxlen", "4"])
    assert set(doc["words"]) == self_shuffles(4)


def test_decode_gives_example_tree(in_data, capsys, fig1_tree):
    _, doc = _json(capsys, ["decode", "fig1_leaves.txt"])
    assert tr.parse_tree(doc["tree"]) == fig1_tree
    code, doc = _json(capsys, ["decode", "fig1_leaves_missing.txt"])
    assert code == 2 and doc["violated"] == "TreeDom"


def test_encode_then_decode(in_data, capsys, tmp_path, fig1_tree):
    _, doc = _json(capsys, ["encode", "fig1_tree.txt"])
    p = tmp_path / "leaves.txt"
    p.write_text("\n".join(doc["elements"]) + "\n")
    _, back = _json(capsys, ["decode", str(p)])
    assert tr.parse_tree(back["tree"]) == fig1_tree


def test_relates_witness_replays(in_data, capsys, fig2_tree):
    _, doc = _json(capsys, ["relates", "fig2_auto.json", "fig2_tree.txt", "fig2_result_c.txt"])
    Ds = [od.dag_from_json(w["dag"]) for w in doc["witness"]]
    idx = [w["leaf"] for w in doc["witness"]]
    assert od.apply_parallel(Ds, idx, fig2_tree) == tr.parse_tree((DATA / "fig2_result_c.txt").read_text())


def test_normalize_report_has_partition(in_data, capsys):
    _, doc = _json(capsys, ["auto-normalize", "rew_ab.json"])
    assert doc["kind"] == "normalized-automaton"
    assert set(doc["partition"].values()) <= {"Td", "Tc", "Cd", "Cc"}


# -- plumbing -------------------------------------------------------------------------


def test_output_is_deterministic(in_data, capsys):
    for _, argv, _ in CASES:
        first = invoke(capsys, argv)[1]
        assert invoke(capsys, argv)[1] == first, argv


def test_out_option_writes_the_report(in_data, capsys, tmp_path):
    target = tmp_path / "report.json"
    code, out, err = invoke(capsys, ["--out", str(target), "traces", "shuffle.json", "--maxlen", "2"])
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["words"] == ["", "aa", "bb"]
    assert "3 word(s)" in err


@pytest.mark.parametrize("argv,where", [
    (["relates", "broken.json", "fig2_tree.txt", "fig2_tree.txt"], "line 5, column 1"),
    (["apply", "fig2.dag", "broken_tree.txt"], "line 2, column 1"),
    (["auto-star", "fig2_tree.txt"], "line 1, column 1"),
    (["auto-star", "shuffle.json"], "line 1, column 1"),
])
def test_parse_errors_exit_65_with_location(in_data, capsys, argv, where):
    code, out, err = invoke(capsys, argv)
    assert code == 65 and out == ""
    assert where in err


def test_bad_stack_line_is_located(in_data, capsys, tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("[[a]]\n  [[a]\n")
    code, _, err = invoke(capsys, ["decode", str(p)])
    assert code == 65 and "line 2" in err


@pytest.mark.parametrize("argv", [
    ["nosuch"],
    ["apply", "fig2.dag"],
    ["traces", "shuffle.json", "--maxlen", "-1"],
    ["decode", "does-not-exist.txt"],
    ["apply", "fig2.dag", "fig2_tree.txt", "--leaf", "9"],
])
def test_usage_errors_exit_64(in_data, capsys, argv):
    assert invoke(capsys, argv)[0] == 64


def test_help_exits_0(capsys):
    assert run(["--help"]) == 0
    assert "check-dag" in capsys.readouterr().out
