import json
import random

import pytest

from hostree import op_automaton as oa
from hostree import op_dag as od
from hostree import rewriting as rw
from hostree import stack_tree as tr
from hostree import stacks as st
from hostree.errors import UsageError
from hostree.op_dag import Dir, OpDag
from hostree.rewriting import DOWN, UP, Gstrs, Gtrs, Rule, TreePattern
from hostree.stack_tree import StackTree, leaf
from hostree.stacks import Rew

from _oracles import (PD_RULES, gtrs_reachable, self_shuffles, gtrs_successors, pd_runs, random_ground_tree, random_gtrs,
                      unary_rule)

S = st.one_stack


def T(text):
    return tr.parse_tree(text)


# -- successors and reachability --------------------------------------------------


def test_empty_system_has_no_successors(fig2_tree):
    assert rw.successors(Gstrs(2, "abc"), fig2_tree) == []


def test_shuffle_initial_successors():
    R, t0, _ = rw.shuffle_system()
    succ = rw.successors(R, t0)
    want = {("", leaf(S("a" + DOWN))), ("", leaf(S("b" + DOWN))),
            ("", StackTree(S(DOWN), [leaf(S(UP)), leaf(S(UP))]))}
    assert set(succ) == want


def test_reachable_depth0_and_monotone():
    R, t0, _ = rw.shuffle_system()
    assert rw.reachable(R, t0, 0) == [t0]
    prev = set()
    for d in range(4):
        cur = set(rw.reachable(R, t0, d))
        assert prev <= cur
        prev = cur


def test_reachable_depth2_single_letter():
    R, t0, _ = rw.shuffle_system(("a",))
    got = set(rw.reachable(R, t0, 2))
    assert leaf(S("a" + DOWN)) in got
    assert leaf(S("aa" + DOWN)) in got
    assert StackTree(S("a" + DOWN), [leaf(S("a" + UP)), leaf(S("a" + UP))]) in got
    # independent hand simulation of the three rules on 1-stacks
    def step(t):
        out = set()
        if not t.children:
            w = t.label
            if w[-1] == DOWN:
                out.add(leaf(w[:-1] + ("a", DOWN)))
                out.add(StackTree(w, [leaf(w[:-1] + (UP,)), leaf(w[:-1] + (UP,))]))
        else:
            for k, c in enumerate(t.children):
                w = c.label
                if w[-1] == UP and len(w) >= 2 and w[-2] == "a":
                    kids = list(t.children)
                    kids[k] = leaf(w[:-2] + (UP,))
                    out.add(StackTree(t.label, kids))
        return out
    layer = {t0}
    seen = {t0}
    for _ in range(2):
        layer = {u for t in layer for u in step(t)}
        seen |= layer
    assert got == seen


def test_rule_must_be_compound():
    bad = OpDag(3, [(0, Dir(1), 1), (0, Dir(1), 2)])
    with pytest.raises(UsageError):
        Gstrs(2, "ab", ((bad, ""),))


def test_rule_label_must_be_declared():
    with pytest.raises(UsageError):
        Gstrs(1, "ab", ((od.basic_dag(Rew("a", "b")), "x"),), ("y",))


# -- words and traces -----------------------------------------------------------------


def test_shuffle_words():
    R, t0, finals = rw.shuffle_system()
    assert rw.accepts_word(R, t0, finals, "aabb")
    assert rw.accepts_word(R, t0, finals, "abab")
    assert not rw.accepts_word(R, t0, finals, "abba")
    assert rw.accepts_word(R, t0, finals, "")


def test_empty_word_iff_initial_final():
    R, t0, finals = rw.shuffle_system()
    assert rw.accepts_word(R, t0, finals, "", max_steps=1)
    assert not rw.accepts_word(R, t0, finals, "", max_steps=0)
    assert rw.trace_language(R, t0, finals, 0, max_steps=0) == set()
    R2 = Gstrs(2, R.symbols)
    assert rw.trace_language(R2, t0, [TreePattern(stack=S(DOWN))], 0) == {""}


@pytest.mark.parametrize("maxlen", [0, 2, 4])
def test_shuffle_trace_language(maxlen):
    R, t0, finals = rw.shuffle_system()
    assert rw.trace_language(R, t0, finals, maxlen) == self_shuffles(maxlen)


def test_trace_language_monotone():
    R, t0, finals = rw.shuffle_system()
    prev = set()
    for k in range(5):
        cur = rw.trace_language(R, t0, finals, k)
        assert prev <= cur
        prev = cur


def test_shuffle_helper():
    assert rw.shuffle("ab", "ab") == {"aabb", "abab"}
    assert rw.shuffle("", "xy") == {"xy"}


def test_patterns():
    p = TreePattern(children=(TreePattern(stack=S(UP)), TreePattern()))
    assert p.matches(StackTree(S("ab"), [leaf(S(UP)), leaf(S("b"))]))
    assert not p.matches(StackTree(S("ab"), [leaf(S("a")), leaf(S("b"))]))
    assert not p.matches(leaf(S(UP)))
    t = TreePattern(test=st.top_is("ab", 1, "a"))
    assert t.matches(leaf(S("ba"))) and not t.matches(leaf(S("ab")))
    with pytest.raises(UsageError):
        TreePattern(stack=S("a"), test=st.top_is("ab", 1, "a"))


# -- order 1: ground tree rewriting --------------------------------------------------


def test_ground_rule_dag_shapes():
    l = T("node(a, node(b), node(a))")
    r = T("node(b)")
    D = rw.ground_rule_dag(l, r)
    assert od.is_compound(D)
    assert len(D.inputs) == 2 and len(D.outputs) == 1


def test_compiled_gtrs_matches_textbook_successors():
    r = random.Random(1)
    U = list(tr.enumerate_trees(["a", "b"], 5))
    for _ in range(10):
        rules = random_gtrs(r)
        R = rw.compile_gtrs(Gtrs(tuple(rules), ("a", "b")))
        for t in U:
            assert {u for _, u in rw.successors(R, t)} == gtrs_successors(rules, t)


def test_compiled_gtrs_reachability():
    r = random.Random(2)
    for _ in range(5):
        rules = random_gtrs(r)
        R = rw.compile_gtrs(Gtrs(tuple(rules), ("a", "b")))
        t0 = random_ground_tree(r, 4)
        assert set(rw.reachable(R, t0, 3)) == gtrs_reachable(rules, t0, 3)


def test_gtrs_rejects_higher_order():
    with pytest.raises(UsageError):
        Gtrs(((leaf(S("a")), leaf(S("b"))),))


# -- unary rules and the order-2 pushdown --------------------------------------------------

def _runs_of_system(R, t0, length):
    runs = {((), t0)}
    layer = {((), t0)}
    for _ in range(length):
        layer = {(w + (a,), u) for w, t in layer for a, u in rw.successors(R, t)}
        runs |= layer
    return runs


def as_pd(stack):
    return tuple("".join(w) for w in stack)


def test_unary_system_matches_pushdown_runs():
    R = Gstrs(2, "ab", tuple(Rule(unary_rule(p), a) for a, p in PD_RULES))
    starts = [("a",), ("ab",), ("ba", "a"), ("aab",), ("bb", "bb")]
    for s in starts:
        t0 = tr.from_stack(tuple(S(w) for w in s))
        got = {(w, as_pd(tr.to_stack(t))) for w, t in _runs_of_system(R, t0, 4)}
        assert got == pd_runs(PD_RULES, s, 4)


# -- derivation automaton -------------------------------------------------------------------


def test_reachable_implies_star_relates():
    R, t0, _ = rw.shuffle_system(("a",))
    A = oa.star(oa.from_system(R))
    budget = oa.Budget(max_tuple=1, max_steps=2, max_nodes=4, max_label=4)
    reach = rw.reachable(R, t0, 2)
    img, done = oa.image(A, t0, budget)
    assert done
    assert set(reach) == img


# -- JSON -----------------------------------------------------------------------------------


def test_system_json_round_trip():
    R, t0, finals = rw.shuffle_system()
    doc = json.loads(json.dumps(rw.system_to_json(R, t0, finals)))
    R2, t2, f2 = rw.system_from_json(doc)
    assert R2 == R and t2 == t0
    assert rw.trace_language(R2, t2, f2, 2) == self_shuffles(2)
