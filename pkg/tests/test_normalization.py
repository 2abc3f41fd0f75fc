import json
import random

import pytest

from hostree import normalization as nz
from hostree import op_automaton as oa
from hostree import op_dag as od
from hostree import stack_tree as tr
from hostree import stacks as st
from hostree.errors import UsageError
from hostree.op_automaton import Lin, OperationAutomaton
from hostree.stacks import Cop, Identity, Ncop, Rew, Test

from _oracles import word_runs
from _strategies import random_order2_automaton

S = ("a", "b")
W = st.one_stack

WORD_OPS = [("rew", "a", "b"), ("rew", "b", "a"), ("push",), ("pop",), ("top", "a"), ("id",)]


def as_label(op):
    kind = op[0]
    if kind == "rew":
        return Rew(op[1], op[2])
    if kind == "push":
        return Cop(1)
    if kind == "pop":
        return Ncop(1)
    if kind == "top":
        return Test(st.top_is(S, 1, op[1]))
    return Identity()


def random_stack_automaton(rng):
    """Order 2, stack moves only, as (automaton, edges for the word oracle)."""
    n = rng.randint(1, 4)
    edges = {(rng.randrange(n), rng.choice(WORD_OPS), rng.randrange(n))
             for _ in range(rng.randint(1, 6))}
    lin = {Lin(p, as_label(op), q) for p, op, q in edges}
    return OperationAutomaton(n, {0}, {n - 1}, lin, symbols=S, order=2), n, edges


WORDS = ["".join(w) for k in range(1, 5) for w in __import__("itertools").product("ab", repeat=k)]


# -- step bookkeeping -------------------------------------------------------------


def test_steps_must_run_in_order():
    A = random_order2_automaton(random.Random(0))
    s1 = nz.step1_split(A)
    with pytest.raises(UsageError):
        nz.step3_split_dc(s1)
    with pytest.raises(UsageError):
        nz.step1_split(s1)
    with pytest.raises(UsageError):
        nz.distinguish(A)


def test_step1_triples_states():
    r = random.Random(1)
    for _ in range(5):
        A = random_order2_automaton(r)
        s1 = nz.step1_split(A)
        assert s1.automaton.n_states == 3 * A.n_states
        assert s1.roles.count("s") == A.n_states
        # stack moves stay on the stack side, tree moves never touch it
        for t in s1.automaton.lin:
            if nz.is_stack_label(t.label) and not isinstance(t.label, Identity):
                assert s1.roles[t.src] == s1.roles[t.dst] == "s"


def test_pipeline_names_and_no_id_after_removal():
    stages = nz.pipeline(random_order2_automaton(random.Random(2)))
    assert tuple(s.name for s in stages) == nz.STEP_NAMES
    for s in stages[5:]:
        assert not any(isinstance(t.label, Identity) for t in s.automaton.lin)


# -- loop languages ----------------------------------------------------------------


def test_loop_language_of_no_moves_is_everything():
    A = OperationAutomaton(1, {0}, {0}, symbols=S, order=2)
    L = nz.loop_language(A, 0, 0)
    assert all(L.contains(W(w)) for w in WORDS)


def test_loop_language_of_a_rewrite_is_empty():
    A = OperationAutomaton(2, {0}, {1}, {Lin(0, Rew("a", "b"), 1)}, symbols=S, order=2)
    assert nz.loop_language(A, 0, 1).is_empty()


def test_loop_language_pop_then_push():
    A = OperationAutomaton(3, {0}, {2}, {Lin(0, Ncop(1), 1), Lin(1, Cop(1), 2)}, symbols=S, order=2)
    L = nz.loop_language(A, 0, 2)
    for w in WORDS:
        assert L.contains(W(w)) == (len(w) >= 2 and w[-1] == w[-2]), w


def test_loop_language_matches_word_runs():
    r = random.Random(1)
    for _ in range(40):
        A, n, edges = random_stack_automaton(r)
        for q1 in range(n):
            for q2 in range(n):
                L = nz.loop_language(A, q1, q2)
                for w in WORDS:
                    assert L.contains(W(w)) == ((q2, w) in word_runs(edges, q1, w, 9)), (edges, q1, q2, w)


def test_loop_language_higher_order_needs_bound():
    A = OperationAutomaton(1, {0}, {0}, symbols=S, order=3)
    with pytest.raises(UsageError):
        nz.loop_language(A, 0, 0)
    assert nz.loop_language(A, 0, 0, bound=2).contains(st.parse_stack("[[a]]"))


def test_pair_automata_keep_the_stack_relation():
    r = random.Random(2)
    for _ in range(25):
        A, n, edges = random_stack_automaton(r)
        sys_ = nz._OneStackSystem(A)
        for p in range(n):
            for q in range(n):
                built = nz._trimmed_pair(*nz._pair_automaton_order2(sys_, p, q, S), S, 2)
                if built is not None:
                    m, lin, i, f = built
                    B = OperationAutomaton(m, {i}, {f}, lin, symbols=S, order=2)
                    assert all(not isinstance(t.label, Identity) for t in lin)
                for w in WORDS:
                    want = {y for r_, y in word_runs(edges, p, w, 9) if r_ == q and len(y) <= 4}
                    got = set() if built is None else {
                        "".join(y) for r_, y in nz.stack_runs(B, i, W(w), 9) if r_ == f and len(y) <= 4}
                    assert got == want, (edges, p, q, w)


# -- whole pipeline ------------------------------------------------------------------


def test_bubble_becomes_a_single_test():
    D = od.parse_dag("dag { v: 1..4; e: (1, 1, 2), (1, 2, 3), (2, -1, 4), (3, -2, 4);"
                     " inputs: [1]; outputs: [4]; }")
    P = nz.normalize(oa.singleton(D, S, 2))
    got = oa.enumerate_accepted(P.automaton, 6)
    assert len(got) == 1
    (E,) = got
    (lab,) = [l for _, l, _ in E.edges]
    assert isinstance(lab, Test)
    assert all(lab.lang.contains(W(w)) for w in WORDS)


# the acceptance suite covers trees of 3 nodes; this one stays quick
LABELS = list(st.enumerate_stacks(S, 1, 3))
SMALL = list(tr.enumerate_trees(LABELS, 2))


def _images(A, U, budget):
    B = oa.trim(A)
    out = {}
    for s in U:
        img, done = oa.image(B, s, budget)
        assert done
        out[s] = img & set(U)
    return out


def test_every_step_keeps_the_relation():
    r = random.Random(3)
    budget = oa.Budget(max_tuple=2, max_nodes=4, max_label=4)
    moved = 0
    for _ in range(6):
        A = random_order2_automaton(r)
        stages = nz.pipeline(A)
        want = _images(A, SMALL, budget)
        moved += sum(len(v - {s}) for s, v in want.items())
        for sg in stages[1:]:
            assert _images(sg.automaton, SMALL, budget) == want, sg.name
    assert moved >= 100


def test_normalized_output_shape():
    r = random.Random(4)
    for _ in range(6):
        P = nz.normalize(random_order2_automaton(r))
        A = P.automaton
        assert nz.reduced_walks(A)
        assert nz.is_normalized(P, max_vertices=5)
        assert nz.is_distinguished(A)
        assert nz.partition_violations(P) == []
        assert P.certification == nz.EXACT
        assert len(P.partition) == A.n_states


def test_distinguished_check():
    r = random.Random(5)
    A = random_order2_automaton(r)
    P = nz.normalize(A)
    assert nz.is_distinguished(P.automaton)
    # an automaton with a loop on its initial state is not
    B = OperationAutomaton(1, {0}, {0}, {Lin(0, Rew("a", "a"), 0)}, symbols=S, order=2)
    assert not nz.is_distinguished(B)


def test_reduced_walks_rejects_copy_then_merge():
    D = od.parse_dag("dag { v: 1..4; e: (1, 1, 2), (1, 2, 3), (2, -1, 4), (3, -2, 4);"
                     " inputs: [1]; outputs: [4]; }")
    assert not nz.reduced_walks(oa.singleton(D, S, 2))
    assert not nz.is_normalized(oa.singleton(D, S, 2))


def test_partitioned_json_round_trip():
    P = nz.normalize(random_order2_automaton(random.Random(6)))
    doc = json.loads(json.dumps(P.to_json()))
    assert doc["kind"] == "normalized-automaton"
    Q = nz.partitioned_from_json(doc)
    assert Q.automaton == P.automaton
    assert Q.partition == P.partition
    assert Q.certification == P.certification
