import random

import pytest
from hypothesis import given

from hostree import op_dag as od
from hostree import stack_tree as tr
from hostree import treegraph_encoding as te
from hostree.errors import UsageError
from hostree.stack_tree import StackTree, leaf
from hostree.stacks import Cop, Ncop, Rew, enumerate_stacks, parse_stack

from _mutations import KINDS, mutations
from _strategies import stacks, trees

P = parse_stack

FIG1_CODES = [
    P("[[[aa][bab21]] [[aa][aaa11]] [[ab]]]"),
    P("[[[aa][bab22]] [[aa][a][b21]] [[ba][ba][b]]]"),
    P("[[[aa][bab22]] [[aa][a][b22]] [[abb][ab]]]"),
]


def universe(max_nodes=4, max_label=2):
    labels = enumerate_stacks("ab", 1, max_label)
    return list(tr.enumerate_trees(labels, max_nodes))


# -- examples -----------------------------------------------------------------


def test_single_node():
    s = P("[ab]")
    assert te.encode_node(leaf(s), "") == (s,)
    assert te.encode_tree(leaf(s)) == {(s,)}


def test_fig1_nodes(fig1_tree):
    assert te.encode_node(fig1_tree, "11") == FIG1_CODES[0]
    assert te.encode_node(fig1_tree, "21") == FIG1_CODES[1]
    assert te.encode_node(fig1_tree, "22") == FIG1_CODES[2]


def test_fig1_tree_round_trip(fig1_tree):
    X = te.encode_tree(fig1_tree)
    assert X == set(FIG1_CODES)
    assert te.decode(X) == fig1_tree


def test_internal_node_code(fig1_tree):
    assert te.encode_node(fig1_tree, "2") == (P("[[aa][bab22]]"), P("[[aa][a][b]]"))


def test_position_outside_domain(fig1_tree):
    with pytest.raises(UsageError):
        te.encode_node(fig1_tree, "12")
    with pytest.raises(UsageError):
        te.encode_node(fig1_tree, "3")


def test_order_one_and_reserved_symbols_rejected():
    with pytest.raises(UsageError):
        te.encode_tree(leaf("a"))
    with pytest.raises(UsageError):
        te.encode_tree(leaf(P("[a1]")))


def test_drop_element_is_tree_dom():
    for x in FIG1_CODES:
        d = te.diagnose(set(FIG1_CODES) - {x})
        assert d.tree is None and d.violated == te.TREE_DOM


def test_shared_prefix_label_is_unique_label():
    x = FIG1_CODES[1]
    bad = (P("[[aa][bbb22]]"),) + x[1:]
    d = te.diagnose({FIG1_CODES[0], bad, FIG1_CODES[2]})
    assert d.violated == te.UNIQUE_LABEL


def test_direction_above_arity_is_only_leaves():
    x = FIG1_CODES[0]
    bad = x[:1] + (P("[[aa][aaa12]]"),) + x[2:]
    assert te.diagnose({bad, FIG1_CODES[1], FIG1_CODES[2]}).violated == te.ONLY_LEAVES


def test_empty_set_and_mixed_levels():
    assert te.diagnose(set()).violated == te.TREE_DOM
    assert te.diagnose({P("[[a]]"), P("[[[a]]]")}).violated == te.ONLY_LEAVES
    assert te.diagnose({"a"}).violated == te.ONLY_LEAVES


def test_ancestor_element_is_unique_label(fig1_tree):
    X = te.encode_tree(fig1_tree) | {te.encode_node(fig1_tree, "2")}
    assert te.diagnose(X).violated == te.UNIQUE_LABEL


# -- properties -----------------------------------------------------------------


def test_round_trip_and_leaf_count_up_to_6_nodes():
    U = list(tr.enumerate_trees([P("[a]"), P("[ab]")], 6))
    codes = set()
    for t in U:
        X = te.encode_tree(t)
        assert len(X) == t.n_leaves
        assert te.decode(X) == t
        codes.add(X)
    assert len(codes) == len(U)


@given(trees(stacks(2, max_width=2)))
def test_round_trip_order3(t):
    assert te.decode(te.encode_tree(t)) == t


@given(trees(stacks(1)))
def test_every_leaf_code_is_prefix_of_nothing_else(t):
    X = sorted(te.encode_tree(t))
    for x in X:
        for y in X:
            if x != y:
                assert x[: len(y)] != y


def test_mutations_get_expected_tag():
    rng = random.Random(7)
    U = universe(5)
    seen = set()
    for X, tag, kind, t in mutations(U, 600, rng):
        d = te.diagnose(X)
        assert d.tree is None, (kind, X)
        assert d.violated == tag, (kind, d)
        seen.add(kind)
    assert seen == set(KINDS)


def test_mutation_of_unary_chain_label_is_another_tree():
    # relabelling the only leaf of a chain yields a valid, different tree
    t = StackTree(P("[a]"), [leaf(P("[b]"))])
    x = next(iter(te.encode_tree(t)))
    other = te.decode({x[:1] + (P("[a]"),)})
    assert other == StackTree(P("[a]"), [leaf(P("[a]"))])


# -- leaf-set steps ---------------------------------------------------------------


def _dags():
    ops = [Rew("a", "b"), Cop(1), Ncop(1)]
    return sorted(od.enumerate_compound(ops, 4), key=od.format_dag)


def test_leaf_set_step_matches_apply_and_reencode():
    U = universe(4)
    Ds = _dags()
    assert any(len(D.inputs) > 1 for D in Ds)
    rng = random.Random(3)
    for D in Ds:
        for s in rng.sample(U, 25):
            expected = {te.encode_tree(t) for t in od.apply_all(D, s)}
            got = te.leaf_set_step(D, te.encode_tree(s))
            assert got == expected, (od.format_dag(D), tr.format_tree(s))


def test_leaf_set_step_keeps_untouched_leaves(fig2_dag, fig2_tree):
    X = te.encode_tree(fig2_tree)
    for Y in te.leaf_set_step(fig2_dag, X):
        # one of the two leaves is rewritten, the other is kept verbatim
        assert len(X & Y) == 1
