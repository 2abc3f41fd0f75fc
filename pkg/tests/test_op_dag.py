import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as hs

from hostree import op_dag as od
from hostree import stack_tree as tr
from hostree import stacks as st
from hostree.errors import ParseError, UsageError
from hostree.op_dag import (Barcopy, Codir, Copy, Dir, OpDag, apply_all, apply_at, basic_dag,
                            build_case, concat, concat_raw, emptydag, is_compound, is_reduced)
from hostree.stack_tree import leaf
from hostree.stacks import Cop, Identity, Ncop, Rew, Test, parse_stack


REW = Rew("a", "b")
LABELS = [REW, Dir(1), Dir(2), Codir(1), Codir(2)]


def P(text):
    return parse_stack(text)


def T(text):
    return tr.parse_tree(text)


def iso_key(D):
    """Order-free isomorphism class by brute force over vertex permutations."""
    best = None
    for p in itertools.permutations(range(D.n)):
        k = tuple(sorted((p[u], od.label_token(l), p[v]) for u, l, v in D.edges))
        if best is None or k < best:
            best = k
    return D.n, best


def all_small_dags(n):
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    for choice in itertools.product([None] + LABELS, repeat=len(pairs)):
        yield OpDag(n, [(u, l, v) for (u, v), l in zip(pairs, choice) if l is not None])


# -- basic shapes -------------------------------------------------------------


def test_basic_dag_shapes():
    d = basic_dag(REW)
    assert (d.n, len(d.edges), d.in_degree, d.out_degree) == (2, 1, 1, 1)
    c = basic_dag(Copy(2))
    assert (c.n, c.in_degree, c.out_degree) == (3, 1, 2)
    b = basic_dag(Barcopy(2))
    assert (b.n, b.in_degree, b.out_degree) == (3, 2, 1)
    for x in (d, c, b, basic_dag(Copy(1)), basic_dag(Barcopy(1)), emptydag()):
        assert is_compound(x)


def test_concat_with_emptydag_is_identity_like():
    D = basic_dag(Copy(2))
    assert concat(emptydag(), 1, D, 1) == D


def test_concat_footnote_non_associativity():
    C = basic_dag(Copy(2))
    x = concat(C, 2, C, 1)
    assert (x.in_degree, x.out_degree) == (1, 3)
    full = concat(x, 1, C, 1)
    assert full in od.concat_sets(od.power([C], 2), [C])
    assert full not in od.concat_sets([C], od.power([C], 2))


def test_concat_renumbers_into_inductive_order():
    C = basic_dag(Copy(2))
    full = concat(concat(C, 2, C, 1), 1, C, 1)
    raw = concat_raw(concat(C, 2, C, 1), 1, C, 1)
    assert raw.n == full.n == 7
    # in the inductive order the leftmost output hangs below direction 1 twice
    first = full.outputs[0]
    (e,) = full.in_edges[first]
    assert e[1] == Dir(1)
    (f,) = full.in_edges[e[0]]
    assert f[1] == Dir(1)


def test_concat_index_errors():
    with pytest.raises(UsageError):
        concat(basic_dag(REW), 2, basic_dag(REW), 1)
    with pytest.raises(UsageError):
        concat(basic_dag(REW), 1, basic_dag(REW), 0)


def test_concat_vertex_count_random():
    r = random.Random(5)
    pool = list(od.enumerate_compound([REW], 4))
    for _ in range(200):
        D, Dp = r.choice(pool), r.choice(pool)
        i = r.randint(1, D.out_degree)
        j = r.randint(1, Dp.in_degree)
        d = min(D.out_degree - i, Dp.in_degree - j) + 1
        assert concat_raw(D, i, Dp, j).n == D.n + Dp.n - d
        assert od.merged_count(D, i, Dp, j) == d


def test_non_compound_example():
    bad = OpDag(3, [(0, Codir(1), 2), (1, REW, 2)])
    assert not is_compound(bad)
    with pytest.raises(UsageError):
        apply_at(bad, 1, leaf(P("[a]")))


def test_fig2_dag_is_compound(fig2_dag):
    assert is_compound(fig2_dag)
    assert fig2_dag.in_degree == 1 and fig2_dag.out_degree == 2


def test_compound_counts_match_brute_force():
    # frozen from the constructive enumerator, cross-checked below
    expected = {1: 1, 2: 3, 3: 11, 4: 46, 5: 206}
    counts = {}
    for D in od.enumerate_compound([REW], 5):
        counts[D.n] = counts.get(D.n, 0) + 1
    assert counts == expected
    built = {iso_key(D) for D in od.enumerate_compound([REW], 4)}
    found = 0
    for n in range(1, 5):
        seen = set()
        for D in all_small_dags(n):
            k = iso_key(D)
            if k in seen:
                continue
            seen.add(k)
            assert is_compound(D) == (k in built), od.format_dag(D)
            found += is_compound(D)
    assert found == 1 + 3 + 11 + 46


def test_generated_dags_are_compound_and_reproduced():
    universe = od.enumerate_compound([REW], 6)
    keys = {iso_key(D) for D in universe}
    r = random.Random(2)
    pool = list(universe)
    hits = 0
    for _ in range(400):
        D = r.choice(pool)
        assert is_compound(D)
        # perturb one edge; anything still compound must be in the universe
        edges = list(D.edges)
        roll = r.random()
        if edges and roll < 0.6:
            k = r.randrange(len(edges))
            u, _, v = edges[k]
            edges[k] = (u, r.choice(LABELS), v)
        elif edges and roll < 0.8:
            edges.pop(r.randrange(len(edges)))
        else:
            u, v = sorted(r.sample(range(D.n), 2)) if D.n > 1 else (0, 0)
            if u != v:
                edges.append((u, r.choice(LABELS), v))
        try:
            E = OpDag(D.n, edges)
        except UsageError:
            continue
        if is_compound(E):
            hits += 1
            assert iso_key(E) in keys
    assert hits > 0


# -- application -----------------------------------------------------------------


def test_fig2_applications(fig2_dag, fig2_tree):
    c = T("node([bbb], node([bc], node([ba]), node([bcc])), node([aabb]))")
    d = T("node([bbb], node([bbb]), node([aac], node([aaa]), node([aacc])))")
    assert apply_at(fig2_dag, 1, fig2_tree) == c
    assert apply_at(fig2_dag, 2, fig2_tree) == d
    assert set(apply_all(fig2_dag, fig2_tree)) == {c, d}


def test_emptydag_application(fig2_tree):
    for i in (1, 2):
        assert apply_at(emptydag(), i, fig2_tree) == fig2_tree
    assert apply_all(emptydag(), fig2_tree) == [fig2_tree]


def test_apply_index_out_of_range(fig2_dag, fig2_tree):
    with pytest.raises(UsageError):
        apply_at(fig2_dag, 3, fig2_tree)


def test_merge_dag_application():
    t = T("node([a], node([a]), node([a]))")
    assert apply_at(basic_dag(Barcopy(2)), 1, t) == leaf(P("[a]"))
    assert apply_at(basic_dag(Barcopy(2)), 2, t) is None


def _universe1():
    labels = [P("[a]"), P("[b]"), P("[ab]")]
    return list(tr.enumerate_trees(labels, 4))


def test_apply_all_bounded_by_leaf_count():
    dags = list(od.enumerate_compound([REW, Cop(1)], 4))
    for t in _universe1()[:120]:
        for D in dags:
            assert len(apply_all(D, t)) <= t.n_leaves


def test_decomposition_independence():
    dags = [D for D in od.enumerate_compound([REW, Rew("b", "a"), Cop(1), Ncop(1)], 5)
            if len(od.decompositions(D)) >= 2]
    assert dags
    trees = _universe1()[::4]
    for D in dags[:200]:
        decs = od.decompositions(D) + [od.decompose(D, last=True)]
        for t in trees:
            for i in range(1, t.n_leaves + 1):
                results = {apply_at(D, i, t, dec) for dec in decs}
                assert len(results) == 1


def test_concat_applies_as_composition():
    pool = list(od.enumerate_compound([REW, Cop(1), Ncop(1)], 4))
    r = random.Random(9)
    trees = _universe1()
    checked = 0
    for _ in range(300):
        D, Dp = r.choice(pool), r.choice(pool)
        i = r.randint(1, D.out_degree)
        R = concat_raw(D, i, Dp, 1)
        if not is_compound(R):
            continue
        R = od.normal_order(R)
        for t in r.sample(trees, 10):
            for p in range(1, t.n_leaves + 1):
                mid = apply_at(D, p, t)
                want = None
                if mid is not None and p + i - 1 <= mid.n_leaves:
                    want = apply_at(Dp, p + i - 1, mid)
                assert apply_at(R, p, t) == want
                checked += 1
    assert checked > 100


def test_parallel_application():
    t = T("node([a], node([a]), node([b]))")
    d1 = basic_dag(Rew("a", "c"))
    d2 = basic_dag(Rew("b", "c"))
    both = od.apply_parallel([d1, d2], [1, 2], t)
    assert both == apply_at(d2, 2, apply_at(d1, 1, t)) == apply_at(d1, 1, apply_at(d2, 2, t))
    assert od.apply_parallel([d1], [1], t) == apply_at(d1, 1, t)
    assert od.apply_parallel([d1, basic_dag(Rew("a", "c"))], [1, 2], t) is None
    with pytest.raises(UsageError):
        od.apply_parallel([basic_dag(Barcopy(2)), d2], [1, 2], t)


def test_parallel_disjoint_rews_commute_exhaustive():
    labels = [P("[a]"), P("[b]")]
    rews = [basic_dag(Rew(x, y)) for x in "ab" for y in "ab"]
    for t in tr.enumerate_trees(labels, 3):
        if t.n_leaves != 2:
            continue
        for d1 in rews:
            for d2 in rews:
                left = apply_at(d1, 1, t)
                seq = None if left is None else apply_at(d2, 2, left)
                assert od.apply_parallel([d1, d2], [1, 2], t) == seq


# -- reducedness --------------------------------------------------------------------


def test_red_examples():
    lang = st.universal_language("ab", 1)
    assert od.red_dfa(0, 2).accepts(["r", "T", "r"])
    assert od.word_in_red([Rew("a", "b"), Test(lang), Rew("c", "d")], 2)
    assert not od.red_dfa(1, 2).accepts(["c1", "n1"])
    assert od.red_dfa(1, 2).accepts(["n1", "c1"])
    assert not od.word_in_red([Dir(1), Codir(1)], 2)
    assert od.word_in_red([Codir(1), Dir(2)], 2)


def test_bubble_is_not_reduced():
    e = emptydag()
    bubble = build_case(5, [e, e, e, e])
    assert is_compound(bubble)
    assert not is_reduced(bubble)
    assert any(w[:1] == (Dir(1),) and Codir(1) in w for w in od.path_words(bubble))


def test_is_reduced_matches_path_words():
    dags = od.enumerate_compound([REW, Cop(1), Ncop(1), Identity()], 5)
    for D in dags:
        direct = all(od.word_in_red(w, 2) for w in od.path_words(D))
        assert is_reduced(D, 2) == direct


# -- formats ------------------------------------------------------------------------


def test_text_round_trip(fig2_dag):
    text = od.format_dag(fig2_dag)
    assert od.parse_dag(text) == fig2_dag
    assert od.dag_from_json(od.dag_to_json(fig2_dag)) == fig2_dag
    dot = od.to_dot(fig2_dag)
    assert dot.count("style=dashed") == 2


def test_parse_errors():
    with pytest.raises(ParseError) as e:
        od.parse_dag("dag { v: 1..2;\n e: (1, frob, 2); }")
    assert e.value.line == 2
    with pytest.raises(ParseError):
        od.parse_dag("dag { v: 1..2; e: (1, 1, 3); }")
    with pytest.raises(ParseError):
        od.parse_dag("dag { v: 1..2; e: (1, 1, 2); inputs: [2]; }")
    with pytest.raises(ParseError):
        od.parse_dag("dag { v: 1..2; e: (1, 1, 2), (2, 1, 1); }")


@given(hs.integers(min_value=0, max_value=10_000))
def test_random_constructor_sequences_are_compound(seed):
    r = random.Random(seed)
    ops = [REW, Cop(1), Ncop(1), Dir(1), Codir(1)]

    def gen(depth):
        if depth == 0 or r.random() < 0.3:
            return emptydag()
        case = r.choice([2, 2, 3, 4, 5])
        if case == 2:
            d1 = gen(depth - 1)
            while d1.out_degree != 1:
                d1 = gen(depth - 1)
            d2 = gen(depth - 1)
            while d2.in_degree != 1:
                d2 = gen(depth - 1)
            return build_case(2, [d1, d2], r.choice(ops))
        return build_case(case, [_unary(gen, depth) for _ in range(3 if case != 5 else 4)])

    D = gen(3)
    assert is_compound(D)


def _unary(gen, depth):
    while True:
        d = gen(depth - 1)
        if d.in_degree == 1 and d.out_degree == 1:
            return d
