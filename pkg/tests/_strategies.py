"""Hypothesis strategies and small random generators shared by the tests."""

import random

from hypothesis import strategies as hs

from hostree.stack_tree import StackTree

SYMS = "ab"


def stacks(level, symbols=SYMS, max_width=3):
    if level == 0:
        return hs.sampled_from(list(symbols))
    return hs.lists(stacks(level - 1, symbols, max_width), min_size=1, max_size=max_width).map(tuple)


def random_stack(rng, level, symbols=SYMS, max_width=3):
    if level == 0:
        return rng.choice(symbols)
    return tuple(random_stack(rng, level - 1, symbols, max_width) for _ in range(rng.randint(1, max_width)))


def trees(label_strategy, max_depth=3):
    leaf = label_strategy.map(lambda s: StackTree(s, ()))

    def extend(children):
        return hs.tuples(label_strategy, hs.lists(children, min_size=1, max_size=2)).map(
            lambda p: StackTree(p[0], p[1])
        )

    return hs.recursive(leaf, extend, max_leaves=6)


def random_tree(rng, level, max_nodes=6, symbols=SYMS):
    def go(budget):
        lab = random_stack(rng, level, symbols, 2)
        if budget <= 1 or rng.random() < 0.4:
            return StackTree(lab, ()), 1
        k = rng.choice([1, 2]) if budget >= 3 else 1
        kids, used = [], 1
        for _ in range(k):
            c, u = go(max(1, (budget - used) // (k - len(kids))))
            kids.append(c)
            used += u
        return StackTree(lab, kids), used

    return go(max_nodes)[0]


def rng(seed=0):
    return random.Random(seed)


def random_automaton(rng, n_states=3, labels=None, symbols=SYMS, order=1, p_branch=0.5, p_merge=0.5):
    """Small random operation automaton (states 0..n-1, state 0 initial)."""
    from hostree.op_automaton import Branch, Lin, Merge, OperationAutomaton
    from hostree.op_dag import Codir, Dir
    from hostree.stacks import Rew

    if labels is None:
        labels = [Rew("a", "b"), Rew("b", "a"), Rew("a", "a"), Dir(1), Codir(1)]
    n = n_states
    lin = {Lin(rng.randrange(n), rng.choice(labels), rng.randrange(n)) for _ in range(rng.randint(1, 2 * n))}
    branch = set()
    merge = set()
    if rng.random() < p_branch:
        branch.add(Branch(rng.randrange(n), rng.randrange(n), rng.randrange(n)))
    if rng.random() < p_merge:
        merge.add(Merge(rng.randrange(n), rng.randrange(n), rng.randrange(n)))
    initial = {0} | {q for q in range(1, n) if rng.random() < 0.2}
    final = {rng.randrange(n) for _ in range(rng.randint(1, 2))}
    return OperationAutomaton(n, initial, final, lin, branch, merge, tuple(symbols), order)


def random_order2_automaton(rng):
    """Corpus generator for the normalization checks.

    Order 2 over {a,b}, 2..5 states, state 0 initial.  Copy and merge edges
    only go forward (p < q), so tree moves cannot loop; stack moves may.
    """
    from hostree import op_automaton as oa
    from hostree import stacks as st
    from hostree.op_automaton import Branch, Lin, Merge, OperationAutomaton
    from hostree.op_dag import Codir, Dir

    S = ("a", "b")
    stack_labels = [st.Rew("a", "b"), st.Rew("b", "a"), st.Cop(1), st.Ncop(1),
                    st.Test(st.top_is(S, 1, "a"))]
    while True:
        n = rng.randint(2, 5)
        lin = set()
        for _ in range(rng.randint(2, 6)):
            p, q = rng.randrange(n), rng.randrange(n)
            if rng.random() < 0.3:
                lab = rng.choice([Dir(1), Codir(1)])
                if p >= q:
                    continue
            else:
                lab = rng.choice(stack_labels)
            lin.add(Lin(p, lab, q))
        br, mg = set(), set()
        if rng.random() < 0.5:
            p = rng.randrange(n - 1)
            br.add(Branch(p, rng.randrange(p + 1, n), rng.randrange(p + 1, n)))
        if rng.random() < 0.5:
            q = rng.randrange(1, n)
            mg.add(Merge(rng.randrange(q), rng.randrange(q), q))
        fin = {rng.randrange(n) for _ in range(rng.randint(1, 2))}
        A = OperationAutomaton(n, {0}, fin, lin, br, mg, S, 2)
        if oa.trim(A).n_states > 0:
            return A
