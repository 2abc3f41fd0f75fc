"""Random corruptions of leaf-set encodings, each with the condition it breaks.

The expected tag comes from how the mutation is built, not from the decoder:

- drop: removing any leaf leaves some declared child without leaves (TreeDom);
- shared_label: change a label symbol on an ancestor shared with another
  element (UniqueLabel);
- arity_flip: declare arity 1 on a binary ancestor along direction 1, which
  another element still declares as 2 (UniqueLabel);
- ancestor: add the encoding of an internal node (UniqueLabel);
- bad_suffix: direction above arity, a missing suffix, or a reserved
  symbol in a label (OnlyLeaves);
- open_child: turn a leaf into a binary node with only its first child
  present (TreeDom).
"""

from hostree import stack_tree as tr
from hostree import stacks as st
from hostree import treegraph_encoding as te

KINDS = ("drop", "shared_label", "arity_flip", "ancestor", "bad_suffix", "open_child")


def _set_top(comp, f):
    """Rebuild an (n-1)-stack with ``f`` applied to its topmost 1-stack."""
    if st.level(comp) == 1:
        return f(comp)
    return comp[:-1] + (_set_top(comp[-1], f),)


def _mutate_symbol(comp, rng, symbols, keep_tail):
    """Change one non-reserved symbol of the topmost 1-stack, avoiding the last ``keep_tail``."""
    top = st.top_one_stack(comp)
    idx = rng.randrange(len(top) - keep_tail)
    new = rng.choice([a for a in symbols if a != top[idx]])
    return _set_top(comp, lambda o: o[:idx] + (new,) + o[idx + 1:])


def mutate(X, t, rng, symbols=("a", "b")):
    """One random mutation of ``X`` = encode_tree(t), or None if none applies."""
    elems = sorted(X)
    words = {x: te.direction_word(x) for x in elems}
    kind = rng.choice(KINDS)
    x = rng.choice(elems)
    w = words[x]
    if kind == "drop":
        return X - {x}, te.TREE_DOM, kind
    if kind == "shared_label":
        others = [words[y] for y in elems if y != x]
        if not others:
            return None
        # deepest component of x that another element shares
        depth = max(len(_lcp(w, o)) for o in others)
        j = rng.randrange(depth + 1)
        comp = _mutate_symbol(x[j], rng, symbols, 2 if j < len(w) else 0)
        return (X - {x}) | {x[:j] + (comp,) + x[j + 1:]}, te.UNIQUE_LABEL, kind
    if kind == "arity_flip":
        js = [j for j in range(len(w)) if w[j] == "1" and st.top_one_stack(x[j])[-2] == "2"]
        if not js:
            return None
        j = rng.choice(js)
        comp = _set_top(x[j], lambda o: o[:-2] + ("1", "1"))
        return (X - {x}) | {x[:j] + (comp,) + x[j + 1:]}, te.UNIQUE_LABEL, kind
    if kind == "ancestor":
        inner = [u for u in tr.positions(t) if tr.arity_at(t, u) > 0]
        if not inner:
            return None
        return X | {te.encode_node(t, rng.choice(inner))}, te.UNIQUE_LABEL, kind
    if kind == "bad_suffix":
        how = rng.choice(["dir_above_arity", "strip", "reserved"])
        if how == "reserved" or not w:
            j = rng.randrange(len(x))
            comp = _set_top(x[j], lambda o: (rng.choice("12"),) + o)
            return (X - {x}) | {x[:j] + (comp,) + x[j + 1:]}, te.ONLY_LEAVES, kind
        j = rng.randrange(len(w))
        if how == "strip":
            comp = _set_top(x[j], lambda o: o[:-2])
        else:
            comp = _set_top(x[j], lambda o: o[:-2] + ("1", "2"))
        return (X - {x}) | {x[:j] + (comp,) + x[j + 1:]}, te.ONLY_LEAVES, kind
    if kind == "open_child":
        grown = x[:-1] + (st.push_word(("2", "1"), x[-1]), x[-1])
        return (X - {x}) | {grown}, te.TREE_DOM, kind
    raise AssertionError(kind)


def _lcp(a, b):
    k = 0
    while k < min(len(a), len(b)) and a[k] == b[k]:
        k += 1
    return a[:k]


def mutations(trees, n, rng, symbols=("a", "b")):
    """``n`` mutated sets drawn from random trees, as (X, tag, kind, tree)."""
    trees = list(trees)
    out = []
    while len(out) < n:
        t = rng.choice(trees)
        r = mutate(te.encode_tree(t), t, rng, symbols)
        if r is not None:
            out.append(r + (t,))
    return out
