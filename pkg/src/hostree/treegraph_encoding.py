"""Leaf-set encoding of stack trees as sets of n-stacks over Σ ∪ {1,2}.

A node at position ``u`` of a tree of order n is stored as the n-stack of
node labels from the root down to ``u``.  Every label strictly above ``u``
gets two extra symbols on its topmost 1-stack: the arity of that node and
the direction taken next.  A tree is encoded by the set of encodings of its
leaves.

:func:`decode` inverts the encoding.  When the set is not the encoding of
any tree it reports which condition failed: ``OnlyLeaves`` (an element is
not a well-formed node encoding), ``UniqueLabel`` (two elements disagree on
a shared ancestor, or one encodes an ancestor of the other) or ``TreeDom``
(the direction words do not form a tree domain with the declared arities).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

from . import stack_tree as tr
from . import stacks as st
from .errors import UsageError
from .op_dag import OpDag, apply_at, decompose
from .stack_tree import StackTree
from .stacks import DIRECTION_SYMBOLS, Stack

EncodedLeaf = tuple
LeafSet = frozenset

ONLY_LEAVES = "OnlyLeaves"
TREE_DOM = "TreeDom"
UNIQUE_LABEL = "UniqueLabel"
CONDITIONS = (ONLY_LEAVES, TREE_DOM, UNIQUE_LABEL)


def _check_tree(t: StackTree) -> None:
    if t.order < 2:
        raise UsageError("the encoding needs a tree of order >= 2 (labels of level >= 1)")
    for u in tr.positions(t):
        bad = st.symbols_of(tr.label_at(t, u)) & set(DIRECTION_SYMBOLS)
        if bad:
            raise UsageError(f"label at {u!r} uses reserved symbol(s) {sorted(bad)}")


def path_prefix(t: StackTree, u: str) -> tuple:
    """The pushed labels of the strict ancestors of ``u``, root first."""
    out = []
    x = t
    for d in u:
        if d not in "12" or int(d) > len(x.children):
            raise UsageError(f"position {u!r} is not in the tree domain")
        out.append(st.push_word((str(len(x.children)), d), x.label))
        x = x.children[int(d) - 1]
    return tuple(out)


def encode_node(t: StackTree, u: str) -> EncodedLeaf:
    """The n-stack encoding the node of ``t`` at position ``u``."""
    _check_tree(t)
    return path_prefix(t, u) + (tr.label_at(t, u),)


def encode_tree(t: StackTree) -> LeafSet:
    """The set of encodings of the leaves of ``t``."""
    _check_tree(t)
    return frozenset(path_prefix(t, u) + (tr.label_at(t, u),) for u in tr.leaves(t))


# ---------------------------------------------------------------------------
# decoding


class Chain(NamedTuple):
    """One parsed element: labels root to node, declared arities, directions."""

    labels: tuple
    arities: str
    word: str


@dataclass(frozen=True)
class Decoded:
    tree: StackTree | None
    violated: str | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.tree is not None


def parse_element(x: object) -> Chain | None:
    """Split an element into its chain, or ``None`` if it encodes no node."""
    if not st.is_stack(x) or st.level(x) < 2:
        return None
    labels, arities, word = [], [], []
    for j, comp in enumerate(x):
        if j < len(x) - 1:
            top = st.top_one_stack(comp)
            if len(top) < 3:
                return None
            i, d = top[-2], top[-1]
            if i not in DIRECTION_SYMBOLS or d not in DIRECTION_SYMBOLS or d > i:
                return None
            comp = st.pop_word((i, d), comp)
            arities.append(i)
            word.append(d)
        if st.symbols_of(comp) & set(DIRECTION_SYMBOLS):
            return None
        labels.append(comp)
    return Chain(tuple(labels), "".join(arities), "".join(word))


def _unique_label(a: Chain, b: Chain) -> str | None:
    """Why ``a`` and ``b`` cannot be two leaves of one tree, if they cannot."""
    m = min(len(a.word), len(b.word))
    for j in range(m):
        if a.labels[j] != b.labels[j] or a.arities[j] != b.arities[j]:
            return f"disagree on the node at {a.word[:j]!r}"
        if a.word[j] != b.word[j]:
            return None
    return f"{a.word!r} and {b.word!r} are not incomparable positions"


def diagnose(X: Iterable[object]) -> Decoded:
    """Decode ``X`` or report the first failed condition.

    Conditions are checked in the order OnlyLeaves, UniqueLabel, TreeDom.
    """
    X = list(X)
    chains: list[Chain] = []
    lvl = None
    for x in X:
        c = parse_element(x)
        if c is None:
            return Decoded(None, ONLY_LEAVES, f"{x!r} does not encode a node")
        if lvl is None:
            lvl = st.level(x)
        elif st.level(x) != lvl:
            return Decoded(None, ONLY_LEAVES, "elements of different levels")
        chains.append(c)
    for k, a in enumerate(chains):
        for b in chains[k + 1:]:
            why = _unique_label(a, b)
            if why is not None:
                return Decoded(None, UNIQUE_LABEL, why)
    if not chains:
        return Decoded(None, TREE_DOM, "empty set: the induced domain has no root")
    labels: dict[str, Stack] = {}
    arity: dict[str, int] = {}
    for c in chains:
        for j in range(len(c.word)):
            labels[c.word[:j]] = c.labels[j]
            arity[c.word[:j]] = int(c.arities[j])
        labels[c.word] = c.labels[-1]
        arity[c.word] = 0
    for u, k in arity.items():
        for d in "12"[:k]:
            if u + d not in labels:
                return Decoded(None, TREE_DOM, f"node {u!r} declares arity {k} but {u + d!r} is missing")
    return Decoded(tr.from_position_map(labels))


def decode(X: Iterable[object]) -> StackTree | None:
    """The tree ``t`` with ``X`` = encode_tree(t), if there is one."""
    return diagnose(X).tree


def is_encoding(X: Iterable[object]) -> bool:
    return diagnose(X).tree is not None


# ---------------------------------------------------------------------------
# operations on leaf sets


def direction_word(x: EncodedLeaf) -> str:
    c = parse_element(x)
    if c is None:
        raise UsageError(f"{x!r} does not encode a node")
    return c.word


def graft(prefix: tuple, X: Iterable[EncodedLeaf]) -> LeafSet:
    """Encodings of a subtree placed below the ancestors ``prefix``."""
    return frozenset(prefix + x for x in X)


def below(X: Iterable[EncodedLeaf], u: str) -> LeafSet:
    """Elements whose node lies in the subtree at ``u``."""
    return frozenset(x for x in X if direction_word(x).startswith(u))


def strip(X: Iterable[EncodedLeaf], depth: int) -> LeafSet:
    """Drop the first ``depth`` components, re-rooting at that depth."""
    return frozenset(x[depth:] for x in X)


def leaf_set_step(D: OpDag, X: Iterable[EncodedLeaf]) -> set[LeafSet]:
    """Leaf sets reachable from ``X`` by one application of ``D``.

    Works on the set itself: for each leaf index, pick the deepest
    ancestor ``v`` whose subtree contains the whole effect of ``D``,
    rewrite the elements below ``v`` and keep every other element
    unchanged.
    """
    X = frozenset(X)
    dec = decompose(D)
    if dec is None:
        raise UsageError("DAG is not a compound operation")
    n_in = len(D.inputs)
    words = sorted(direction_word(x) for x in X)
    by_word = {direction_word(x): x for x in X}
    out: set[LeafSet] = set()
    for w in words:
        for cut in range(len(w), -1, -1):
            v = w[:cut]
            sub = below(X, v)
            r = decode(strip(sub, cut))
            if r is None:
                raise UsageError("not a leaf-set encoding")
            rel = sorted(direction_word(x) for x in sub).index(w) + 1
            if rel + n_in - 1 > r.n_leaves:
                continue
            res = apply_at(D, rel, r, dec)
            if res is None:
                continue
            prefix = by_word[w][:cut]
            out.add((X - sub) | graft(prefix, encode_tree(res)))
            break
    return out
