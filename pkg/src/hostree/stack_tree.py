"""Ordered stack trees of arity at most 2 and their leaf-local operations.

Positions are strings over ``"12"`` (the root is ``""``).  Leaves are
numbered from 1 in left-to-right (lexicographic) order.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Mapping, Sequence

from . import stacks as st
from .errors import ParseError, UsageError, locate
from .stacks import Stack, StackOp

MAX_ARITY = 2


class StackTree:
    """Immutable tree node: an (n-1)-stack label and 0..2 children."""

    __slots__ = ("label", "children", "_hash", "_leaves", "_size")

    def __init__(self, label: Stack, children: Sequence["StackTree"] = ()):
        children = tuple(children)
        if len(children) > MAX_ARITY:
            raise UsageError(f"arity {len(children)} exceeds {MAX_ARITY}")
        lv = st.level(label)
        for c in children:
            if not isinstance(c, StackTree):
                raise UsageError(f"child is not a StackTree: {c!r}")
            if st.level(c.label) != lv:
                raise UsageError("all labels of a stack tree must have the same level")
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "_hash", hash((label, children)))
        object.__setattr__(self, "_leaves", 1 if not children else sum(c._leaves for c in children))
        object.__setattr__(self, "_size", 1 + sum(c._size for c in children))

    def __setattr__(self, name, value):
        raise AttributeError("StackTree is immutable")

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, StackTree) or self._hash != other._hash:
            return False
        return self.label == other.label and self.children == other.children

    def __lt__(self, other: "StackTree") -> bool:
        return sort_key(self) < sort_key(other)

    def __repr__(self) -> str:
        return f"StackTree({format_tree(self)})"

    @property
    def n_leaves(self) -> int:
        return self._leaves

    @property
    def n_nodes(self) -> int:
        return self._size

    @property
    def order(self) -> int:
        """n, for a tree whose labels are (n-1)-stacks."""
        return st.level(self.label) + 1


def leaf(label: Stack) -> StackTree:
    return StackTree(label, ())


# ---------------------------------------------------------------------------
# positions


def positions(t: StackTree) -> list[str]:
    """Domain in lexicographic (pre-order) order."""
    out: list[str] = []

    def go(x: StackTree, u: str) -> None:
        out.append(u)
        for j, c in enumerate(x.children, 1):
            go(c, u + str(j))

    go(t, "")
    return out


def leaves(t: StackTree) -> list[str]:
    """Frontier positions, left to right."""
    out: list[str] = []

    def go(x: StackTree, u: str) -> None:
        if not x.children:
            out.append(u)
        for j, c in enumerate(x.children, 1):
            go(c, u + str(j))

    go(t, "")
    return out


def subtree(t: StackTree, u: str) -> StackTree:
    x = t
    for ch in u:
        j = _direction(ch)
        if j > len(x.children):
            raise UsageError(f"position {u!r} is not in the tree domain")
        x = x.children[j - 1]
    return x


def label_at(t: StackTree, u: str) -> Stack:
    return subtree(t, u).label


def arity_at(t: StackTree, u: str) -> int:
    return len(subtree(t, u).children)


def _direction(ch: str) -> int:
    if ch not in "12" or len(ch) != 1:
        raise UsageError(f"positions are words over 1,2; got {ch!r}")
    return int(ch)


def replace_subtree(t: StackTree, u: str, s: StackTree) -> StackTree:
    """Context substitution: the subtree at ``u`` becomes ``s``."""
    if st.level(s.label) != st.level(t.label):
        raise UsageError("replacement has a different label level")
    if not u:
        return s
    j = _direction(u[0])
    if j > len(t.children):
        raise UsageError(f"position {u!r} is not in the tree domain")
    kids = list(t.children)
    kids[j - 1] = replace_subtree(kids[j - 1], u[1:], s)
    return StackTree(t.label, kids)


def leaf_position(t: StackTree, i: int) -> str:
    """Position of the i-th leaf (1-based)."""
    if not 1 <= i <= t.n_leaves:
        raise UsageError(f"leaf index {i} out of range 1..{t.n_leaves}")
    u = ""
    x = t
    while x.children:
        for j, c in enumerate(x.children, 1):
            if i <= c.n_leaves:
                u += str(j)
                x = c
                break
            i -= c.n_leaves
    return u


def _map_leaf(t: StackTree, i: int, f) -> StackTree | None:
    """Replace the i-th leaf by f(leaf); ``None`` if f returns ``None``."""
    if not t.children:
        return f(t)
    kids = list(t.children)
    for j, c in enumerate(kids):
        if i <= c.n_leaves:
            nc = _map_leaf(c, i, f)
            if nc is None:
                return None
            kids[j] = nc
            return StackTree(t.label, kids)
        i -= c.n_leaves
    raise AssertionError("leaf index escaped range check")


def _check_index(t: StackTree, i: int) -> None:
    if not isinstance(i, int) or not 1 <= i <= t.n_leaves:
        raise UsageError(f"leaf index {i} out of range 1..{t.n_leaves}")


# ---------------------------------------------------------------------------
# leaf-local operations


def apply_basic_at(op: StackOp, i: int, t: StackTree) -> StackTree | None:
    """Apply a stack operation to the label of the i-th leaf."""
    _check_index(t, i)

    def f(x: StackTree) -> StackTree | None:
        s = st.apply_stack_op(op, x.label)
        return None if s is None else StackTree(s, ())

    return _map_leaf(t, i, f)


def duplicate_leaf(k: int, i: int, t: StackTree) -> StackTree:
    """Give the i-th leaf ``k`` children carrying its label."""
    if k not in (1, 2):
        raise UsageError(f"duplication arity must be 1 or 2, got {k}")
    _check_index(t, i)
    return _map_leaf(t, i, lambda x: StackTree(x.label, [leaf(x.label)] * k))


def merge_leaves(k: int, i: int, t: StackTree) -> StackTree | None:
    """Inverse of :func:`duplicate_leaf`: remove the k sibling leaves i..i+k-1."""
    if k not in (1, 2):
        raise UsageError(f"merge arity must be 1 or 2, got {k}")
    _check_index(t, i)
    if i + k - 1 > t.n_leaves:
        return None
    return _merge(t, i, k)


def _merge(x: StackTree, i: int, k: int) -> StackTree | None:
    if not x.children:
        return None
    if i == 1 and x.n_leaves >= k and len(x.children) == k and all(
        not c.children and c.label == x.label for c in x.children
    ):
        return StackTree(x.label, ())
    kids = list(x.children)
    for j, c in enumerate(kids):
        if i <= c.n_leaves:
            if i + k - 1 > c.n_leaves:
                return None  # the k leaves straddle two subtrees
            nc = _merge(c, i, k)
            if nc is None:
                return None
            kids[j] = nc
            return StackTree(x.label, kids)
        i -= c.n_leaves
    return None


# ---------------------------------------------------------------------------
# conversions


def to_position_map(t: StackTree) -> dict[str, Stack]:
    """Tree as a finite map from positions to labels."""
    return {u: label_at(t, u) for u in positions(t)}


def from_position_map(m: Mapping[str, Stack]) -> StackTree:
    """Inverse of :func:`to_position_map`; checks the domain is a tree domain."""
    if "" not in m:
        raise UsageError("tree domain must contain the root")
    for u in m:
        for ch in u:
            _direction(ch)
        if u and u[:-1] not in m:
            raise UsageError(f"domain not prefix-closed at {u!r}")
        if u.endswith("2") and u[:-1] + "1" not in m:
            raise UsageError(f"domain not left-closed at {u!r}")

    def build(u: str) -> StackTree:
        kids = [build(u + d) for d in "12" if u + d in m]
        return StackTree(m[u], kids)

    return build("")


def to_sigma_tree(t: StackTree) -> tuple:
    """Order-1 trees as plain ``(symbol, (children...))`` terms."""
    if t.order != 1:
        raise UsageError("only order-1 stack trees are symbol-labelled trees")
    return (t.label, tuple(to_sigma_tree(c) for c in t.children))


def from_sigma_tree(term: tuple) -> StackTree:
    a, kids = term
    st.check_symbol(a)
    return StackTree(a, [from_sigma_tree(c) for c in kids])


def to_stack(t: StackTree) -> Stack:
    """A unary stack tree read root to leaf is an n-stack."""
    out = []
    x = t
    while True:
        out.append(x.label)
        if not x.children:
            break
        if len(x.children) != 1:
            raise UsageError("only trees of arity <= 1 convert to a stack")
        x = x.children[0]
    return tuple(out)


def from_stack(s: Stack) -> StackTree:
    if st.level(s) < 1:
        raise UsageError("need a stack of level >= 1")
    x = None
    for lab in reversed(s):
        x = StackTree(lab, () if x is None else (x,))
    return x


# ---------------------------------------------------------------------------
# text, JSON, DOT


def format_tree(t: StackTree) -> str:
    inner = [st.format_stack(t.label)] + [format_tree(c) for c in t.children]
    return "node(" + ", ".join(inner) + ")"


def sort_key(t: StackTree) -> tuple:
    return (t.n_nodes, format_tree(t))


def canonical(trees: Iterable[StackTree]) -> list[StackTree]:
    """Deduplicated, canonically ordered list."""
    return sorted(set(trees), key=sort_key)


def parse_tree(text: str) -> StackTree:
    """Parse ``node(<stack>, child1, child2?)``; whitespace is ignored."""
    pos = 0
    n = len(text)

    def err(msg: str, at: int):
        line, col = locate(text, min(at, n))
        raise ParseError(msg, line, col)

    def skip() -> None:
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def expect(tok: str) -> None:
        nonlocal pos
        skip()
        if not text.startswith(tok, pos):
            err(f"expected {tok!r}", pos)
        pos += len(tok)

    def stack_text() -> Stack:
        nonlocal pos
        skip()
        start = pos
        depth = 0
        while pos < n:
            c = text[pos]
            if c == "[":
                depth += 1
            elif c == "]":
                depth -= 1
                if depth < 0:
                    err("unbalanced ']'", pos)
            elif depth == 0 and c in ",)":
                break
            pos += 1
        raw = text[start:pos]
        if not raw.strip():
            err("expected a stack label", start)
        try:
            return st.parse_stack(raw)
        except ParseError as e:
            line, col = locate(text, start)
            if e.line == 1:
                col += e.column - 1
            raise ParseError(e.message, line + e.line - 1, col) from None

    def node() -> StackTree:
        nonlocal pos
        expect("node")
        expect("(")
        start = pos
        label = stack_text()
        kids = []
        while True:
            skip()
            if pos < n and text[pos] == ",":
                pos += 1
                kids.append(node())
            else:
                break
        expect(")")
        try:
            return StackTree(label, kids)
        except UsageError as e:
            err(str(e), start)

    t = node()
    skip()
    if pos != n:
        err("trailing input after tree", pos)
    return t


def tree_to_json(t: StackTree) -> dict:
    return {
        "label": st.stack_to_json(t.label)["stack"],
        "children": [tree_to_json(c) for c in t.children],
    }


def tree_from_json(doc: object) -> StackTree:
    if isinstance(doc, str):
        return parse_tree(doc)
    if not isinstance(doc, dict) or "label" not in doc:
        raise UsageError(f"not a tree document: {doc!r}")
    lab = doc["label"]
    lab = st.parse_stack(lab) if isinstance(lab, str) and len(lab) > 1 else st.make_stack(lab)
    return StackTree(lab, [tree_from_json(c) for c in doc.get("children", [])])


def to_dot(t: StackTree, name: str = "tree") -> str:
    lines = [f"digraph {name} {{", "  node [shape=box];"]
    for u in positions(t):
        nid = "n" + (u or "e")
        lines.append(f'  {nid} [label="{st.format_stack(label_at(t, u))}"];')
        if u:
            pid = "n" + (u[:-1] or "e")
            lines.append(f'  {pid} -> {nid} [label="{u[-1]}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# enumeration


def enumerate_shapes(max_nodes: int) -> list[tuple]:
    """All tree shapes (as nested tuples of children) with at most ``max_nodes`` nodes."""
    by_size: dict[int, list[tuple]] = {1: [()]}
    for n in range(2, max_nodes + 1):
        out = []
        for a in by_size.get(n - 1, []):
            out.append((a,))
        for k in range(1, n - 1):
            for a in by_size.get(k, []):
                for b in by_size.get(n - 1 - k, []):
                    out.append((a, b))
        by_size[n] = out
    return [s for n in range(1, max_nodes + 1) for s in by_size[n]]


def enumerate_trees(labels: Sequence[Stack], max_nodes: int) -> Iterator[StackTree]:
    """Every tree with at most ``max_nodes`` nodes labelled from ``labels``."""
    labels = list(labels)

    def fill(shape: tuple) -> Iterator[StackTree]:
        if not shape:
            for a in labels:
                yield leaf(a)
            return
        if len(shape) == 1:
            for a in labels:
                for c in fill(shape[0]):
                    yield StackTree(a, (c,))
            return
        for a in labels:
            for c1 in fill(shape[0]):
                for c2 in fill(shape[1]):
                    yield StackTree(a, (c1, c2))

    for shape in enumerate_shapes(max_nodes):
        yield from fill(shape)
