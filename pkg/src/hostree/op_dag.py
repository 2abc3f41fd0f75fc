"""Compound rewrite operations as ordered DAGs.

Vertices are the integers ``0..n-1`` and the vertex order is the integer
order.  Edges carry a stack operation (including tests and ``Identity``) or
one of the direction labels ``Dir(1)``, ``Dir(2)``, ``Codir(1)``,
``Codir(2)``.  Inputs are the in-degree-0 vertices and outputs the
out-degree-0 vertices, both listed in vertex order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

from . import _dfa
from . import stacks as st
from . import stack_tree as tr
from .errors import ParseError, UsageError, locate
from .stack_tree import StackTree
from .stacks import Cop, Identity, Ncop, Rew, StackOp, Test


@dataclass(frozen=True)
class Dir:
    """Edge from a duplicated leaf to its d-th new child."""

    d: int

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise UsageError(f"direction must be 1 or 2, got {self.d!r}")

    def __str__(self) -> str:
        return str(self.d)


@dataclass(frozen=True)
class Codir:
    """Edge from the d-th merged leaf to its parent."""

    d: int

    def __post_init__(self) -> None:
        if self.d not in (1, 2):
            raise UsageError(f"direction must be 1 or 2, got {self.d!r}")

    def __str__(self) -> str:
        return f"-{self.d}"


@dataclass(frozen=True)
class Copy:
    """Argument of :func:`basic_dag`: k-fold leaf duplication."""

    k: int


@dataclass(frozen=True)
class Barcopy:
    """Argument of :func:`basic_dag`: inverse of k-fold duplication."""

    k: int


EdgeLabel = Union[StackOp, Dir, Codir]
Edge = tuple  # (source, label, target)


def label_token(label: EdgeLabel) -> str:
    """Injective string for a label; used for sorting and canonical keys."""
    if isinstance(label, Test):
        return f"test[{label.lang.level}:{label.lang.digest}]"
    if isinstance(label, (Rew, Identity, Cop, Ncop, Dir, Codir)):
        return str(label)
    raise UsageError(f"not an edge label: {label!r}")


def is_direction(label: EdgeLabel) -> bool:
    return isinstance(label, (Dir, Codir))


class OpDag:
    """Immutable finite DAG with labelled edges."""

    __slots__ = ("n", "edges", "__dict__")

    def __init__(self, n: int, edges: Iterable[Edge]):
        if not isinstance(n, int) or n < 1:
            raise UsageError("a DAG needs at least one vertex")
        es = set()
        for u, lab, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise UsageError(f"edge ({u}, {lab}, {v}) mentions an unknown vertex")
            label_token(lab)
            es.add((u, lab, v))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", tuple(sorted(es, key=lambda e: (e[0], e[2], label_token(e[1])))))
        if self._has_cycle():
            raise UsageError("edges form a cycle")

    def __setattr__(self, name, value):
        raise AttributeError("OpDag is immutable")

    # -- structure --------------------------------------------------------

    @cached_property
    def out_edges(self) -> tuple[tuple[Edge, ...], ...]:
        out: list[list[Edge]] = [[] for _ in range(self.n)]
        for e in self.edges:
            out[e[0]].append(e)
        return tuple(tuple(sorted(x, key=lambda e: label_token(e[1]))) for x in out)

    @cached_property
    def in_edges(self) -> tuple[tuple[Edge, ...], ...]:
        inc: list[list[Edge]] = [[] for _ in range(self.n)]
        for e in self.edges:
            inc[e[2]].append(e)
        return tuple(tuple(sorted(x, key=lambda e: label_token(e[1]))) for x in inc)

    @property
    def inputs(self) -> list[int]:
        return [v for v in range(self.n) if not self.in_edges[v]]

    @property
    def outputs(self) -> list[int]:
        return [v for v in range(self.n) if not self.out_edges[v]]

    @property
    def in_degree(self) -> int:
        """Number of input vertices (leaves consumed)."""
        return len(self.inputs)

    @property
    def out_degree(self) -> int:
        return len(self.outputs)

    def _has_cycle(self) -> bool:
        indeg = [0] * self.n
        succ: list[list[int]] = [[] for _ in range(self.n)]
        for u, _, v in self.edges:
            indeg[v] += 1
            succ[u].append(v)
        todo = [v for v in range(self.n) if indeg[v] == 0]
        seen = 0
        while todo:
            u = todo.pop()
            seen += 1
            for v in succ[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    todo.append(v)
        return seen != self.n

    def topological_order(self) -> list[int]:
        indeg = [len(self.in_edges[v]) for v in range(self.n)]
        ready = sorted(v for v in range(self.n) if indeg[v] == 0)
        out = []
        while ready:
            u = ready.pop(0)
            out.append(u)
            for _, _, v in self.out_edges[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    ready.append(v)
                    ready.sort()
        return out

    def is_connected(self) -> bool:
        return len(_components(self, frozenset(range(self.n)), frozenset())) == 1

    # -- identity ---------------------------------------------------------

    @cached_property
    def key(self) -> tuple:
        """Isomorphism invariant that respects the input order.

        Vertices are renamed in breadth-first discovery order starting from
        the inputs; out-edges are followed in label order.
        """
        order: dict[int, int] = {}
        queue: list[int] = []
        for v in self.inputs:
            order[v] = len(order)
            queue.append(v)
        k = 0
        while k < len(queue):
            u = queue[k]
            k += 1
            for _, _, v in self.out_edges[u]:
                if v not in order:
                    order[v] = len(order)
                    queue.append(v)
        edges = tuple(sorted((order[u], label_token(lab), order[v]) for u, lab, v in self.edges))
        return (self.n, edges)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, OpDag) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __repr__(self) -> str:
        body = "; ".join(f"({u + 1}, {label_token(l)}, {v + 1})" for u, l, v in self.edges)
        return f"OpDag(v=1..{self.n}; {body})"

    def relabel(self, mapping: Sequence[int]) -> "OpDag":
        """Rename vertex ``v`` to ``mapping[v]`` (a permutation)."""
        return OpDag(self.n, [(mapping[u], l, mapping[v]) for u, l, v in self.edges])

    @property
    def size(self) -> int:
        return self.n


# ---------------------------------------------------------------------------
# constructors


def emptydag() -> OpDag:
    return OpDag(1, ())


def basic_dag(op: StackOp | Copy | Barcopy | Dir | Codir) -> OpDag:
    if isinstance(op, Copy):
        if op.k == 1:
            return OpDag(2, [(0, Dir(1), 1)])
        if op.k == 2:
            return OpDag(3, [(0, Dir(1), 1), (0, Dir(2), 2)])
        raise UsageError(f"copy arity must be 1 or 2, got {op.k}")
    if isinstance(op, Barcopy):
        if op.k == 1:
            return OpDag(2, [(0, Codir(1), 1)])
        if op.k == 2:
            return OpDag(3, [(0, Codir(1), 2), (1, Codir(2), 2)])
        raise UsageError(f"barcopy arity must be 1 or 2, got {op.k}")
    if isinstance(op, Dir) and op.d == 1:
        return basic_dag(Copy(1))
    if isinstance(op, Codir) and op.d == 1:
        return basic_dag(Barcopy(1))
    if isinstance(op, (Rew, Identity, Cop, Ncop, Test)):
        return OpDag(2, [(0, op, 1)])
    raise UsageError(f"no basic DAG for {op!r}")


def chain(ops: Sequence[StackOp | Dir | Codir]) -> OpDag:
    """Linear DAG reading ``ops`` in order (only unary labels)."""
    edges = []
    for i, op in enumerate(ops):
        if isinstance(op, (Dir, Codir)) and op.d != 1:
            raise UsageError("a chain can only use direction 1")
        edges.append((i, op, i + 1))
    return OpDag(len(ops) + 1, edges)


def concat_raw(D: OpDag, i: int, Dp: OpDag, j: int) -> OpDag:
    """(i,j)-concatenation with vertex order: D first, then the rest of Dp."""
    outs, ins = D.outputs, Dp.inputs
    if not 1 <= i <= len(outs):
        raise UsageError(f"output index {i} out of range 1..{len(outs)}")
    if not 1 <= j <= len(ins):
        raise UsageError(f"input index {j} out of range 1..{len(ins)}")
    d = min(len(outs) - i, len(ins) - j) + 1
    f: dict[int, int] = {ins[j - 1 + m]: outs[i - 1 + m] for m in range(d)}
    nxt = D.n
    for v in range(Dp.n):
        if v not in f:
            f[v] = nxt
            nxt += 1
    edges = list(D.edges) + [(f[u], l, f[v]) for u, l, v in Dp.edges]
    return OpDag(nxt, edges)


def concat(D: OpDag, i: int, Dp: OpDag, j: int) -> OpDag:
    """(i,j)-concatenation; compound results are renumbered into their inductive order."""
    raw = concat_raw(D, i, Dp, j)
    dec = decompose(raw)
    return raw if dec is None else _renumber(raw, dec)


def merged_count(D: OpDag, i: int, Dp: OpDag, j: int) -> int:
    return min(D.out_degree - i, Dp.in_degree - j) + 1


# ---------------------------------------------------------------------------
# decomposition


@dataclass(frozen=True)
class Decomposition:
    """One way of building a DAG by the five inductive cases.

    ``parts`` are the sub-operations D1..D4 in order; ``label`` is the
    middle basic operation of case 2; ``vertex`` is the single vertex of
    case 1.
    """

    case: int
    parts: tuple
    label: object = None
    vertex: int = -1

    def vertex_order(self) -> list[int]:
        if self.case == 1:
            return [self.vertex]
        out: list[int] = []
        for p in self.parts:
            out += p.vertex_order()
        return out


def _components(D: OpDag, S: frozenset, removed: frozenset) -> list[frozenset]:
    """Weakly connected components of the sub-DAG induced by S minus ``removed`` edges."""
    comp: dict[int, int] = {}
    out = []
    for s in sorted(S):
        if s in comp:
            continue
        cid = len(out)
        comp[s] = cid
        members = [s]
        stack = [s]
        while stack:
            u = stack.pop()
            for e in D.out_edges[u] + D.in_edges[u]:
                if e in removed:
                    continue
                w = e[2] if e[0] == u else e[0]
                if w in S and w not in comp:
                    comp[w] = cid
                    members.append(w)
                    stack.append(w)
        out.append(frozenset(members))
    return out


class _Decomposer:
    """Memoized search over induced sub-DAGs (vertex subsets)."""

    def __init__(self, D: OpDag, last: bool = False):
        self.D = D
        self.last = last
        self.memo: dict[frozenset, Decomposition | None] = {}

    def ins(self, S: frozenset) -> list[int]:
        return [v for v in sorted(S) if not any(e[0] in S for e in self.D.in_edges[v])]

    def outs(self, S: frozenset) -> list[int]:
        return [v for v in sorted(S) if not any(e[2] in S for e in self.D.out_edges[v])]

    def candidates(self, S: frozenset) -> list[tuple]:
        """Possible top-level splits of S, each (case, removed edges, anchors)."""
        D = self.D
        cands = []
        inner = [e for e in D.edges if e[0] in S and e[2] in S]
        for e in inner:
            x, lab, y = e
            if isinstance(lab, Dir):
                xo = [f for f in D.out_edges[x] if f[2] in S]
                if lab.d == 1 and len(xo) == 1:
                    cands.append((2, (e,), (x, y)))
            elif isinstance(lab, Codir):
                yi = [f for f in D.in_edges[y] if f[0] in S]
                if lab.d == 1 and len(yi) == 1:
                    cands.append((2, (e,), (x, y)))
            else:
                cands.append((2, (e,), (x, y)))
        for x in sorted(S):
            xo = [f for f in D.out_edges[x] if f[2] in S]
            labs = {f[1] for f in xo}
            if len(xo) == 2 and labs == {Dir(1), Dir(2)}:
                e1 = next(f for f in xo if f[1] == Dir(1))
                e2 = next(f for f in xo if f[1] == Dir(2))
                cands.append((3, (e1, e2), (x, e1[2], e2[2])))
        for z in sorted(S):
            zi = [f for f in D.in_edges[z] if f[0] in S]
            labs = {f[1] for f in zi}
            if len(zi) == 2 and labs == {Codir(1), Codir(2)}:
                e1 = next(f for f in zi if f[1] == Codir(1))
                e2 = next(f for f in zi if f[1] == Codir(2))
                cands.append((4, (e1, e2), (e1[0], e2[0], z)))
        branches = [c for c in cands if c[0] == 3]
        merges = [c for c in cands if c[0] == 4]
        for b in branches:
            for m in merges:
                cands.append((5, b[1] + m[1], b[2] + m[2]))
        return cands

    def try_split(self, S: frozenset, cand: tuple) -> Decomposition | None:
        case, removed, anchors = cand
        comps = _components(self.D, S, frozenset(removed))
        where = {v: c for c in comps for v in c}

        def part(anchor_in: int | None, anchor_out: int | None) -> frozenset | None:
            v = anchor_in if anchor_in is not None else anchor_out
            P = where[v]
            if anchor_in is not None and self.ins(P) != [anchor_in]:
                return None
            if anchor_out is not None and self.outs(P) != [anchor_out]:
                return None
            return P

        if case == 2:
            x, y = anchors
            specs = [(None, x), (y, None)]
        elif case == 3:
            x, y1, y2 = anchors
            # D1 holds x; D2 hangs below direction 1, D3 below direction 2
            specs = [(None, x), (y1, None), (y2, None)]
        elif case == 4:
            x1, x2, z = anchors
            specs = [(None, x1), (None, x2), (z, None)]
        else:
            x, y1, y2, w1, w2, z = anchors
            specs = [(None, x), (y1, w1), (y2, w2), (z, None)]
        if len(comps) != len(specs):
            return None
        parts_sets = []
        for a_in, a_out in specs:
            P = part(a_in, a_out)
            if P is None:
                return None
            if case == 5 and a_in is not None and a_out is not None and where[a_out] is not P:
                return None
            parts_sets.append(P)
        if len(set(parts_sets)) != len(parts_sets):
            return None
        parts = []
        for P in parts_sets:
            d = self.run(P)
            if d is None:
                return None
            parts.append(d)
        label = removed[0][1] if case == 2 else None
        return Decomposition(case, tuple(parts), label)

    def run(self, S: frozenset) -> Decomposition | None:
        if S in self.memo:
            return self.memo[S]
        self.memo[S] = None  # guards against re-entry; sub-parts are strictly smaller anyway
        result = None
        if len(S) == 1:
            (v,) = S
            result = Decomposition(1, (), None, v)
        else:
            cands = self.candidates(S)
            if self.last:
                cands = cands[::-1]
            for c in cands:
                result = self.try_split(S, c)
                if result is not None:
                    break
        self.memo[S] = result
        return result

    def all_top(self) -> list[Decomposition]:
        S = frozenset(range(self.D.n))
        if len(S) == 1:
            return [self.run(S)]
        out = []
        for c in self.candidates(S):
            d = self.try_split(S, c)
            if d is not None:
                out.append(d)
        return out


_DECOMP_CACHE: dict[tuple, Decomposition | None] = {}


def decompose(D: OpDag, last: bool = False) -> Decomposition | None:
    """A decomposition by the inductive cases, or ``None`` if D is not compound."""
    ck = (D.n, D.edges, last)
    if ck in _DECOMP_CACHE:
        return _DECOMP_CACHE[ck]
    res = _Decomposer(D, last).run(frozenset(range(D.n)))
    if len(_DECOMP_CACHE) > 50000:
        _DECOMP_CACHE.clear()
    _DECOMP_CACHE[ck] = res
    return res


def decompositions(D: OpDag) -> list[Decomposition]:
    """Every distinct top-level split (sub-parts decomposed canonically)."""
    return _Decomposer(D).all_top()


def is_compound(D: OpDag) -> bool:
    return decompose(D) is not None


def _renumber(D: OpDag, dec: Decomposition) -> OpDag:
    order = dec.vertex_order()
    mapping = [0] * D.n
    for new, old in enumerate(order):
        mapping[old] = new
    return D.relabel(mapping)


def normal_order(D: OpDag) -> OpDag:
    """Renumber a compound DAG so its vertex order is the inductive order."""
    dec = decompose(D)
    if dec is None:
        raise UsageError("DAG is not a compound operation")
    return _renumber(D, dec)


# ---------------------------------------------------------------------------
# application


def _apply_dec(D: OpDag, dec: Decomposition, i: int, t: StackTree | None) -> StackTree | None:
    if t is None:
        return None
    if not 1 <= i <= t.n_leaves:
        return None
    c = dec.case
    p = dec.parts
    if c == 1:
        return t
    if c == 2:
        t = _apply_dec(D, p[0], i, t)
        if t is None:
            return None
        lab = dec.label
        if isinstance(lab, Dir):
            t = tr.duplicate_leaf(1, i, t)
        elif isinstance(lab, Codir):
            t = tr.merge_leaves(1, i, t)
        else:
            t = tr.apply_basic_at(lab, i, t)
        return _apply_dec(D, p[1], i, t)
    if c == 3:
        t = _apply_dec(D, p[0], i, t)
        if t is None:
            return None
        t = tr.duplicate_leaf(2, i, t)
        t = _apply_dec(D, p[2], i + 1, t)
        return _apply_dec(D, p[1], i, t)
    if c == 4:
        t = _apply_dec(D, p[0], i, t)
        t = _apply_dec(D, p[1], i + 1, t)
        if t is None or i + 1 > t.n_leaves:
            return None
        t = tr.merge_leaves(2, i, t)
        return _apply_dec(D, p[2], i, t)
    # case 5
    t = _apply_dec(D, p[0], i, t)
    if t is None:
        return None
    t = tr.duplicate_leaf(2, i, t)
    t = _apply_dec(D, p[1], i, t)
    t = _apply_dec(D, p[2], i + 1, t)
    if t is None or i + 1 > t.n_leaves:
        return None
    t = tr.merge_leaves(2, i, t)
    return _apply_dec(D, p[3], i, t)


def apply_at(D: OpDag, i: int, t: StackTree, decomposition: Decomposition | None = None) -> StackTree | None:
    """Localized application of D starting at the i-th leaf of t."""
    dec = decomposition or decompose(D)
    if dec is None:
        raise UsageError("DAG is not a compound operation")
    if not isinstance(i, int) or not 1 <= i <= t.n_leaves:
        raise UsageError(f"leaf index {i} out of range 1..{t.n_leaves}")
    _check_levels(D, t)
    return _apply_dec(D, dec, i, t)


def _check_levels(D: OpDag, t: StackTree) -> None:
    lv = st.level(t.label)
    for _, lab, _ in D.edges:
        if isinstance(lab, Test) and lab.level != lv:
            raise UsageError(f"test over level-{lab.level} stacks on a tree with level-{lv} labels")
        if isinstance(lab, (Cop, Ncop)) and lab.k > lv:
            raise UsageError(f"{lab} is not an operation on level-{lv} labels")


def apply_all(D: OpDag, t: StackTree) -> list[StackTree]:
    dec = decompose(D)
    if dec is None:
        raise UsageError("DAG is not a compound operation")
    out = []
    for i in range(1, t.n_leaves + 1):
        r = apply_at(D, i, t, dec)
        if r is not None:
            out.append(r)
    return tr.canonical(out)


def apply_parallel(Ds: Sequence[OpDag], idx: Sequence[int], t: StackTree) -> StackTree | None:
    """Apply D_k at i_k first, then D_{k-1} at i_{k-1}, ..., D_1 at i_1."""
    if len(Ds) != len(idx) or not Ds:
        raise UsageError("need equally many operations and indices (at least one)")
    for j in range(len(Ds) - 1):
        if idx[j + 1] < idx[j] + Ds[j].in_degree:
            raise UsageError(f"indices violate spacing: i{j + 2} < i{j + 1} + d{j + 1}")
    for j in range(len(Ds) - 1, -1, -1):
        if not 1 <= idx[j] <= t.n_leaves:
            if j == len(Ds) - 1:
                raise UsageError(f"leaf index {idx[j]} out of range 1..{t.n_leaves}")
            return None
        t = apply_at(Ds[j], idx[j], t)
        if t is None:
            return None
    return t


# ---------------------------------------------------------------------------
# bounded iteration sets


def concat_all(D: OpDag, Dp: OpDag) -> set[OpDag]:
    """D . D' : every (i,j)-concatenation that is a compound operation."""
    out = set()
    for i in range(1, D.out_degree + 1):
        for j in range(1, Dp.in_degree + 1):
            r = concat_raw(D, i, Dp, j)
            dec = decompose(r)
            if dec is not None:
                out.add(_renumber(r, dec))
    return out


def concat_sets(A: Iterable[OpDag], B: Iterable[OpDag]) -> set[OpDag]:
    B = list(B)
    out = set()
    for x in A:
        for y in B:
            out |= concat_all(x, y)
    return out


def power(Ds: Iterable[OpDag], n: int) -> set[OpDag]:
    """D^n with the non-associative definition D^n = U_{i<n} D^i . D^{n-i}."""
    base = set(Ds)
    pw: dict[int, set[OpDag]] = {1: base}
    for m in range(2, n + 1):
        acc: set[OpDag] = set()
        for i in range(1, m):
            acc |= concat_sets(pw[i], pw[m - i])
        pw[m] = acc
    if n == 0:
        return {emptydag()}
    return pw[n]


def build_case(case: int, parts: Sequence[OpDag], label: object = None) -> OpDag:
    """Assemble a DAG with one inductive constructor from compound parts."""
    if case == 1:
        return emptydag()
    if case == 2:
        return concat(concat(parts[0], 1, basic_dag(label), 1), 1, parts[1], 1)
    if case == 3:
        d1, d2, d3 = parts
        return concat(concat(concat(d1, 1, basic_dag(Copy(2)), 1), 2, d3, 1), 1, d2, 1)
    if case == 4:
        d1, d2, d3 = parts
        return concat(concat(d1, 1, concat(d2, 1, basic_dag(Barcopy(2)), 2), 1), 1, d3, 1)
    if case == 5:
        d1, d2, d3, d4 = parts
        x = concat(concat(concat(d1, 1, basic_dag(Copy(2)), 1), 2, d3, 1), 1, d2, 1)
        return concat(concat(x, 1, basic_dag(Barcopy(2)), 1), 1, d4, 1)
    raise UsageError(f"unknown case {case}")


def assemble(case: int, parts: Sequence[OpDag], label: object = None) -> OpDag:
    """Like :func:`build_case` but glues the parts directly.

    Parts must already be in inductive order; the result is too, without a
    decomposition search.
    """
    offsets = []
    n = 0
    for p in parts:
        offsets.append(n)
        n += p.n
    edges = [(u + o, l, v + o) for p, o in zip(parts, offsets) for u, l, v in p.edges]

    def out1(k: int) -> int:
        (v,) = parts[k].outputs
        return v + offsets[k]

    def in1(k: int) -> int:
        (v,) = parts[k].inputs
        return v + offsets[k]

    if case == 1:
        return emptydag()
    if case == 2:
        lab = label
        if isinstance(lab, Copy) and lab.k == 1:
            lab = Dir(1)
        elif isinstance(lab, Barcopy) and lab.k == 1:
            lab = Codir(1)
        edges.append((out1(0), lab, in1(1)))
    elif case == 3:
        edges += [(out1(0), Dir(1), in1(1)), (out1(0), Dir(2), in1(2))]
    elif case == 4:
        edges += [(out1(0), Codir(1), in1(2)), (out1(1), Codir(2), in1(2))]
    elif case == 5:
        edges += [(out1(0), Dir(1), in1(1)), (out1(0), Dir(2), in1(2)),
                  (out1(1), Codir(1), in1(3)), (out1(2), Codir(2), in1(3))]
    else:
        raise UsageError(f"unknown case {case}")
    return OpDag(n, edges)


# ---------------------------------------------------------------------------
# reduced operations


def letter(label: EdgeLabel) -> str:
    """Letter class used by the reducedness language."""
    if isinstance(label, Rew):
        return "r"
    if isinstance(label, (Test, Identity)):
        return "T"
    if isinstance(label, Cop):
        return f"c{label.k}"
    if isinstance(label, Ncop):
        return f"n{label.k}"
    if isinstance(label, Dir):
        return str(label.d)
    if isinstance(label, Codir):
        return f"-{label.d}"
    raise UsageError(f"not an edge label: {label!r}")


class _Nfa:
    """Epsilon-NFA fragments for building the reducedness languages."""

    def __init__(self):
        self.n = 0
        self.edges: dict[int, dict[str, set[int]]] = {}
        self.eps: dict[int, set[int]] = {}

    def state(self) -> int:
        self.n += 1
        return self.n - 1

    def add(self, p: int, a: str | None, q: int) -> None:
        if a is None:
            self.eps.setdefault(p, set()).add(q)
        else:
            self.edges.setdefault(p, {}).setdefault(a, set()).add(q)

    def words(self, ws: Iterable[Sequence[str]]) -> tuple[int, int]:
        s, f = self.state(), self.state()
        for w in ws:
            p = s
            for a in w:
                q = self.state()
                self.add(p, a, q)
                p = q
            self.add(p, None, f)
        return s, f

    def cat(self, *frags: tuple[int, int]) -> tuple[int, int]:
        for (_, f1), (s2, _) in zip(frags, frags[1:]):
            self.add(f1, None, s2)
        return frags[0][0], frags[-1][1]

    def star(self, frag: tuple[int, int]) -> tuple[int, int]:
        s, f = self.state(), self.state()
        self.add(s, None, frag[0])
        self.add(frag[1], None, f)
        self.add(s, None, f)
        self.add(frag[1], None, frag[0])
        return s, f


def _red_fragment(nfa: _Nfa, i: int, n: int) -> tuple[int, int]:
    if i == 0:
        return nfa.words([(), ("T",), ("r",), ("r", "T"), ("T", "r"), ("r", "T", "r")])
    if i < n:
        down, up = [(f"n{i}",)], [(f"c{i}",)]
    else:
        down, up = [("-1",), ("-2",)], [("1",), ("2",)]
    left = nfa.star(nfa.cat(_red_fragment(nfa, i - 1, n), nfa.words(down)))
    mid = _red_fragment(nfa, i - 1, n)
    right = nfa.star(nfa.cat(nfa.words(up), _red_fragment(nfa, i - 1, n)))
    return nfa.cat(left, mid, right)


def red_alphabet(n: int) -> tuple[str, ...]:
    letters = ["r", "T"]
    for k in range(1, n):
        letters += [f"c{k}", f"n{k}"]
    return tuple(letters + ["1", "2", "-1", "-2"])


_RED_CACHE: dict[tuple[int, int], _dfa.DFA] = {}


def red_dfa(i: int, n: int) -> _dfa.DFA:
    """Minimal DFA of Red_i for order-n stack trees (0 <= i <= n)."""
    if not 0 <= i <= n:
        raise UsageError("need 0 <= i <= n")
    if (i, n) not in _RED_CACHE:
        nfa = _Nfa()
        s, f = _red_fragment(nfa, i, n)
        _RED_CACHE[(i, n)] = _dfa.determinize(red_alphabet(n), [s], nfa.edges, [f], nfa.eps)
    return _RED_CACHE[(i, n)]


def dag_order(D: OpDag, default: int = 1) -> int:
    """Smallest tree order n whose operations cover every label of D."""
    n = default
    for _, lab, _ in D.edges:
        if isinstance(lab, Test):
            n = max(n, lab.level + 1)
        elif isinstance(lab, (Cop, Ncop)):
            n = max(n, lab.k + 1)
    return n


def path_words(D: OpDag) -> set[tuple]:
    """Label word of every directed path (including empty paths)."""
    memo: dict[int, set[tuple]] = {}

    def from_(v: int) -> set[tuple]:
        if v not in memo:
            out = {()}
            for _, lab, w in D.out_edges[v]:
                out |= {(lab,) + p for p in from_(w)}
            memo[v] = out
        return memo[v]

    words: set[tuple] = set()
    for v in range(D.n):
        words |= from_(v)
    return words


def word_in_red(word: Sequence[EdgeLabel], n: int) -> bool:
    return red_dfa(n, n).accepts(letter(l) for l in word)


def is_reduced(D: OpDag, order: int | None = None) -> bool:
    """Every path of D reads a word of Red_n."""
    n = order if order is not None else dag_order(D)
    dfa = red_dfa(n, n)
    for v in range(D.n):
        seen = set()
        stack = [(v, dfa.start)]
        while stack:
            u, q = stack.pop()
            if (u, q) in seen:
                continue
            seen.add((u, q))
            if q not in dfa.accepting:
                return False
            for _, lab, w in D.out_edges[u]:
                r = dfa.step(q, letter(lab))
                if r is None:
                    return False
                stack.append((w, r))
    return True


# ---------------------------------------------------------------------------
# text, JSON, DOT


def format_label(label: EdgeLabel) -> str:
    if isinstance(label, Test):
        return f"test({label.lang.name})"
    return str(label)


def format_dag(D: OpDag) -> str:
    lines = ["dag {", f"  v: 1..{D.n};"]
    for u, lab, v in D.edges:
        lines.append(f"  e: ({u + 1}, {format_label(lab)}, {v + 1});")
    lines.append(f"  inputs: [{', '.join(str(v + 1) for v in D.inputs)}];")
    lines.append(f"  outputs: [{', '.join(str(v + 1) for v in D.outputs)}];")
    lines.append("}")
    return "\n".join(lines)


def parse_label(text: str, tests: Mapping[str, st.TestLanguage] | None = None) -> EdgeLabel:
    s = "".join(text.split())
    if s in ("1", "2"):
        return Dir(int(s))
    if s in ("-1", "-2", "1bar", "2bar", "1̄", "2̄"):
        return Codir(int(s.strip("-bar̄")))
    if s == "id":
        return Identity()
    if s.startswith("rew(") and s.endswith(")"):
        args = s[4:-1].split(",")
        if len(args) != 2:
            raise UsageError(f"rew takes two symbols: {text!r}")
        return Rew(args[0], args[1])
    for prefix, cls in (("ncop", Ncop), ("cop", Cop)):
        if s.startswith(prefix) and s[len(prefix):].isdigit():
            return cls(int(s[len(prefix):]))
    if s.startswith("test(") and s.endswith(")"):
        name = s[5:-1]
        if not tests or name not in tests:
            raise UsageError(f"unknown test language {name!r}")
        return Test(tests[name])
    raise UsageError(f"unknown edge label {text!r}")


def parse_dag(text: str, tests: Mapping[str, st.TestLanguage] | None = None) -> OpDag:
    """Parse ``dag { v: 1..m; e: (u, label, v); inputs: [...]; outputs: [...] }``."""
    pos = 0
    n_text = len(text)

    def err(msg: str, at: int):
        line, col = locate(text, min(at, n_text))
        raise ParseError(msg, line, col)

    def skip() -> None:
        nonlocal pos
        while pos < n_text and text[pos].isspace():
            pos += 1

    def expect(tok: str) -> None:
        nonlocal pos
        skip()
        if not text.startswith(tok, pos):
            err(f"expected {tok!r}", pos)
        pos += len(tok)

    def integer() -> int:
        nonlocal pos
        skip()
        start = pos
        while pos < n_text and text[pos].isdigit():
            pos += 1
        if start == pos:
            err("expected an integer", start)
        return int(text[start:pos])

    def word() -> str:
        nonlocal pos
        skip()
        start = pos
        while pos < n_text and (text[pos].isalpha() or text[pos] == "_"):
            pos += 1
        return text[start:pos]

    def int_list() -> list[int]:
        expect("[")
        out = []
        skip()
        if pos < n_text and text[pos] == "]":
            expect("]")
            return out
        while True:
            out.append(integer())
            skip()
            if pos < n_text and text[pos] == ",":
                expect(",")
                continue
            expect("]")
            return out

    expect("dag")
    expect("{")
    m = None
    edges = []
    declared: dict[str, tuple[list[int], int]] = {}
    while True:
        skip()
        if pos < n_text and text[pos] == "}":
            pos += 1
            break
        at = pos
        key = word()
        expect(":")
        if key == "v":
            lo = integer()
            expect("..")
            m = integer()
            if lo != 1 or m < 1:
                err("vertex range must be 1..m with m >= 1", at)
        elif key == "e":
            while True:
                expect("(")
                eat = pos
                u = integer()
                expect(",")
                skip()
                lstart = pos
                depth = 0
                while pos < n_text:
                    c = text[pos]
                    if c == "(":
                        depth += 1
                    elif c == ")":
                        if depth == 0:
                            break
                        depth -= 1
                    elif c == "," and depth == 0:
                        break
                    pos += 1
                try:
                    lab = parse_label(text[lstart:pos], tests)
                except (UsageError, ValueError) as e:
                    err(str(e), lstart)
                expect(",")
                v = integer()
                expect(")")
                edges.append((u, lab, v, eat))
                skip()
                if pos < n_text and text[pos] == ",":
                    pos += 1
                    continue
                break
        elif key in ("inputs", "outputs"):
            declared[key] = (int_list(), at)
        else:
            err(f"unknown clause {key!r}", at)
        expect(";")
    skip()
    if pos != n_text:
        err("trailing input after DAG", pos)
    if m is None:
        err("missing vertex clause 'v: 1..m'", 0)
    for u, _, v, at in edges:
        if not (1 <= u <= m and 1 <= v <= m):
            err("edge endpoint outside 1..m", at)
    try:
        D = OpDag(m, [(u - 1, l, v - 1) for u, l, v, _ in edges])
    except UsageError as e:
        err(str(e), 0)
    for key, actual in (("inputs", D.inputs), ("outputs", D.outputs)):
        if key in declared:
            lst, at = declared[key]
            if [x - 1 for x in lst] != actual:
                err(f"declared {key} {lst} differ from the computed {[x + 1 for x in actual]}", at)
    return D


def label_to_json(label: EdgeLabel) -> object:
    if isinstance(label, Dir):
        return {"dir": label.d}
    if isinstance(label, Codir):
        return {"codir": label.d}
    return st.op_to_json(label)


def label_from_json(doc: object, symbols: Sequence[str] = (), lvl: int = 0) -> EdgeLabel:
    if isinstance(doc, dict) and "dir" in doc:
        return Dir(int(doc["dir"]))
    if isinstance(doc, dict) and "codir" in doc:
        return Codir(int(doc["codir"]))
    if isinstance(doc, str):
        return parse_label(doc)
    return st.op_from_json(doc, symbols, lvl)


def dag_to_json(D: OpDag) -> dict:
    return {
        "vertices": D.n,
        "edges": [[u + 1, label_to_json(l), v + 1] for u, l, v in D.edges],
        "inputs": [v + 1 for v in D.inputs],
        "outputs": [v + 1 for v in D.outputs],
    }


def dag_from_json(doc: object, symbols: Sequence[str] = (), lvl: int = 0,
                  tests: Mapping[str, st.TestLanguage] | None = None) -> OpDag:
    if isinstance(doc, str):
        return parse_dag(doc, tests)
    if not isinstance(doc, dict) or "vertices" not in doc:
        raise UsageError("a DAG document needs 'vertices' and 'edges'")
    m = int(doc["vertices"])
    edges = []
    for e in doc.get("edges", []):
        u, lab, v = e
        if isinstance(lab, dict) and "test" in lab and isinstance(lab["test"], str):
            if not tests or lab["test"] not in tests:
                raise UsageError(f"unknown test language {lab['test']!r}")
            label = Test(tests[lab["test"]])
        else:
            label = label_from_json(lab, symbols, lvl)
        edges.append((int(u) - 1, label, int(v) - 1))
    return OpDag(m, edges)


def to_dot(D: OpDag, name: str = "dag") -> str:
    lines = [f"digraph {name} {{", "  node [shape=point];"]
    for v in range(D.n):
        lines.append(f'  v{v + 1} [xlabel="{v + 1}"];')
    for u, lab, v in D.edges:
        style = ', style=dashed' if is_direction(lab) else ""
        lines.append(f'  v{u + 1} -> v{v + 1} [label="{format_label(lab)}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# enumeration of small compound DAGs


def enumerate_compound(labels: Sequence[EdgeLabel], max_vertices: int,
                       cases: Iterable[int] = (1, 2, 3, 4, 5)) -> set[OpDag]:
    """Every compound DAG with at most ``max_vertices`` vertices over ``labels``.

    ``labels`` are the stack operations allowed on case-2 edges; the unary
    duplication and merge edges are always included.
    """
    cases = set(cases)
    labels = list(labels) + [Dir(1), Codir(1)]
    by_size: dict[int, set[OpDag]] = {1: {emptydag()}}

    def of(k: int, ins: int | None = None, outs: int | None = None):
        for D in by_size.get(k, ()):
            if (ins is None or D.in_degree == ins) and (outs is None or D.out_degree == outs):
                yield D

    for m in range(2, max_vertices + 1):
        acc: set[OpDag] = set()
        if 2 in cases:
            for a in range(1, m):
                b = m - a
                for d1 in of(a, outs=1):
                    for d2 in of(b, ins=1):
                        for lab in labels:
                            acc.add(build_case(2, [d1, d2], lab))
        if 3 in cases:
            for a in range(1, m):
                for b in range(1, m - a):
                    c = m - a - b
                    if c < 1:
                        continue
                    for d1 in of(a, outs=1):
                        for d2 in of(b, ins=1):
                            for d3 in of(c, ins=1):
                                acc.add(build_case(3, [d1, d2, d3]))
        if 4 in cases:
            for a in range(1, m):
                for b in range(1, m - a):
                    c = m - a - b
                    if c < 1:
                        continue
                    for d1 in of(a, outs=1):
                        for d2 in of(b, outs=1):
                            for d3 in of(c, ins=1):
                                acc.add(build_case(4, [d1, d2, d3]))
        if 5 in cases:
            for a in range(1, m):
                for b in range(1, m - a):
                    for c in range(1, m - a - b):
                        e = m - a - b - c
                        if e < 1:
                            continue
                        for d1 in of(a, outs=1):
                            for d2 in of(b, ins=1, outs=1):
                                for d3 in of(c, ins=1, outs=1):
                                    for d4 in of(e, ins=1):
                                        acc.add(build_case(5, [d1, d2, d3, d4]))
        by_size[m] = acc
    out: set[OpDag] = set()
    for s in by_size.values():
        out |= s
    return out
