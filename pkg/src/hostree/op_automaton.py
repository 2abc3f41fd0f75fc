"""Operation automata: finite automata that label compound-operation DAGs.

States are the integers ``0..n_states-1``.  A DAG is accepted when its
vertices can be labelled so that inputs carry initial states, outputs carry
final states, and every edge pattern is matched by a transition:

* a stack-operation edge, a lone ``Dir(1)`` edge or a lone ``Codir(1)`` edge
  needs ``Lin(p, label, q)``;
* a ``Dir(1)``/``Dir(2)`` pair needs ``Branch(p, q1, q2)``;
* a ``Codir(1)``/``Codir(2)`` pair needs ``Merge(p1, p2, q)``.

Each automaton defines a relation on stack trees: ``s`` relates to ``t`` when
some tuple of accepted DAGs, applied in parallel to disjoint leaf blocks of
``s``, yields ``t``.  :func:`relates` searches for such a tuple directly on
annotated trees and replays every witness through ``apply_parallel``.
"""

from __future__ import annotations

import functools
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from . import op_dag as od
from . import stacks as st
from . import stack_tree as tr
from .errors import UsageError
from .op_dag import Codir, Copy, Barcopy, Dir, OpDag
from .stack_tree import StackTree
from .stacks import Identity, Test

MAX_ENUMERATION_VERTICES = 10


@dataclass(frozen=True)
class Lin:
    src: int
    label: object
    dst: int


@dataclass(frozen=True)
class Branch:
    src: int
    left: int
    right: int


@dataclass(frozen=True)
class Merge:
    left: int
    right: int
    dst: int


def normalize_lin_label(label: object) -> object:
    """``Copy(1)``/``Barcopy(1)`` become the edge labels ``Dir(1)``/``Codir(1)``."""
    if isinstance(label, Copy) and label.k == 1:
        return Dir(1)
    if isinstance(label, Barcopy) and label.k == 1:
        return Codir(1)
    if isinstance(label, (Dir, Codir)):
        if label.d != 1:
            raise UsageError(f"{label} cannot label a linear transition")
        return label
    if isinstance(label, (st.Rew, st.Cop, st.Ncop, Test, Identity)):
        return label
    raise UsageError(f"not a linear transition label: {label!r}")


@dataclass(frozen=True)
class OperationAutomaton:
    """Immutable operation automaton over ``symbols`` acting on trees of ``order``.

    ``step_marks`` are states whose occurrences count as one rewriting step
    each in :func:`relates` (set by :func:`from_system`); it never changes
    which DAGs are accepted.
    """

    n_states: int
    initial: frozenset
    final: frozenset
    lin: frozenset = frozenset()
    branch: frozenset = frozenset()
    merge: frozenset = frozenset()
    symbols: tuple = ()
    order: int = 1
    step_marks: frozenset = field(default=frozenset(), compare=False)

    def __post_init__(self) -> None:
        if self.n_states < 0:
            raise UsageError("negative state count")
        if self.order < 1:
            raise UsageError("order must be >= 1")
        lin = frozenset(Lin(t.src, normalize_lin_label(t.label), t.dst) for t in self.lin)
        object.__setattr__(self, "lin", lin)
        object.__setattr__(self, "branch", frozenset(self.branch))
        object.__setattr__(self, "merge", frozenset(self.merge))
        object.__setattr__(self, "initial", frozenset(self.initial))
        object.__setattr__(self, "final", frozenset(self.final))
        object.__setattr__(self, "step_marks", frozenset(self.step_marks))
        object.__setattr__(self, "symbols", tuple(self.symbols))
        ok = range(self.n_states)
        refs = list(self.initial) + list(self.final) + list(self.step_marks)
        refs += [q for t in lin for q in (t.src, t.dst)]
        refs += [q for t in self.branch for q in (t.src, t.left, t.right)]
        refs += [q for t in self.merge for q in (t.left, t.right, t.dst)]
        for q in refs:
            if q not in ok:
                raise UsageError(f"transition or state set mentions undeclared state {q!r}")
        for t in lin:
            lab = t.label
            if isinstance(lab, (st.Cop, st.Ncop)) and lab.k > self.order - 1:
                raise UsageError(f"{lab} exceeds the label level {self.order - 1}")
            if isinstance(lab, Test) and lab.level != self.order - 1:
                raise UsageError(f"test over level {lab.level}, labels have level {self.order - 1}")

    @property
    def states(self) -> range:
        return range(self.n_states)

    @property
    def label_level(self) -> int:
        return self.order - 1

    def lin_labels(self) -> set:
        return {t.label for t in self.lin}

    def transitions(self) -> list:
        key = lambda t: (type(t).__name__, repr(t))
        return sorted(self.lin | self.branch | self.merge, key=key)

    def size(self) -> int:
        return len(self.lin) + len(self.branch) + len(self.merge)

    def with_transitions(self, lin=(), branch=(), merge=()) -> "OperationAutomaton":
        return OperationAutomaton(self.n_states, self.initial, self.final,
                                  self.lin | frozenset(lin), self.branch | frozenset(branch),
                                  self.merge | frozenset(merge), self.symbols, self.order,
                                  self.step_marks)


def empty_automaton(symbols: Sequence[str] = (), order: int = 1) -> OperationAutomaton:
    return OperationAutomaton(0, frozenset(), frozenset(), symbols=tuple(symbols), order=order)


def _same_signature(A: OperationAutomaton, B: OperationAutomaton) -> None:
    if A.order != B.order:
        raise UsageError(f"automata of orders {A.order} and {B.order}")
    if tuple(sorted(A.symbols)) != tuple(sorted(B.symbols)):
        raise UsageError(f"automata over alphabets {A.symbols} and {B.symbols}")


# ---------------------------------------------------------------------------
# acceptance


def _constraints(D: OpDag) -> list[tuple]:
    """Edge patterns of a compound DAG as (kind, vertices, label) constraints."""
    cons = []
    for v in range(D.n):
        outs = D.out_edges[v]
        dirs = {lab.d: w for _, lab, w in outs if isinstance(lab, Dir)}
        if len(dirs) == 2:
            cons.append(("branch", (v, dirs[1], dirs[2]), None))
        for _, lab, w in outs:
            if isinstance(lab, Dir) and len(dirs) == 1:
                cons.append(("lin", (v, w), lab))
            elif isinstance(lab, Codir):
                if len(D.in_edges[w]) == 1:
                    cons.append(("lin", (v, w), lab))
            elif not isinstance(lab, Dir):
                cons.append(("lin", (v, w), lab))
        ins = D.in_edges[v]
        codirs = {lab.d: u for u, lab, _ in ins if isinstance(lab, Codir)}
        if len(codirs) == 2:
            cons.append(("merge", (codirs[1], codirs[2], v), None))
    return cons


def accepts(A: OperationAutomaton, D: OpDag) -> dict[int, int] | None:
    """A consistent labelling of D's vertices, or ``None`` when A rejects D."""
    if not od.is_compound(D):
        raise UsageError("DAG is not a compound operation")
    if A.n_states == 0:
        return None
    cons = _constraints(D)
    # each constraint as a set of allowed state tuples
    lin_by_label: dict[object, set] = {}
    for t in A.lin:
        lin_by_label.setdefault(t.label, set()).add((t.src, t.dst))
    branches = {(t.src, t.left, t.right) for t in A.branch}
    merges = {(t.left, t.right, t.dst) for t in A.merge}
    rels = []
    for kind, vs, lab in cons:
        if kind == "lin":
            rels.append((vs, lin_by_label.get(lab, set())))
        elif kind == "branch":
            rels.append((vs, branches))
        else:
            rels.append((vs, merges))
    dom: list[set[int]] = [set(A.states) for _ in range(D.n)]
    for v in D.inputs:
        dom[v] &= A.initial
    for v in D.outputs:
        dom[v] &= A.final
    by_vertex: list[list[int]] = [[] for _ in range(D.n)]
    for ci, (vs, _) in enumerate(rels):
        for v in vs:
            by_vertex[v].append(ci)

    def propagate(dom: list[set[int]], queue: list[int]) -> bool:
        pending = set(queue)
        while queue:
            ci = queue.pop()
            pending.discard(ci)
            vs, allowed = rels[ci]
            support = [t for t in allowed if all(t[k] in dom[v] for k, v in enumerate(vs))]
            for k, v in enumerate(vs):
                keep = {t[k] for t in support}
                if keep != dom[v]:
                    dom[v] = dom[v] & keep
                    if not dom[v]:
                        return False
                    for cj in by_vertex[v]:
                        if cj != ci and cj not in pending:
                            pending.add(cj)
                            queue.append(cj)
        return True

    if not propagate(dom, list(range(len(rels)))):
        return None

    def search(dom: list[set[int]]) -> list[set[int]] | None:
        open_vs = [v for v in D.topological_order() if len(dom[v]) > 1]
        if not open_vs:
            return dom
        v = min(open_vs, key=lambda x: len(dom[x]))
        for q in sorted(dom[v]):
            trial = [set(x) for x in dom]
            trial[v] = {q}
            if propagate(trial, list(by_vertex[v])):
                res = search(trial)
                if res is not None:
                    return res
        return None

    if any(not d for d in dom):
        return None
    res = search(dom)
    if res is None:
        return None
    return {v: next(iter(res[v])) for v in range(D.n)}


def check_labelling(A: OperationAutomaton, D: OpDag, labelling: Mapping[int, int]) -> bool:
    """Direct check of the acceptance conditions for a given labelling."""
    if any(labelling[v] not in A.initial for v in D.inputs):
        return False
    if any(labelling[v] not in A.final for v in D.outputs):
        return False
    for kind, vs, lab in _constraints(D):
        qs = tuple(labelling[v] for v in vs)
        if kind == "lin" and Lin(qs[0], lab, qs[1]) not in A.lin:
            return False
        if kind == "branch" and Branch(*qs) not in A.branch:
            return False
        if kind == "merge" and Merge(*qs) not in A.merge:
            return False
    return True


# ---------------------------------------------------------------------------
# bounded enumeration of Op(A)


def trim(A: OperationAutomaton) -> OperationAutomaton:
    """Drop states that cannot label a vertex of any accepted DAG."""
    return restrict(A, useful_states(A))


def useful_states(A: OperationAutomaton) -> list[int]:
    """States reachable from the initial ones and co-reachable from the final ones."""
    acc = set(A.initial)
    changed = True
    while changed:
        changed = False
        for t in A.lin:
            if t.src in acc and t.dst not in acc:
                acc.add(t.dst)
                changed = True
        for t in A.branch:
            if t.src in acc and not {t.left, t.right} <= acc:
                acc |= {t.left, t.right}
                changed = True
        for t in A.merge:
            if t.left in acc and t.right in acc and t.dst not in acc:
                acc.add(t.dst)
                changed = True
    co = set(A.final)
    changed = True
    while changed:
        changed = False
        for t in A.lin:
            if t.dst in co and t.src not in co:
                co.add(t.src)
                changed = True
        for t in A.branch:
            if t.left in co and t.right in co and t.src not in co:
                co.add(t.src)
                changed = True
        for t in A.merge:
            if t.dst in co and not {t.left, t.right} <= co:
                co |= {t.left, t.right}
                changed = True
    return sorted(acc & co)


def restrict(A: OperationAutomaton, keep: Sequence[int]) -> OperationAutomaton:
    """Sub-automaton on the states ``keep``, renumbered in the given order."""
    f = {q: i for i, q in enumerate(keep)}
    return OperationAutomaton(
        len(keep),
        frozenset(f[q] for q in A.initial if q in f),
        frozenset(f[q] for q in A.final if q in f),
        frozenset(Lin(f[t.src], t.label, f[t.dst]) for t in A.lin if t.src in f and t.dst in f),
        frozenset(Branch(f[t.src], f[t.left], f[t.right]) for t in A.branch
                  if {t.src, t.left, t.right} <= f.keys()),
        frozenset(Merge(f[t.left], f[t.right], f[t.dst]) for t in A.merge
                  if {t.left, t.right, t.dst} <= f.keys()),
        A.symbols, A.order,
        frozenset(f[q] for q in A.step_marks if q in f),
    )


def labelled_pieces(A: OperationAutomaton, max_vertices: int) -> dict[int, set[tuple]]:
    """Compound DAGs with consistent partial labellings, by vertex count.

    A piece is ``(D, input_states, output_states)``; internal states are
    forgotten since only the boundary matters when gluing.
    """
    lin_from: dict[int, list[Lin]] = {}
    for t in A.lin:
        lin_from.setdefault(t.src, []).append(t)
    br_from: dict[int, list[Branch]] = {}
    for t in A.branch:
        br_from.setdefault(t.src, []).append(t)
    mg_from: dict[tuple, list[Merge]] = {}
    for t in A.merge:
        mg_from.setdefault((t.left, t.right), []).append(t)
    one = od.emptydag()
    by_size: dict[int, set[tuple]] = {1: {(one, (q,), (q,)) for q in A.states}}

    def pieces(k: int, ins: int | None = None, outs: int | None = None) -> list[tuple]:
        return [p for p in by_size.get(k, ()) if (ins is None or len(p[1]) == ins)
                and (outs is None or len(p[2]) == outs)]

    def index_by_in(ps: list[tuple]) -> dict[int, list[tuple]]:
        idx: dict[int, list[tuple]] = {}
        for p in ps:
            idx.setdefault(p[1][0], []).append(p)
        return idx

    for m in range(2, max_vertices + 1):
        acc: set[tuple] = set()
        for a in range(1, m):
            b = m - a
            right = index_by_in(pieces(b, ins=1))
            for d1, i1, (p,) in pieces(a, outs=1):
                for t in lin_from.get(p, ()):
                    for d2, _, o2 in right.get(t.dst, ()):
                        acc.add((od.assemble(2, [d1, d2], t.label), i1, o2))
        for a in range(1, m):
            for b in range(1, m - a):
                c = m - a - b
                if c < 1:
                    continue
                # branch: D1, D2, D3
                left_b = index_by_in(pieces(b, ins=1))
                right_c = index_by_in(pieces(c, ins=1))
                for d1, i1, (p,) in pieces(a, outs=1):
                    for t in br_from.get(p, ()):
                        for d2, _, o2 in left_b.get(t.left, ()):
                            for d3, _, o3 in right_c.get(t.right, ()):
                                acc.add((od.assemble(3, [d1, d2, d3]), i1, o2 + o3))
                # merge: D1, D2 then D3
                tail = index_by_in(pieces(c, ins=1))
                p2s = pieces(b, outs=1)
                for d1, i1, (p,) in pieces(a, outs=1):
                    for d2, i2, (q,) in p2s:
                        for t in mg_from.get((p, q), ()):
                            for d3, _, o3 in tail.get(t.dst, ()):
                                acc.add((od.assemble(4, [d1, d2, d3]), i1 + i2, o3))
        for a in range(1, m):
            for b in range(1, m - a):
                for c in range(1, m - a - b):
                    e = m - a - b - c
                    if e < 1:
                        continue
                    mids_b = pieces(b, ins=1, outs=1)
                    mids_c = pieces(c, ins=1, outs=1)
                    tail = index_by_in(pieces(e, ins=1))
                    for d1, i1, (p,) in pieces(a, outs=1):
                        for t in br_from.get(p, ()):
                            for d2, (x2,), (y2,) in mids_b:
                                if x2 != t.left:
                                    continue
                                for d3, (x3,), (y3,) in mids_c:
                                    if x3 != t.right:
                                        continue
                                    for u in mg_from.get((y2, y3), ()):
                                        for d4, _, o4 in tail.get(u.dst, ()):
                                            acc.add((od.assemble(5, [d1, d2, d3, d4]), i1, o4))
        by_size[m] = acc
    return by_size


def enumerate_accepted(A: OperationAutomaton, max_vertices: int) -> set[OpDag]:
    """Every DAG of Op(A) with at most ``max_vertices`` vertices."""
    if max_vertices > MAX_ENUMERATION_VERTICES:
        raise UsageError(f"enumeration bound {max_vertices} exceeds {MAX_ENUMERATION_VERTICES}")
    if max_vertices < 1:
        return set()
    A = trim(A)
    out = set()
    for ps in labelled_pieces(A, max_vertices).values():
        for D, ins, outs in ps:
            if all(q in A.initial for q in ins) and all(q in A.final for q in outs):
                out.add(D)
    return out


# ---------------------------------------------------------------------------
# closure constructions


def union(A1: OperationAutomaton, A2: OperationAutomaton) -> OperationAutomaton:
    """Disjoint union; states of A2 are shifted by ``A1.n_states``."""
    _same_signature(A1, A2)
    k = A1.n_states
    return OperationAutomaton(
        k + A2.n_states,
        A1.initial | {q + k for q in A2.initial},
        A1.final | {q + k for q in A2.final},
        A1.lin | {Lin(t.src + k, t.label, t.dst + k) for t in A2.lin},
        A1.branch | {Branch(t.src + k, t.left + k, t.right + k) for t in A2.branch},
        A1.merge | {Merge(t.left + k, t.right + k, t.dst + k) for t in A2.merge},
        A1.symbols, A1.order,
        A1.step_marks | {q + k for q in A2.step_marks},
    )


def is_complete(A: OperationAutomaton, labels: Iterable[object]) -> bool:
    labels = set(labels)
    have_lin = {(t.src, t.label) for t in A.lin}
    have_br = {t.src for t in A.branch}
    have_mg = {(t.left, t.right) for t in A.merge}
    for p in A.states:
        if p not in have_br or any((p, lab) not in have_lin for lab in labels):
            return False
        if any((p, q) not in have_mg for q in A.states):
            return False
    return True


def complete(A: OperationAutomaton, labels: Iterable[object]) -> OperationAutomaton:
    """Add a non-final sink so every state has every kind of transition.

    The sink is added only when A is not already complete over ``labels``.
    """
    labels = {normalize_lin_label(l) for l in labels}
    if is_complete(A, labels):
        return A
    s = A.n_states
    n = s + 1
    have_lin = {(t.src, t.label) for t in A.lin}
    have_br = {t.src for t in A.branch}
    have_mg = {(t.left, t.right) for t in A.merge}
    lin = set(A.lin)
    branch = set(A.branch)
    merge = set(A.merge)
    for p in range(n):
        for lab in labels:
            if (p, lab) not in have_lin:
                lin.add(Lin(p, lab, s))
        if p not in have_br:
            branch.add(Branch(p, s, s))
        for q in range(n):
            if (p, q) not in have_mg:
                merge.add(Merge(p, q, s))
    return OperationAutomaton(n, A.initial, A.final, lin, branch, merge, A.symbols, A.order,
                              A.step_marks)


def intersect(A1: OperationAutomaton, A2: OperationAutomaton) -> OperationAutomaton:
    """Product of the two completed automata; state (p, q) is ``p * |Q2| + q``."""
    _same_signature(A1, A2)
    labels = A1.lin_labels() | A2.lin_labels()
    B1 = complete(A1, labels)
    B2 = complete(A2, labels)
    m = B2.n_states

    def pair(p: int, q: int) -> int:
        return p * m + q

    lin2: dict[object, list[Lin]] = {}
    for t in B2.lin:
        lin2.setdefault(t.label, []).append(t)
    lin = {Lin(pair(a.src, b.src), a.label, pair(a.dst, b.dst))
           for a in B1.lin for b in lin2.get(a.label, ())}
    branch = {Branch(pair(a.src, b.src), pair(a.left, b.left), pair(a.right, b.right))
              for a in B1.branch for b in B2.branch}
    merge = {Merge(pair(a.left, b.left), pair(a.right, b.right), pair(a.dst, b.dst))
             for a in B1.merge for b in B2.merge}
    marks = {pair(p, q) for p in B1.states for q in B2.states
             if p in B1.step_marks or q in B2.step_marks}
    return OperationAutomaton(
        B1.n_states * m,
        {pair(p, q) for p in B1.initial for q in B2.initial},
        {pair(p, q) for p in B1.final for q in B2.final},
        lin, branch, merge, A1.symbols, A1.order, marks,
    )


def star(A: OperationAutomaton) -> OperationAutomaton:
    """Automaton for the iterated concatenation of Op(A).

    A fresh state (numbered ``A.n_states``) is initial and final, and every
    transition ending in a final state is copied to end in each initial
    state instead.  For a branch both ends are redirected independently.
    """
    q = A.n_states
    I, F = A.initial, A.final
    lin = set(A.lin)
    branch = set(A.branch)
    merge = set(A.merge)
    for t in A.lin:
        if t.dst in F:
            lin |= {Lin(t.src, t.label, i) for i in I}
    for t in A.merge:
        if t.dst in F:
            merge |= {Merge(t.left, t.right, i) for i in I}
    for t in A.branch:
        if t.right in F:
            branch |= {Branch(t.src, t.left, i) for i in I}
        if t.left in F:
            branch |= {Branch(t.src, i, t.right) for i in I}
        if t.left in F and t.right in F:
            branch |= {Branch(t.src, i, j) for i in I for j in I}
    return OperationAutomaton(q + 1, I | {q}, F | {q}, lin, branch, merge, A.symbols, A.order,
                              A.step_marks)


def singleton(D: OpDag, symbols: Sequence[str] = (), order: int | None = None) -> OperationAutomaton:
    """Automaton accepting exactly D; its states are D's vertices."""
    if not od.is_compound(D):
        raise UsageError("DAG is not a compound operation")
    lin, branch, merge = set(), set(), set()
    for kind, vs, lab in _constraints(D):
        if kind == "lin":
            lin.add(Lin(vs[0], lab, vs[1]))
        elif kind == "branch":
            branch.add(Branch(*vs))
        else:
            merge.add(Merge(*vs))
    if order is None:
        order = od.dag_order(D, default=1)
    syms = tuple(symbols) or tuple(sorted(_dag_symbols(D)))
    return OperationAutomaton(D.n, D.inputs, D.outputs, lin, branch, merge, syms, order,
                              {D.inputs[0]})


def _dag_symbols(D: OpDag) -> set[str]:
    out = set()
    for _, lab, _ in D.edges:
        if isinstance(lab, st.Rew):
            out |= {lab.a, lab.b}
        elif isinstance(lab, Test):
            out |= set(lab.lang.symbols)
    return out


def from_dags(Ds: Iterable[OpDag], symbols: Sequence[str], order: int) -> OperationAutomaton:
    """Union of singletons; the first input of every DAG is a step mark."""
    A = empty_automaton(symbols, order)
    for D in Ds:
        A = union(A, singleton(D, symbols, order))
    return A


def from_system(R) -> OperationAutomaton:
    """Automaton accepting exactly the DAGs of a rewriting system (labels dropped)."""
    return from_dags([D for D, _ in R.rules], R.symbols, R.order)


# ---------------------------------------------------------------------------
# order-1 ground tree transducers


@dataclass(frozen=True)
class TreeAutomaton:
    """Bottom-up automaton on symbol-labelled trees of arity at most 2.

    ``rules`` holds triples ``(symbol, child_states, state)``.
    """

    n_states: int
    rules: frozenset
    final: frozenset

    def __post_init__(self) -> None:
        rules = frozenset((a, tuple(qs), q) for a, qs, q in self.rules)
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "final", frozenset(self.final))
        for a, qs, q in rules:
            st.check_symbol(a)
            if len(qs) > tr.MAX_ARITY:
                raise UsageError(f"rule {a}{qs} has arity above {tr.MAX_ARITY}")
            if any(p not in range(self.n_states) for p in (*qs, q)):
                raise UsageError(f"rule {a}{qs} -> {q} mentions an undeclared state")

    def run(self, t: StackTree) -> set[int]:
        """States reachable at the root of ``t``."""
        if t.order != 1:
            raise UsageError("tree automata read symbol-labelled trees")
        kids = [self.run(c) for c in t.children]
        return {q for a, qs, q in self.rules
                if a == t.label and len(qs) == len(kids) and all(p in k for p, k in zip(qs, kids))}

    def accepts(self, t: StackTree) -> bool:
        return bool(self.run(t) & self.final)


def from_gtt(pairs: Sequence[tuple[TreeAutomaton, TreeAutomaton]], symbols: Sequence[str]) -> OperationAutomaton:
    """Order-1 automaton for the ground tree transduction given by ``pairs``.

    For each pair (A, B) an accepted DAG folds a subtree of L(A) into its
    root bottom-up and then grows a tree of L(B) from it.  Going up, a
    child is relabelled to its parent's symbol before the merge, so the
    merge checks the parent label.  Going down, each new child is
    relabelled from the parent's symbol to its own.
    """
    symbols = tuple(symbols)
    ids: dict[tuple, int] = {}

    def q(*key: object) -> int:
        return ids.setdefault(key, len(ids))

    initial, final = set(), set()
    lin, branch, merge = set(), set(), set()
    for i, (A, B) in enumerate(pairs):
        for b, kids, r in A.rules:
            if not kids:
                initial.add(q("A", i, r, b))
                continue
            for p in kids:
                for a in symbols:
                    lin.add(Lin(q("A", i, p, a), st.Rew(a, b), q("up", i, p, b)))
            if len(kids) == 1:
                lin.add(Lin(q("up", i, kids[0], b), Codir(1), q("A", i, r, b)))
            else:
                merge.add(Merge(q("up", i, kids[0], b), q("up", i, kids[1], b), q("A", i, r, b)))
        for b, kids, r in B.rules:
            if not kids:
                final.add(q("B", i, r, b))
                continue
            for p in kids:
                for c in symbols:
                    lin.add(Lin(q("down", i, p, b), st.Rew(b, c), q("B", i, p, c)))
            if len(kids) == 1:
                lin.add(Lin(q("B", i, r, b), Dir(1), q("down", i, kids[0], b)))
            else:
                branch.add(Branch(q("B", i, r, b), q("down", i, kids[0], b), q("down", i, kids[1], b)))
        for qa in A.final:
            for pb in B.final:
                for a in symbols:
                    for b in symbols:
                        lin.add(Lin(q("A", i, qa, a), st.Rew(a, b), q("B", i, pb, b)))
    return OperationAutomaton(len(ids), initial, final, lin, branch, merge, symbols, 1,
                              initial)


# ---------------------------------------------------------------------------
# the relation R(A)


@dataclass(frozen=True)
class Budget:
    """Bounds for :func:`relates` and :func:`image`.

    ``max_tuple`` bounds the number of operations applied in parallel,
    ``max_steps`` the number of step-marked vertices (rewriting steps for
    automata built by :func:`from_system` and its closures),
    ``max_vertices`` the total DAG size, ``max_nodes``/``max_label`` the
    intermediate trees, and ``max_configs`` the search itself.  Only the
    last one produces "unknown"; the others are part of the question.
    """

    max_tuple: int = 2
    max_steps: int | None = None
    max_vertices: int | None = None
    max_nodes: int = 16
    max_label: int = 8
    max_configs: int = 200_000


@dataclass(frozen=True)
class RelatesResult:
    status: str  # "yes", "no" or "unknown"
    witness: tuple = ()  # ((OpDag, leaf index), ...)

    def __bool__(self) -> bool:
        return self.status == "yes"


# Annotated tree node: (label, state or None, component or None, children).
# A node is active iff it is a leaf with a state.


def _annotate(t: StackTree) -> tuple:
    return (t.label, None, None, tuple(_annotate(c) for c in t.children))


def _strip(x: tuple) -> StackTree:
    return StackTree(x[0], [_strip(c) for c in x[3]])


def _size(x: tuple) -> int:
    return 1 + sum(_size(c) for c in x[3])


def _get(x: tuple, u: str) -> tuple:
    for ch in u:
        x = x[3][int(ch) - 1]
    return x


def _put(x: tuple, u: str, y: tuple) -> tuple:
    if not u:
        return y
    k = int(u[0]) - 1
    kids = list(x[3])
    kids[k] = _put(kids[k], u[1:], y)
    return (x[0], x[1], x[2], tuple(kids))


def _leaf_positions(x: tuple, u: str = "") -> Iterator[str]:
    if not x[3]:
        yield u
    for k, c in enumerate(x[3]):
        yield from _leaf_positions(c, u + str(k + 1))


def _active(x: tuple, u: str = "") -> Iterator[tuple[str, tuple]]:
    if not x[3]:
        if x[1] is not None:
            yield u, x
        return
    for k, c in enumerate(x[3]):
        yield from _active(c, u + str(k + 1))


def _parents_of_active(x: tuple, u: str = "") -> Iterator[tuple[str, tuple]]:
    """Internal nodes all of whose children are active leaves."""
    if x[3]:
        if all(not c[3] and c[1] is not None for c in x[3]):
            yield u, x
        for k, c in enumerate(x[3]):
            yield from _parents_of_active(c, u + str(k + 1))


def _canon_components(x: tuple) -> tuple:
    """Renumber component ids by first occurrence, left to right."""
    order: dict[int, int] = {}
    for _, y in _active(x):
        order.setdefault(y[2], len(order))

    def go(y: tuple) -> tuple:
        if not y[3]:
            return y if y[1] is None else (y[0], y[1], order[y[2]], ())
        return (y[0], y[1], y[2], tuple(go(c) for c in y[3]))

    return go(x)


def _rename_component(x: tuple, old: int, new: int) -> tuple:
    if not x[3]:
        return (x[0], x[1], new, ()) if x[1] is not None and x[2] == old else x
    return (x[0], x[1], x[2], tuple(_rename_component(c, old, new) for c in x[3]))


class _StackClosure:
    """Shortest stack-move chains from a (state, label) pair to a state that can
    do something else: accept, move the tree, or take part in a merge.

    Chains through other states are collapsed into one search move, so a leaf
    never sits in a purely intermediate state.  Filled lazily.
    """

    def __init__(self, A: OperationAutomaton, max_label: int):
        self.max_label = max_label
        self.lin_from: dict[int, list[Lin]] = {}
        self.stops = set(A.final) | {t.src for t in A.branch}
        self.stops |= {q for t in A.merge for q in (t.left, t.right)}
        for t in sorted(A.lin, key=repr):
            if isinstance(t.label, (Dir, Codir)):
                self.stops.add(t.src)
            else:
                self.lin_from.setdefault(t.src, []).append(t)
        self.table: dict[tuple, list] = {}

    def _apply(self, op: object, label: object) -> object:
        r = label if isinstance(op, Identity) else st.apply_stack_op(op, label)
        if r is not None and st.level(r) > 0 and st.size(r) > self.max_label:
            return None
        return r

    def jumps(self, q: int, label: object) -> list:
        """[(state, label, ((op, state), ...)), ...] in breadth-first order."""
        key = (q, label)
        if key in self.table:
            return self.table[key]
        out = []
        path = {key: ()}
        queue = [key]
        for p, w in queue:
            for t in self.lin_from.get(p, ()):
                r = self._apply(t.label, w)
                if r is None or (t.dst, r) in path:
                    continue
                path[t.dst, r] = path[p, w] + ((t.label, t.dst),)
                if t.dst in self.stops:
                    out.append((t.dst, r, path[t.dst, r]))
                else:
                    queue.append((t.dst, r))
        self.table[key] = out
        return out


@functools.lru_cache(maxsize=8)
def _stack_closure(A: OperationAutomaton, max_label: int) -> _StackClosure:
    return _StackClosure(A, max_label)


class _Search:
    """Best-first search over annotated trees, cheapest total DAG size first."""

    def __init__(self, A: OperationAutomaton, s: StackTree, budget: Budget):
        self.A = A
        self.s = s
        self.budget = budget
        self.lin_from: dict[int, list[Lin]] = {}
        for t in A.lin:
            self.lin_from.setdefault(t.src, []).append(t)
        self.br_from: dict[int, list[Branch]] = {}
        for t in A.branch:
            self.br_from.setdefault(t.src, []).append(t)
        self.mg_from: dict[tuple, list[Merge]] = {}
        for t in A.merge:
            self.mg_from.setdefault((t.left, t.right), []).append(t)
        for m in (self.lin_from, self.br_from, self.mg_from):
            for v in m.values():
                v.sort(key=repr)
        self.parent: dict[tuple, tuple] = {}
        self._ops: dict[tuple, object] = {}
        self.exhausted = False
        # initial-and-final states with no transitions only contribute an
        # identity component, which is useful only on its own
        moving = set(self.lin_from) | set(self.br_from) | {q for pq in self.mg_from for q in pq}
        self.idle = {q for q in A.initial & A.final if q not in moving}
        # step counting needs every state visited, so chains are only
        # collapsed without a step bound
        self.closure = _stack_closure(A, budget.max_label) if budget.max_steps is None else None

    def _cost(self, q: int) -> int:
        # without a step bound the count cannot matter, so configurations
        # that differ only in it are merged
        if self.budget.max_steps is None:
            return 0
        return 1 if q in self.A.step_marks else 0

    def _apply(self, op: object, label: object) -> object:
        """Stack operation on a node label, ``None`` if undefined or over budget."""
        key = (id(op), label)
        if key not in self._ops:
            r = label if isinstance(op, Identity) else st.apply_stack_op(op, label)
            self._ops[key] = r if r is not None and self._label_ok(r) else None
        return self._ops[key]

    def _label_ok(self, label) -> bool:
        return st.size(label) <= self.budget.max_label if st.level(label) > 0 else True

    def starts(self) -> Iterator[tuple]:
        base = _annotate(self.s)
        leaves = list(_leaf_positions(base))
        init = sorted(self.A.initial)
        choices = itertools.product([None] + init, repeat=len(leaves))
        # leftmost application indices first among equally large starts
        order = lambda c: (sum(x is not None for x in c), [k for k, x in enumerate(c) if x is not None])
        for choice in sorted(choices, key=order):
            used = [c for c in choice if c is not None]
            if not used or (len(used) > 1 and any(c in self.idle for c in used)):
                continue
            x = base
            n = 0
            steps = 0
            acts = []
            for k, (u, q) in enumerate(zip(leaves, choice)):
                if q is None:
                    continue
                y = _get(x, u)
                x = _put(x, u, (y[0], q, k, ()))
                n += 1
                steps += self._cost(q)
                acts.append((u, q))
            yield _canon_components(x), n, steps, ("start", tuple(acts))

    def moves(self, x: tuple, size: int) -> Iterator[tuple]:
        """(new config, added vertices, added steps, added nodes, move description).

        ``size`` is the node count of ``x``; moves that would exceed the node
        bound are not generated.
        """
        room = self.budget.max_nodes - size
        for u, y in _active(x):
            label, q, comp, _ = y
            for t in self.lin_from.get(q, ()):
                lab = t.label
                if isinstance(lab, Dir):
                    if room < 1:
                        continue
                    new = (label, None, None, ((label, t.dst, comp, ()),))
                    yield _put(x, u, new), 1, self._cost(t.dst), 1, ("copy1", u, t.dst)
                elif isinstance(lab, Codir) or self.closure is not None:
                    continue
                else:
                    r = self._apply(lab, label)
                    if r is None:
                        continue
                    yield (_put(x, u, (r, t.dst, comp, ())), 1, self._cost(t.dst), 0,
                           ("lin", u, lab, t.dst))
            if self.closure is not None:
                for q2, r, path in self.closure.jumps(q, label):
                    yield _put(x, u, (r, q2, comp, ())), len(path), 0, 0, ("lins", u, path)
            for t in self.br_from.get(q, ()) if room >= 2 else ():
                new = (label, None, None, ((label, t.left, comp, ()), (label, t.right, comp, ())))
                yield (_put(x, u, new), 2, self._cost(t.left) + self._cost(t.right), 2,
                       ("branch", u, t.left, t.right))
        for u, y in _parents_of_active(x):
            kids = y[3]
            if any(c[0] != y[0] for c in kids):
                continue
            if len(kids) == 1:
                c = kids[0]
                for t in self.lin_from.get(c[1], ()):
                    if isinstance(t.label, Codir):
                        new = (y[0], t.dst, c[2], ())
                        yield _put(x, u, new), 1, self._cost(t.dst), -1, ("barcopy1", u, t.dst)
            else:
                c1, c2 = kids
                for t in self.mg_from.get((c1[1], c2[1]), ()):
                    lo, hi = sorted((c1[2], c2[2]))
                    z = _put(x, u, (y[0], t.dst, lo, ()))
                    if hi != lo:
                        z = _rename_component(z, hi, lo)
                    yield _canon_components(z), 1, self._cost(t.dst), -2, ("merge", u, t.dst)

    def accepting(self, x: tuple) -> bool:
        comps = set()
        for _, y in _active(x):
            if y[1] not in self.A.final:
                return False
            comps.add(y[2])
        return 0 < len(comps) <= self.budget.max_tuple

    def in_bounds(self, n: int, steps: int, size: int) -> bool:
        b = self.budget
        if b.max_vertices is not None and n > b.max_vertices:
            return False
        if b.max_steps is not None and steps > b.max_steps:
            return False
        return size <= b.max_nodes

    def run(self) -> Iterator[tuple]:
        """Yield accepting configurations in order of total DAG size."""
        heap: list = []
        counter = itertools.count()
        best: dict[tuple, int] = {}
        size = _size(_annotate(self.s))
        for x, n, steps, mv in self.starts():
            if not self.in_bounds(n, steps, size):
                continue
            key = (x, steps)
            if key in best:
                continue
            best[key] = n
            self.parent[key] = (None, mv)
            heapq.heappush(heap, (n, next(counter), x, steps, size))
        seen = 0
        while heap:
            n, _, x, steps, size = heapq.heappop(heap)
            key = (x, steps)
            if best.get(key, n) < n:
                continue
            seen += 1
            if seen > self.budget.max_configs:
                self.exhausted = True
                return
            if self.accepting(x):
                yield key
            for y, dn, ds, dz, mv in self.moves(x, size):
                m, s2 = n + dn, steps + ds
                if not self.in_bounds(m, s2, size + dz):
                    continue
                k2 = (y, s2)
                if k2 in best and best[k2] <= m:
                    continue
                best[k2] = m
                self.parent[k2] = (key, mv)
                heapq.heappush(heap, (m, next(counter), y, s2, size + dz))

    def witness(self, key: tuple) -> tuple:
        """Rebuild the applied DAGs from the recorded moves."""
        path = []
        k = key
        while k is not None:
            prev, mv = self.parent[k]
            path.append(mv)
            k = prev
        path.reverse()
        cur: dict[str, int] = {}
        leaf_of: dict[int, str] = {}
        edges: list[tuple] = []
        n = 0
        for mv in path:
            kind = mv[0]
            if kind == "start":
                for u, _ in mv[1]:
                    cur[u] = n
                    leaf_of[n] = u
                    n += 1
            elif kind == "lin":
                _, u, lab, _ = mv
                edges.append((cur[u], lab, n))
                cur[u] = n
                n += 1
            elif kind == "lins":
                u = mv[1]
                for lab, _ in mv[2]:
                    edges.append((cur[u], lab, n))
                    cur[u] = n
                    n += 1
            elif kind == "copy1":
                u = mv[1]
                edges.append((cur.pop(u), Dir(1), n))
                cur[u + "1"] = n
                n += 1
            elif kind == "branch":
                u = mv[1]
                v = cur.pop(u)
                edges += [(v, Dir(1), n), (v, Dir(2), n + 1)]
                cur[u + "1"], cur[u + "2"] = n, n + 1
                n += 2
            elif kind == "barcopy1":
                u = mv[1]
                edges.append((cur.pop(u + "1"), Codir(1), n))
                cur[u] = n
                n += 1
            elif kind == "merge":
                u = mv[1]
                edges += [(cur.pop(u + "1"), Codir(1), n), (cur.pop(u + "2"), Codir(2), n)]
                cur[u] = n
                n += 1
        # connected components of the history graph
        root = list(range(n))

        def find(v: int) -> int:
            while root[v] != v:
                root[v] = root[root[v]]
                v = root[v]
            return v

        for a, _, b in edges:
            root[find(a)] = find(b)
        groups: dict[int, list[int]] = {}
        for v in range(n):
            groups.setdefault(find(v), []).append(v)
        leaf_index = {u: i + 1 for i, u in enumerate(tr.leaves(self.s))}
        out = []
        for vs in groups.values():
            f = {v: i for i, v in enumerate(vs)}
            D = OpDag(len(vs), [(f[a], l, f[b]) for a, l, b in edges if a in f])
            D = od.normal_order(D)
            first = min(leaf_index[leaf_of[v]] for v in vs if v in leaf_of)
            out.append((first, D))
        out.sort(key=lambda p: p[0])
        return tuple((D, i) for i, D in out)


def relates(A: OperationAutomaton, s: StackTree, t: StackTree, budget: Budget | None = None) -> RelatesResult:
    """Search for accepted DAGs D1..Dk applied in parallel taking s to t."""
    budget = budget or Budget()
    search = _Search(A, s, budget)
    for key in search.run():
        if _strip(key[0]) != t:
            continue
        wit = search.witness(key)
        Ds = [D for D, _ in wit]
        idx = [i for _, i in wit]
        if od.apply_parallel(Ds, idx, s) != t or any(accepts(A, D) is None for D in Ds):
            raise AssertionError("witness failed to replay")  # pragma: no cover
        return RelatesResult("yes", wit)
    return RelatesResult("unknown" if search.exhausted else "no")


def image(A: OperationAutomaton, s: StackTree, budget: Budget | None = None) -> tuple[set[StackTree], bool]:
    """All trees related to s within the budget, and whether the search finished."""
    budget = budget or Budget()
    search = _Search(A, s, budget)
    out = {_strip(key[0]) for key in search.run()}
    return out, not search.exhausted


# ---------------------------------------------------------------------------
# serialization


def _lin_label_to_json(lab: object) -> object:
    return od.format_label(lab) if not isinstance(lab, Test) else {"test": lab.lang.name}


def to_json(A: OperationAutomaton) -> dict:
    tests = {}
    trans = []
    for t in A.transitions():
        if isinstance(t, Lin):
            if isinstance(t.label, Test):
                tests[t.label.lang.name] = t.label.lang.to_json()
            trans.append({"lin": [t.src, _lin_label_to_json(t.label), t.dst]})
        elif isinstance(t, Branch):
            trans.append({"branch": [t.src, t.left, t.right]})
        else:
            trans.append({"merge": [t.left, t.right, t.dst]})
    doc = {
        "kind": "automaton",
        "format": 1,
        "order": A.order,
        "alphabet": list(A.symbols),
        "states": A.n_states,
        "initial": sorted(A.initial),
        "final": sorted(A.final),
        "transitions": trans,
    }
    if tests:
        doc["tests"] = {k: tests[k] for k in sorted(tests)}
    if A.step_marks:
        doc["step_marks"] = sorted(A.step_marks)
    return doc


def from_json(doc: Mapping) -> OperationAutomaton:
    from . import _dfa

    if not isinstance(doc, Mapping):
        raise UsageError("an automaton document must be an object")
    order = int(doc.get("order", 1))
    symbols = tuple(doc.get("alphabet", ()))
    lvl = order - 1
    tests: dict[str, st.TestLanguage] = {}
    for name, spec in (doc.get("tests") or {}).items():
        if isinstance(spec, Mapping) and "dfa" in spec:
            tests[name] = st.TestLanguage(int(spec.get("level", lvl)), _dfa.DFA.from_json(spec["dfa"]), name)
        else:
            tests[name] = st.language_from_json({**spec, "name": name} if isinstance(spec, Mapping) else spec,
                                                symbols, lvl)
    states = doc.get("states", 0)
    names: dict[object, int] = {}
    if isinstance(states, list):
        names = {q: i for i, q in enumerate(states)}
        n = len(states)
    else:
        n = int(states)

    def q(x: object) -> int:
        if names:
            if x not in names:
                raise UsageError(f"undeclared state {x!r}")
            return names[x]
        if not isinstance(x, int):
            raise UsageError(f"state {x!r} is not an integer")
        return x

    lin, branch, merge = set(), set(), set()
    for tdoc in doc.get("transitions", []):
        if not isinstance(tdoc, Mapping) or len(tdoc) != 1:
            raise UsageError(f"bad transition {tdoc!r}")
        (kind, args), = tdoc.items()
        if kind == "lin":
            a, lab, b = args
            if isinstance(lab, Mapping) and "test" in lab and isinstance(lab["test"], str):
                if lab["test"] not in tests:
                    raise UsageError(f"unknown test language {lab['test']!r}")
                label = Test(tests[lab["test"]])
            elif isinstance(lab, str):
                label = od.parse_label(lab, tests)
            else:
                label = od.label_from_json(lab, symbols, lvl)
            lin.add(Lin(q(a), label, q(b)))
        elif kind == "branch":
            a, b, c = args
            branch.add(Branch(q(a), q(b), q(c)))
        elif kind == "merge":
            a, b, c = args
            merge.add(Merge(q(a), q(b), q(c)))
        else:
            raise UsageError(f"unknown transition kind {kind!r}")
    return OperationAutomaton(n, {q(x) for x in doc.get("initial", [])}, {q(x) for x in doc.get("final", [])},
                              lin, branch, merge, symbols, order,
                              {q(x) for x in doc.get("step_marks", [])})


def to_dot(A: OperationAutomaton, name: str = "automaton") -> str:
    """States are ``q0, q1, ...``; branch and merge transitions get a point node each."""
    lines = [f"digraph {name} {{", "  rankdir=LR;", "  node [shape=circle];"]
    for q in A.states:
        shape = "doublecircle" if q in A.final else "circle"
        lines.append(f'  q{q} [shape={shape}, label="{q}"];')
    for q in sorted(A.initial):
        lines.append(f"  i{q} [shape=point];")
        lines.append(f"  i{q} -> q{q};")
    k = 0
    for t in A.transitions():
        if isinstance(t, Lin):
            lab = od.format_label(t.label) if not isinstance(t.label, Test) else f"test({t.label.lang.name})"
            lines.append(f'  q{t.src} -> q{t.dst} [label="{lab}"];')
            continue
        k += 1
        if isinstance(t, Branch):
            lines.append(f"  b{k} [shape=point];")
            lines.append(f"  q{t.src} -> b{k};")
            lines.append(f'  b{k} -> q{t.left} [label="1"];')
            lines.append(f'  b{k} -> q{t.right} [label="2"];')
        else:
            lines.append(f"  m{k} [shape=point];")
            lines.append(f'  q{t.left} -> m{k} [label="-1"];')
            lines.append(f'  q{t.right} -> m{k} [label="-2"];')
            lines.append(f"  m{k} -> q{t.dst};")
    lines.append("}")
    return "\n".join(lines) + "\n"
