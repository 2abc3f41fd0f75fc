"""Normalization of operation automata.

The pipeline turns an operation automaton into one that recognises the
same relation on stack trees but accepts only reduced operations, has its
states split into destructive/constructive and test-target/other parts,
and is distinguished (no transition enters an initial state or leaves a
final one).

Each step returns a :class:`Stage` that remembers how many steps have run;
calling a step on the wrong stage is a usage error.  :func:`normalize` runs
the whole pipeline and returns a :class:`PartitionedAutomaton`.

Stack parts are handled exactly for trees of order 1 and 2, where node
labels are symbols or 1-stacks.  Order-2 stack parts are treated as
pushdown systems whose cells carry the states of every test automaton on
the prefix below them, so a test only looks at the top cell.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from . import _dfa
from . import op_automaton as oa
from . import stacks as st
from .errors import UsageError
from .op_automaton import Branch, Lin, Merge, OperationAutomaton
from .op_dag import Codir, Dir
from .stacks import Identity, Test

EXACT = "exact"
BOUNDED = "certified-on-bounded-universe-only"

STEP_NAMES = ("input", "split", "bubble-tests", "split-dc", "stack-parts", "remove-id",
              "split-tests", "distinguished")


@dataclass(frozen=True)
class Stage:
    """An automaton part-way through the pipeline.

    ``roles`` gives each state's Step 1 copy (``"t1"``, ``"t2"`` or ``"s"``)
    while that split is meaningful, ``parts`` its destructive/constructive
    side (``"d"``/``"c"``) from Step 3 on, and ``kinds`` its test-target
    side (``"T"``/``"C"``) from Step 6 on.
    """

    automaton: OperationAutomaton
    step: int
    roles: tuple = ()
    parts: tuple = ()
    kinds: tuple = ()
    exact: bool = True
    notes: tuple = ()

    @property
    def name(self) -> str:
        return STEP_NAMES[self.step]


@dataclass(frozen=True)
class PartitionedAutomaton:
    """Normalized automaton with its four-way state classification."""

    automaton: OperationAutomaton
    partition: tuple  # per state: ("T" | "C", "d" | "c")
    certification: str = EXACT
    notes: tuple = ()

    def states_in(self, kind: str | None = None, part: str | None = None) -> list[int]:
        return [q for q, (u, d) in enumerate(self.partition)
                if (kind is None or u == kind) and (part is None or d == part)]

    def to_json(self) -> dict:
        doc = oa.to_json(self.automaton)
        doc["kind"] = "normalized-automaton"
        doc["partition"] = {str(q): f"{u}{d}" for q, (u, d) in enumerate(self.partition)}
        doc["certification"] = {"status": self.certification, "notes": list(self.notes)}
        return doc


def _stage(A: object, expected: int) -> Stage:
    if isinstance(A, OperationAutomaton):
        A = Stage(A, 0)
    if not isinstance(A, Stage):
        raise UsageError(f"expected an automaton, got {type(A).__name__}")
    if A.step != expected:
        raise UsageError(f"this step needs the output of step '{STEP_NAMES[expected]}', "
                         f"got '{A.name}'")
    return A


def is_stack_label(label: object) -> bool:
    return isinstance(label, (st.Rew, st.Cop, st.Ncop, Test, Identity))


def _iteration_cap(A: OperationAutomaton) -> int:
    return max(1, A.n_states) ** 2 * 3


# ---------------------------------------------------------------------------
# Step 1: three copies of every state


def step1_split(A: OperationAutomaton | Stage) -> Stage:
    """Separate tree moves from stack moves with ``Id`` links.

    State ``q`` becomes ``q`` (entry side of tree moves), ``n + q`` (exit
    side of tree moves) and ``2n + q`` (stack side).
    """
    A = _stage(A, 0).automaton
    n = A.n_states

    def t1(q: int) -> int:
        return q

    def t2(q: int) -> int:
        return n + q

    def s(q: int) -> int:
        return 2 * n + q

    lin, branch, merge = set(), set(), set()
    for t in A.lin:
        if is_stack_label(t.label):
            lin.add(Lin(s(t.src), t.label, s(t.dst)))
        else:
            lin.add(Lin(t2(t.src), t.label, t1(t.dst)))
    for t in A.branch:
        branch.add(Branch(t2(t.src), t1(t.left), t1(t.right)))
    for t in A.merge:
        merge.add(Merge(t2(t.left), t2(t.right), t1(t.dst)))
    for q in A.states:
        lin.add(Lin(t1(q), Identity(), s(q)))
        lin.add(Lin(s(q), Identity(), t2(q)))
    B = OperationAutomaton(3 * n, {s(q) for q in A.initial}, {s(q) for q in A.final},
                           lin, branch, merge, A.symbols, A.order)
    return Stage(B, 1, roles=("t1",) * n + ("t2",) * n + ("s",) * n)


# ---------------------------------------------------------------------------
# stack parts as pushdown systems


def _stack_lins(A: OperationAutomaton) -> list[Lin]:
    return [t for t in A.lin if is_stack_label(t.label)]


class _SymbolSystem:
    """Stack part of an order-1 automaton: node labels are single symbols."""

    def __init__(self, A: OperationAutomaton, states: Iterable[int] | None = None):
        self.symbols = tuple(A.symbols)
        self.rules: dict[int, list[tuple[object, int]]] = defaultdict(list)
        for t in _stack_lins(A):
            self.rules[t.src].append((t.label, t.dst))
        self._reach: dict[tuple[int, str], set[tuple[int, str]]] = {}

    def _step(self, label: object, a: str) -> str | None:
        return st.apply_stack_op(label, a)

    def reach(self, p: int, a: str) -> set[tuple[int, str]]:
        key = (p, a)
        if key not in self._reach:
            seen = {key}
            todo = [key]
            while todo:
                q, b = todo.pop()
                for lab, r in self.rules.get(q, ()):
                    c = self._step(lab, b)
                    if c is not None and (r, c) not in seen:
                        seen.add((r, c))
                        todo.append((r, c))
            self._reach[key] = seen
        return self._reach[key]

    def loop_language(self, q1: int, q2: int) -> st.TestLanguage:
        fixed = [a for a in self.symbols if (q2, a) in self.reach(q1, a)]
        return st.finite_language(self.symbols, 0, fixed)


class _OneStackSystem:
    """Stack part of an order-2 automaton as a pushdown system.

    A cell is ``(symbol, symbol below or None, annotation)`` where the
    annotation holds the state of every test automaton after reading the
    part of the stack below the cell.  Cells below the top never change, so
    every test and every pop condition is decided by the top cell alone.
    """

    def __init__(self, A: OperationAutomaton, states: Iterable[int] | None = None):
        self.symbols = tuple(A.symbols)
        lins = _stack_lins(A)
        langs = sorted({t.label.lang for t in lins if isinstance(t.label, Test)},
                       key=lambda L: L.dfa.key())
        self.lang_index = {L: i for i, L in enumerate(langs)}
        self.dfas = [L.dfa for L in langs]
        self.c0 = tuple(d.step(d.start, "[1") for d in self.dfas)
        self.rules: dict[int, list[tuple[object, int]]] = defaultdict(list)
        for t in lins:
            self.rules[t.src].append((t.label, t.dst))
        self.states = sorted(set(A.states if states is None else states)
                             | {t.src for t in lins} | {t.dst for t in lins})
        self.push_from: dict[int, list[int]] = defaultdict(list)
        for t in lins:
            if isinstance(t.label, st.Cop):
                self.push_from[t.src].append(t.dst)
        self._prefixes()
        self._saturate()

    def advance(self, c: tuple, a: str) -> tuple:
        return tuple(None if q is None else d.step(q, a) for d, q in zip(self.dfas, c))

    def passes(self, lang: st.TestLanguage, cell: tuple) -> bool:
        i = self.lang_index[lang]
        d = self.dfas[i]
        q = cell[2][i]
        q = None if q is None else d.step(q, cell[0])
        q = None if q is None else d.step(q, "]1")
        return q is not None and q in d.accepting

    def _prefixes(self) -> None:
        """Reachable (annotation, last symbol) pairs of stack prefixes."""
        start = (self.c0, None)
        seen = {start}
        todo = [start]
        while todo:
            c, x = todo.pop()
            for a in self.symbols:
                nxt = (self.advance(c, a), a)
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        self.prefixes = sorted(seen, key=repr)
        self.cells = [(a, x, c) for c, x in self.prefixes for a in self.symbols]

    def push_cell(self, cell: tuple) -> tuple:
        a, _, c = cell
        return (a, a, self.advance(c, a))

    def _saturate(self) -> None:
        """Same-level summaries and pop summaries.

        ``summary[(p, cell)]`` holds ``(q, cell2)`` when a run from p to q
        turns the top cell into cell2 without ever removing it;
        ``pops[(p, cell)]`` holds the states in which such a run can remove
        the cell.
        """
        summary: dict[tuple, set[tuple]] = {}
        pops: dict[tuple, set[int]] = defaultdict(set)
        waiting: dict[tuple, set[tuple]] = defaultdict(set)
        work: deque = deque()

        def add(src: tuple, q: int, cell: tuple) -> None:
            got = summary.setdefault(src, set())
            if (q, cell) not in got:
                got.add((q, cell))
                work.append((src, q, cell))

        def source(p: int, cell: tuple) -> None:
            if (p, cell) not in summary:
                add((p, cell), p, cell)

        for p in self.states:
            for cell in self.cells:
                source(p, cell)
        while work:
            src, q, cell = work.popleft()
            a, x, c = cell
            for lab, r in self.rules.get(q, ()):
                if isinstance(lab, st.Rew):
                    if a == lab.a:
                        add(src, r, (lab.b, x, c))
                elif isinstance(lab, Identity):
                    add(src, r, cell)
                elif isinstance(lab, Test):
                    if self.passes(lab.lang, cell):
                        add(src, r, cell)
                elif isinstance(lab, st.Cop):
                    eps = self.push_cell(cell)
                    source(r, eps)
                    waiting[(r, eps)].add((src, cell))
                    for r2 in list(pops.get((r, eps), ())):
                        add(src, r2, cell)
                elif isinstance(lab, st.Ncop):
                    if x == a and r not in pops[src]:
                        pops[src].add(r)
                        for src2, cell2 in list(waiting.get(src, ())):
                            add(src2, r, cell2)
        self.summary = summary
        self.pops = pops
        self.pop_pred: dict[tuple, set[int]] = defaultdict(set)
        for (p, cell), rs in pops.items():
            for r in rs:
                self.pop_pred[(r, cell)].add(p)

    def loop_language(self, q1: int, q2: int) -> st.TestLanguage:
        """Stacks s such that some run from q1 to q2 turns s into s.

        Such a run removes the cells above some height m, changes cell m
        and puts it back, then rebuilds the removed cells.  The automaton
        below reads the stack bottom-up, guessing m and the states in
        which the run leaves (going down) and re-enters (going up) each
        level above it.
        """
        alphabet = st.tokens_for(self.symbols, 1)
        init, acc = ("init",), ("acc",)
        edges: dict[tuple, dict[str, set]] = {}
        todo = [init]
        seen = {init}

        def link(u: tuple, tok: str, v: tuple) -> None:
            edges.setdefault(u, {}).setdefault(tok, set()).add(v)
            if v not in seen:
                seen.add(v)
                todo.append(v)

        while todo:
            u = todo.pop()
            if u == init:
                link(u, "[1", ("pre", self.c0, None))
            elif u[0] == "pre":
                _, c, x = u
                for a in self.symbols:
                    link(u, a, ("pre", self.advance(c, a), a))
                    cell = (a, x, c)
                    for p in self.states:
                        for q, cell2 in self.summary.get((p, cell), ()):
                            if cell2 == cell:
                                link(u, a, ("up", self.advance(c, a), cell, p, q))
            elif u[0] == "up":
                _, c, prev, p_prev, q_prev = u
                if p_prev == q1 and q_prev == q2:
                    link(u, "]1", acc)
                for a in self.symbols:
                    cell = (a, prev[0], c)
                    downs = self.pop_pred.get((p_prev, cell), ())
                    if not downs:
                        continue
                    eps = (prev[0], prev[0], c)
                    ups = set()
                    for r in self.push_from.get(q_prev, ()):
                        for q, cell2 in self.summary.get((r, eps), ()):
                            if cell2 == cell:
                                ups.add(q)
                    for p in downs:
                        for q in ups:
                            link(u, a, ("up", self.advance(c, a), cell, p, q))
        dfa = _dfa.determinize(alphabet, [init], edges, [acc])
        return st.TestLanguage(1, dfa)

    def cell_language(self, cells: Iterable[tuple]) -> st.TestLanguage:
        """Stacks whose top cell is one of ``cells``."""
        cells = frozenset(cells)

        def step(q, t):
            phase, c, x, last, _ = q
            if phase == "start":
                return ("in", self.c0, None, None, False) if t == "[1" else ("dead", None, None, None, False)
            if phase == "in":
                if t == "]1":
                    ok = last is not None and (last, x, c) in cells
                    return ("end", None, None, None, ok)
                if t == "[1":
                    return ("dead", None, None, None, False)
                if last is None:
                    return ("in", c, None, t, False)
                return ("in", self.advance(c, last), last, t, False)
            return ("dead", None, None, None, False)

        return st._flag_language(self.symbols, 1, step, ("start", None, None, None, False), "")


def _system(A: OperationAutomaton, states: Iterable[int] | None = None):
    if A.order == 1:
        return _SymbolSystem(A, states)
    if A.order == 2:
        return _OneStackSystem(A, states)
    return None


# ---------------------------------------------------------------------------
# brute-force stack semantics (bounded)


def stack_runs(A: OperationAutomaton, p: int, s: object, max_size: int) -> set[tuple[int, object]]:
    """Configurations (state, stack) reachable from (p, s) by stack moves.

    Intermediate stacks larger than ``max_size`` are cut off, so this is an
    under-approximation used for bounded certification and as an oracle.
    """
    rules: dict[int, list[tuple[object, int]]] = defaultdict(list)
    for t in _stack_lins(A):
        rules[t.src].append((t.label, t.dst))
    seen = {(p, s)}
    todo = [(p, s)]
    while todo:
        q, x = todo.pop()
        for lab, r in rules.get(q, ()):
            y = st.apply_stack_op(lab, x)
            if y is None or st.size(y) > max_size:
                continue
            if (r, y) not in seen:
                seen.add((r, y))
                todo.append((r, y))
    return seen


def loop_language(A: OperationAutomaton, q1: int, q2: int, bound: int | None = None) -> st.TestLanguage:
    """Stacks left unchanged by some stack-move run of A from q1 to q2.

    Exact for orders 1 and 2.  For higher orders a ``bound`` is required
    and the result lists the stacks of size at most ``bound`` fixed by a
    run whose intermediate stacks stay within ``bound + 2``.
    """
    sys_ = _system(A)
    if sys_ is not None:
        return sys_.loop_language(q1, q2)
    if bound is None:
        raise UsageError(f"exact loop languages need order <= 2, got order {A.order}; pass a bound")
    lvl = A.order - 1
    fixed = [s for s in st.enumerate_stacks(A.symbols, lvl, bound)
             if (q2, s) in stack_runs(A, q1, s, bound + 2)]
    return st.finite_language(A.symbols, lvl, fixed)


# ---------------------------------------------------------------------------
# Step 2: test shortcuts for bubbles


def _bubble_pairs(A: OperationAutomaton, n: int) -> dict[tuple[int, int], list[list[tuple[int, int]]]]:
    """For each stack pair (q_s, q'_s), the loops whose common fixed points give a shortcut.

    ``n`` is the number of original states, so state q has copies q, n+q, 2n+q.
    """
    out: dict[tuple[int, int], list[list[tuple[int, int]]]] = defaultdict(list)
    for b in A.branch:
        q = b.src - n
        r, s_ = b.left, b.right
        for m in A.merge:
            r2, s2 = m.left - n, m.right - n
            q2 = m.dst
            out[(2 * n + q, 2 * n + q2)].append([(2 * n + r, 2 * n + r2), (2 * n + s_, 2 * n + s2)])
    copies = [t for t in A.lin if isinstance(t.label, Dir)]
    bars = [t for t in A.lin if isinstance(t.label, Codir)]
    for c in copies:
        q, r = c.src - n, c.dst
        for b in bars:
            r2, q2 = b.src - n, b.dst
            out[(2 * n + q, 2 * n + q2)].append([(2 * n + r, 2 * n + r2)])
    return out


def step2_bubble_tests(A: Stage) -> Stage:
    """Add ``Test`` shortcuts from q_s to q'_s for every bubble from q to q'.

    A bubble copies a leaf and merges the copies back; it acts as a test
    on the leaf's label.  New tests can create new fixed points for outer
    bubbles, so the shortcuts are recomputed until they stop changing.
    """
    stage = _stage(A, 1)
    base = stage.automaton
    n = base.n_states // 3
    pairs = _bubble_pairs(base, n)
    shortcuts: dict[tuple[int, int], st.TestLanguage] = {}
    cap = _iteration_cap(base)
    notes = list(stage.notes)
    exact = base.order <= 2
    cur = base
    rounds = 0
    while True:
        rounds += 1
        if rounds > cap:
            raise RuntimeError(f"bubble-test saturation did not stabilise within {cap} rounds")
        sys_ = _system(cur, range(2 * n, 3 * n))
        new: dict[tuple[int, int], st.TestLanguage] = {}
        for key in sorted(pairs):
            total = None
            for loops in pairs[key]:
                L = None
                for q1, q2 in loops:
                    Lq = sys_.loop_language(q1, q2) if sys_ is not None else loop_language(cur, q1, q2, bound=3)
                    L = Lq if L is None else L.intersect(Lq)
                    if L.is_empty():
                        break
                if L is not None and not L.is_empty():
                    total = L if total is None else total.union(L)
            if total is not None:
                new[key] = st.TestLanguage(total.level, total.dfa)
        if new.keys() == shortcuts.keys() and all(new[k].same_set(shortcuts[k]) for k in new):
            break
        shortcuts = new
        cur = base.with_transitions(lin=[Lin(p, Test(L), q) for (p, q), L in shortcuts.items()])
    if not exact:
        notes.append("bubble tests computed on stacks of size <= 3 only")
    notes.append(f"bubble tests stabilised after {rounds} round(s)")
    return Stage(cur, 2, roles=stage.roles, exact=exact and stage.exact, notes=tuple(notes))


# ---------------------------------------------------------------------------
# Step 3: destructive and constructive copies


def step3_split_dc(A: Stage) -> Stage:
    """Copy every state into a destructive (``q``) and a constructive (``n + q``) side.

    Merges stay on the destructive side, every construction lands on the
    constructive side, so no run can build nodes and then remove them.
    """
    stage = _stage(A, 2)
    A = stage.automaton
    n = A.n_states

    def d(q: int) -> int:
        return q

    def c(q: int) -> int:
        return n + q

    lin, branch, merge = set(), set(), set()
    for t in A.lin:
        if is_stack_label(t.label):
            lin |= {Lin(d(t.src), t.label, d(t.dst)), Lin(c(t.src), t.label, c(t.dst))}
        elif isinstance(t.label, Codir):
            lin.add(Lin(d(t.src), t.label, d(t.dst)))
        else:
            lin |= {Lin(c(t.src), t.label, c(t.dst)), Lin(d(t.src), t.label, c(t.dst))}
    for t in A.merge:
        merge.add(Merge(d(t.left), d(t.right), d(t.dst)))
    for t in A.branch:
        branch |= {Branch(c(t.src), c(t.left), c(t.right)), Branch(d(t.src), c(t.left), c(t.right))}
    both = lambda qs: {d(q) for q in qs} | {c(q) for q in qs}
    B = OperationAutomaton(2 * n, both(A.initial), both(A.final), lin, branch, merge,
                           A.symbols, A.order)
    return Stage(B, 3, roles=stage.roles * 2, parts=("d",) * n + ("c",) * n,
                 exact=stage.exact, notes=stage.notes)


# ---------------------------------------------------------------------------
# Step 4: reduced stack parts


class _Builder:
    """Accumulates states and transitions of a new automaton."""

    def __init__(self, n: int = 0):
        self.n = n
        self.lin: set[Lin] = set()
        self.branch: set[Branch] = set()
        self.merge: set[Merge] = set()

    def state(self) -> int:
        self.n += 1
        return self.n - 1


def _pair_automaton_order2(sys_: _OneStackSystem, entry: int, exit_: int, symbols: Sequence[str]):
    """Reduced-form automaton for the stack runs from ``entry`` to ``exit_``.

    Every accepted sequence has the shape
    ``(T rew ncop1)* T rew (cop1 T rew)*`` (rewrites omitted when they would
    be trivial), and together they relate exactly the stacks the original
    runs relate.  States ``("D", p)`` are on the way down in state p,
    states ``("U", q)`` on the way up; each test pins the top cell, so the
    rewrite after it knows its source symbol.  Returns ``(n_states, lin, start, stop)`` or ``None`` when
    no run exists.
    """
    b = _Builder()
    ids: dict[tuple, int] = {}
    lang_cache: dict[frozenset, st.TestLanguage] = {}

    def node(key: tuple) -> int:
        if key not in ids:
            ids[key] = b.state()
        return ids[key]

    def test(cells: Iterable[tuple]) -> Test:
        key = frozenset(cells)
        if key not in lang_cache:
            lang_cache[key] = sys_.cell_language(key)
        return Test(lang_cache[key])

    start, stop = b.state(), b.state()
    into_exit: list[tuple[int, object]] = []

    def edge(u: int, lab: object, v_key: tuple) -> None:
        v = node(v_key)
        b.lin.add(Lin(u, lab, v))
        if v_key[0] == "U" and v_key[1] == exit_:
            into_exit.append((u, lab))

    def expand_down(u: int, p: int) -> None:
        groups: dict[tuple, set] = defaultdict(set)
        for cell in sys_.cells:
            a, x, _ = cell
            if x is None:
                continue
            for r in sys_.pops.get((p, cell), ()):
                groups[(a, x, r) if a != x else (None, None, r)].add(cell)
        for (a, x, r), cells in sorted(groups.items(), key=repr):
            m1 = b.state()
            b.lin.add(Lin(u, test(cells), m1))
            if a is not None:
                m2 = b.state()
                b.lin.add(Lin(m1, st.Rew(a, x), m2))
                m1 = m2
            b.lin.add(Lin(m1, st.Ncop(1), node(("D", r))))
        mids: dict[tuple, set] = defaultdict(set)
        for cell in sys_.cells:
            for q, cell2 in sys_.summary.get((p, cell), ()):
                a, a2 = cell[0], cell2[0]
                mids[(a, a2, q) if a != a2 else (None, None, q)].add(cell)
        for (a, a2, q), cells in sorted(mids.items(), key=repr):
            if a is None:
                edge(u, test(cells), ("U", q))
            else:
                m1 = b.state()
                b.lin.add(Lin(u, test(cells), m1))
                edge(m1, st.Rew(a, a2), ("U", q))

    def expand_up(u: int, q: int) -> None:
        for r in sorted(set(sys_.push_from.get(q, ()))):
            groups: dict[tuple, set] = defaultdict(set)
            for c, x in sys_.prefixes:
                if x is None:
                    continue
                eps = (x, x, c)
                for q2, cell2 in sys_.summary.get((r, eps), ()):
                    a2 = cell2[0]
                    groups[(x, a2, q2) if a2 != x else (None, None, q2)].add(eps)
            if not groups:
                continue
            m0 = b.state()
            b.lin.add(Lin(u, st.Cop(1), m0))
            for (e, a2, q2), cells in sorted(groups.items(), key=repr):
                if e is None:
                    edge(m0, test(cells), ("U", q2))
                else:
                    m1 = b.state()
                    b.lin.add(Lin(m0, test(cells), m1))
                    edge(m1, st.Rew(e, a2), ("U", q2))

    expand_down(start, entry)
    done: set[tuple] = set()
    while True:
        pending = [k for k in ids if k not in done]
        if not pending:
            break
        for key in pending:
            done.add(key)
            if key[0] == "D":
                expand_down(ids[key], key[1])
            else:
                expand_up(ids[key], key[1])
    for u, lab in into_exit:
        b.lin.add(Lin(u, lab, stop))
    return b.n, b.lin, start, stop


def _pair_automaton_order1(sys_: _SymbolSystem, entry: int, exit_: int, symbols: Sequence[str]):
    b = _Builder()
    start, stop = b.state(), b.state()
    same = [a for a in symbols if (exit_, a) in sys_.reach(entry, a)]
    if same:
        b.lin.add(Lin(start, Test(st.finite_language(symbols, 0, same)), stop))
    for a in symbols:
        for q, a2 in sys_.reach(entry, a):
            if q == exit_ and a2 != a:
                m = b.state()
                b.lin.add(Lin(start, Test(st.finite_language(symbols, 0, [a])), m))
                b.lin.add(Lin(m, st.Rew(a, a2), stop))
    return b.n, b.lin, start, stop


def _trimmed_pair(n: int, lin: set, start: int, stop: int, symbols: Sequence[str], order: int):
    A = OperationAutomaton(n, {start}, {stop}, lin, symbols=symbols, order=order)
    keep = oa.useful_states(A)
    if start not in keep or stop not in keep:
        return None
    A = oa.restrict(A, keep)
    return A.n_states, A.lin, keep.index(start), keep.index(stop)


def step4_normalize_stack_parts(A: Stage) -> Stage:
    """Replace the stack side by one reduced automaton per pair of stack states.

    Each pair automaton has a fresh entry (target of nothing) and a fresh
    exit (source of nothing) and is wired to the tree side with ``Id``
    links as in the original, including the links that stand for an empty
    stack segment.
    """
    stage = _stage(A, 3)
    A = stage.automaton
    roles, parts = stage.roles, stage.parts
    stack_states = [q for q in A.states if roles[q] == "s"]
    sys_ = _system(A, stack_states)
    tree_states = [q for q in A.states if roles[q] != "s"]
    id_in: dict[int, set[int]] = defaultdict(set)
    id_out: dict[int, set[int]] = defaultdict(set)
    for t in A.lin:
        if isinstance(t.label, Identity) and roles[t.src] != "s" and roles[t.dst] == "s":
            id_in[t.dst].add(t.src)
        elif isinstance(t.label, Identity) and roles[t.src] == "s" and roles[t.dst] != "s":
            id_out[t.src].add(t.dst)
    enter = [q for q in stack_states if q in A.initial or id_in.get(q)]
    leave = [q for q in stack_states if q in A.final or id_out.get(q)]

    b = _Builder()
    new_id = {q: b.state() for q in tree_states}
    new_roles = {new_id[q]: roles[q] for q in tree_states}
    new_parts = {new_id[q]: parts[q] for q in tree_states}
    entries: dict[int, list[int]] = defaultdict(list)  # q_s -> entry states of pairs (q_s, .)
    exits: dict[int, list[int]] = defaultdict(list)  # q'_s -> exit states of pairs (., q'_s)
    notes = list(stage.notes)
    exact = stage.exact
    if sys_ is None:
        exact = False
        notes.append(f"order {A.order}: stack parts kept as they are")
    for p in enter:
        for q in leave:
            if parts[p] != parts[q]:
                continue
            if sys_ is None:
                continue
            if isinstance(sys_, _OneStackSystem):
                built = _pair_automaton_order2(sys_, p, q, A.symbols)
            else:
                built = _pair_automaton_order1(sys_, p, q, A.symbols)
            built = _trimmed_pair(*built, A.symbols, A.order)
            if built is None:
                continue
            m, lin, i, f = built
            off = b.n
            b.n += m
            for t in lin:
                b.lin.add(Lin(t.src + off, t.label, t.dst + off))
            for k in range(m):
                new_roles[off + k] = "s"
                new_parts[off + k] = parts[p]
            entries[p].append(i + off)
            exits[q].append(f + off)
    if sys_ is None:
        for q in stack_states:
            new_id[q] = b.state()
            new_roles[new_id[q]] = "s"
            new_parts[new_id[q]] = parts[q]
            entries[q].append(new_id[q])
            exits[q].append(new_id[q])
        for t in A.lin:
            if roles[t.src] == "s" and roles[t.dst] == "s":
                b.lin.add(Lin(new_id[t.src], t.label, new_id[t.dst]))
    for t in A.lin:
        if roles[t.src] != "s" and roles[t.dst] != "s":
            b.lin.add(Lin(new_id[t.src], t.label, new_id[t.dst]))
    for t in A.branch:
        b.branch.add(Branch(new_id[t.src], new_id[t.left], new_id[t.right]))
    for t in A.merge:
        b.merge.add(Merge(new_id[t.left], new_id[t.right], new_id[t.dst]))
    for qs, srcs in id_in.items():
        for q1 in srcs:
            for i in entries.get(qs, ()):
                b.lin.add(Lin(new_id[q1], Identity(), i))
            for f in exits.get(qs, ()):
                b.lin.add(Lin(new_id[q1], Identity(), f))
    for qs, dsts in id_out.items():
        for q2 in dsts:
            for f in exits.get(qs, ()):
                b.lin.add(Lin(f, Identity(), new_id[q2]))
            for i in entries.get(qs, ()):
                b.lin.add(Lin(i, Identity(), new_id[q2]))
    initial = {i for q in A.initial for i in entries.get(q, ())}
    final = {f for q in A.final for f in exits.get(q, ())}
    B = OperationAutomaton(b.n, initial, final, b.lin, b.branch, b.merge, A.symbols, A.order)
    return Stage(B, 4, roles=tuple(new_roles[q] for q in range(b.n)),
                 parts=tuple(new_parts[q] for q in range(b.n)), exact=exact, notes=tuple(notes))


# ---------------------------------------------------------------------------
# Step 5: remove Id links


def step5_remove_id(A: Stage) -> Stage:
    """Compose every tree move with the ``Id`` links around it.

    Only stack-side states survive; tree moves now go directly between them.
    """
    stage = _stage(A, 4)
    A = stage.automaton
    roles = stage.roles
    into: dict[int, set[int]] = defaultdict(set)  # tree state -> stack states linking to it
    out_of: dict[int, set[int]] = defaultdict(set)  # tree state -> stack states it links to
    for t in A.lin:
        if isinstance(t.label, Identity):
            if roles[t.src] == "s" and roles[t.dst] != "s":
                into[t.dst].add(t.src)
            elif roles[t.src] != "s" and roles[t.dst] == "s":
                out_of[t.src].add(t.dst)
    keep = [q for q in A.states if roles[q] == "s"]
    f = {q: i for i, q in enumerate(keep)}
    lin, branch, merge = set(), set(), set()
    for t in A.lin:
        if isinstance(t.label, Identity):
            continue
        if t.src in f and t.dst in f:
            lin.add(Lin(f[t.src], t.label, f[t.dst]))
        elif isinstance(t.label, (Dir, Codir)):
            for p in into.get(t.src, ()):
                for q in out_of.get(t.dst, ()):
                    lin.add(Lin(f[p], t.label, f[q]))
    for t in A.branch:
        for p in into.get(t.src, ()):
            for l in out_of.get(t.left, ()):
                for r in out_of.get(t.right, ()):
                    branch.add(Branch(f[p], f[l], f[r]))
    for t in A.merge:
        for l in into.get(t.left, ()):
            for r in into.get(t.right, ()):
                for q in out_of.get(t.dst, ()):
                    merge.add(Merge(f[l], f[r], f[q]))
    B = OperationAutomaton(len(keep), {f[q] for q in A.initial}, {f[q] for q in A.final},
                           lin, branch, merge, A.symbols, A.order)
    parts = tuple(stage.parts[q] for q in keep)
    return Stage(B, 5, parts=parts, exact=stage.exact, notes=stage.notes)


# ---------------------------------------------------------------------------
# Step 6: test targets


def step6_split_tests(A: Stage) -> Stage:
    """Copy every state into a test-target side (``n + q``) and the rest (``q``).

    Tests lead from the rest into the test-target side and nothing else
    leads there, so a test is never followed by another test.
    """
    stage = _stage(A, 5)
    A = stage.automaton
    n = A.n_states

    def C(q: int) -> int:
        return q

    def T(q: int) -> int:
        return n + q

    lin, branch, merge = set(), set(), set()
    for t in A.lin:
        if isinstance(t.label, Test):
            lin.add(Lin(C(t.src), t.label, T(t.dst)))
        else:
            lin |= {Lin(C(t.src), t.label, C(t.dst)), Lin(T(t.src), t.label, C(t.dst))}
    for t in A.merge:
        for l in (C(t.left), T(t.left)):
            for r in (C(t.right), T(t.right)):
                merge.add(Merge(l, r, C(t.dst)))
    for t in A.branch:
        branch |= {Branch(C(t.src), C(t.left), C(t.right)), Branch(T(t.src), C(t.left), C(t.right))}
    B = OperationAutomaton(2 * n, {C(q) for q in A.initial},
                           {C(q) for q in A.final} | {T(q) for q in A.final},
                           lin, branch, merge, A.symbols, A.order)
    return Stage(B, 6, parts=stage.parts * 2, kinds=("C",) * n + ("T",) * n,
                 exact=stage.exact, notes=stage.notes)


# ---------------------------------------------------------------------------
# distinguishing


def is_distinguished(A: OperationAutomaton) -> bool:
    for t in A.lin:
        if t.dst in A.initial or t.src in A.final:
            return False
    for t in A.branch:
        if {t.left, t.right} & A.initial or t.src in A.final:
            return False
    for t in A.merge:
        if t.dst in A.initial or {t.left, t.right} & A.final:
            return False
    return True


def distinguish(A: Stage) -> Stage:
    """Give initial states a copy that nothing enters and final states a copy that nothing leaves.

    A state that is both initial and final also gets an isolated copy that
    is both, which is all an input that is also an output needs.
    """
    stage = _stage(A, 6)
    A = stage.automaton
    n = A.n_states
    b = _Builder(n)
    src_copy = {q: b.state() for q in sorted(A.initial)}
    dst_copy = {q: b.state() for q in sorted(A.final)}
    both = {q: b.state() for q in sorted(A.initial & A.final)}
    origin = list(range(n)) + list(src_copy) + list(dst_copy) + list(both)

    def srcs(q: int) -> list[int]:
        return [q] + ([src_copy[q]] if q in src_copy else [])

    def dsts(q: int) -> list[int]:
        return [q] + ([dst_copy[q]] if q in dst_copy else [])

    for t in A.lin:
        for p in srcs(t.src):
            for q in dsts(t.dst):
                b.lin.add(Lin(p, t.label, q))
    for t in A.branch:
        for p in srcs(t.src):
            for l in dsts(t.left):
                for r in dsts(t.right):
                    b.branch.add(Branch(p, l, r))
    for t in A.merge:
        for l in srcs(t.left):
            for r in srcs(t.right):
                for q in dsts(t.dst):
                    b.merge.add(Merge(l, r, q))
    B = OperationAutomaton(b.n, set(src_copy.values()) | set(both.values()),
                           set(dst_copy.values()) | set(both.values()),
                           b.lin, b.branch, b.merge, A.symbols, A.order)
    return Stage(B, 7, parts=tuple(stage.parts[q] for q in origin),
                 kinds=tuple(stage.kinds[q] for q in origin), exact=stage.exact, notes=stage.notes)


# ---------------------------------------------------------------------------
# the whole pipeline


def pipeline(A: OperationAutomaton) -> list[Stage]:
    """Every intermediate stage, starting with the input itself."""
    steps = (step1_split, step2_bubble_tests, step3_split_dc, step4_normalize_stack_parts,
             step5_remove_id, step6_split_tests, distinguish)
    out = [Stage(A, 0)]
    for f in steps:
        out.append(f(out[-1]))
    return out


def _partitioned(stage: Stage, trim: bool = True) -> PartitionedAutomaton:
    A = stage.automaton
    keep = oa.useful_states(A) if trim else list(A.states)
    B = oa.restrict(A, keep)
    partition = tuple((stage.kinds[q], stage.parts[q]) for q in keep)
    return PartitionedAutomaton(B, partition, EXACT if stage.exact else BOUNDED, stage.notes)


def normalize(A: OperationAutomaton) -> PartitionedAutomaton:
    """Distinguished normalized automaton with tests recognising the same relation.

    Useless states are dropped at the end; the partition refers to the
    remaining states.
    """
    return _partitioned(pipeline(A)[-1])


def is_normalized(P: PartitionedAutomaton | OperationAutomaton, max_vertices: int = 6) -> bool:
    """Accepted DAGs up to ``max_vertices`` are all reduced."""
    A = P.automaton if isinstance(P, PartitionedAutomaton) else P
    from .op_dag import is_reduced

    return all(is_reduced(D, A.order) for D in oa.enumerate_accepted(A, max_vertices))


def partition_violations(P: PartitionedAutomaton) -> list[str]:
    """Structural exclusions of the state classification that fail, as messages."""
    A, part = P.automaton, P.partition
    bad = []
    for t in A.branch:
        if part[t.left][1] == "d" or part[t.right][1] == "d":
            bad.append(f"branch into a destructive state: {t}")
    for t in A.merge:
        if "c" in (part[t.left][1], part[t.right][1], part[t.dst][1]):
            bad.append(f"merge touching a constructive state: {t}")
    for t in A.lin:
        is_test = isinstance(t.label, Test)
        if is_test and (part[t.dst][0] != "T" or part[t.src][0] == "T"):
            bad.append(f"test not from C to T: {t}")
        if not is_test and part[t.dst][0] == "T":
            bad.append(f"non-test into a test-target state: {t}")
        if isinstance(t.label, Codir) and part[t.dst][1] == "c":
            bad.append(f"merge edge into a constructive state: {t}")
        if isinstance(t.label, Dir) and part[t.dst][1] == "d":
            bad.append(f"copy into a destructive state: {t}")
        if part[t.src][1] == "c" and part[t.dst][1] == "d":
            bad.append(f"constructive to destructive: {t}")
        if isinstance(t.label, Identity):
            bad.append(f"Id transition left over: {t}")
    for t in A.branch:
        if part[t.left][0] == "T" or part[t.right][0] == "T":
            bad.append(f"branch into a test-target state: {t}")
    for t in A.merge:
        if part[t.dst][0] == "T":
            bad.append(f"merge into a test-target state: {t}")
    return bad


def partitioned_from_json(doc: Mapping) -> PartitionedAutomaton:
    A = oa.from_json(doc)
    raw = doc.get("partition") or {}
    partition = []
    for q in A.states:
        code = raw.get(str(q), "Cc")
        partition.append((code[0], code[1]))
    cert = doc.get("certification") or {}
    return PartitionedAutomaton(A, tuple(partition), cert.get("status", EXACT), tuple(cert.get("notes", ())))


def reduced_walks(A: OperationAutomaton) -> bool:
    """Every walk through useful states reads a reduced word.

    Each path of an accepted DAG follows such a walk (a branch or merge
    transition contributes its two direction edges), so a ``True`` answer
    means every accepted DAG is reduced, whatever its size.
    """
    from .op_dag import letter, red_dfa

    keep = set(oa.useful_states(A))
    dfa = red_dfa(A.order, A.order)
    steps: dict[int, list[tuple[str, int]]] = defaultdict(list)
    for t in A.lin:
        steps[t.src].append((letter(t.label), t.dst))
    for t in A.branch:
        steps[t.src] += [("1", t.left), ("2", t.right)]
    for t in A.merge:
        steps[t.left].append(("-1", t.dst))
        steps[t.right].append(("-2", t.dst))
    seen = set()
    todo = [(q, dfa.start) for q in keep]
    while todo:
        q, d = todo.pop()
        if (q, d) in seen:
            continue
        seen.add((q, d))
        if d not in dfa.accepting:
            return False
        for a, r in steps.get(q, ()):
            if r in keep:
                todo.append((r, dfa.step(d, a)))
    return True
