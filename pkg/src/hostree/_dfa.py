"""Small complete-DFA toolkit over hashable tokens.

Only what the rest of the package needs: subset construction, boolean
products, complement, minimization to a canonical numbering, emptiness.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

Token = Hashable


@dataclass(frozen=True)
class DFA:
    """Complete DFA. ``delta[q][i]`` is the successor of ``q`` on ``alphabet[i]``."""

    alphabet: tuple
    delta: tuple
    start: int
    accepting: frozenset

    _index: dict = field(default=None, compare=False, hash=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.alphabet)})

    @property
    def n_states(self) -> int:
        return len(self.delta)

    def step(self, q: int, token: Token) -> int | None:
        i = self._index.get(token)
        if i is None:
            return None
        return self.delta[q][i]

    def run(self, tokens: Iterable[Token], q: int | None = None) -> int | None:
        q = self.start if q is None else q
        for t in tokens:
            q = self.step(q, t)
            if q is None:
                return None
        return q

    def accepts(self, tokens: Iterable[Token]) -> bool:
        q = self.run(tokens)
        return q is not None and q in self.accepting

    # -- constructions --------------------------------------------------

    def with_alphabet(self, alphabet: Sequence[Token]) -> "DFA":
        """Re-express over a superset alphabet; new tokens go to a sink."""
        alphabet = tuple(alphabet)
        if alphabet == self.alphabet:
            return self
        missing = [t for t in self.alphabet if t not in set(alphabet)]
        if missing:
            raise ValueError(f"alphabet lacks tokens {missing!r}")
        sink = self.n_states
        rows = []
        for q in range(self.n_states):
            rows.append(tuple(self.delta[q][self._index[t]] if t in self._index else sink for t in alphabet))
        rows.append(tuple(sink for _ in alphabet))
        return DFA(alphabet, tuple(rows), self.start, self.accepting).minimize()

    def complement(self) -> "DFA":
        acc = frozenset(range(self.n_states)) - self.accepting
        return DFA(self.alphabet, self.delta, self.start, acc).minimize()

    def product(self, other: "DFA", mode: str) -> "DFA":
        alphabet = _merge_alphabets(self.alphabet, other.alphabet)
        a = self.with_alphabet(alphabet)
        b = other.with_alphabet(alphabet)
        pairs: dict[tuple[int, int], int] = {}
        rows: list[tuple[int, ...]] = []
        acc = set()
        todo = deque()

        def get(p: tuple[int, int]) -> int:
            if p not in pairs:
                pairs[p] = len(pairs)
                rows.append(())
                todo.append(p)
            return pairs[p]

        get((a.start, b.start))
        while todo:
            p = todo.popleft()
            i = pairs[p]
            rows[i] = tuple(get((a.delta[p[0]][k], b.delta[p[1]][k])) for k in range(len(alphabet)))
            x, y = p[0] in a.accepting, p[1] in b.accepting
            if (x and y) if mode == "and" else (x or y):
                acc.add(i)
        return DFA(alphabet, tuple(rows), 0, frozenset(acc)).minimize()

    def intersect(self, other: "DFA") -> "DFA":
        return self.product(other, "and")

    def union(self, other: "DFA") -> "DFA":
        return self.product(other, "or")

    def minimize(self) -> "DFA":
        """Moore refinement, then renumber states in BFS order from the start."""
        reach = self._reachable()
        # initial partition: accepting vs not
        block = {q: (1 if q in self.accepting else 0) for q in reach}
        while True:
            sig = {}
            new_block = {}
            for q in sorted(reach):
                key = (block[q],) + tuple(block[self.delta[q][k]] for k in range(len(self.alphabet)))
                new_block[q] = sig.setdefault(key, len(sig))
            if len(sig) == len(set(block.values())):
                block = new_block
                break
            block = new_block
        # BFS renumbering over blocks gives a canonical form
        order: dict[int, int] = {}
        rep: dict[int, int] = {}
        for q in sorted(reach):
            rep.setdefault(block[q], q)
        todo = deque([block[self.start]])
        order[block[self.start]] = 0
        while todo:
            b = todo.popleft()
            q = rep[b]
            for k in range(len(self.alphabet)):
                nb = block[self.delta[q][k]]
                if nb not in order:
                    order[nb] = len(order)
                    todo.append(nb)
        rows = [None] * len(order)
        acc = set()
        for b, i in order.items():
            q = rep[b]
            rows[i] = tuple(order[block[self.delta[q][k]]] for k in range(len(self.alphabet)))
            if q in self.accepting:
                acc.add(i)
        return DFA(self.alphabet, tuple(rows), 0, frozenset(acc))

    def _reachable(self) -> set[int]:
        seen = {self.start}
        todo = [self.start]
        while todo:
            q = todo.pop()
            for r in self.delta[q]:
                if r not in seen:
                    seen.add(r)
                    todo.append(r)
        return seen

    def is_empty(self) -> bool:
        return not (self._reachable() & self.accepting)

    def is_universal(self) -> bool:
        return self._reachable() <= self.accepting

    def key(self) -> tuple:
        cached = self.__dict__.get("_key")
        if cached is None:
            m = self.minimize()
            cached = (m.alphabet, m.delta, tuple(sorted(m.accepting)))
            object.__setattr__(self, "_key", cached)
        return cached

    def shortest_words(self, limit: int) -> Iterator[tuple]:
        """Accepted words in length-lexicographic order (BFS), at most ``limit``."""
        m = self.minimize()
        live = m._coreachable()
        if m.start not in live:
            return
        todo = deque([(m.start, ())])
        count = 0
        while todo and count < limit:
            q, w = todo.popleft()
            if q in m.accepting:
                yield w
                count += 1
            for k, t in enumerate(m.alphabet):
                r = m.delta[q][k]
                if r in live:
                    todo.append((r, w + (t,)))

    def _coreachable(self) -> set[int]:
        rev: dict[int, set[int]] = {}
        for q, row in enumerate(self.delta):
            for r in row:
                rev.setdefault(r, set()).add(q)
        seen = set(self.accepting)
        todo = list(seen)
        while todo:
            q = todo.pop()
            for p in rev.get(q, ()):
                if p not in seen:
                    seen.add(p)
                    todo.append(p)
        return seen

    def to_json(self) -> dict:
        return {
            "alphabet": list(self.alphabet),
            "start": self.start,
            "accepting": sorted(self.accepting),
            "delta": [list(r) for r in self.delta],
        }

    @staticmethod
    def from_json(doc: Mapping) -> "DFA":
        alphabet = tuple(doc["alphabet"])
        rows = tuple(tuple(int(x) for x in r) for r in doc["delta"])
        n = len(rows)
        for r in rows:
            if len(r) != len(alphabet) or any(not 0 <= x < n for x in r):
                raise ValueError("malformed DFA transition table")
        start = int(doc.get("start", 0))
        if not 0 <= start < n:
            raise ValueError("DFA start state out of range")
        return DFA(alphabet, rows, start, frozenset(int(x) for x in doc["accepting"])).minimize()


def _merge_alphabets(a: Sequence[Token], b: Sequence[Token]) -> tuple:
    out = list(a)
    seen = set(a)
    for t in b:
        if t not in seen:
            out.append(t)
            seen.add(t)
    return tuple(out)


def universal(alphabet: Sequence[Token]) -> DFA:
    return DFA(tuple(alphabet), (tuple(0 for _ in alphabet),), 0, frozenset({0}))


def empty(alphabet: Sequence[Token]) -> DFA:
    return DFA(tuple(alphabet), (tuple(0 for _ in alphabet),), 0, frozenset())


def determinize(
    alphabet: Sequence[Token],
    starts: Iterable[Hashable],
    edges: Mapping[Hashable, Mapping[Token, Iterable[Hashable]]],
    accepting: Iterable[Hashable],
    eps: Mapping[Hashable, Iterable[Hashable]] | None = None,
) -> DFA:
    """Subset construction for an NFA given as nested mappings."""
    alphabet = tuple(alphabet)
    accepting = set(accepting)
    eps = eps or {}

    def closure(states: Iterable[Hashable]) -> frozenset:
        seen = set(states)
        todo = list(seen)
        while todo:
            q = todo.pop()
            for r in eps.get(q, ()):
                if r not in seen:
                    seen.add(r)
                    todo.append(r)
        return frozenset(seen)

    init = closure(starts)
    ids = {init: 0}
    rows: list = [None]
    todo = deque([init])
    acc = set()
    while todo:
        S = todo.popleft()
        i = ids[S]
        if S & accepting:
            acc.add(i)
        row = []
        for t in alphabet:
            nxt = set()
            for q in S:
                nxt.update(edges.get(q, {}).get(t, ()))
            T = closure(nxt)
            if T not in ids:
                ids[T] = len(ids)
                rows.append(None)
                todo.append(T)
            row.append(ids[T])
        rows[i] = tuple(row)
    return DFA(alphabet, tuple(rows), 0, frozenset(acc)).minimize()
