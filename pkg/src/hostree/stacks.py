"""Higher-order stacks, their basic operations, and regular test languages.

A level-0 stack is a one-character symbol; a level-k stack is a non-empty
tuple of level-(k-1) stacks, top element last.  Stacks are plain nested
tuples so they hash and compare structurally.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from . import _dfa
from .errors import ParseError, UsageError, locate

Stack = Union[str, tuple]

DIRECTION_SYMBOLS = ("1", "2")
_BRACKETS = set("[]_")


# ---------------------------------------------------------------------------
# alphabet


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple[str, ...]

    def __post_init__(self) -> None:
        syms = tuple(self.symbols)
        object.__setattr__(self, "symbols", syms)
        if not syms:
            raise UsageError("alphabet must be non-empty")
        if len(set(syms)) != len(syms):
            raise UsageError("alphabet has duplicate symbols")
        for a in syms:
            check_symbol(a)
            if a in DIRECTION_SYMBOLS:
                raise UsageError(f"symbol {a!r} is reserved for the tree encoding")

    def __contains__(self, a: object) -> bool:
        return a in self.symbols

    def __iter__(self):
        return iter(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)


def check_symbol(a: object) -> None:
    if not isinstance(a, str) or len(a) != 1 or a.isspace() or a in _BRACKETS or a in ",;(){}":
        raise UsageError(f"invalid stack symbol {a!r}")


# ---------------------------------------------------------------------------
# stack values


def level(s: Stack) -> int:
    k = 0
    while isinstance(s, tuple):
        s = s[0]
        k += 1
    return k


def is_stack(s: object, lvl: int | None = None) -> bool:
    """Structural well-formedness, optionally at a given level."""
    try:
        k = _check(s)
    except UsageError:
        return False
    return lvl is None or k == lvl


def _check(s: object) -> int:
    if isinstance(s, str):
        check_symbol(s)
        return 0
    if isinstance(s, tuple) and s:
        levels = {_check(x) for x in s}
        if len(levels) != 1:
            raise UsageError("mixed levels inside a stack")
        return levels.pop() + 1
    raise UsageError(f"not a stack: {s!r}")


def make_stack(obj: object) -> Stack:
    """Build a stack from nested lists/tuples of one-character strings."""
    if isinstance(obj, str):
        if len(obj) == 1:
            check_symbol(obj)
            return obj
        raise UsageError(f"level-0 stack must be one symbol, got {obj!r}")
    if isinstance(obj, (list, tuple)):
        s = tuple(make_stack(x) for x in obj)
        _check(s)
        return s
    raise UsageError(f"not a stack: {obj!r}")


def one_stack(word: str) -> tuple:
    """The 1-stack whose symbols read ``word`` bottom to top."""
    if not word:
        raise UsageError("1-stacks are non-empty")
    return make_stack(tuple(word))


def size(s: Stack) -> int:
    """Total number of symbols."""
    if isinstance(s, str):
        return 1
    return sum(size(x) for x in s)


def symbols_of(s: Stack) -> set[str]:
    if isinstance(s, str):
        return {s}
    out: set[str] = set()
    for x in s:
        out |= symbols_of(x)
    return out


def top_symbol(s: Stack) -> str:
    while isinstance(s, tuple):
        s = s[-1]
    return s


def top_one_stack(s: Stack) -> tuple:
    if level(s) < 1:
        raise UsageError("level-0 stacks have no 1-stack")
    while level(s) > 1:
        s = s[-1]
    return s


# ---------------------------------------------------------------------------
# text forms


def format_stack(s: Stack) -> str:
    """Compact bracket form, e.g. ``[[aa][bab]]``."""
    if isinstance(s, str):
        return s
    return "[" + "".join(format_stack(x) for x in s) + "]"


def format_stack_indexed(s: Stack) -> str:
    """Bracket form with level subscripts, e.g. ``[_2 [_1 a a ]_1 ]_2``."""
    if isinstance(s, str):
        return s
    k = level(s)
    return f"[_{k} " + " ".join(format_stack_indexed(x) for x in s) + f" ]_{k}"


def parse_stack(text: str, expected_level: int | None = None) -> Stack:
    """Parse compact or subscripted bracket form; whitespace is ignored."""
    pos = 0
    n = len(text)

    def err(msg: str, at: int):
        line, col = locate(text, min(at, n))
        raise ParseError(msg, line, col)

    def skip() -> None:
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def subscript() -> int | None:
        nonlocal pos
        if pos < n and text[pos] == "_":
            pos += 1
            start = pos
            while pos < n and text[pos].isdigit():
                pos += 1
            if start == pos:
                err("expected level digits after '_'", pos)
            return int(text[start:pos])
        return None

    def node() -> tuple[Stack, int]:
        nonlocal pos
        skip()
        if pos >= n:
            err("unexpected end of input", pos)
        c = text[pos]
        if c == "[":
            start = pos
            pos += 1
            declared = subscript()
            items = []
            levels = set()
            while True:
                skip()
                if pos >= n:
                    err("unclosed '['", start)
                if text[pos] == "]":
                    pos += 1
                    closed = subscript()
                    break
                item, lv = node()
                items.append(item)
                levels.add(lv)
            if not items:
                err("empty stack", start)
            if len(levels) != 1:
                err("components of a stack have different levels", start)
            k = levels.pop() + 1
            for d in (declared, closed):
                if d is not None and d != k:
                    err(f"bracket subscript {d} does not match level {k}", start)
            return tuple(items), k
        if c == "]":
            err("unexpected ']'", pos)
        try:
            check_symbol(c)
        except UsageError:
            err(f"invalid symbol {c!r}", pos)
        pos += 1
        return c, 0

    s, k = node()
    skip()
    if pos != n:
        err("trailing input after stack", pos)
    if expected_level is not None and k != expected_level:
        raise ParseError(f"expected a level-{expected_level} stack, got level {k}", 1, 1)
    return s


def stack_to_json(s: Stack) -> dict:
    def nest(x: Stack):
        return x if isinstance(x, str) else [nest(y) for y in x]

    return {"level": level(s), "stack": nest(s)}


def stack_from_json(doc: object) -> Stack:
    if isinstance(doc, dict):
        s = make_stack(doc["stack"])
        if "level" in doc and level(s) != doc["level"]:
            raise UsageError(f"declared level {doc['level']} but stack has level {level(s)}")
        return s
    if isinstance(doc, str) and len(doc) != 1:
        return parse_stack(doc)
    return make_stack(doc)


def serialize(s: Stack) -> tuple[str, ...]:
    """Token sequence read by test-language automata."""
    out: list[str] = []

    def go(x: Stack, k: int) -> None:
        if k == 0:
            out.append(x)
            return
        out.append(f"[{k}")
        for y in x:
            go(y, k - 1)
        out.append(f"]{k}")

    go(s, level(s))
    return tuple(out)


# ---------------------------------------------------------------------------
# operations


@dataclass(frozen=True)
class Rew:
    """Rewrite the top symbol ``a`` into ``b``."""

    a: str
    b: str

    def __post_init__(self) -> None:
        check_symbol(self.a)
        check_symbol(self.b)

    @property
    def level(self) -> int:
        return 0

    def __str__(self) -> str:
        return f"rew({self.a},{self.b})"


@dataclass(frozen=True)
class Identity:
    @property
    def level(self) -> int:
        return 0

    def __str__(self) -> str:
        return "id"


@dataclass(frozen=True)
class Cop:
    k: int

    def __post_init__(self) -> None:
        if not isinstance(self.k, int) or self.k < 1:
            raise UsageError(f"cop level must be >= 1, got {self.k!r}")

    @property
    def level(self) -> int:
        return self.k

    def __str__(self) -> str:
        return f"cop{self.k}"


@dataclass(frozen=True)
class Ncop:
    k: int

    def __post_init__(self) -> None:
        if not isinstance(self.k, int) or self.k < 1:
            raise UsageError(f"ncop level must be >= 1, got {self.k!r}")

    @property
    def level(self) -> int:
        return self.k

    def __str__(self) -> str:
        return f"ncop{self.k}"


@dataclass(frozen=True)
class Test:
    lang: "TestLanguage"

    @property
    def level(self) -> int:
        return self.lang.level

    def __str__(self) -> str:
        return f"test({self.lang.name})"


StackOp = Union[Rew, Identity, Cop, Ncop, Test]


def apply_stack_op(op: StackOp, s: Stack) -> Stack | None:
    """Apply ``op`` to ``s``; ``None`` when the partial operation is undefined."""
    k = level(s)
    if isinstance(op, Test):
        if op.lang.level != k:
            raise UsageError(f"test over level-{op.lang.level} stacks applied to a level-{k} stack")
        return s if op.lang.contains(s) else None
    if op.level > k:
        raise UsageError(f"{op} needs a stack of level >= {op.level}, got level {k}")
    return _apply(op, s, k)


def _apply(op: StackOp, s: Stack, k: int) -> Stack | None:
    if k > op.level:
        inner = _apply(op, s[-1], k - 1)
        if inner is None:
            return None
        return s[:-1] + (inner,)
    if isinstance(op, Rew):
        return op.b if s == op.a else None
    if isinstance(op, Identity):
        return s
    if isinstance(op, Cop):
        return s + (s[-1],)
    if isinstance(op, Ncop):
        if len(s) >= 2 and s[-1] == s[-2]:
            return s[:-1]
        return None
    raise UsageError(f"not a stack operation: {op!r}")


def push_word(w: Iterable[str], s: Stack) -> Stack:
    """Append the symbols of ``w`` to the topmost 1-stack."""
    w = tuple(w)
    k = level(s)
    if k < 1:
        raise UsageError("push_word needs a stack of level >= 1")
    for a in w:
        check_symbol(a)
    if not w:
        return s
    if k == 1:
        return s + w
    return s[:-1] + (push_word(w, s[-1]),)


def pop_word(w: Iterable[str], s: Stack) -> Stack | None:
    """Inverse of :func:`push_word`; ``None`` when undefined."""
    w = tuple(w)
    k = level(s)
    if k < 1:
        raise UsageError("pop_word needs a stack of level >= 1")
    if not w:
        return s
    if k == 1:
        if len(s) <= len(w) or s[-len(w):] != w:
            return None
        return s[: -len(w)]
    inner = pop_word(w, s[-1])
    return None if inner is None else s[:-1] + (inner,)


# ---------------------------------------------------------------------------
# test languages


def tokens_for(symbols: Iterable[str], lvl: int) -> tuple[str, ...]:
    syms = sorted(set(symbols))
    for a in syms:
        check_symbol(a)
    brackets = []
    for k in range(1, lvl + 1):
        brackets += [f"[{k}", f"]{k}"]
    return tuple(syms) + tuple(brackets)


def well_formed_dfa(symbols: Iterable[str], lvl: int) -> _dfa.DFA:
    """DFA of the serializations of all level-``lvl`` stacks over ``symbols``."""
    alphabet = tokens_for(symbols, lvl)
    syms = [t for t in alphabet if len(t) == 1]
    states: dict[object, int] = {}

    def sid(x: object) -> int:
        return states.setdefault(x, len(states))

    start, done, sink = sid("start"), sid("done"), sid("sink")
    for d in range(1, lvl + 1):
        for h in (False, True):
            sid((d, h))
    rows = {}
    for q, i in list(states.items()):
        row = {}
        for t in alphabet:
            nxt = sink
            if q == "start":
                if lvl == 0 and t in syms:
                    nxt = done
                elif lvl > 0 and t == f"[{lvl}":
                    nxt = states[(lvl, False)]
            elif isinstance(q, tuple):
                d, h = q
                if d > 1 and t == f"[{d - 1}":
                    nxt = states[(d - 1, False)]
                elif d == 1 and t in syms:
                    nxt = states[(1, True)]
                elif h and t == f"]{d}":
                    nxt = done if d == lvl else states[(d + 1, True)]
            row[t] = nxt
        rows[i] = tuple(row[t] for t in alphabet)
    delta = tuple(rows[i] for i in range(len(states)))
    return _dfa.DFA(alphabet, delta, start, frozenset({done})).minimize()


@dataclass(frozen=True)
class TestLanguage:
    """Regular set of stacks of a fixed level, as a minimal DFA over tokens.

    The automaton is always intersected with the well-formed serializations
    so equality of two languages is equality of their stack sets (over the
    union of their symbol sets).
    """

    level: int
    dfa: _dfa.DFA
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.level < 0:
            raise UsageError("test level must be >= 0")
        syms = [t for t in self.dfa.alphabet if len(t) == 1]
        wf = well_formed_dfa(syms, self.level)
        d = self.dfa.with_alphabet(_dfa._merge_alphabets(wf.alphabet, self.dfa.alphabet))
        d = d.intersect(wf)
        d = d.with_alphabet(tokens_for([t for t in d.alphabet if len(t) == 1], self.level))
        object.__setattr__(self, "dfa", d.minimize())
        if not self.name:
            digest = hashlib.sha1(repr(self.dfa.key()).encode()).hexdigest()[:6]
            object.__setattr__(self, "name", "L" + digest)

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(t for t in self.dfa.alphabet if len(t) == 1)

    @property
    def digest(self) -> str:
        """Short fingerprint of the stack set."""
        cached = self.__dict__.get("_digest")
        if cached is None:
            cached = hashlib.sha1(repr(self.dfa.key()).encode()).hexdigest()[:16]
            object.__setattr__(self, "_digest", cached)
        return cached

    def contains(self, s: Stack) -> bool:
        k = level(s)
        if k != self.level:
            raise UsageError(f"level-{k} stack tested against a level-{self.level} language")
        return self.dfa.accepts(serialize(s))

    __contains__ = contains

    def _lift(self, other: "TestLanguage") -> None:
        if other.level != self.level:
            raise UsageError("test languages of different levels")

    def intersect(self, other: "TestLanguage", name: str = "") -> "TestLanguage":
        self._lift(other)
        return TestLanguage(self.level, self.dfa.intersect(other.dfa), name or f"({self.name}&{other.name})")

    def union(self, other: "TestLanguage", name: str = "") -> "TestLanguage":
        self._lift(other)
        return TestLanguage(self.level, self.dfa.union(other.dfa), name or f"({self.name}|{other.name})")

    def complement(self, name: str = "") -> "TestLanguage":
        return TestLanguage(self.level, self.dfa.complement(), name or f"!{self.name}")

    def is_empty(self) -> bool:
        return self.dfa.is_empty()

    def same_set(self, other: "TestLanguage") -> bool:
        a = self.dfa.with_alphabet(_dfa._merge_alphabets(self.dfa.alphabet, other.dfa.alphabet))
        b = other.dfa.with_alphabet(a.alphabet)
        return a.key() == b.key()

    def to_json(self) -> dict:
        return {"level": self.level, "name": self.name, "dfa": self.dfa.to_json()}


def test_membership(lang: TestLanguage, s: Stack) -> bool:
    return lang.contains(s)


test_membership.__test__ = False  # keep pytest from collecting it
TestLanguage.__test__ = False
Test.__test__ = False


def _flag_language(symbols: Iterable[str], lvl: int, step, init, name: str) -> TestLanguage:
    """Language built from a finite-state scan ``step(state, token)`` of the tokens."""
    alphabet = tokens_for(symbols, lvl)
    ids: dict[object, int] = {init: 0}
    rows: list = [None]
    todo = [init]
    acc = set()
    while todo:
        q = todo.pop()
        row = []
        for t in alphabet:
            r = step(q, t)
            if r not in ids:
                ids[r] = len(ids)
                rows.append(None)
                todo.append(r)
            row.append(ids[r])
        rows[ids[q]] = tuple(row)
    for q, i in ids.items():
        if q[-1]:
            acc.add(i)
    return TestLanguage(lvl, _dfa.DFA(alphabet, tuple(rows), 0, frozenset(acc)), name)


def universal_language(symbols: Iterable[str], lvl: int) -> TestLanguage:
    return TestLanguage(lvl, _dfa.universal(tokens_for(symbols, lvl)), "all")


def empty_language(symbols: Iterable[str], lvl: int) -> TestLanguage:
    return TestLanguage(lvl, _dfa.empty(tokens_for(symbols, lvl)), "none")


def top_is(symbols: Iterable[str], lvl: int, a: str) -> TestLanguage:
    """Stacks whose top symbol is ``a``."""
    return top_in(symbols, lvl, [a], name=f"top={a}")


def top_in(symbols: Iterable[str], lvl: int, tops: Iterable[str], name: str = "") -> TestLanguage:
    tops = frozenset(tops)

    def step(q, t):
        return (t in tops,) if len(t) == 1 else q

    return _flag_language(symbols, lvl, step, (False,), name or "top in {" + ",".join(sorted(tops)) + "}")


def top_one_stack_contains(symbols: Iterable[str], lvl: int, a: str) -> TestLanguage:
    """Stacks whose topmost 1-stack contains the symbol ``a``."""
    if lvl < 1:
        raise UsageError("level-0 stacks have no 1-stack")

    def step(q, t):
        if t == "[1":
            return (False,)
        if t == a:
            return (True,)
        return q

    return _flag_language(symbols, lvl, step, (False,), f"top1 contains {a}")


def finite_language(symbols: Iterable[str], lvl: int, stacks: Iterable[Stack], name: str = "") -> TestLanguage:
    """Exactly the listed stacks."""
    alphabet = tokens_for(symbols, lvl)
    trie: dict[tuple, int] = {(): 0}
    acc = set()
    stacks = list(stacks)
    for s in stacks:
        if level(s) != lvl:
            raise UsageError("stack level does not match the language level")
        w = serialize(s)
        for i in range(1, len(w) + 1):
            trie.setdefault(w[:i], len(trie))
        acc.add(trie[w])
    sink = len(trie)
    rows = [None] * (sink + 1)
    for w, i in trie.items():
        rows[i] = tuple(trie.get(w + (t,), sink) for t in alphabet)
    rows[sink] = tuple(sink for _ in alphabet)
    label = name or "{" + ",".join(sorted(format_stack(s) for s in stacks)) + "}"
    return TestLanguage(lvl, _dfa.DFA(alphabet, tuple(rows), 0, frozenset(acc)), label)


def language_from_json(doc: dict, symbols: Sequence[str], lvl: int) -> TestLanguage:
    """Build a language from a JSON expression.

    Forms: ``{"all": true}``, ``{"none": true}``, ``{"top": "a"}``,
    ``{"top_in": [...]}``, ``{"top1_contains": "a"}``, ``{"stacks": [...]}``,
    ``{"and": [...]}``, ``{"or": [...]}``, ``{"not": e}``, ``{"dfa": {...}}``.
    An optional ``"name"`` key labels the result.
    """
    if not isinstance(doc, dict):
        raise UsageError(f"test language must be an object, got {doc!r}")
    lvl = doc.get("level", lvl)
    name = doc.get("name", "")
    if "all" in doc:
        out = universal_language(symbols, lvl)
    elif "none" in doc:
        out = empty_language(symbols, lvl)
    elif "top" in doc:
        out = top_is(symbols, lvl, doc["top"])
    elif "top_in" in doc:
        out = top_in(symbols, lvl, doc["top_in"])
    elif "top1_contains" in doc:
        out = top_one_stack_contains(symbols, lvl, doc["top1_contains"])
    elif "stacks" in doc:
        out = finite_language(symbols, lvl, [stack_from_json(x) for x in doc["stacks"]])
    elif "and" in doc or "or" in doc:
        key = "and" if "and" in doc else "or"
        parts = [language_from_json(x, symbols, lvl) for x in doc[key]]
        if not parts:
            raise UsageError(f"empty '{key}' list")
        out = parts[0]
        for p in parts[1:]:
            out = out.intersect(p) if key == "and" else out.union(p)
    elif "not" in doc:
        out = language_from_json(doc["not"], symbols, lvl).complement()
    elif "dfa" in doc:
        out = TestLanguage(lvl, _dfa.DFA.from_json(doc["dfa"]))
    else:
        raise UsageError(f"unknown test language form: {sorted(doc)}")
    if name:
        out = TestLanguage(out.level, out.dfa, name)
    return out


def op_to_json(op: StackOp) -> object:
    if isinstance(op, Rew):
        return {"rew": [op.a, op.b]}
    if isinstance(op, Identity):
        return "id"
    if isinstance(op, Cop):
        return {"cop": op.k}
    if isinstance(op, Ncop):
        return {"ncop": op.k}
    if isinstance(op, Test):
        return {"test": op.lang.to_json()}
    raise UsageError(f"not a stack operation: {op!r}")


def op_from_json(doc: object, symbols: Sequence[str] = (), lvl: int = 0) -> StackOp:
    if doc == "id":
        return Identity()
    if isinstance(doc, dict) and len(doc) == 1:
        (key, val), = doc.items()
        if key == "rew":
            return Rew(val[0], val[1])
        if key == "cop":
            return Cop(int(val))
        if key == "ncop":
            return Ncop(int(val))
        if key == "test":
            if isinstance(val, dict) and "dfa" in val and "level" in val and len(val["dfa"]) > 1:
                return Test(TestLanguage(val["level"], _dfa.DFA.from_json(val["dfa"]), val.get("name", "")))
            return Test(language_from_json(val, symbols, lvl))
    raise UsageError(f"unknown stack operation {doc!r}")


def enumerate_stacks(symbols: Sequence[str], lvl: int, max_size: int, max_width: int | None = None) -> list[Stack]:
    """All level-``lvl`` stacks with at most ``max_size`` symbols, sorted."""
    symbols = tuple(sorted(symbols))

    def gen(k: int, budget: int) -> list[tuple[Stack, int]]:
        if k == 0:
            return [(a, 1) for a in symbols] if budget >= 1 else []
        parts = gen(k - 1, budget)
        out: list[tuple[Stack, int]] = []

        def extend(prefix: tuple, used: int) -> None:
            if prefix:
                out.append((prefix, used))
            if max_width is not None and len(prefix) >= max_width:
                return
            for p, c in parts:
                if used + c <= budget:
                    extend(prefix + (p,), used + c)

        extend((), 0)
        return out

    return sorted({s for s, _ in gen(lvl, max_size)}, key=lambda s: (size(s), format_stack(s)))
