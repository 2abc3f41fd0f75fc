"""Ground stack-tree rewriting systems and their bounded rewriting graphs.

A system is a finite list of labelled rules, each rule a compound operation
DAG.  A tree ``t`` rewrites to ``t'`` with label ``a`` when some rule with
label ``a`` applied at some leaf of ``t`` yields ``t'``.  The empty string
is the silent label: it contributes no letter to path words.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import op_dag as od
from . import stacks as st
from . import stack_tree as tr
from .errors import UsageError
from .op_dag import Codir, Dir, OpDag
from .stack_tree import StackTree
from .stacks import Cop, Ncop, Rew, TestLanguage

EPSILON = ""


@dataclass(frozen=True)
class Rule:
    dag: OpDag
    label: str = EPSILON
    name: str = ""

    def __iter__(self):
        # unpacks as (dag, label)
        return iter((self.dag, self.label))


@dataclass(frozen=True)
class Gstrs:
    """Labelled ground stack-tree rewriting system of a given order."""

    order: int
    symbols: tuple
    rules: tuple = ()
    labels: tuple = ()

    def __post_init__(self) -> None:
        rules = tuple(r if isinstance(r, Rule) else Rule(*r) for r in self.rules)
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "symbols", tuple(self.symbols))
        labels = tuple(self.labels) or tuple(sorted({r.label for r in rules} - {EPSILON}))
        object.__setattr__(self, "labels", labels)
        for r in rules:
            if not od.is_compound(r.dag):
                raise UsageError(f"rule {r.name or r.label!r} is not a compound operation")
            if r.label != EPSILON and r.label not in labels:
                raise UsageError(f"rule label {r.label!r} is not in {labels}")
            if od.dag_order(r.dag) > self.order:
                raise UsageError(f"rule {r.name or r.label!r} needs order {od.dag_order(r.dag)}")


def successors(R: Gstrs, t: StackTree) -> list[tuple[str, StackTree]]:
    """Labelled one-step successors, deduplicated, in canonical order."""
    out = set()
    for rule in R.rules:
        for u in od.apply_all(rule.dag, t):
            out.add((rule.label, u))
    return sorted(out, key=lambda p: (tr.sort_key(p[1]), p[0]))


def reachable(R: Gstrs, t0: StackTree, depth: int) -> list[StackTree]:
    """Trees reachable from t0 in at most ``depth`` steps, canonically ordered."""
    if depth < 0:
        raise UsageError("depth must be >= 0")
    seen = {t0}
    frontier = [t0]
    for _ in range(depth):
        nxt = []
        for t in frontier:
            for _, u in successors(R, t):
                if u not in seen:
                    seen.add(u)
                    nxt.append(u)
        frontier = nxt
        if not frontier:
            break
    return tr.canonical(seen)


def reachable_by_depth(R: Gstrs, t0: StackTree, depth: int) -> list[set[StackTree]]:
    """``out[d]`` is the set of trees reachable in exactly d steps."""
    layers = [{t0}]
    for _ in range(depth):
        layers.append({u for t in layers[-1] for _, u in successors(R, t)})
    return layers


# ---------------------------------------------------------------------------
# final-tree patterns


@dataclass(frozen=True)
class TreePattern:
    """Tree-shaped pattern: each node is an exact stack, a test, or a wildcard.

    Exactly one of ``stack`` and ``test`` may be set; neither means any label.
    The shape (arity at every node) must match exactly.
    """

    stack: object = None
    test: TestLanguage | None = None
    children: tuple = ()

    def __post_init__(self) -> None:
        if self.stack is not None and self.test is not None:
            raise UsageError("a pattern node is either exact or a test, not both")
        if len(self.children) > 2:
            raise UsageError("pattern nodes have at most two children")
        object.__setattr__(self, "children", tuple(self.children))

    def matches(self, t: StackTree) -> bool:
        if len(t.children) != len(self.children):
            return False
        if self.stack is not None and t.label != self.stack:
            return False
        if self.test is not None and not self.test.contains(t.label):
            return False
        return all(p.matches(c) for p, c in zip(self.children, t.children))


def pattern_to_json(p: TreePattern) -> dict:
    doc: dict = {}
    if p.stack is not None:
        doc["stack"] = st.format_stack(p.stack)
    elif p.test is not None:
        doc["test"] = p.test.to_json()
    else:
        doc["any"] = True
    if p.children:
        doc["children"] = [pattern_to_json(c) for c in p.children]
    return doc


def pattern_from_json(doc: Mapping, symbols: Sequence[str], lvl: int) -> TreePattern:
    if not isinstance(doc, Mapping):
        raise UsageError(f"not a pattern: {doc!r}")
    kids = tuple(pattern_from_json(c, symbols, lvl) for c in doc.get("children", []))
    if "stack" in doc:
        s = doc["stack"]
        return TreePattern(stack=st.parse_stack(s) if isinstance(s, str) and len(s) > 1 else st.make_stack(s),
                           children=kids)
    if "test" in doc:
        spec = doc["test"]
        if isinstance(spec, Mapping) and "dfa" in spec and isinstance(spec["dfa"], Mapping) and "delta" in spec["dfa"]:
            from . import _dfa
            lang = TestLanguage(int(spec.get("level", lvl)), _dfa.DFA.from_json(spec["dfa"]), spec.get("name", ""))
        else:
            lang = st.language_from_json(spec, symbols, lvl)
        return TreePattern(test=lang, children=kids)
    return TreePattern(children=kids)


def matches_any(patterns: Iterable[TreePattern], t: StackTree) -> bool:
    return any(p.matches(t) for p in patterns)


# ---------------------------------------------------------------------------
# words and traces


def _default_steps(length: int) -> int:
    return 2 * length + 1


def accepts_word(R: Gstrs, t0: StackTree, finals: Sequence[TreePattern], w: Sequence[str],
                 max_steps: int | None = None) -> bool:
    """Is there a path of at most ``max_steps`` rewriting steps labelled w?

    Silent rules consume no letter.  ``max_steps`` defaults to ``2|w| + 1``.
    """
    w = tuple(w)
    limit = _default_steps(len(w)) if max_steps is None else max_steps
    start = (t0, 0)
    seen = {start}
    frontier = [start]
    for step in range(limit + 1):
        for t, k in frontier:
            if k == len(w) and matches_any(finals, t):
                return True
        if step == limit:
            break
        nxt = []
        for t, k in frontier:
            for a, u in successors(R, t):
                if a == EPSILON:
                    node = (u, k)
                elif k < len(w) and a == w[k]:
                    node = (u, k + 1)
                else:
                    continue
                if node not in seen:
                    seen.add(node)
                    nxt.append(node)
        frontier = nxt
        if not frontier:
            break
    return False


def trace_language(R: Gstrs, t0: StackTree, finals: Sequence[TreePattern], maxlen: int,
                   max_steps: int | None = None) -> set[str]:
    """Words of length <= maxlen labelling a path from t0 to a final tree.

    Exploration stops after ``max_steps`` rewriting steps (default
    ``2 * maxlen + 1``); words are strings since labels are single letters
    or arbitrary strings concatenated.
    """
    limit = _default_steps(maxlen) if max_steps is None else max_steps
    start = (t0, ())
    seen = {start}
    frontier = [start]
    words: set[str] = set()
    for step in range(limit + 1):
        for t, w in frontier:
            if matches_any(finals, t):
                words.add("".join(w))
        if step == limit:
            break
        nxt = []
        for t, w in frontier:
            for a, u in successors(R, t):
                w2 = w if a == EPSILON else w + (a,)
                if len(w2) > maxlen:
                    continue
                node = (u, w2)
                if node not in seen:
                    seen.add(node)
                    nxt.append(node)
        frontier = nxt
        if not frontier:
            break
    return words


def shuffle(u: str, v: str) -> set[str]:
    """All interleavings of u and v."""
    if not u:
        return {v}
    if not v:
        return {u}
    return {u[0] + w for w in shuffle(u[1:], v)} | {v[0] + w for w in shuffle(u, v[1:])}


# ---------------------------------------------------------------------------
# the shuffle-language system


UP = "↑"
DOWN = "↓"


def shuffle_system(sigma: Sequence[str] = ("a", "b")) -> tuple[Gstrs, StackTree, list[TreePattern]]:
    """Order-2 system whose traces from ``[↓]`` are the words u ⧢ u.

    Rules ``P_a`` push ``a`` under the marker, ``Dupl`` splits the leaf in
    two, and ``D_a`` (labelled ``a``) pops ``a`` from under the marker.
    """
    sigma = tuple(sigma)
    symbols = sigma + (UP, DOWN)
    rules = []
    for a in sigma:
        rules.append(Rule(od.chain([Rew(DOWN, a), Cop(1), Rew(a, DOWN)]), EPSILON, f"P_{a}"))
    dupl = OpDag(5, [(0, Dir(1), 1), (0, Dir(2), 2), (1, Rew(DOWN, UP), 3), (2, Rew(DOWN, UP), 4)])
    rules.append(Rule(dupl, EPSILON, "Dupl"))
    for a in sigma:
        rules.append(Rule(od.chain([Rew(UP, a), Ncop(1), Rew(a, UP)]), a, f"D_{a}"))
    R = Gstrs(2, symbols, tuple(rules), sigma)
    t0 = tr.leaf(st.one_stack(DOWN))
    up = st.one_stack(UP)
    finals = [TreePattern(children=(TreePattern(stack=up), TreePattern(stack=up)))]
    return R, t0, finals


# ---------------------------------------------------------------------------
# ground tree rewriting (order 1)


@dataclass(frozen=True)
class Gtrs:
    """Ground tree rewriting system: pairs of finite trees with symbol labels."""

    rules: tuple = ()
    symbols: tuple = field(default=())

    def __post_init__(self) -> None:
        rules = tuple((l, r) for l, r in self.rules)
        for l, r in rules:
            if l.order != 1 or r.order != 1:
                raise UsageError("ground rules are trees labelled by single symbols")
        object.__setattr__(self, "rules", rules)
        syms = set(self.symbols)
        for l, r in rules:
            for x in (l, r):
                syms |= {x_lab for x_lab in tr.to_position_map(x).values()}
        object.__setattr__(self, "symbols", tuple(sorted(syms)))


def ground_rule_dag(lhs: StackTree, rhs: StackTree) -> OpDag:
    """DAG that consumes the subtree ``lhs`` bottom-up and builds ``rhs``.

    Each consumed child is relabelled to its parent's symbol before the
    merge, so the merge checks the child against its parent.  The new subtree is
    grown by copies followed by relabellings.
    """
    edges: list[tuple] = []
    counter = [0]

    def fresh() -> int:
        counter[0] += 1
        return counter[0] - 1

    def destroy(x: StackTree) -> int:
        """Vertex holding the leaf that x has been folded into."""
        if not x.children:
            return fresh()
        kids = []
        for c in x.children:
            v = destroy(c)
            if c.label != x.label:
                w = fresh()
                edges.append((v, Rew(c.label, x.label), w))
                v = w
            kids.append(v)
        z = fresh()
        for d, v in enumerate(kids, start=1):
            edges.append((v, Codir(d), z))
        return z

    def build(x: StackTree, v: int) -> None:
        """Grow x below the leaf at v, which already carries x's label."""
        for d, c in enumerate(x.children, start=1):
            w = fresh()
            edges.append((v, Dir(d), w))
            if c.label != x.label:
                w2 = fresh()
                edges.append((w, Rew(x.label, c.label), w2))
                w = w2
            build(c, w)

    root = destroy(lhs)
    # merges only check that children agree with their parent, so the root
    # label is checked here, even when it does not change
    w = fresh()
    edges.append((root, Rew(lhs.label, rhs.label), w))
    root = w
    build(rhs, root)
    return od.normal_order(OpDag(counter[0], edges))


def compile_gtrs(G: Gtrs) -> Gstrs:
    rules = tuple(Rule(ground_rule_dag(l, r), EPSILON, f"r{k + 1}") for k, (l, r) in enumerate(G.rules))
    return Gstrs(1, G.symbols, rules)


# ---------------------------------------------------------------------------
# JSON


def system_to_json(R: Gstrs, initial: StackTree | None = None,
                   finals: Sequence[TreePattern] = ()) -> dict:
    doc: dict = {
        "kind": "system",
        "format": 1,
        "order": R.order,
        "alphabet": list(R.symbols),
        "labels": list(R.labels),
        "rules": [
            {"name": r.name, "label": r.label, "dag": od.dag_to_json(r.dag)} for r in R.rules
        ],
    }
    if initial is not None:
        doc["initial"] = tr.format_tree(initial)
    if finals:
        doc["finals"] = [pattern_to_json(p) for p in finals]
    return doc


def system_from_json(doc: Mapping) -> tuple[Gstrs, StackTree | None, list[TreePattern]]:
    if not isinstance(doc, Mapping):
        raise UsageError("a system document must be an object")
    order = int(doc.get("order", 1))
    symbols = tuple(doc.get("alphabet", ()))
    lvl = order - 1
    tests = {name: st.language_from_json({**spec, "name": name}, symbols, lvl)
             for name, spec in (doc.get("tests") or {}).items()}
    rules = []
    for k, rd in enumerate(doc.get("rules", [])):
        D = od.dag_from_json(rd["dag"], symbols, lvl, tests)
        rules.append(Rule(D, rd.get("label", EPSILON) or EPSILON, rd.get("name", f"r{k + 1}")))
    R = Gstrs(order, symbols, tuple(rules), tuple(doc.get("labels", ())))
    init = doc.get("initial")
    t0 = tr.tree_from_json(init) if init is not None else None
    finals = [pattern_from_json(p, symbols, lvl) for p in doc.get("finals", [])]
    return R, t0, finals


def graph_to_dot(R: Gstrs, t0: StackTree, depth: int) -> str:
    """Bounded neighbourhood of t0 in the rewriting graph; node ids are canonical serials."""
    nodes = reachable(R, t0, depth)
    inner = set(reachable(R, t0, depth - 1)) if depth > 0 else set()
    ids = {t: i for i, t in enumerate(nodes)}
    lines = ["digraph rewriting {"]
    for t, i in ids.items():
        lines.append(f'  n{i} [label="{tr.format_tree(t)}"];')
    for t in nodes:
        if t not in inner:
            continue
        for a, u in successors(R, t):
            if u in ids:
                lab = a if a else "ε"
                lines.append(f'  n{ids[t]} -> n{ids[u]} [label="{lab}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
