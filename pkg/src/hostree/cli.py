"""Command-line front end.

Every subcommand writes one JSON report (``kind`` and ``format: 1``) to
stdout or ``--out`` and a one-line summary to stderr.  Exit statuses: 0
answered, 2 answered "no", 3 budget exhausted ("unknown"), 64 usage error,
65 unreadable input (with line and column).

Input files are JSON documents with a ``kind`` tag (tree, dag, automaton,
normalized-automaton, system, stack-set) or, for trees, DAGs and stack
sets, the plain text syntax.
"""

from __future__ import annotations

import json
import sys
from typing import Sequence

import click

from . import normalization as nz
from . import op_automaton as oa
from . import op_dag as od
from . import rewriting as rw
from . import stack_tree as tr
from . import stacks as st
from . import treegraph_encoding as te
from .errors import HostreeError, ParseError, UsageError

EXIT_OK = 0
EXIT_NO = 2
EXIT_UNKNOWN = 3
EXIT_USAGE = 64
EXIT_PARSE = 65

FORMAT = 1


class _InputError(Exception):
    """Wraps problems with input documents so they exit with 65."""


# ---------------------------------------------------------------------------
# reading inputs


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise click.UsageError(f"cannot read {path}: {e.strerror}")


def _json_doc(text: str, path: str) -> dict | None:
    if not text.lstrip().startswith("{"):
        return None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise _InputError(f"{path}: {e.msg} (line {e.lineno}, column {e.colno})")
    if not isinstance(doc, dict) or "kind" not in doc:
        raise _InputError(f"{path}: JSON input needs a 'kind' field (line 1, column 1)")
    return doc


def _expect(doc: dict, path: str, *kinds: str) -> None:
    if doc["kind"] not in kinds:
        raise _InputError(f"{path}: expected a document of kind {' or '.join(kinds)}, "
                          f"got {doc['kind']!r} (line 1, column 1)")


def _converting(path: str, f, *args):
    try:
        return f(*args)
    except ParseError as e:
        raise _InputError(f"{path}: {e}")
    except (UsageError, KeyError, TypeError, ValueError) as e:
        raise _InputError(f"{path}: invalid document: {e} (line 1, column 1)")


def load_tree(path: str) -> tr.StackTree:
    text = _read(path)
    doc = _json_doc(text, path)
    if doc is None:
        return _converting(path, tr.parse_tree, text)
    _expect(doc, path, "tree")
    return _converting(path, tr.tree_from_json, doc.get("tree"))


def load_dag(path: str) -> od.OpDag:
    text = _read(path)
    doc = _json_doc(text, path)
    if doc is None:
        return _converting(path, od.parse_dag, text)
    _expect(doc, path, "dag")
    return _converting(path, od.dag_from_json, doc.get("dag"), doc.get("alphabet", ()),
                       int(doc.get("order", 1)) - 1)


def load_automaton(path: str) -> oa.OperationAutomaton:
    doc = _json_doc(_read(path), path)
    if doc is None:
        raise _InputError(f"{path}: automata are JSON documents (line 1, column 1)")
    _expect(doc, path, "automaton", "normalized-automaton")
    return _converting(path, oa.from_json, doc)


def load_system(path: str):
    doc = _json_doc(_read(path), path)
    if doc is None:
        raise _InputError(f"{path}: systems are JSON documents (line 1, column 1)")
    _expect(doc, path, "system")
    return _converting(path, rw.system_from_json, doc)


def load_stack_set(path: str) -> list:
    """One stack per line; blank lines and lines starting with '#' are skipped."""
    text = _read(path)
    doc = _json_doc(text, path)
    if doc is not None:
        _expect(doc, path, "stack-set")
        return [_converting(path, st.stack_from_json, x) for x in doc.get("elements", [])]
    out = []
    for k, line in enumerate(text.splitlines(), 1):
        body = line.strip()
        if not body or body.startswith("#"):
            continue
        try:
            out.append(st.parse_stack(body))
        except ParseError as e:
            col = e.column + (len(line) - len(line.lstrip()))
            raise _InputError(f"{path}: {e.message} (line {k}, column {col})")
    return out


# ---------------------------------------------------------------------------
# writing reports


def _report(kind: str, **fields) -> dict:
    return {"kind": kind, "format": FORMAT, **fields}


def _emit(ctx: click.Context, doc: dict | str, summary: str) -> None:
    text = doc if isinstance(doc, str) else json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    out = ctx.obj.get("out") if ctx.obj else None
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        click.echo(text, nl=False)
    click.echo(summary, err=True)


def _trees(ts) -> list[str]:
    return [tr.format_tree(t) for t in tr.canonical(ts)]


def _non_negative(ctx, param, value):
    if value is not None and value < 0:
        raise click.BadParameter("must be non-negative")
    return value


def _budget(tuple_budget: int, max_configs: int, max_steps: int | None = None) -> oa.Budget:
    return oa.Budget(max_tuple=tuple_budget, max_configs=max_configs, max_steps=max_steps)


# ---------------------------------------------------------------------------
# commands


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the report here instead of stdout.")
@click.pass_context
def cli(ctx: click.Context, out: str | None) -> None:
    """Stack-tree rewriting, operation automata and leaf-set encodings."""
    ctx.obj = {"out": out}


@cli.command("check-dag")
@click.argument("dag_file")
@click.pass_context
def check_dag(ctx, dag_file):
    """Is the DAG a compound operation, and is it reduced?"""
    D = load_dag(dag_file)
    compound = od.is_compound(D)
    reduced = od.is_reduced(D, od.dag_order(D, 2)) if compound else False
    doc = _report("dag-check", vertices=D.n, edges=len(D.edges), in_degree=D.in_degree,
                  out_degree=D.out_degree, compound=compound, reduced=reduced)
    _emit(ctx, doc, f"compound: {str(compound).lower()}, reduced: {str(reduced).lower()}")
    return EXIT_OK


@cli.command()
@click.argument("dag_file")
@click.argument("tree_file")
@click.option("--leaf", type=int, default=None, help="Apply at this leaf only (1-based).")
@click.pass_context
def apply(ctx, dag_file, tree_file, leaf):
    """Apply a compound operation to a tree, at one leaf or at every leaf."""
    D, t = load_dag(dag_file), load_tree(tree_file)
    if leaf is None:
        results = od.apply_all(D, t)
    else:
        r = od.apply_at(D, leaf, t)
        results = [] if r is None else [r]
    doc = _report("apply-result", leaf=leaf, results=_trees(results))
    _emit(ctx, doc, f"{len(results)} result(s)")
    return EXIT_OK if results else EXIT_NO


@cli.command()
@click.argument("system_file")
@click.option("--from", "from_file", default=None, help="Start tree (default: the system's initial tree).")
@click.option("--depth", type=int, default=2, show_default=True, callback=_non_negative)
@click.option("--dot", is_flag=True, help="Emit the explored rewriting graph as DOT.")
@click.pass_context
def reach(ctx, system_file, from_file, depth, dot):
    """Trees reachable within --depth rewriting steps."""
    R, t0, _ = load_system(system_file)
    if from_file:
        t0 = load_tree(from_file)
    if t0 is None:
        raise click.UsageError("the system has no initial tree; pass --from")
    found = rw.reachable(R, t0, depth)
    if dot:
        _emit(ctx, rw.graph_to_dot(R, t0, depth), f"{len(found)} tree(s) within depth {depth}")
        return EXIT_OK
    doc = _report("reachable", start=tr.format_tree(t0), depth=depth, trees=_trees(found))
    _emit(ctx, doc, f"{len(found)} tree(s) within depth {depth}")
    return EXIT_OK


@cli.command()
@click.argument("system_file")
@click.option("--maxlen", type=int, default=4, show_default=True, callback=_non_negative)
@click.pass_context
def traces(ctx, system_file, maxlen):
    """Words of length <= --maxlen from the initial tree to a final one."""
    R, t0, finals = load_system(system_file)
    if t0 is None:
        raise click.UsageError("the system has no initial tree")
    words = sorted(rw.trace_language(R, t0, finals, maxlen), key=lambda w: (len(w), w))
    doc = _report("trace-language", maxlen=maxlen, words=words)
    _emit(ctx, doc, f"{len(words)} word(s) of length <= {maxlen}")
    return EXIT_OK


@cli.command()
@click.argument("system_file")
@click.argument("word")
@click.option("--depth", type=int, default=None, callback=_non_negative,
              help="Rewriting steps explored (default 2|w|+1).")
@click.pass_context
def accepts(ctx, system_file, word, depth):
    """Does a path labelled WORD lead from the initial tree to a final one?

    WORD is read letter by letter, or split on commas if it has any; pass
    '' for the empty word.
    """
    R, t0, finals = load_system(system_file)
    if t0 is None:
        raise click.UsageError("the system has no initial tree")
    w = word.split(",") if "," in word else list(word)
    ok = rw.accepts_word(R, t0, finals, w, depth)
    _emit(ctx, _report("word-acceptance", word=word, accepted=ok), "yes" if ok else "no")
    return EXIT_OK if ok else EXIT_NO


def _emit_automaton(ctx, A, dot: bool, summary: str) -> None:
    _emit(ctx, oa.to_dot(A) if dot else oa.to_json(A), summary)


_dot_flag = click.option("--dot", is_flag=True, help="Emit DOT instead of JSON.")


@cli.command("auto-union")
@click.argument("first")
@click.argument("second")
@_dot_flag
@click.pass_context
def auto_union(ctx, first, second, dot):
    """Automaton accepting the union of two operation sets."""
    A = oa.union(load_automaton(first), load_automaton(second))
    _emit_automaton(ctx, A, dot, f"{A.n_states} states, {A.size()} transitions")
    return EXIT_OK


@cli.command("auto-intersect")
@click.argument("first")
@click.argument("second")
@_dot_flag
@click.pass_context
def auto_intersect(ctx, first, second, dot):
    """Automaton accepting the intersection of two operation sets."""
    A = oa.trim(oa.intersect(load_automaton(first), load_automaton(second)))
    _emit_automaton(ctx, A, dot, f"{A.n_states} states, {A.size()} transitions")
    return EXIT_OK


@cli.command("auto-star")
@click.argument("automaton_file")
@_dot_flag
@click.pass_context
def auto_star(ctx, automaton_file, dot):
    """Automaton accepting the iterated concatenations of an operation set."""
    A = oa.star(load_automaton(automaton_file))
    _emit_automaton(ctx, A, dot, f"{A.n_states} states, {A.size()} transitions")
    return EXIT_OK


@cli.command("auto-accepts")
@click.argument("automaton_file")
@click.argument("dag_file", required=False)
@click.option("--max-vertices", type=int, default=4, show_default=True, callback=_non_negative,
              help="Without a DAG, list accepted DAGs up to this size.")
@click.pass_context
def auto_accepts(ctx, automaton_file, dag_file, max_vertices):
    """Does the automaton accept the DAG?  Without one, list small accepted DAGs."""
    A = load_automaton(automaton_file)
    if dag_file is None:
        dags = [od.dag_to_json(D) for D in sorted(oa.enumerate_accepted(A, max_vertices), key=od.format_dag)]
        doc = _report("accepted-dags", max_vertices=max_vertices, dags=dags)
        _emit(ctx, doc, f"{len(dags)} accepted DAG(s) with <= {max_vertices} vertices")
        return EXIT_OK
    D = load_dag(dag_file)
    lab = oa.accepts(A, D)
    labelling = None if lab is None else {str(v + 1): lab[v] for v in sorted(lab)}
    doc = _report("dag-acceptance", accepted=lab is not None, labelling=labelling)
    _emit(ctx, doc, "yes" if lab is not None else "no")
    return EXIT_OK if lab is not None else EXIT_NO


@cli.command("auto-normalize")
@click.argument("automaton_file")
@click.option("--max-vertices", type=int, default=0, show_default=True, callback=_non_negative,
              help="Also check that accepted DAGs up to this size are reduced (0: skip).")
@_dot_flag
@click.pass_context
def auto_normalize(ctx, automaton_file, max_vertices, dot):
    """Normalized, distinguished automaton recognising the same relation."""
    P = nz.normalize(load_automaton(automaton_file))
    A = P.automaton
    summary = f"{A.n_states} states, {A.size()} transitions, {P.certification}"
    if max_vertices:
        ok = nz.is_normalized(P, max_vertices)
        summary += f", reduced up to {max_vertices} vertices: {str(ok).lower()}"
    _emit(ctx, oa.to_dot(A) if dot else P.to_json(), summary)
    return EXIT_OK


@cli.command()
@click.argument("automaton_file")
@click.argument("source")
@click.argument("target")
@click.option("--budget", "tuple_budget", type=int, default=2, show_default=True, callback=_non_negative,
              help="Most operations applied in parallel.")
@click.option("--depth", type=int, default=None, callback=_non_negative,
              help="Most rewriting steps, for automata built from systems.")
@click.option("--max-configs", type=int, default=200_000, show_default=True, callback=_non_negative,
              help="Search limit; hitting it answers 'unknown'.")
@click.pass_context
def relates(ctx, automaton_file, source, target, tuple_budget, depth, max_configs):
    """Is TARGET obtained from SOURCE by accepted operations at disjoint leaves?"""
    A = load_automaton(automaton_file)
    s, t = load_tree(source), load_tree(target)
    res = oa.relates(A, s, t, _budget(tuple_budget, max_configs, depth))
    witness = [{"dag": od.dag_to_json(D), "leaf": i} for D, i in res.witness]
    _emit(ctx, _report("relation", status=res.status, witness=witness), res.status)
    return {"yes": EXIT_OK, "no": EXIT_NO}.get(res.status, EXIT_UNKNOWN)


@cli.command()
@click.argument("tree_file")
@click.pass_context
def encode(ctx, tree_file):
    """Leaf-set encoding of a tree, one stack per leaf."""
    X = te.encode_tree(load_tree(tree_file))
    elements = sorted(st.format_stack(x) for x in X)
    _emit(ctx, _report("stack-set", elements=elements), f"{len(elements)} leaf code(s)")
    return EXIT_OK


@cli.command()
@click.argument("stackset_file")
@click.pass_context
def decode(ctx, stackset_file):
    """Tree encoded by a set of stacks, or the condition it violates."""
    d = te.diagnose(load_stack_set(stackset_file))
    if d.tree is None:
        doc = _report("decode-result", valid=False, violated=d.violated, detail=d.detail)
        _emit(ctx, doc, f"not an encoding: {d.violated}")
        return EXIT_NO
    doc = _report("decode-result", valid=True, tree=tr.format_tree(d.tree))
    _emit(ctx, doc, tr.format_tree(d.tree))
    return EXIT_OK


@cli.command("export-dot")
@click.argument("input_file")
@click.option("--depth", type=int, default=2, show_default=True, callback=_non_negative,
              help="For systems: depth of the explored rewriting graph.")
@click.pass_context
def export_dot(ctx, input_file, depth):
    """DOT drawing of a tree, DAG, automaton or system."""
    text = _read(input_file)
    doc = _json_doc(text, input_file)
    kind = doc["kind"] if doc else ("dag" if text.lstrip().startswith("dag") else "tree")
    if kind == "tree":
        dot = tr.to_dot(load_tree(input_file))
    elif kind == "dag":
        dot = od.to_dot(load_dag(input_file))
    elif kind in ("automaton", "normalized-automaton"):
        dot = oa.to_dot(load_automaton(input_file))
    elif kind == "system":
        R, t0, _ = load_system(input_file)
        if t0 is None:
            raise click.UsageError("the system has no initial tree")
        dot = rw.graph_to_dot(R, t0, depth)
    else:
        raise _InputError(f"{input_file}: no DOT form for kind {kind!r} (line 1, column 1)")
    _emit(ctx, dot, f"{kind} as DOT")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry points


def run(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit status instead of exiting."""
    try:
        rv = cli.main(args=list(argv) if argv is not None else None, prog_name="hostree",
                      standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.UsageError as e:
        click.echo(f"usage error: {e.format_message()}", err=True)
        return EXIT_USAGE
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except _InputError as e:
        click.echo(f"parse error: {e}", err=True)
        return EXIT_PARSE
    except UsageError as e:
        click.echo(f"usage error: {e}", err=True)
        return EXIT_USAGE
    except HostreeError as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_USAGE
    return rv if isinstance(rv, int) else EXIT_OK


def main() -> None:
    sys.exit(run())
