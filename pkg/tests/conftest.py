import os

import pytest
from hypothesis import settings

from hostree.op_dag import parse_dag
from hostree.stack_tree import parse_tree

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


FIG1_TREE = (
    "node([[aa][bab]],"
    " node([[aa][aaa]], node([[ab]])),"
    " node([[aa][a][b]], node([[ba][ba][b]]), node([[abb][ab]])))"
)

FIG2_TREE = "node([bbb], node([bbb]), node([aabb]))"

FIG2_DAG = """
dag {
  v: 1..7;
  e: (1, ncop1, 2);
  e: (2, rew(b,c), 3);
  e: (3, 1, 4), (3, 2, 5);
  e: (4, rew(c,a), 6);
  e: (5, cop1, 7);
}
"""


@pytest.fixture
def fig1_tree():
    return parse_tree(FIG1_TREE)


@pytest.fixture
def fig2_tree():
    return parse_tree(FIG2_TREE)


@pytest.fixture
def fig2_dag():
    return parse_dag(FIG2_DAG)


# -- acceptance report -------------------------------------------------------------
#
# test_acceptance records one line per criterion; they are printed together at
# the end of the run, whether or not output capture is on.

_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Call as ``with criterion(n, "title", limit_seconds):`` around the check."""
    import contextlib
    import time

    @contextlib.contextmanager
    def run(n, title, limit):
        t0 = time.perf_counter()
        status = "FAIL"
        try:
            yield
            elapsed = time.perf_counter() - t0
            status = "PASS" if elapsed < limit else "FAIL"
            assert elapsed < limit, f"criterion {n} took {elapsed:.1f}s, limit {limit}s"
        finally:
            elapsed = time.perf_counter() - t0
            _CRITERIA[n] = f"criterion {n:2d} {status}  {elapsed:7.1f}s / {limit}s  {title}"

    return run


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n])
