import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from isoprobe.store import EmbeddingDump, TokenRecord  # noqa: E402
from isoprobe.synthetic import cross_matrix, dump_from_matrix  # noqa: E402

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


@pytest.fixture
def cross():
    return cross_matrix(2.0, 1.0)


@pytest.fixture
def cross_dump():
    return dump_from_matrix(cross_matrix(2.0, 1.0))


@pytest.fixture
def small_dump():
    """Two layers, two sentences, a [CLS] row plus two word rows each."""
    rng = np.random.default_rng(7)
    records = []
    for layer in (0, 1):
        for sid in (0, 1):
            records.append(TokenRecord("[CLS]", layer, sid, 0, True, False, 0))
            records.append(TokenRecord(f"a{sid}", layer, sid, 1, False, True, 10 + sid))
            records.append(TokenRecord(f"b{sid}", layer, sid, 2, False, True, 100 + sid))
    return EmbeddingDump(3, tuple(records), rng.standard_normal((len(records), 3)))


# acceptance tests carry @pytest.mark.criterion(n, title); one verdict line per criterion
_titles = {}
_outcomes = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _titles[item.nodeid] = mark.args


def pytest_runtest_logreport(report):
    args = _titles.get(report.nodeid)
    if args is None or (report.when != "call" and report.passed):
        return
    ok = report.passed and not report.skipped
    _outcomes[args] = _outcomes.get(args, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), ok in sorted(_outcomes.items()):
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}")
