import pytest

from guardsets.fixtures import tree_graph, tree_guards
from guardsets.trace import TraceConfig, generate_trace


@pytest.fixture
def fig1():
    return tree_graph()


@pytest.fixture(scope="session")
def small_trace():
    # 40 days of the default generator, enough for maintenance paths
    return generate_trace(TraceConfig(n_days=40, seed=5))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(RESULTS):
        terminalreporter.write_line(f"CRITERION {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
