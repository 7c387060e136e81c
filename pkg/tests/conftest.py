import pytest

from greenwave.scenario import corridor_network, corridor_scenario

RATIOS = {"T": 0.5, "L": 0.3, "R": 0.2}


@pytest.fixture
def corridor2():
    return corridor_network(2, arterial_ratios=RATIOS, side_ratios=RATIOS)


@pytest.fixture
def corridor3():
    return corridor_network(3)


@pytest.fixture
def single():
    return corridor_network(1)


@pytest.fixture
def corridor_scn():
    return corridor_scenario(3)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one verdict line per acceptance criterion for the run summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, title, ok, detail):
        lines.append(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
