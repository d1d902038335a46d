import numpy as np
import pytest

from hybridbf.oracle import random_structural_scenario
from hybridbf.scenarios import random_beamformer, synthetic_scenario


@pytest.fixture(scope="session")
def small_scenario():
    """Feasible 16x2x2 scenario with two directions."""
    return synthetic_scenario(16, 2, 2, 2, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_case(rng):
    sc = random_structural_scenario(rng, L=8, N=3, M=2, D=2)
    return sc, random_beamformer(rng, sc.N, sc.M + sc.N)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
