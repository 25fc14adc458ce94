import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qem.core import Location, NoisyCircuit, PauliChannel, gate  # noqa: E402


def bell_xerror_circuit(q=0.2):
    """H, CNOT with an X fault on qubit 0 after the CNOT (probability q)."""
    return NoisyCircuit(
        2,
        (
            Location(gate("H", 0)),
            Location(gate("CNOT", 0, 1), PauliChannel({"X": 1.0}), q, (0,)),
        ),
    )


@pytest.fixture
def bell_xerror():
    return bell_xerror_circuit()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_CRITERIA: dict[int, tuple[str, bool]] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    num, _, rest = name[len("test_criterion_") :].split("[")[0].partition("_")
    ok = report.passed if report.when == "call" else not report.failed
    prev = _CRITERIA.get(int(num), (rest.replace("_", " "), True))
    _CRITERIA[int(num)] = (prev[0], prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        desc, ok = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {desc}")
