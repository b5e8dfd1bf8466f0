import numpy as np
import pytest

from pulse_ilp import kernels
from pulse_ilp.core import make_instance

EQ1_C = [[3, 10, 6, 14, 8], [7, 4, 30, 0, 1], [19, 4, 0, 5, 9]]
EQ1_D = [17, 38, 28]
EQ1_X = [1, 0, 1, 0, 1]

_ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {name} -- {detail}"
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def eq1():
    return make_instance(EQ1_C, EQ1_D)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    with kernels.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
