import numpy as np
import pytest

from gammagibbs import CubeGrid, LevySpec, PotentialSpec, Window


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid1():
    return CubeGrid(1, 1.0, 1.0)


@pytest.fixture
def cube0(grid1):
    return Window.from_cubes([(0,)], grid1)


@pytest.fixture
def core_shell(grid1):
    from gammagibbs import certify
    return certify(PotentialSpec.core_shell(10.0, 1.0, 1.0, 1.0), grid1)


@pytest.fixture
def gamma1():
    return LevySpec.gamma(1.0)


ACCEPTANCE_LINES: list = []


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
