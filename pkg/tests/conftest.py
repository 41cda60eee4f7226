import numpy as np
import pytest

# Binary entropies computed directly as -p log2 p - (1-p) log2 (1-p).
H_09 = 0.4689955935892812
H_07 = 0.8812908992306927


@pytest.fixture
def p1():
    return np.array([[0.9, 0.1], [0.1, 0.9]])


@pytest.fixture
def p2():
    return np.array([[0.7, 0.3], [0.3, 0.7]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import gate

    if gate.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(gate.RESULTS):
            terminalreporter.write_line(gate.RESULTS[number])
