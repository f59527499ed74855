import numpy as np
import pytest

from bbmmi.process import derive_stream


@pytest.fixture
def rng():
    return derive_stream(12345, 0, "tests").generator()


def stream(seed: int, index: int = 0) -> np.random.Generator:
    return derive_stream(seed, index, "tests").generator()


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = mod.summary_lines() if mod is not None else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
