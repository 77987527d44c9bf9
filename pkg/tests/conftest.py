import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def all_paths(n, m):
    """Every admissible anchored path on an n x m grid (tiny grids only)."""
    def walk(i, j):
        if (i, j) == (n - 1, m - 1):
            yield [(i, j)]
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < n and j + dj < m:
                for rest in walk(i + di, j + dj):
                    yield [(i, j)] + rest
    yield from walk(0, 0)


_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record and assert one acceptance criterion; the line is echoed in the summary."""
    def record(n, ok, detail=""):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _VERDICTS[n] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
