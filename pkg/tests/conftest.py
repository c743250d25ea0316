import numpy as np
import pytest

from gcs.core import SemanticGrid, TokenGrid

# Criterion verdicts from test_acceptance.py, echoed after the test run so
# they stay visible even with output capture on.
_criterion_lines: list[str] = []


def record_criterion(line: str) -> None:
    _criterion_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)


def random_grid(rng, height, width, codebook_size) -> TokenGrid:
    return TokenGrid(
        height, width, codebook_size, rng.integers(0, codebook_size, (height, width))
    )


def random_semantics(rng, height, width, label_count) -> SemanticGrid:
    return SemanticGrid(
        height, width, label_count, rng.integers(0, label_count, (height, width))
    )


@pytest.fixture
def grid_factory(rng):
    def make(height=4, width=4, codebook_size=6):
        return random_grid(rng, height, width, codebook_size)

    return make
