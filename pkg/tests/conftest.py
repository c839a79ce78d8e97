import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from opaque_emu import AnalysisParams, SyntheticProtocolSpec, analyze, generate_synthetic, worked_example_library
from opaque_emu.cluster import build_response_distance_matrix

ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, description: str, ok: bool, detail: str = "") -> None:
    """Register one acceptance outcome; printed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} {criterion} {description}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def example_lib():
    return worked_example_library()


@pytest.fixture(scope="session")
def example_model(example_lib):
    return analyze(example_lib, AnalysisParams())


@pytest.fixture(scope="session")
def text_lib():
    return generate_synthetic(SyntheticProtocolSpec(count=1000, seed=7))


@pytest.fixture(scope="session")
def text_matrix(text_lib):
    return build_response_distance_matrix(text_lib)


@pytest.fixture(scope="session")
def binary_lib():
    return generate_synthetic(SyntheticProtocolSpec(count=1000, seed=7, variant="binary"))


@pytest.fixture(scope="session")
def small_lib():
    return generate_synthetic(SyntheticProtocolSpec(count=120, seed=3))
