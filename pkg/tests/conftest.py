import numpy as np
import pytest

from jigsawlab.masks import sample_procedural_mask

_CRITERION_LINES: list[str] = []


@pytest.fixture(scope="session")
def mask_pool():
    """1,000 procedural masks shared by the mask, shape, and acceptance tests."""
    rng = np.random.default_rng(2026)
    return [sample_procedural_mask(rng) for _ in range(1000)]


@pytest.fixture
def criterion():
    """Recorder for acceptance-criterion outcomes, one printed line each."""

    def _record(number, name, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        line = f"[criterion {number:2d}] {status}  {name}"
        if detail:
            line += f"  ({detail})"
        _CRITERION_LINES.append(line)
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _CRITERION_LINES:
        terminalreporter.write_line(line)
