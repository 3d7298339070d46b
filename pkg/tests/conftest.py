"""Shared fixtures plus a terminal summary of the acceptance checklist."""

from __future__ import annotations

import numpy as np
import pytest

_ACCEPTANCE: dict[int, tuple[str, bool]] = {}


def record_criterion(number: int, title: str, passed: bool) -> None:
    """Remember one acceptance criterion's outcome for the final summary."""
    previous = _ACCEPTANCE.get(number)
    ok = passed if previous is None else (previous[1] and passed)
    _ACCEPTANCE[number] = (title, ok)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260817)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance checklist")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        word = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {word} - {title}")
