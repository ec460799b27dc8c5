from __future__ import annotations

from datetime import datetime, timezone

import numpy as np
import pytest

from iminer import synth

CORPUS_START = "2002-01-09"
CORPUS_DAYS = 180
BOUNDARY = datetime(2002, 7, 1, tzinfo=timezone.utc)

_ACCEPTANCE: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    _ACCEPTANCE.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus():
    return synth.generate(synth.TrafficProfile(), CORPUS_START, CORPUS_DAYS, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
