"""Shared fixtures plus the acceptance-summary hook.

Acceptance tests call ``record_criterion`` so every criterion prints one
pass/fail line even under captured output; the lines are emitted in the
terminal summary after the normal pytest report.
"""

import numpy as np
import pytest

_CRITERION_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    status = "PASS" if passed else "FAIL"
    line = f"[{status}] {name}"
    if detail:
        line += f"  ({detail})"
    _CRITERION_LINES.append(line)
    print(line)


def record_criterion_skip(name: str, reason: str) -> None:
    _CRITERION_LINES.append(f"[SKIP] {name}  ({reason})")


@pytest.fixture
def rng():
    from moecert.numerics import RandomSource

    return RandomSource(12345)


@pytest.fixture
def tiny_dataset():
    """Small separated two-class problem used across training tests."""
    from moecert.data import make_toy_dataset

    return make_toy_dataset(m=80, d=3, seed=7, separation=4.0)


@pytest.fixture
def small_model(rng):
    from moecert.model import LdpConfig
    from moecert.train import init_model

    return init_model(d=3, n=4, ldp=LdpConfig.constrained(2.0), rng=rng, hidden=8)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in _CRITERION_LINES:
        terminalreporter.write_line(line)


def assert_probability(value) -> None:
    assert np.isfinite(value)
    assert 0.0 <= value <= 1.0
