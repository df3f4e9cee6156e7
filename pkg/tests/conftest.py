"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import contextlib
import io as _stdio

import numpy as np
import pytest

from radardepth import cli
from radardepth.geometry import CameraIntrinsics


@pytest.fixture
def intr100() -> CameraIntrinsics:
    # fx = fy = 100, principal point (50, 50), 100x100 image
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=100, height=100)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def run_cli(*argv) -> tuple[int, str, str]:
    """Run the command-line entry point in-process; returns (exit code, stdout, stderr)."""
    out, err = _stdio.StringIO(), _stdio.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            code = cli.main([str(a) for a in argv])
        except SystemExit as e:  # argparse usage errors
            code = e.code
    return code, out.getvalue(), err.getvalue()


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, title: str, passed: bool, detail: str) -> bool:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
