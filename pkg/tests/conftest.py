import sys
from pathlib import Path

import numpy as np
import pytest

from gigazoom.geometry import Resolution
from gigazoom.scene import SceneParams, generate_scene

FIXTURES = Path(__file__).parent / "fixtures"
SAMPLE_DMAP = FIXTURES / "sample_8x6.dmap"


def stub_cmd(mode: str, arg: str | None = None) -> str:
    """Command template running the bundled stub estimator in ``mode``."""
    cmd = f"{sys.executable} {FIXTURES / 'stub_estimator.py'} {mode} {{input}} {{output}}"
    return cmd + (f" {arg}" if arg is not None else "")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_scene():
    return generate_scene(SceneParams(Resolution(1024, 576), (300, 300), hotspots=2, seed=7))


# --- acceptance summary ------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> bool:
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
