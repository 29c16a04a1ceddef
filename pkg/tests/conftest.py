import numpy as np
import pytest

from femtosched.config import ScenarioConfig, copy_config


@pytest.fixture
def small_cfg():
    """A short, light scenario for engine-level tests."""
    cfg = ScenarioConfig(n_ues=4, duration_s=0.5, warmup_s=0.1)
    return cfg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_cfg(**overrides) -> ScenarioConfig:
    return copy_config(ScenarioConfig(), **overrides)


# One line per acceptance criterion, printed after the run.
VERDICTS: dict[int, str] = {}


def record_verdict(number: int, title: str, passed: bool, detail: str = "") -> None:
    VERDICTS[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} {title}" + (f" | {detail}" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
