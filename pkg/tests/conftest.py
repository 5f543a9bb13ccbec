from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from lanedet.config import PipelineConfig
from lanedet.synth import synth_camera, synth_config_values

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def synth_cfg() -> PipelineConfig:
    return PipelineConfig.from_values(synth_config_values(), seed=11)


@pytest.fixture(scope="session")
def cam():
    return synth_camera()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record():
    def _record(name: str, ok: bool, detail: str) -> None:
        _ACCEPTANCE.append((name, ok, detail))

    return _record


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: gating acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name:28s} {detail}")
