import numpy as np
import pytest
from hypothesis import settings

from chanaging.channel_model import SystemConfig, draw_large_scale

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def cfg():
    return SystemConfig.build(M=60, K=10, fD_Ts=0.05, sigma_phi_deg=2.0, sigma_varphi_deg=2.0)


@pytest.fixture
def profile():
    return draw_large_scale(1000.0, 100.0, 3.8, 8.0, 10, np.random.default_rng(0), 60)
