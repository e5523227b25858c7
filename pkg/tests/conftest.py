"""Shared fixtures: converged pulses for both models, computed once per session."""

import logging

import pytest

from shuttle_control.optimizer import OptimizerConfig, optimize, with_resolution
from shuttle_control.systems import donor_chain_model, triple_dot_model

ACCEPTANCE_LINES: dict[str, str] = {}

DONOR_DELTA = 2.7
DOT_J = (-0.07, -0.14)


@pytest.fixture(scope="session")
def donor_model():
    return donor_chain_model(DONOR_DELTA)


@pytest.fixture(scope="session")
def dot_model():
    return triple_dot_model(*DOT_J)


@pytest.fixture(scope="session")
def donor_run(donor_model):
    """Best of 8 seeded restarts at T = 1 ns, N = 8000."""
    config = OptimizerConfig.for_model(donor_model, T=1.0, N=8000, restarts=8, seed=0)
    return config, optimize(donor_model, config)


@pytest.fixture(scope="session")
def dot_run(dot_model):
    """Best of 8 seeded restarts at T = 1 ns, N = 500, then re-optimised at N = 1000."""
    config = OptimizerConfig.for_model(dot_model, T=1.0, N=500, restarts=8, seed=0)
    coarse = optimize(dot_model, config)
    fine_config = with_resolution(config, 1000, restarts=1)
    fine = optimize(dot_model, fine_config, initial_phi0=coarse.phi0_star)
    return config, coarse, fine_config, fine


@pytest.fixture
def acceptance():
    """Record the one-line verdict of an acceptance criterion."""

    def record(key: str, passed: bool, text: str) -> None:
        ACCEPTANCE_LINES[key] = f"[{'PASS' if passed else 'FAIL'}] {key}: {text}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def pytest_configure(config):
    logging.getLogger("shuttle_control").setLevel(logging.INFO)
