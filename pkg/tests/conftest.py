from pathlib import Path

import numpy as np
import pytest

from shapedispatch.grid_model import load_case, shift_factors
from shapedispatch.pipeline import build_case, load_config
from shapedispatch.shaping_defense import solve_p2

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_addoption(parser):
    parser.addoption("--seed", type=int, default=20241014, help="seed for randomized property tests")


@pytest.fixture
def rng(request):
    return np.random.default_rng(request.config.getoption("--seed"))


@pytest.fixture(scope="session")
def base_config():
    return load_config()


@pytest.fixture(scope="session")
def ieee14(base_config):
    return build_case(base_config)


@pytest.fixture(scope="session")
def base_solution(base_config, ieee14):
    case, S = ieee14
    return solve_p2(case, S, base_config.tau, base_config.shaping)


@pytest.fixture(scope="session")
def three_bus():
    case = load_case(FIXTURES / "three_bus.json")
    return case, shift_factors(case)


@pytest.fixture(scope="session")
def three_gen():
    case = load_case(FIXTURES / "three_gen.json")
    return case, shift_factors(case)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``acceptance(label, ok, detail)`` records one pass/fail line and prints it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(label: str, ok: bool, detail: str, level: str | None = None):
        tag = level or ("PASS" if ok else "FAIL")
        line = f"[{tag}] criterion {label}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
