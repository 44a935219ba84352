import numpy as np
import pytest

from qcascade.scenarios import SystemParams, build_scenario

ACCEPTANCE_LINES: list[str] = []


def random_state(dim, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = x @ x.conj().T
    return rho / np.trace(rho)


def small_scenario(kind="cascaded", emitters=2, cutoff=2, **changes):
    p = SystemParams(n_emitters_target=emitters, cutoff_s=cutoff, cutoff_t=cutoff, **changes)
    return build_scenario(kind, p)


@pytest.fixture
def report(capsys):
    """Print a result line straight to the terminal and keep it for the summary."""

    def emit(line):
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
