import numpy as np
import pytest

from dvecspace.oracle import SpaceSpec, gen_space


@pytest.fixture(scope="session")
def space():
    """Default seven-speaker synthetic space and its truth."""
    return gen_space(SpaceSpec())


@pytest.fixture(scope="session")
def small_space():
    return gen_space(SpaceSpec(n_utterances=100, n_bilingual_utterances=400, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
