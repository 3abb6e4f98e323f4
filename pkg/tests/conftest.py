import numpy as np
import pytest
from hypothesis import settings

from lobflow.config import ExperimentConfig
from lobflow.functions import Constant
from lobflow.sim import ModelParams

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def default_cfg() -> ExperimentConfig:
    return ExperimentConfig()


@pytest.fixture
def toy_params():
    """n=4 rates from the hand-worked rate-table example."""
    return ModelParams(4, Constant(1.0), Constant(1.0), Constant(4.0), Constant(4.0), 0.0, 0.0)


def random_segregated(rng: np.random.Generator, n: int, depth: int = 4) -> np.ndarray:
    """Depth vector with buys strictly below sells (either side may be empty)."""
    cut = int(rng.integers(0, n + 1))
    x = np.zeros(n, dtype=np.int64)
    x[:cut] = -rng.integers(0, depth + 1, size=cut)
    x[cut:] = rng.integers(0, depth + 1, size=n - cut)
    return x


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
