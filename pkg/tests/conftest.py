import os
from pathlib import Path

import numpy as np
import pytest

from monotone_pwl.model import MlpModel, InitSpec, init_model

ROOT = Path(__file__).resolve().parents[1]
ADULT_DIR = Path(os.environ.get("ADULT_DIR", ROOT / "data" / "adult"))

ACCEPTANCE_LINES: list[str] = []


def adult_paths():
    train, test = ADULT_DIR / "adult.data", ADULT_DIR / "adult.test"
    if not (train.exists() and test.exists()):
        pytest.skip(f"UCI Adult files not found under {ADULT_DIR} (set ADULT_DIR)")
    return train, test


def linear_model(w, b=0.0, output="identity") -> MlpModel:
    w = np.asarray(w, dtype=np.float64)
    return MlpModel((w.size, 1), [w.reshape(-1, 1)], [np.array([b])], "tanh", output)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_net():
    return init_model([2, 8, 1], init=InitSpec(seed=3))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
