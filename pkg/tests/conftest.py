import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

np.seterr(over="raise", invalid="raise")

settings.register_profile("default", deadline=None)
settings.register_profile("fast", max_examples=10, deadline=None)
settings.load_profile("default")

from sparfa_lite.quantized_model import QuantizerSpec  # noqa: E402


@pytest.fixture
def binary():
    return QuantizerSpec.binary()


@pytest.fixture
def four_level():
    return QuantizerSpec.from_interior([-1.0, 0.0, 1.0])


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "SUMMARY", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
