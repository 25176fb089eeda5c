import numpy as np
import pytest

from ncve.modal_core import ModalSystem


@pytest.fixture
def six_mode():
    """Controllable six-mode system with two unstable modes."""
    return ModalSystem.from_arrays([0.4, 0.15, -0.3, -1.0, -2.5, -4.0], [1.0, 0.8, 1.2, 0.7, 1.0, 0.9])


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
