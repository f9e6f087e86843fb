import os
import warnings

import pytest
from hypothesis import settings

warnings.filterwarnings("ignore", message=".*TBB.*")

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)


_CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``report(n, ok, detail)`` records one PASS/FAIL line and returns ``ok``."""
    lines = request.config.stash.setdefault(_CRITERIA, [])

    def report(n, ok, detail=""):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
