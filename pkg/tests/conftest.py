import numpy as np
import pytest

from scalenas import builtin_space


@pytest.fixture(scope="session")
def imagenet():
    return builtin_space("imagenet")


@pytest.fixture(scope="session")
def reduced():
    return builtin_space("reduced")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


TINY = {
    "name": "tiny",
    "stem": {"channels": 8, "kernel": 3, "stride": 2},
    "head": {"channels": 32},
    "stages": [{"n_min": 1, "n_max": 1, "channels": 8, "stride": 1,
                "expand_rates": [1], "kernels": [3], "se": [False]}],
    "scaling_stages": [{"j": 0, "depth_width": [1, 0, 1], "resolution": [1, 0, 1]},
                       {"j": 1, "depth_width": [1.5, 0, 1.5], "resolution": [1, 0, 1]}],
}


@pytest.fixture
def tiny():
    from scalenas.space import space_from_dict

    return space_from_dict(TINY)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(capsys):
    """Print (and collect for the summary) one pass/fail line per criterion."""

    def emit(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
