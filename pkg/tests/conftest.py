import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import acceptance_log  # noqa: E402
from mspl.dataio import split, standardize, synth_generate  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def blobs():
    """Standardized train/val split of a well separated 3-class synthetic set."""
    ds = synth_generate(300, 8, 3, 6.0, seed=1)
    tr, va, _ = split(ds, (0.6, 0.2, 0.2), seed=0)
    tr, stats = standardize(tr)
    va, _ = standardize(va, stats)
    return tr, va
