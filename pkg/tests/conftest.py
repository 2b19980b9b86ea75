import numpy as np
import pytest

from lsrk.data import LongitudinalDataset, SubjectRecord

DATA_DIR = __import__("pathlib").Path(__file__).parent / "data"


def make_dataset(rng, n=20, d1=1, d2=0, m_range=(3, 6)):
    """Random dataset with sorted uniform times; values are plain noise."""
    subjects = []
    for i in range(n):
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        t = np.sort(rng.uniform(0, 1, m))
        subjects.append(
            SubjectRecord(str(i), t, rng.standard_normal((d1, m)), rng.standard_normal(m), rng.standard_normal(d2))
        )
    return LongitudinalDataset(tuple(subjects), d1, d2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def data_dir():
    return DATA_DIR


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
