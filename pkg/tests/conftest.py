from pathlib import Path

import pytest

from helpers import synthetic_corpus

from toporec.alignment import build_toy_vocab
from toporec.corpus import read_conll

DATA = Path(__file__).parent / "data"

ACCEPTANCE_RESULTS: dict[str, tuple[bool | None, str]] = {}


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def conll_sample():
    return read_conll(DATA / "conll2003_sample.txt", 0, 3)


@pytest.fixture
def wnut_sample():
    return read_conll(DATA / "wnut2017_sample.txt", 0, 1)


@pytest.fixture
def small_corpus():
    return synthetic_corpus(32, seed=0)


@pytest.fixture
def small_vocab(small_corpus):
    return build_toy_vocab(w for s in small_corpus for w in s.words)


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(criterion: str, passed: bool, detail: str = ""):
        ACCEPTANCE_RESULTS[criterion] = (passed, detail)
        assert passed, f"{criterion}: {detail}"

    def skip(criterion: str, reason: str):
        ACCEPTANCE_RESULTS[criterion] = (None, reason)
        pytest.skip(reason)

    record.skip = skip
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0][2:])):
        passed, detail = ACCEPTANCE_RESULTS[name]
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  {detail}")
