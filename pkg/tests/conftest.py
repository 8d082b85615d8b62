import pytest

from checkworthy.corpus import Dataset, DatasetKind

from helpers import ACCEPTANCE_RESULTS, simple_sentence


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_RESULTS:
        suffix = f"  ({detail})" if detail else ""
        terminalreporter.write_line(f"[{status}] {name}{suffix}")


@pytest.fixture
def gold_mini():
    """Three speeches, binary labels, small but structurally realistic."""
    rows = [
        ("s01", "sp-a", ["we", "will", "cut", "taxes", "by", "ten", "percent"], 1.0),
        ("s02", "sp-a", ["thank", "you", "all", "so", "much"], 0.0),
        ("s03", "sp-a", ["the", "deficit", "doubled", "last", "year"], 1.0),
        ("s04", "sp-a", ["we", "love", "this", "country"], 0.0),
        ("s05", "sp-b", ["unemployment", "is", "at", "five", "percent"], 1.0),
        ("s06", "sp-b", ["what", "a", "wonderful", "crowd"], 0.0),
        ("s07", "sp-b", ["they", "spent", "two", "trillion", "dollars"], 1.0),
        ("s08", "sp-c", ["we", "believe", "in", "hope"], 0.0),
        ("s09", "sp-c", ["trade", "deficit", "was", "800", "billion"], 1.0),
        ("s10", "sp-c", ["together", "we", "will", "win"], 0.0),
    ]
    return Dataset(
        sentences=[simple_sentence(sid, sp, words, label) for sid, sp, words, label in rows],
        kind=DatasetKind.GOLD,
    )
