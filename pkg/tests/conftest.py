import csv
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"


def load_published_rul() -> list[dict]:
    """Published per-escalator RUL table (2021 Q4), columns as printed."""
    with open(DATA / "published_rul.csv", newline="") as fh:
        return [
            {k: (int(v) if k in ("escalator_id", "year", "quarter") else float(v)) for k, v in r.items()}
            for r in csv.DictReader(fh)
        ]


@pytest.fixture(scope="session")
def published_rul():
    return load_published_rul()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
