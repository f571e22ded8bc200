import os
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent


def find_dataset(name):
    """Directory holding ``NAME_A.txt``, searched under $GRAPHNORM_DATA_DIR and ./data."""
    roots = [os.environ.get("GRAPHNORM_DATA_DIR"), ROOT / "data"]
    for root in filter(None, roots):
        for d in (Path(root) / name, Path(root)):
            if (d / f"{name}_A.txt").exists():
                return d
    return None


@pytest.fixture
def mutag_dir():
    d = find_dataset("MUTAG")
    if d is None:
        pytest.skip("MUTAG not present (set GRAPHNORM_DATA_DIR or place it under ./data/MUTAG)")
    return d


def write_fixture(directory, name, edges, indicator, labels, node_labels=None):
    directory = Path(directory)
    (directory / f"{name}_A.txt").write_text("".join(f"{i}, {j}\n" for i, j in edges))
    (directory / f"{name}_graph_indicator.txt").write_text("".join(f"{g}\n" for g in indicator))
    (directory / f"{name}_graph_labels.txt").write_text("".join(f"{y}\n" for y in labels))
    if node_labels is not None:
        (directory / f"{name}_node_labels.txt").write_text("".join(f"{v}\n" for v in node_labels))
    return directory


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
