from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_manifest(directory, pairs, class_names):
    """Write ``manifest.tsv`` and ``classes.txt`` into ``directory``; return the manifest path."""
    directory = Path(directory)
    (directory / "classes.txt").write_text("".join(f"{i}\t{n}\n" for i, n in enumerate(class_names)))
    manifest = directory / "manifest.tsv"
    manifest.write_text("".join(f"{m}\t{l}\n" for m, l in pairs))
    return manifest


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(results, key=lambda r: int(r[0].split()[0][1:])):
        suffix = f"  [{detail}]" if detail else ""
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}{suffix}")
