import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
for sub in ("lib", "tools"):
    path = str(ROOT / sub)
    if path not in sys.path:
        sys.path.insert(0, path)

from dsl.parser import SourceFile, parse  # noqa: E402

PROTOCOLS = ROOT / "protocols"


def _load(name: str):
    result = parse(SourceFile.load(PROTOCOLS / name))
    assert result.ok, [d.describe() for d in result.diagnostics]
    return result


@pytest.fixture(scope="session")
def netbill():
    return _load("netbill.ppl")


@pytest.fixture(scope="session")
def netbill_fixed():
    return _load("netbill_fixed.ppl")


@pytest.fixture
def netbill_path():
    return PROTOCOLS / "netbill.ppl"


@pytest.fixture
def netbill_fixed_path():
    return PROTOCOLS / "netbill_fixed.ppl"
