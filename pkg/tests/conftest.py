from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def datadir() -> Path:
    return Path(__file__).resolve().parent.parent / "data" / "topologies"
