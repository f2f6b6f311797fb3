import os
from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def source_dir() -> Path:
    return Path(os.environ.get("FEDBN_SOURCE_DIR", Path(__file__).resolve().parents[2]))


@pytest.fixture(scope="session")
def asia(source_dir):
    import fedbn

    return fedbn.load_network(str(source_dir / "data" / "asia.bn"))
