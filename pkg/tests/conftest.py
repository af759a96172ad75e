import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def manifest_path():
    path = ROOT / "data" / "manifest.json"
    if not path.exists():
        pytest.skip("data/ not built; run scripts/prepare_data.py")
    return path
